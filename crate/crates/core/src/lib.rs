//! Semi-automated point tracking for B-mode ultrasound image sequences.
//!
//! The crate is organised bottom-up:
//!
//! * [`media`] loads frame sequences and provides sub-pixel sampling, gradients
//!   and image pyramids.
//! * [`flow`] implements pyramidal Lucas-Kanade sparse optical flow.
//! * [`rstc`] fuses forward and reverse LK tracks between two anchor frames
//!   with a sigmoid weight, producing a [`rstc::Tracklet`].
//! * [`jitterfilter`] slides a window over an externally supplied trajectory,
//!   builds one tracklet per window position and averages the overlapping
//!   interior estimates per frame.
//! * [`annot`] is the layered annotation model with LK-assisted editing and
//!   canonical JSON / keypoint CSV persistence.
//! * [`geometry`] and [`evalkit`] derive metrics and evaluation statistics
//!   from trajectories.
//! * [`synth`] renders speckle sequences with analytic ground-truth motion.

pub mod annot;
pub mod evalkit;
pub mod flow;
pub mod geometry;
pub mod jitterfilter;
pub mod media;
pub mod point;
pub mod rstc;
pub mod synth;

pub use annot::{AnnotationLayer, AnnotationStore, Trajectory};
pub use flow::{TrackConfig, TrackStatus, TrackedPoint, Tracker};
pub use jitterfilter::{FilterConfig, FilteredTrajectory, Window};
pub use media::{Calibration, Frame, FrameSequence, Pyramid};
pub use point::Point2;
pub use rstc::{RstcConfig, Tracklet};
