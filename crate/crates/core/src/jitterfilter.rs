//! Transposed sliding-window jitter filter.
//!
//! For every window start `s` in `0..=N-W` an LK-RSTC tracklet is anchored on
//! the input trajectory at frames `s` and `s+W-1`. Each frame's output is the
//! mean of the interior estimates (anchors excluded) of all tracklets covering
//! it, so a fully covered frame averages `W-2` estimates. Frames with no
//! valid covering estimate (the first and last frame, or frames where every
//! covering tracklet lost the point) pass the input through unchanged.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::{AnnotError, AnnotationLayer, Trajectory};
use crate::flow::{FlowError, Tracker};
use crate::media::FrameSequence;
use crate::point::Point2;
use crate::rstc::{sigmoid_weights, RstcConfig, RstcError, Tracklet};

/// Window duration used when the window is given in time.
pub const DEFAULT_WINDOW_SECONDS: f64 = 0.6;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("window exceeds sequence length ({window} > {frames})")]
    WindowTooLong { window: usize, frames: usize },
    #[error("window must span at least 3 frames, got {0}")]
    WindowTooShort(usize),
    #[error("invalid window duration {0} s")]
    WindowSeconds(f64),
    #[error("input trajectory is missing frames {}", summarize(.missing))]
    NotDense { missing: Vec<usize> },
    #[error("label `{label}`: {source}")]
    Label {
        label: String,
        #[source]
        source: Box<FilterError>,
    },
    #[error(transparent)]
    Rstc(#[from] RstcError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Annot(#[from] AnnotError),
}

fn summarize(frames: &[usize]) -> String {
    const SHOWN: usize = 10;
    let head: Vec<String> = frames.iter().take(SHOWN).map(usize::to_string).collect();
    if frames.len() > SHOWN {
        format!("{} ... ({} total)", head.join(", "), frames.len())
    } else {
        head.join(", ")
    }
}

/// Sliding-window length, in frames or seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Frames(usize),
    Seconds(f64),
}

impl Default for Window {
    fn default() -> Self {
        Window::Seconds(DEFAULT_WINDOW_SECONDS)
    }
}

impl Window {
    /// Window length in frames; seconds convert as `round(seconds * fps)`.
    pub fn frames(&self, fps: f64) -> Result<usize, FilterError> {
        let w = match *self {
            Window::Frames(w) => w,
            Window::Seconds(s) => {
                let w = (s * fps).round();
                if !(s > 0.0 && w.is_finite()) {
                    return Err(FilterError::WindowSeconds(s));
                }
                w as usize
            }
        };
        if w < 3 {
            return Err(FilterError::WindowTooShort(w));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub window: Window,
    pub rstc: RstcConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredTrajectory {
    pub points: Vec<Point2>,
    /// Number of valid interior estimates averaged at each frame.
    pub coverage: Vec<usize>,
    /// Name of the input trajectory.
    pub source: String,
}

impl FilteredTrajectory {
    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory::from_dense(&self.points)
    }
}

/// Number of windows of length `w` over `n` frames whose interior contains
/// frame `t`: the count of starts `s` with `max(0, t-w+2) <= s <= min(t-1, n-w)`.
pub fn coverage_count(t: usize, w: usize, n: usize) -> usize {
    if t == 0 || w < 3 || n < w {
        return 0;
    }
    let lo = (t + 2).saturating_sub(w);
    let hi = (t - 1).min(n - w);
    if hi < lo {
        0
    } else {
        hi - lo + 1
    }
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Filters a dense point sequence with an existing tracker.
///
/// `progress` receives `(done, total)` tracklet counts as work completes.
pub fn filter_points(
    tracker: &Tracker<'_>,
    input: &[Point2],
    window: usize,
    alpha: f64,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<(Vec<Point2>, Vec<usize>), FilterError> {
    let n = tracker.sequence().len();
    if input.len() != n {
        let missing = (input.len()..n).collect();
        return Err(FilterError::NotDense { missing });
    }
    if window < 3 {
        return Err(FilterError::WindowTooShort(window));
    }
    if window > n {
        return Err(FilterError::WindowTooLong { window, frames: n });
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(RstcError::Alpha(alpha).into());
    }

    let weights = sigmoid_weights(window, alpha);
    let starts = n - window + 1;
    let done = AtomicUsize::new(0);
    let tracklets: Vec<Tracklet> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let b = s + window - 1;
            let t = tracker.tracklet_with_weights(s, b, input[s], input[b], &weights)?;
            if let Some(cb) = progress {
                cb(done.fetch_add(1, Ordering::Relaxed) + 1, starts);
            }
            Ok(t)
        })
        .collect::<Result<_, RstcError>>()?;

    let mut acc = vec![(CompensatedSum::default(), CompensatedSum::default()); n];
    let mut coverage = vec![0usize; n];
    for tracklet in &tracklets {
        for (frame, p, valid) in tracklet.interior() {
            if valid {
                acc[frame].0.add(p.x);
                acc[frame].1.add(p.y);
                coverage[frame] += 1;
            }
        }
    }
    let points = acc
        .iter()
        .zip(&coverage)
        .zip(input)
        .map(|((sums, &c), &orig)| {
            if c == 0 {
                orig
            } else {
                Point2::new(sums.0.value() / c as f64, sums.1.value() / c as f64)
            }
        })
        .collect();
    Ok((points, coverage))
}

/// Filters one dense trajectory over the whole sequence.
pub fn filter_trajectory(
    seq: &FrameSequence,
    input: &Trajectory,
    cfg: &FilterConfig,
) -> Result<FilteredTrajectory, FilterError> {
    filter_named(&Tracker::new(seq, cfg.rstc.track)?, input, "trajectory", cfg, None)
}

fn filter_named(
    tracker: &Tracker<'_>,
    input: &Trajectory,
    name: &str,
    cfg: &FilterConfig,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<FilteredTrajectory, FilterError> {
    let seq = tracker.sequence();
    let window = cfg.window.frames(seq.fps())?;
    if window > seq.len() {
        return Err(FilterError::WindowTooLong {
            window,
            frames: seq.len(),
        });
    }
    let dense = input
        .to_dense(seq.len())
        .map_err(|missing| FilterError::NotDense { missing })?;
    let (points, coverage) = filter_points(tracker, &dense, window, cfg.rstc.alpha, progress)?;
    Ok(FilteredTrajectory {
        points,
        coverage,
        source: name.to_string(),
    })
}

/// Output layer name for a filtered layer.
pub fn filtered_layer_name(input: &str) -> String {
    format!("{input}_lkrstc")
}

/// Filters every label of a layer independently.
pub fn filter_layer(seq: &FrameSequence, layer: &AnnotationLayer, cfg: &FilterConfig) -> Result<AnnotationLayer, FilterError> {
    filter_layer_with_progress(seq, layer, cfg, &|_, _| {})
}

/// As [`filter_layer`], reporting `(done, total)` tracklets across all labels.
pub fn filter_layer_with_progress(
    seq: &FrameSequence,
    layer: &AnnotationLayer,
    cfg: &FilterConfig,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<AnnotationLayer, FilterError> {
    let tracker = Tracker::new(seq, cfg.rstc.track)?;
    let mut out = AnnotationLayer::new(filtered_layer_name(layer.name()))?;
    let window = cfg.window.frames(seq.fps())?;
    if window > seq.len() {
        return Err(FilterError::WindowTooLong {
            window,
            frames: seq.len(),
        });
    }
    let per_label = (seq.len() + 1).saturating_sub(window);
    let total = per_label * layer.labels().len();
    for (i, (label, traj)) in layer.labels().iter().enumerate() {
        let offset = i * per_label;
        let report = |done: usize, _: usize| progress(offset + done, total);
        let filtered = filter_named(&tracker, traj, label, cfg, Some(&report)).map_err(|e| FilterError::Label {
            label: label.clone(),
            source: Box::new(e),
        })?;
        out.insert_trajectory(label.clone(), filtered.to_trajectory());
    }
    Ok(out)
}
