//! Shared fixtures for the criterion benches.

use ustrack_core::synth::{render_sequence, MotionField, SynthSpec};
use ustrack_core::{AnnotationLayer, FrameSequence, Point2};

/// Speckle sequence translating at 0.1 px/frame with mild sensor noise,
/// plus its truth layer for a 3x3 grid of points.
pub fn translating(width: usize, height: usize, frames: usize) -> (FrameSequence, AnnotationLayer) {
    let spec = SynthSpec {
        width,
        height,
        frames,
        seed: 11,
        sensor_noise: 0.02,
        motion: MotionField::Translation { vx: 0.1, vy: -0.05 },
        ..SynthSpec::default()
    };
    let points: Vec<Point2> = (1..=3)
        .flat_map(|i| (1..=3).map(move |j| Point2::new(width as f64 * i as f64 / 4.0, height as f64 * j as f64 / 4.0)))
        .collect();
    render_sequence(&spec, &points).expect("valid synth spec")
}
