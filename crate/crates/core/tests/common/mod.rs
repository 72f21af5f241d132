#![allow(dead_code)]

use ustrack_core::flow::{TrackConfig, Tracker};
use ustrack_core::synth::{render_sequence, MotionField, SynthSpec};
use ustrack_core::{FrameSequence, Point2};

pub fn translating(width: usize, height: usize, frames: usize, vx: f64, vy: f64, seed: u64) -> FrameSequence {
    let spec = SynthSpec {
        width,
        height,
        frames,
        seed,
        motion: MotionField::Translation { vx, vy },
        ..SynthSpec::default()
    };
    render_sequence(&spec, &[]).unwrap().0
}

pub fn static_seq(width: usize, height: usize, frames: usize, seed: u64) -> FrameSequence {
    translating(width, height, frames, 0.0, 0.0, seed)
}

/// Logistic weights evaluated directly from the definition.
pub fn naive_weights(len: usize, alpha: f64) -> Vec<f64> {
    let raw = |s: f64| 1.0 / (1.0 + (alpha * (s - 0.5)).exp());
    let (r0, r1) = (raw(0.0), raw(1.0));
    (0..len)
        .map(|k| (raw(k as f64 / (len - 1) as f64) - r1) / (r0 - r1))
        .collect()
}

/// Materialises every window's tracklet from plain forward/backward tracks
/// and averages interior estimates per frame with a naive sum.
pub fn brute_force_filter(seq: &FrameSequence, input: &[Point2], w: usize, alpha: f64, cfg: &TrackConfig) -> Vec<Point2> {
    let n = seq.len();
    let weights = naive_weights(w, alpha);
    let tracker = Tracker::new(seq, *cfg).unwrap();
    let mut sums = vec![(0.0, 0.0, 0usize); n];
    for s in 0..=n - w {
        let b = s + w - 1;
        let fwd = tracker.track_range(input[s], s, b).unwrap();
        let rev = tracker.track_range(input[b], b, s).unwrap();
        for k in 1..w - 1 {
            let (f, r) = (&fwd[k], &rev[w - 1 - k]);
            if f.is_ok() && r.is_ok() {
                let e = &mut sums[s + k];
                e.0 += weights[k] * f.p.x + (1.0 - weights[k]) * r.p.x;
                e.1 += weights[k] * f.p.y + (1.0 - weights[k]) * r.p.y;
                e.2 += 1;
            }
        }
    }
    sums.iter()
        .zip(input)
        .map(|(&(x, y, c), &p)| if c == 0 { p } else { Point2::new(x / c as f64, y / c as f64) })
        .collect()
}

/// Deterministic normal samples for test inputs.
pub fn gaussian_noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, sigma).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

/// Random layer with up to `labels` labels over `frames` frames, points in a
/// `w x h` frame, including awkward floats (subnormal-free, full mantissa).
pub fn random_layer(rng: &mut impl rand::Rng, labels: usize, frames: usize, w: f64, h: f64) -> ustrack_core::AnnotationLayer {
    let mut layer = ustrack_core::AnnotationLayer::new(format!("layer_{}", rng.random_range(0..1000))).unwrap();
    for l in 0..rng.random_range(0..=labels) {
        let id = if rng.random_bool(0.5) { l.to_string() } else { format!("lbl-{l}") };
        layer.add_label(id.clone());
        for f in 0..frames {
            if rng.random_bool(0.4) {
                let p = Point2::new(rng.random::<f64>() * w, rng.random::<f64>() * h);
                layer.set_point(&id, f, p).unwrap();
            }
        }
    }
    layer
}

/// A fascicle configuration with known answer: aponeuroses `gap` apart, the
/// fascicle leaving the lower one at `angle_deg`, then rotated by `rot_deg`
/// about the origin and translated by `shift`. Returns the five points and
/// the analytic (length, pennation).
pub fn fascicle_case(gap: f64, angle_deg: f64, rot_deg: f64, shift: Point2) -> ([Point2; 5], (f64, f64)) {
    let th = angle_deg.to_radians();
    let x0 = 3.0;
    let local = [
        Point2::new(-5.0, 0.0),
        Point2::new(17.0, 0.0),
        Point2::new(x0, gap),
        Point2::new(x0 + 11.0, gap),
        Point2::new(x0 + 4.0 * th.cos(), gap - 4.0 * th.sin()),
    ];
    let (s, c) = rot_deg.to_radians().sin_cos();
    let pts = local.map(|p| Point2::new(c * p.x - s * p.y, s * p.x + c * p.y) + shift);
    (pts, (gap / th.sin(), angle_deg))
}
