//! Synthetic speckle sequences with analytic ground-truth motion.
//!
//! A base speckle texture (seeded uniform noise blurred by a Gaussian) is
//! warped per frame by a [`MotionField`] using inverse mapping with bilinear
//! resampling. The truth position of a material point `P0` at frame `t` is
//! `P0 + d(P0, t)`, so imagery and truth move identically.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annot::{AnnotError, AnnotationLayer, Trajectory};
use crate::media::{sample_bilinear, Calibration, Frame, FrameSequence, MediaError};
use crate::point::Point2;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error("point {index} leaves the frame at frame {frame} (position {x:.3}, {y:.3})")]
    PointExits { index: usize, frame: usize, x: f64, y: f64 },
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Annot(#[from] AnnotError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Displacement field `d(P0, t)` in pixels; `t` counts frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionField {
    /// Constant velocity in px/frame.
    Translation { vx: f64, vy: f64 },
    /// `amplitude * sin(2 pi f t / fps)` along one axis.
    Sinusoid { amplitude: f64, freq_hz: f64, axis: Axis },
    /// Horizontal shear growing linearly in time: `dx = rate * t * (y0 - center_y)`.
    Shear { rate: f64, center_y: f64 },
    /// Sum of the component fields.
    Composed { parts: Vec<MotionField> },
}

impl Default for MotionField {
    fn default() -> Self {
        MotionField::Translation { vx: 0.0, vy: 0.0 }
    }
}

/// `dx = ux + kx * y0`, `dy = uy`; every supported field has this form.
#[derive(Debug, Clone, Copy, Default)]
struct Affine {
    ux: f64,
    uy: f64,
    kx: f64,
}

impl MotionField {
    fn affine(&self, t: f64, fps: f64) -> Affine {
        match self {
            MotionField::Translation { vx, vy } => Affine {
                ux: vx * t,
                uy: vy * t,
                kx: 0.0,
            },
            MotionField::Sinusoid { amplitude, freq_hz, axis } => {
                let v = amplitude * (2.0 * PI * freq_hz * t / fps).sin();
                match axis {
                    Axis::X => Affine { ux: v, ..Default::default() },
                    Axis::Y => Affine { uy: v, ..Default::default() },
                }
            }
            MotionField::Shear { rate, center_y } => Affine {
                ux: -rate * t * center_y,
                uy: 0.0,
                kx: rate * t,
            },
            MotionField::Composed { parts } => parts.iter().fold(Affine::default(), |acc, p| {
                let a = p.affine(t, fps);
                Affine {
                    ux: acc.ux + a.ux,
                    uy: acc.uy + a.uy,
                    kx: acc.kx + a.kx,
                }
            }),
        }
    }

    fn affine_rate(&self, t: f64, fps: f64) -> Affine {
        match self {
            MotionField::Translation { vx, vy } => Affine {
                ux: *vx,
                uy: *vy,
                kx: 0.0,
            },
            MotionField::Sinusoid { amplitude, freq_hz, axis } => {
                let w = 2.0 * PI * freq_hz / fps;
                let v = amplitude * w * (w * t).cos();
                match axis {
                    Axis::X => Affine { ux: v, ..Default::default() },
                    Axis::Y => Affine { uy: v, ..Default::default() },
                }
            }
            MotionField::Shear { rate, center_y } => Affine {
                ux: -rate * center_y,
                uy: 0.0,
                kx: *rate,
            },
            MotionField::Composed { parts } => parts.iter().fold(Affine::default(), |acc, p| {
                let a = p.affine_rate(t, fps);
                Affine {
                    ux: acc.ux + a.ux,
                    uy: acc.uy + a.uy,
                    kx: acc.kx + a.kx,
                }
            }),
        }
    }

    /// Displacement of material point `p0` at frame time `t`.
    pub fn displacement(&self, p0: Point2, t: f64, fps: f64) -> Point2 {
        let a = self.affine(t, fps);
        Point2::new(a.ux + a.kx * p0.y, a.uy)
    }

    /// Analytic `d/dt` of [`Self::displacement`], in px/frame.
    pub fn velocity(&self, p0: Point2, t: f64, fps: f64) -> Point2 {
        let a = self.affine_rate(t, fps);
        Point2::new(a.ux + a.kx * p0.y, a.uy)
    }

    /// Material point that sits at `x` at frame time `t`.
    pub fn inverse(&self, x: Point2, t: f64, fps: f64) -> Point2 {
        let a = self.affine(t, fps);
        let y0 = x.y - a.uy;
        Point2::new(x.x - a.ux - a.kx * y0, y0)
    }

    fn validate(&self, fps: f64) -> Result<(), SynthError> {
        match self {
            MotionField::Sinusoid { freq_hz, amplitude, .. } => {
                if !(*freq_hz >= 0.0 && *freq_hz < fps / 2.0) {
                    return Err(SynthError::Spec(format!(
                        "sinusoid frequency {freq_hz} Hz must be below Nyquist ({} Hz)",
                        fps / 2.0
                    )));
                }
                if !amplitude.is_finite() {
                    return Err(SynthError::Spec("sinusoid amplitude must be finite".into()));
                }
            }
            MotionField::Translation { vx, vy } if !(vx.is_finite() && vy.is_finite()) => {
                return Err(SynthError::Spec("velocity must be finite".into()));
            }
            MotionField::Shear { rate, center_y } if !(rate.is_finite() && center_y.is_finite()) => {
                return Err(SynthError::Spec("shear parameters must be finite".into()));
            }
            MotionField::Composed { parts } => {
                for p in parts {
                    p.validate(fps)?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Speckle texture parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeckleSpec {
    /// Gaussian blur sigma in pixels applied to the uniform noise.
    pub sigma: f64,
    /// Fixed contrast gain about mid-gray applied after blurring.
    pub gain: f64,
}

impl Default for SpeckleSpec {
    fn default() -> Self {
        Self { sigma: 1.5, gain: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f64,
    pub seed: u64,
    pub speckle: SpeckleSpec,
    pub motion: MotionField,
    /// Standard deviation of additive per-frame Gaussian noise.
    pub sensor_noise: f64,
    pub mm_per_px: [f64; 2],
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            frames: 30,
            fps: 50.0,
            seed: 0,
            speckle: SpeckleSpec::default(),
            motion: MotionField::default(),
            sensor_noise: 0.0,
            mm_per_px: [1.0, 1.0],
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.width < 2 || self.height < 2 || self.frames == 0 {
            return Err(SynthError::Spec(format!(
                "need at least 2x2 pixels and one frame, got {}x{}x{}",
                self.width, self.height, self.frames
            )));
        }
        if !(self.speckle.sigma > 0.0 && self.speckle.sigma.is_finite()) {
            return Err(SynthError::Spec(format!("speckle sigma must be positive, got {}", self.speckle.sigma)));
        }
        if !(self.sensor_noise >= 0.0 && self.sensor_noise.is_finite()) {
            return Err(SynthError::Spec("sensor noise must be >= 0".into()));
        }
        Calibration::new(self.mm_per_px[0], self.mm_per_px[1], self.fps)?;
        self.motion.validate(self.fps)
    }

    fn calibration(&self) -> Calibration {
        Calibration::new(self.mm_per_px[0], self.mm_per_px[1], self.fps).expect("validated")
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian blur; taps falling outside the frame are dropped and
/// the remaining weights renormalised.
fn blur(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let pass = |src: &[f64], len: usize, at: &dyn Fn(usize, usize) -> usize, lines: usize| {
        let mut out = vec![0.0; w * h];
        for line in 0..lines {
            for i in 0..len {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (j, c) in k.iter().enumerate() {
                    let q = i as isize + j as isize - r;
                    if q >= 0 && (q as usize) < len {
                        acc += c * src[at(line, q as usize)];
                        norm += c;
                    }
                }
                out[at(line, i)] = acc / norm;
            }
        }
        out
    };
    let tmp = pass(data, w, &|y, x| y * w + x, h);
    pass(&tmp, h, &|x, y| y * w + x, w)
}

fn speckle_field(w: usize, h: usize, speckle: &SpeckleSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise: Vec<f64> = (0..w * h).map(|_| rng.random::<f64>()).collect();
    blur(&noise, w, h, speckle.sigma)
        .into_iter()
        .map(|v| (0.5 + speckle.gain * (v - 0.5)).clamp(0.0, 1.0))
        .collect()
}

/// Base speckle texture of the spec's frame size; deterministic per seed.
pub fn make_speckle(spec: &SynthSpec) -> Result<Frame, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data = speckle_field(spec.width, spec.height, &spec.speckle, &mut rng);
    Ok(Frame::new(0, spec.width, spec.height, data)?)
}

/// Ground-truth position of material point `p0` at every frame.
pub fn truth_trajectory(spec: &SynthSpec, p0: Point2) -> Vec<Point2> {
    (0..spec.frames)
        .map(|t| p0 + spec.motion.displacement(p0, t as f64, spec.fps))
        .collect()
}

/// Renders the sequence and a truth layer named `truth` with one label per
/// query point (`"0"`, `"1"`, ...).
pub fn render_sequence(spec: &SynthSpec, points: &[Point2]) -> Result<(FrameSequence, AnnotationLayer), SynthError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);

    let mut truth = AnnotationLayer::new("truth")?;
    for (i, p0) in points.iter().enumerate() {
        let traj = truth_trajectory(spec, *p0);
        if let Some((frame, p)) = traj
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f64 && p.y <= (h - 1) as f64))
        {
            return Err(SynthError::PointExits {
                index: i,
                frame,
                x: p.x,
                y: p.y,
            });
        }
        truth.insert_trajectory(i.to_string(), Trajectory::from_dense(&traj));
    }

    // Margin so that every inverse-mapped sample lands on real texture.
    let corners = [
        Point2::new(0.0, 0.0),
        Point2::new((w - 1) as f64, 0.0),
        Point2::new(0.0, (h - 1) as f64),
        Point2::new((w - 1) as f64, (h - 1) as f64),
    ];
    let mut reach: f64 = 0.0;
    for t in 0..spec.frames {
        for c in corners {
            let src = spec.motion.inverse(c, t as f64, spec.fps);
            reach = reach.max((src - c).x.abs()).max((src - c).y.abs());
        }
    }
    let margin = reach.ceil() as usize + 4;
    let (bw, bh) = (w + 2 * margin, h + 2 * margin);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = Frame::new(0, bw, bh, speckle_field(bw, bh, &spec.speckle, &mut rng))?;
    let offset = Point2::new(margin as f64, margin as f64);

    let noise = Normal::new(0.0, spec.sensor_noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let frames: Vec<Frame> = (0..spec.frames)
        .into_par_iter()
        .map(|t| {
            let mut frng = ChaCha8Rng::seed_from_u64(spec.seed);
            frng.set_stream(t as u64 + 1);
            let mut data = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let src = spec.motion.inverse(Point2::new(x as f64, y as f64), t as f64, spec.fps);
                    let mut v = sample_bilinear(&base, src + offset);
                    if spec.sensor_noise > 0.0 {
                        v += noise.sample(&mut frng);
                    }
                    data.push(v.clamp(0.0, 1.0));
                }
            }
            Frame::new(t, w, h, data)
        })
        .collect::<Result<_, _>>()?;
    Ok((FrameSequence::new(frames, spec.calibration())?, truth))
}
