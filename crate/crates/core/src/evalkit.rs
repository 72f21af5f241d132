//! Evaluation primitives: trajectory RMSE, Welch power spectral density,
//! zero-phase Butterworth band filters and a high-pass jitter metric.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;
use thiserror::Error;

use crate::annot::Trajectory;
use crate::media::Calibration;
use crate::point::Point2;

pub const BUTTERWORTH_ORDER: usize = 4;
pub const MAX_WELCH_SEGMENT: usize = 256;
pub const MIN_WELCH_SEGMENT: usize = 4;
pub const DEFAULT_JITTER_CUTOFF_HZ: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("trajectories share no frames")]
    EmptyIntersection,
    #[error("series of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },
    #[error("series contains non-finite values")]
    NonFinite,
    #[error("cutoff {cutoff} Hz must lie strictly between 0 and {nyquist} Hz")]
    Cutoff { cutoff: f64, nyquist: f64 },
    #[error("trajectory is not dense over frames 0..{0}")]
    NotDense(usize),
}

/// RMS of the calibrated Euclidean distance over the shared frames.
pub fn rmse(a: &Trajectory, b: &Trajectory, cal: &Calibration) -> Result<f64, EvalError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (f, pa) in a.iter() {
        if let Some(pb) = b.get(f) {
            let d = cal.to_mm(pa - pb);
            sum += d.dot(d);
            n += 1;
        }
    }
    if n == 0 {
        return Err(EvalError::EmptyIntersection);
    }
    Ok((sum / n as f64).sqrt())
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    /// Units of the input squared per hertz.
    pub power: Vec<f64>,
    pub segment_len: usize,
    pub overlap: usize,
    pub segments: usize,
    pub window: &'static str,
    pub fps: f64,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        self.fps / self.segment_len as f64
    }

    /// Index of the bin whose centre is closest to `f`.
    pub fn bin_of(&self, f: f64) -> usize {
        ((f / self.bin_width()).round().max(0.0) as usize).min(self.freqs.len() - 1)
    }

    pub fn at(&self, f: f64) -> f64 {
        self.power[self.bin_of(f)]
    }

    /// Mean density over bins whose centre lies in `[lo, hi]`.
    pub fn band_mean(&self, lo: f64, hi: f64) -> f64 {
        let vals: Vec<f64> = self
            .freqs
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| *p)
            .collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// Rectangle-rule integral of the density over all bins.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.bin_width()
    }

    pub fn argmax(&self) -> usize {
        self.power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq,power\n");
        for (f, p) in self.freqs.iter().zip(&self.power) {
            out.push_str(&format!("{f},{p}\n"));
        }
        out
    }
}

/// Welch segment length for a series of `len` samples.
pub fn welch_segment_len(len: usize) -> usize {
    let half = len / 2;
    if half == 0 {
        return 0;
    }
    let pow2 = 1usize << (usize::BITS - 1 - half.leading_zeros());
    pow2.min(MAX_WELCH_SEGMENT)
}

/// Periodic Hann window.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate: Hann window, 50 % overlap, per-segment mean removal and
/// one-sided density scaling.
pub fn psd(series: &[f64], fps: f64) -> Result<Spectrum, EvalError> {
    let nperseg = welch_segment_len(series.len());
    if nperseg < MIN_WELCH_SEGMENT {
        return Err(EvalError::TooShort {
            len: series.len(),
            min: 2 * MIN_WELCH_SEGMENT,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let step = nperseg / 2;
    let segments = (series.len() - nperseg) / step + 1;
    let window = hann(nperseg);
    let scale = 1.0 / (fps * window.iter().map(|w| w * w).sum::<f64>());
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nperseg);
    let bins = nperseg / 2 + 1;
    let mut power = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); nperseg];
    for s in 0..segments {
        let seg = &series[s * step..s * step + nperseg];
        let mean = seg.iter().sum::<f64>() / nperseg as f64;
        for ((b, v), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            *p += buf[k].norm_sqr();
        }
    }
    for (k, p) in power.iter_mut().enumerate() {
        *p *= scale / segments as f64;
        if k != 0 && k != nperseg / 2 {
            *p *= 2.0;
        }
    }
    let freqs = (0..bins).map(|k| k as f64 * fps / nperseg as f64).collect();
    Ok(Spectrum {
        freqs,
        power,
        segment_len: nperseg,
        overlap: step,
        segments,
        window: "hann",
        fps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BandKind {
    Lowpass,
    Highpass,
}

/// Direct-form II transposed biquad coefficients, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes a constant unit input a fixed point.
    fn steady_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        [g - self.b[0], self.b[2] - self.a[1] * g]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        for v in x.iter_mut() {
            let y = self.b[0] * *v + z[0];
            z[0] = self.b[1] * *v - self.a[0] * y + z[1];
            z[1] = self.b[2] * *v - self.a[1] * y;
            *v = y;
        }
    }
}

/// Even-order Butterworth filter as cascaded second-order sections, designed
/// with the prewarped bilinear transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub sections: Vec<Biquad>,
    pub kind: BandKind,
    pub cutoff: f64,
    pub fps: f64,
}

impl Butterworth {
    pub fn design(kind: BandKind, order: usize, cutoff: f64, fps: f64) -> Result<Self, EvalError> {
        assert!(order >= 2 && order % 2 == 0, "order must be even");
        let nyquist = fps / 2.0;
        if !(cutoff > 0.0 && cutoff < nyquist) {
            return Err(EvalError::Cutoff { cutoff, nyquist });
        }
        let k = (PI * cutoff / fps).tan();
        let sections = (0..order / 2)
            .map(|i| {
                let theta = (2 * i + 1) as f64 * PI / (2 * order) as f64;
                let q = 1.0 / (2.0 * theta.sin());
                let norm = 1.0 / (1.0 + k / q + k * k);
                let a = [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm];
                let b = match kind {
                    BandKind::Lowpass => {
                        let b0 = k * k * norm;
                        [b0, 2.0 * b0, b0]
                    }
                    BandKind::Highpass => [norm, -2.0 * norm, norm],
                };
                Biquad { b, a }
            })
            .collect();
        Ok(Self {
            sections,
            kind,
            cutoff,
            fps,
        })
    }

    fn pad_len(&self) -> usize {
        3 * 2 * self.sections.len()
    }

    fn run_once(&self, x: &mut [f64]) {
        let mut scale = x[0];
        for s in &self.sections {
            let zi = s.steady_state();
            s.run(x, [zi[0] * scale, zi[1] * scale]);
            scale *= s.dc_gain();
        }
    }

    /// Forward-backward filtering with odd reflective padding of
    /// `3 * order` samples and steady-state initial conditions.
    pub fn filtfilt(&self, series: &[f64]) -> Result<Vec<f64>, EvalError> {
        let pad = self.pad_len();
        let n = series.len();
        if n <= pad {
            return Err(EvalError::TooShort { len: n, min: pad + 1 });
        }
        if series.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * series[0] - series[i]));
        ext.extend_from_slice(series);
        ext.extend((1..=pad).map(|i| 2.0 * series[n - 1] - series[n - 1 - i]));

        self.run_once(&mut ext);
        ext.reverse();
        self.run_once(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

/// Zero-phase 4th-order Butterworth low- or high-pass.
pub fn band_filter(series: &[f64], fps: f64, kind: BandKind, cutoff: f64) -> Result<Vec<f64>, EvalError> {
    Butterworth::design(kind, BUTTERWORTH_ORDER, cutoff, fps)?.filtfilt(series)
}

/// Applies [`band_filter`] to both coordinates of a dense point series.
pub fn band_filter_points(points: &[Point2], fps: f64, kind: BandKind, cutoff: f64) -> Result<Vec<Point2>, EvalError> {
    let filter = Butterworth::design(kind, BUTTERWORTH_ORDER, cutoff, fps)?;
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let fx = filter.filtfilt(&xs)?;
    let fy = filter.filtfilt(&ys)?;
    Ok(fx.into_iter().zip(fy).map(|(x, y)| Point2::new(x, y)).collect())
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// `sqrt(rms_x^2 + rms_y^2)` of the high-passed coordinates, in mm.
pub fn jitter_metric(points: &[Point2], cal: &Calibration, cutoff: f64) -> Result<f64, EvalError> {
    let hp = band_filter_points(points, cal.fps, BandKind::Highpass, cutoff)?;
    let xs: Vec<f64> = hp.iter().map(|p| p.x * cal.mm_per_px_x).collect();
    let ys: Vec<f64> = hp.iter().map(|p| p.y * cal.mm_per_px_y).collect();
    Ok(rms(&xs).hypot(rms(&ys)))
}

/// [`jitter_metric`] for a trajectory that must cover frames `0..n`.
pub fn trajectory_jitter(traj: &Trajectory, n: usize, cal: &Calibration, cutoff: f64) -> Result<f64, EvalError> {
    let dense = traj.to_dense(n).map_err(|_| EvalError::NotDense(n))?;
    jitter_metric(&dense, cal, cutoff)
}
