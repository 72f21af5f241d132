//! Bidirectional LK tracklets fused with a reverse sigmoid weight.
//!
//! Between two anchor frames `a < b` the point is tracked forward from the
//! anchor at `a` and backward from the anchor at `b`. Each frame's estimate is
//! a convex combination of the two tracks whose weight moves from the forward
//! track (weight 1 at `a`) to the reverse track (weight 0 at `b`) along a
//! logistic curve.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{FlowError, TrackConfig, Tracker};
use crate::media::FrameSequence;
use crate::point::Point2;

pub const DEFAULT_ALPHA: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum RstcError {
    #[error("anchors must satisfy a < b < {len}, got a={a}, b={b}")]
    Anchors { a: usize, b: usize, len: usize },
    #[error("sigmoid steepness must be positive, got {0}")]
    Alpha(f64),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RstcConfig {
    /// Logistic steepness.
    pub alpha: f64,
    pub track: TrackConfig,
}

impl Default for RstcConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            track: TrackConfig::default(),
        }
    }
}

impl RstcConfig {
    pub fn validate(&self) -> Result<(), RstcError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(RstcError::Alpha(self.alpha));
        }
        self.track.validate()?;
        Ok(())
    }
}

/// Forward-track weights for a span of `len` frames.
///
/// `raw(s) = 1 / (1 + exp(alpha * (s - 0.5)))` with `s = k / (len - 1)`,
/// rescaled affinely so that `w[0] = 1` and `w[len-1] = 0`. Only the first
/// half is evaluated; the second half is `1 - w[mirror]`, which is exact in
/// floating point because the first-half weights lie in `[0.5, 1]`. Hence
/// `w[k] + w[len-1-k] == 1.0` holds bit-exactly.
pub fn sigmoid_weights(len: usize, alpha: f64) -> Vec<f64> {
    assert!(len >= 2, "sigmoid weights need at least two frames");
    let raw = |s: f64| 1.0 / (1.0 + (alpha * (s - 0.5)).exp());
    let hi = raw(0.0);
    let lo = raw(1.0);
    let last = (len - 1) as f64;
    let mut w = vec![0.0; len];
    for k in 0..len / 2 {
        let v = (raw(k as f64 / last) - lo) / (hi - lo);
        w[k] = v.clamp(0.5, 1.0);
    }
    if len % 2 == 1 {
        w[len / 2] = 0.5;
    }
    for k in 0..len / 2 {
        w[len - 1 - k] = 1.0 - w[k];
    }
    w[0] = 1.0;
    w[len - 1] = 0.0;
    w
}

/// Fused point estimates for every frame of `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub a: usize,
    pub b: usize,
    pub pa: Point2,
    pub pb: Point2,
    /// `estimates[k]` belongs to frame `a + k`.
    pub estimates: Vec<Point2>,
    /// Both directional tracks were `Ok` at that frame.
    pub interior_valid: Vec<bool>,
}

impl Tracklet {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn estimate(&self, frame: usize) -> Option<Point2> {
        frame.checked_sub(self.a).and_then(|k| self.estimates.get(k).copied())
    }

    pub fn is_valid_at(&self, frame: usize) -> bool {
        frame
            .checked_sub(self.a)
            .and_then(|k| self.interior_valid.get(k).copied())
            .unwrap_or(false)
    }

    /// Frames strictly between the anchors.
    pub fn interior(&self) -> impl Iterator<Item = (usize, Point2, bool)> + '_ {
        let n = self.estimates.len();
        (1..n.saturating_sub(1)).map(move |k| (self.a + k, self.estimates[k], self.interior_valid[k]))
    }
}

impl Tracker<'_> {
    /// Builds an LK-RSTC tracklet with precomputed `weights` (length `b-a+1`).
    pub fn tracklet_with_weights(
        &self,
        a: usize,
        b: usize,
        pa: Point2,
        pb: Point2,
        weights: &[f64],
    ) -> Result<Tracklet, RstcError> {
        let len = self.sequence().len();
        if !(a < b && b < len) {
            return Err(RstcError::Anchors { a, b, len });
        }
        debug_assert_eq!(weights.len(), b - a + 1);
        let fwd = self.track_range(pa, a, b)?;
        let mut rev = self.track_range(pb, b, a)?;
        rev.reverse();

        let mut estimates = Vec::with_capacity(fwd.len());
        let mut interior_valid = Vec::with_capacity(fwd.len());
        for ((f, r), &w) in fwd.iter().zip(&rev).zip(weights) {
            estimates.push(f.p * w + r.p * (1.0 - w));
            interior_valid.push(f.is_ok() && r.is_ok());
        }
        let last = estimates.len() - 1;
        estimates[0] = pa;
        estimates[last] = pb;
        Ok(Tracklet {
            a,
            b,
            pa,
            pb,
            estimates,
            interior_valid,
        })
    }

    pub fn tracklet(&self, a: usize, b: usize, pa: Point2, pb: Point2, alpha: f64) -> Result<Tracklet, RstcError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(RstcError::Alpha(alpha));
        }
        if !(a < b) {
            return Err(RstcError::Anchors {
                a,
                b,
                len: self.sequence().len(),
            });
        }
        let w = sigmoid_weights(b - a + 1, alpha);
        self.tracklet_with_weights(a, b, pa, pb, &w)
    }
}

/// One-off LK-RSTC tracklet between anchors `(a, pa)` and `(b, pb)`.
pub fn rstc_tracklet(
    seq: &FrameSequence,
    a: usize,
    b: usize,
    pa: Point2,
    pb: Point2,
    cfg: &RstcConfig,
) -> Result<Tracklet, RstcError> {
    cfg.validate()?;
    Tracker::new(seq, cfg.track)?.tracklet(a, b, pa, pb, cfg.alpha)
}
