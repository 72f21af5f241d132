//! Pyramidal Lucas-Kanade sparse optical flow.
//!
//! [`lk_step`] is the classic single-level iterative registration with a fixed
//! template gradient; [`pyr_track`] runs it coarse-to-fine; [`Tracker`] chains
//! frame-to-frame steps over a range of a [`FrameSequence`] in either temporal
//! direction, caching pyramids per frame.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::{build_pyramid, sample_grid, Frame, FrameSequence, Pyramid};
use crate::point::Point2;

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("invalid tracking config: {0}")]
    Config(String),
    #[error("frame {frame} out of range for a {len}-frame sequence")]
    FrameOutOfRange { frame: usize, len: usize },
}

/// Lucas-Kanade parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackConfig {
    /// Odd window side length in pixels.
    pub win: usize,
    /// Pyramid levels, clamped per frame size.
    pub levels: usize,
    /// Gauss-Newton iterations per level.
    pub max_iters: usize,
    /// Convergence threshold on the update norm, in pixels.
    pub eps: f64,
    /// Minimum eigenvalue of the normal matrix divided by `win * win`.
    pub min_eig: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            win: 21,
            levels: 3,
            max_iters: 30,
            eps: 0.01,
            min_eig: 1e-4,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.win < 3 || self.win % 2 == 0 {
            return Err(FlowError::Config(format!("window must be odd and >= 3, got {}", self.win)));
        }
        if self.levels < 1 {
            return Err(FlowError::Config("levels must be >= 1".into()));
        }
        if self.max_iters < 1 {
            return Err(FlowError::Config("max_iters must be >= 1".into()));
        }
        if !(self.eps > 0.0) {
            return Err(FlowError::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.min_eig >= 0.0) {
            return Err(FlowError::Config(format!("min_eig must be >= 0, got {}", self.min_eig)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Ok,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedPoint {
    pub p: Point2,
    pub status: TrackStatus,
    /// Mean absolute intensity error over the window at the final estimate.
    pub residual: f64,
}

impl TrackedPoint {
    pub fn ok(p: Point2, residual: f64) -> Self {
        Self {
            p,
            status: TrackStatus::Ok,
            residual,
        }
    }

    pub fn lost(p: Point2) -> Self {
        Self {
            p,
            status: TrackStatus::Lost,
            residual: 0.0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == TrackStatus::Ok
    }
}

/// One level of iterative LK registration.
///
/// The template window is centred on `p0` in `prev`; the search starts at
/// `guess` in `next`. Returns `p0 + d` on convergence. The status is `Lost`
/// (with `p` = clamped `guess`) when the patch is untextured, and `Lost` with
/// the last in-bounds estimate when the estimate leaves the frame.
pub fn lk_step(prev: &Frame, next: &Frame, p0: Point2, guess: Point2, cfg: &TrackConfig) -> TrackedPoint {
    let p0 = prev.clamp_point(p0);
    let guess = next.clamp_point(guess);
    let half = (cfg.win / 2) as isize;
    let n = cfg.win * cfg.win;

    // Samples one pixel beyond the window so gradients come from the grid.
    let side = cfg.win + 2;
    let mut grid = Vec::with_capacity(side * side);
    let lo = -(half as f64) - 1.0;
    sample_grid(prev, p0 + Point2::new(lo, lo), side, side, &mut grid);
    let mut template = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
    for row in 1..=cfg.win {
        for col in 1..=cfg.win {
            let at = row * side + col;
            let gx = (grid[at + 1] - grid[at - 1]) * 0.5;
            let gy = (grid[at + side] - grid[at - side]) * 0.5;
            template.push(grid[at]);
            grads.push((gx, gy));
            gxx += gx * gx;
            gxy += gx * gy;
            gyy += gy * gy;
        }
    }

    let area = n as f64;
    let (a, b, c) = (gxx / area, gxy / area, gyy / area);
    let min_eig = 0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let det = gxx * gyy - gxy * gxy;
    if !(min_eig >= cfg.min_eig) || det <= f64::EPSILON * (gxx * gyy).max(f64::MIN_POSITIVE) {
        return TrackedPoint::lost(guess);
    }
    let inv = 1.0 / det;

    let corner = Point2::new(-(half as f64), -(half as f64));
    let mut warped = Vec::with_capacity(n);
    let mut d = guess - p0;
    for _ in 0..cfg.max_iters {
        sample_grid(next, p0 + d + corner, cfg.win, cfg.win, &mut warped);
        let (mut bx, mut by) = (0.0, 0.0);
        for ((t, w), (gx, gy)) in template.iter().zip(&warped).zip(&grads) {
            let err = t - w;
            bx += gx * err;
            by += gy * err;
        }
        let step = Point2::new(inv * (gyy * bx - gxy * by), inv * (gxx * by - gxy * bx));
        let candidate = d + step;
        if !next.contains(p0 + candidate) || !candidate.is_finite() {
            return TrackedPoint::lost(p0 + d);
        }
        d = candidate;
        if step.norm() < cfg.eps {
            break;
        }
    }

    sample_grid(next, p0 + d + corner, cfg.win, cfg.win, &mut warped);
    let residual: f64 = template.iter().zip(&warped).map(|(t, w)| (t - w).abs()).sum();
    TrackedPoint::ok(p0 + d, residual / area)
}

/// Coarse-to-fine LK between two pyramids.
///
/// Lost status at any level is fatal and reported with `p = p0`.
pub fn pyr_track(prev: &Pyramid, next: &Pyramid, p0: Point2, cfg: &TrackConfig) -> TrackedPoint {
    let levels = prev.len().min(next.len()).min(cfg.levels.max(1));
    let mut guess_disp = Point2::ZERO;
    let mut last = TrackedPoint::ok(p0, 0.0);
    for level in (0..levels).rev() {
        let scale = 1.0 / (1u64 << level) as f64;
        let pl = p0 * scale;
        let step = lk_step(prev.level(level), next.level(level), pl, pl + guess_disp, cfg);
        if !step.is_ok() {
            return TrackedPoint::lost(p0);
        }
        let disp = step.p - pl;
        last = step;
        if level > 0 {
            guess_disp = disp * 2.0;
        }
    }
    last
}

/// Frame-to-frame tracker over one sequence with lazily cached pyramids.
///
/// Safe to share across threads; each frame's pyramid is built at most once.
pub struct Tracker<'a> {
    seq: &'a FrameSequence,
    cfg: TrackConfig,
    pyramids: Vec<OnceLock<Pyramid>>,
}

impl<'a> Tracker<'a> {
    pub fn new(seq: &'a FrameSequence, cfg: TrackConfig) -> Result<Self, FlowError> {
        cfg.validate()?;
        let pyramids = (0..seq.len()).map(|_| OnceLock::new()).collect();
        Ok(Self { seq, cfg, pyramids })
    }

    pub fn sequence(&self) -> &'a FrameSequence {
        self.seq
    }

    pub fn config(&self) -> &TrackConfig {
        &self.cfg
    }

    pub fn pyramid(&self, frame: usize) -> &Pyramid {
        self.pyramids[frame].get_or_init(|| build_pyramid(self.seq.frame(frame), self.cfg.levels))
    }

    fn check_frame(&self, frame: usize) -> Result<(), FlowError> {
        if frame >= self.seq.len() {
            return Err(FlowError::FrameOutOfRange {
                frame,
                len: self.seq.len(),
            });
        }
        Ok(())
    }

    /// Track `p_start` from frame `from` to frame `to`, one step at a time.
    ///
    /// Element `k` of the result corresponds to frame `from + k * dir`; element
    /// 0 is `p_start` itself. After the first lost step the remaining frames
    /// carry the last valid estimate with `Lost` status.
    pub fn track_range(&self, p_start: Point2, from: usize, to: usize) -> Result<Vec<TrackedPoint>, FlowError> {
        self.check_frame(from)?;
        self.check_frame(to)?;
        let steps = from.abs_diff(to);
        let forward = to >= from;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(TrackedPoint::ok(p_start, 0.0));
        let mut current = p_start;
        let mut frame = from;
        for _ in 0..steps {
            let nxt = if forward { frame + 1 } else { frame - 1 };
            let tp = pyr_track(self.pyramid(frame), self.pyramid(nxt), current, &self.cfg);
            if !tp.is_ok() {
                out.extend(std::iter::repeat(TrackedPoint::lost(current)).take(steps + 1 - out.len()));
                break;
            }
            current = tp.p;
            out.push(tp);
            frame = nxt;
        }
        Ok(out)
    }
}

/// Convenience wrapper building a one-off [`Tracker`].
pub fn track_range(
    seq: &FrameSequence,
    p_start: Point2,
    from: usize,
    to: usize,
    cfg: &TrackConfig,
) -> Result<Vec<TrackedPoint>, FlowError> {
    Tracker::new(seq, *cfg)?.track_range(p_start, from, to)
}
