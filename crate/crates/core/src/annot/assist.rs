//! LK-assisted editing: position guesses and tracklet interpolation between
//! labeled frames.

use std::ops::RangeInclusive;

use super::{AnnotError, AnnotationLayer};
use crate::flow::{TrackStatus, Tracker};
use crate::point::Point2;
use crate::rstc::{sigmoid_weights, RstcError, DEFAULT_ALPHA};

/// A proposed position for a frame; never written to the layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guess {
    pub p: Point2,
    pub status: TrackStatus,
    /// Annotated frame the guess was tracked from.
    pub source_frame: usize,
}

/// Tracks from the nearest annotated frame of `label` (ties go to the
/// earlier frame) to `target`.
pub fn guess(tracker: &Tracker<'_>, layer: &AnnotationLayer, label: &str, target: usize) -> Result<Guess, AnnotError> {
    let traj = layer.label(label)?;
    let source = traj
        .nearest_frame(target)
        .ok_or_else(|| AnnotError::EmptyLabel(label.to_string()))?;
    let start = traj.get(source).expect("nearest frame is annotated");
    if source == target {
        return Ok(Guess {
            p: start,
            status: TrackStatus::Ok,
            source_frame: source,
        });
    }
    let seg = tracker.track_range(start, source, target)?;
    let last = seg.last().expect("segment is non-empty");
    Ok(Guess {
        p: last.p,
        status: last.status,
        source_frame: source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolateOptions {
    pub alpha: f64,
    /// Replace existing points between anchors.
    pub overwrite: bool,
    /// Anchor frames to use; defaults to every annotated frame in range.
    pub anchors: Option<Vec<usize>>,
}

impl Default for InterpolateOptions {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            overwrite: false,
            anchors: None,
        }
    }
}

/// Fills frames between consecutive anchors with LK-RSTC tracklet estimates.
///
/// Applies to one label or, with `label = None`, to every label that has at
/// least two anchors in range. Anchor points are never modified. Returns the
/// number of points written.
pub fn interpolate_gaps(
    tracker: &Tracker<'_>,
    layer: &mut AnnotationLayer,
    label: Option<&str>,
    range: RangeInclusive<usize>,
    opts: &InterpolateOptions,
) -> Result<usize, AnnotError> {
    if !(opts.alpha > 0.0 && opts.alpha.is_finite()) {
        return Err(RstcError::Alpha(opts.alpha).into());
    }
    let labels: Vec<String> = match label {
        Some(l) => {
            layer.label(l)?;
            vec![l.to_string()]
        }
        None => layer.label_ids().map(str::to_string).collect(),
    };

    let mut written = 0;
    let mut eligible = 0;
    for id in &labels {
        let traj = layer.label(id)?;
        let anchors: Vec<usize> = match &opts.anchors {
            Some(list) => {
                let mut a: Vec<usize> = list.iter().copied().filter(|f| range.contains(f)).collect();
                a.sort_unstable();
                a.dedup();
                if let Some(f) = a.iter().find(|f| !traj.contains(**f)) {
                    return Err(AnnotError::Precondition(format!(
                        "anchor frame {f} of label `{id}` is not annotated"
                    )));
                }
                a
            }
            None => traj.range(range.clone()).map(|(f, _)| f).collect(),
        };
        if anchors.len() < 2 {
            if label.is_some() {
                return Err(AnnotError::Precondition(format!(
                    "label `{id}` needs at least 2 annotated frames in {}..={}, found {}",
                    range.start(),
                    range.end(),
                    anchors.len()
                )));
            }
            continue;
        }
        eligible += 1;

        let mut updates = Vec::new();
        for pair in anchors.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b - a < 2 {
                continue;
            }
            let (pa, pb) = (traj.get(a).expect("anchor"), traj.get(b).expect("anchor"));
            let w = sigmoid_weights(b - a + 1, opts.alpha);
            let tracklet = tracker.tracklet_with_weights(a, b, pa, pb, &w)?;
            for (frame, p, _) in tracklet.interior() {
                if opts.overwrite || !traj.contains(frame) {
                    updates.push((frame, p));
                }
            }
        }
        let traj = layer.label_mut(id)?;
        for (f, p) in updates {
            traj.insert(f, p);
            written += 1;
        }
    }
    if eligible == 0 {
        return Err(AnnotError::Precondition(format!(
            "no label has 2 annotated frames in {}..={}",
            range.start(),
            range.end()
        )));
    }
    Ok(written)
}
