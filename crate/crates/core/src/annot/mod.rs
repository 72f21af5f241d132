//! Layered point annotations.
//!
//! An [`AnnotationLayer`] maps label ids (strings such as `"0"`..`"10"`) to
//! sparse [`Trajectory`]s. An [`AnnotationStore`] owns several layers for one
//! sequence, validates edits against the sequence bounds, tracks a revision
//! counter per layer and keeps an in-memory undo history.

mod assist;
mod dlc;
mod persist;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::hash::{Hash, Hasher};
use std::ops::RangeInclusive;
use std::path::PathBuf;

use thiserror::Error;

use crate::flow::FlowError;
use crate::media::FrameSequence;
use crate::point::Point2;
use crate::rstc::RstcError;

pub use assist::{guess, interpolate_gaps, Guess, InterpolateOptions};
pub use dlc::{export_csv, import_csv, CsvImportOptions};
pub use persist::{from_json_str, load_layer, save_layer, to_canonical_json, write_atomic, LAYER_SCHEMA};

pub const UNDO_DEPTH: usize = 100;

#[derive(Debug, Error)]
pub enum AnnotError {
    #[error("layer `{0}` not found")]
    LayerNotFound(String),
    #[error("label `{label}` not found in layer `{layer}`")]
    LabelNotFound { layer: String, label: String },
    #[error("layer `{0}` already exists")]
    DuplicateLayer(String),
    #[error("layer name must be non-empty")]
    EmptyName,
    #[error("frame {frame} out of range for a {frames}-frame sequence")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error("label `{label}` frame {frame}: point ({x}, {y}) outside the {width}x{height} frame")]
    PointOutOfBounds {
        label: String,
        frame: usize,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("label `{label}` frame {frame}: point is not finite")]
    NonFinite { label: String, frame: usize },
    #[error("primary and overlay layer must differ (`{0}`)")]
    SameSelection(String),
    #[error("label `{0}` has no annotated frames")]
    EmptyLabel(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported layer schema `{found}`, expected `{expected}`")]
    Version { found: String, expected: &'static str },
    #[error("invalid layer: label `{label}`{}: {message}", frame.map(|f| format!(" frame {f}")).unwrap_or_default())]
    Validation {
        label: String,
        frame: Option<usize>,
        message: String,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Rstc(#[from] RstcError),
}

/// One label's sparse map frame index -> point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    points: BTreeMap<usize, Point2>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dense trajectory with a point at every frame `0..points.len()`.
    pub fn from_dense(points: &[Point2]) -> Self {
        Self {
            points: points.iter().copied().enumerate().collect(),
        }
    }

    pub fn get(&self, frame: usize) -> Option<Point2> {
        self.points.get(&frame).copied()
    }

    pub fn insert(&mut self, frame: usize, p: Point2) -> Option<Point2> {
        self.points.insert(frame, p)
    }

    pub fn remove(&mut self, frame: usize) -> Option<Point2> {
        self.points.remove(&frame)
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.points.contains_key(&frame)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Point2)> + '_ {
        self.points.iter().map(|(&f, &p)| (f, p))
    }

    pub fn frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.points.keys().copied()
    }

    pub fn range(&self, range: RangeInclusive<usize>) -> impl Iterator<Item = (usize, Point2)> + '_ {
        self.points.range(range).map(|(&f, &p)| (f, p))
    }

    /// Frames in `0..n` without a point.
    pub fn missing_frames(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|f| !self.points.contains_key(f)).collect()
    }

    /// Points for frames `0..n`, or the list of missing frames.
    pub fn to_dense(&self, n: usize) -> Result<Vec<Point2>, Vec<usize>> {
        let missing = self.missing_frames(n);
        if missing.is_empty() {
            Ok((0..n).map(|f| self.points[&f]).collect())
        } else {
            Err(missing)
        }
    }

    /// Annotated frame closest to `target`; ties go to the earlier frame.
    pub fn nearest_frame(&self, target: usize) -> Option<usize> {
        let before = self.points.range(..=target).next_back().map(|(&f, _)| f);
        let after = self.points.range(target..).next().map(|(&f, _)| f);
        match (before, after) {
            (Some(b), Some(a)) => Some(if target - b <= a - target { b } else { a }),
            (b, a) => b.or(a),
        }
    }
}

impl FromIterator<(usize, Point2)> for Trajectory {
    fn from_iter<I: IntoIterator<Item = (usize, Point2)>>(iter: I) -> Self {
        Self {
            points: iter.into_iter().collect(),
        }
    }
}

/// Named collection of per-label trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationLayer {
    name: String,
    labels: BTreeMap<String, Trajectory>,
}

impl AnnotationLayer {
    pub fn new(name: impl Into<String>) -> Result<Self, AnnotError> {
        let name = name.into();
        if name.is_empty() {
            return Err(AnnotError::EmptyName);
        }
        Ok(Self {
            name,
            labels: BTreeMap::new(),
        })
    }

    pub fn with_labels<S: Into<String>>(
        name: impl Into<String>,
        labels: impl IntoIterator<Item = S>,
    ) -> Result<Self, AnnotError> {
        let mut layer = Self::new(name)?;
        for l in labels {
            layer.add_label(l);
        }
        Ok(layer)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rename(&mut self, name: impl Into<String>) -> Result<(), AnnotError> {
        let name = name.into();
        if name.is_empty() {
            return Err(AnnotError::EmptyName);
        }
        self.name = name;
        Ok(())
    }

    /// Declares a label; existing labels are left untouched.
    pub fn add_label(&mut self, label: impl Into<String>) {
        self.labels.entry(label.into()).or_default();
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.labels.contains_key(label)
    }

    pub fn label_ids(&self) -> impl Iterator<Item = &str> {
        self.labels.keys().map(String::as_str)
    }

    pub fn labels(&self) -> &BTreeMap<String, Trajectory> {
        &self.labels
    }

    pub fn label(&self, label: &str) -> Result<&Trajectory, AnnotError> {
        self.labels.get(label).ok_or_else(|| self.missing_label(label))
    }

    pub fn label_mut(&mut self, label: &str) -> Result<&mut Trajectory, AnnotError> {
        let err = self.missing_label(label);
        self.labels.get_mut(label).ok_or(err)
    }

    /// Replaces (or declares) a label's trajectory.
    pub fn insert_trajectory(&mut self, label: impl Into<String>, traj: Trajectory) {
        self.labels.insert(label.into(), traj);
    }

    fn missing_label(&self, label: &str) -> AnnotError {
        AnnotError::LabelNotFound {
            layer: self.name.clone(),
            label: label.to_string(),
        }
    }

    pub fn get(&self, label: &str, frame: usize) -> Option<Point2> {
        self.labels.get(label).and_then(|t| t.get(frame))
    }

    /// Overwrites silently.
    pub fn set_point(&mut self, label: &str, frame: usize, p: Point2) -> Result<(), AnnotError> {
        if !p.is_finite() {
            return Err(AnnotError::NonFinite {
                label: label.to_string(),
                frame,
            });
        }
        self.label_mut(label)?.insert(frame, p);
        Ok(())
    }

    /// Removing an absent entry is a no-op.
    pub fn remove_point(&mut self, label: &str, frame: usize) -> Result<Option<Point2>, AnnotError> {
        Ok(self.label_mut(label)?.remove(frame))
    }

    /// Sorted union of annotated frames over all labels.
    pub fn annotated_frames(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.labels.values().flat_map(|t| t.frames()).collect();
        set.into_iter().collect()
    }

    /// Removes every frame at which some expected label has no point, from all
    /// labels. Returns the removed frames in ascending order.
    pub fn trim<S: AsRef<str>>(&mut self, expected: &[S]) -> Vec<usize> {
        let empty = Trajectory::new();
        let expected: Vec<&Trajectory> = expected
            .iter()
            .map(|l| self.labels.get(l.as_ref()).unwrap_or(&empty))
            .collect();
        let removed: Vec<usize> = self
            .annotated_frames()
            .into_iter()
            .filter(|&f| !expected.iter().all(|t| t.contains(f)))
            .collect();
        for traj in self.labels.values_mut() {
            for f in &removed {
                traj.remove(*f);
            }
        }
        removed
    }

    /// Copies points of `label` (or all labels) within `range` from `src`,
    /// overwriting collisions. Missing labels are declared in `self`.
    /// Returns the number of points copied.
    pub fn copy_range_from(
        &mut self,
        src: &AnnotationLayer,
        label: Option<&str>,
        range: RangeInclusive<usize>,
    ) -> Result<usize, AnnotError> {
        let selected: Vec<(&String, &Trajectory)> = match label {
            Some(l) => vec![src.labels.get_key_value(l).ok_or_else(|| src.missing_label(l))?],
            None => src.labels.iter().collect(),
        };
        let mut copied = 0;
        if range.is_empty() {
            return Ok(0);
        }
        for (id, traj) in selected {
            let dst = self.labels.entry(id.clone()).or_default();
            for (f, p) in traj.range(range.clone()) {
                dst.insert(f, p);
                copied += 1;
            }
        }
        Ok(copied)
    }

    /// Checks every point against the sequence bounds.
    pub fn validate(&self, bounds: &SequenceBounds) -> Result<(), AnnotError> {
        for (label, traj) in &self.labels {
            for (frame, p) in traj.iter() {
                bounds.check(label, frame, p).map_err(|e| AnnotError::Validation {
                    label: label.clone(),
                    frame: Some(frame),
                    message: e.to_string(),
                })?;
            }
        }
        Ok(())
    }
}

/// Frame count and pixel extent used to validate annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceBounds {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
}

impl SequenceBounds {
    pub fn of(seq: &FrameSequence) -> Self {
        Self {
            frames: seq.len(),
            width: seq.width(),
            height: seq.height(),
        }
    }

    pub fn check_frame(&self, frame: usize) -> Result<(), AnnotError> {
        if frame >= self.frames {
            return Err(AnnotError::FrameOutOfRange {
                frame,
                frames: self.frames,
            });
        }
        Ok(())
    }

    pub fn check(&self, label: &str, frame: usize, p: Point2) -> Result<(), AnnotError> {
        self.check_frame(frame)?;
        if !p.is_finite() {
            return Err(AnnotError::NonFinite {
                label: label.to_string(),
                frame,
            });
        }
        let inside = p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64;
        if !inside {
            return Err(AnnotError::PointOutOfBounds {
                label: label.to_string(),
                frame,
                x: p.x,
                y: p.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

/// All layers of one sequence plus the editing cursor.
///
/// Mutations go through `&mut self`; callers that share a store across
/// threads wrap it in a lock so edits are serialised.
#[derive(Debug, Clone)]
pub struct AnnotationStore {
    bounds: SequenceBounds,
    layers: BTreeMap<String, AnnotationLayer>,
    revisions: BTreeMap<String, u64>,
    primary: Option<String>,
    overlay: Option<String>,
    current_label: Option<String>,
    current_frame: usize,
    undo: VecDeque<(String, Option<AnnotationLayer>)>,
}

impl AnnotationStore {
    pub fn new(bounds: SequenceBounds) -> Self {
        Self {
            bounds,
            layers: BTreeMap::new(),
            revisions: BTreeMap::new(),
            primary: None,
            overlay: None,
            current_label: None,
            current_frame: 0,
            undo: VecDeque::new(),
        }
    }

    pub fn bounds(&self) -> SequenceBounds {
        self.bounds
    }

    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.layers.keys().map(String::as_str)
    }

    pub fn layers(&self) -> impl Iterator<Item = &AnnotationLayer> {
        self.layers.values()
    }

    pub fn layer(&self, name: &str) -> Result<&AnnotationLayer, AnnotError> {
        self.layers
            .get(name)
            .ok_or_else(|| AnnotError::LayerNotFound(name.to_string()))
    }

    /// Monotonic edit counter of a layer.
    pub fn revision(&self, name: &str) -> Result<u64, AnnotError> {
        self.revisions
            .get(name)
            .copied()
            .ok_or_else(|| AnnotError::LayerNotFound(name.to_string()))
    }

    /// Adds a validated layer. Fails if the name is taken.
    pub fn add_layer(&mut self, layer: AnnotationLayer) -> Result<(), AnnotError> {
        if self.layers.contains_key(layer.name()) {
            return Err(AnnotError::DuplicateLayer(layer.name().to_string()));
        }
        layer.validate(&self.bounds)?;
        let name = layer.name().to_string();
        self.push_undo(&name, None);
        self.revisions.insert(name.clone(), 0);
        self.layers.insert(name, layer);
        Ok(())
    }

    /// Adds or replaces a layer wholesale, bumping its revision.
    pub fn put_layer(&mut self, layer: AnnotationLayer) -> Result<u64, AnnotError> {
        layer.validate(&self.bounds)?;
        let name = layer.name().to_string();
        let previous = self.layers.insert(name.clone(), layer);
        self.push_undo(&name, previous);
        Ok(self.bump(&name))
    }

    pub fn create_layer(&mut self, name: &str) -> Result<(), AnnotError> {
        self.add_layer(AnnotationLayer::new(name)?)
    }

    pub fn primary(&self) -> Option<&str> {
        self.primary.as_deref()
    }

    pub fn overlay(&self) -> Option<&str> {
        self.overlay.as_deref()
    }

    pub fn set_primary(&mut self, name: Option<&str>) -> Result<(), AnnotError> {
        if let Some(n) = name {
            self.layer(n)?;
            if self.overlay.as_deref() == Some(n) {
                return Err(AnnotError::SameSelection(n.to_string()));
            }
        }
        self.primary = name.map(str::to_string);
        Ok(())
    }

    pub fn set_overlay(&mut self, name: Option<&str>) -> Result<(), AnnotError> {
        if let Some(n) = name {
            self.layer(n)?;
            if self.primary.as_deref() == Some(n) {
                return Err(AnnotError::SameSelection(n.to_string()));
            }
        }
        self.overlay = name.map(str::to_string);
        Ok(())
    }

    pub fn current_frame(&self) -> usize {
        self.current_frame
    }

    pub fn set_current_frame(&mut self, frame: usize) -> Result<(), AnnotError> {
        self.bounds.check_frame(frame)?;
        self.current_frame = frame;
        Ok(())
    }

    pub fn current_label(&self) -> Option<&str> {
        self.current_label.as_deref()
    }

    /// The label must exist in the primary layer when one is selected.
    pub fn set_current_label(&mut self, label: Option<&str>) -> Result<(), AnnotError> {
        if let (Some(l), Some(p)) = (label, self.primary.as_deref()) {
            self.layer(p)?.label(l)?;
        }
        self.current_label = label.map(str::to_string);
        Ok(())
    }

    /// Applies `edit` to a layer, recording undo state and bumping the
    /// revision. The layer is restored if `edit` fails.
    pub fn edit<T>(
        &mut self,
        name: &str,
        edit: impl FnOnce(&mut AnnotationLayer, &SequenceBounds) -> Result<T, AnnotError>,
    ) -> Result<T, AnnotError> {
        let bounds = self.bounds;
        let layer = self
            .layers
            .get_mut(name)
            .ok_or_else(|| AnnotError::LayerNotFound(name.to_string()))?;
        let before = layer.clone();
        match edit(layer, &bounds) {
            Ok(v) => {
                self.push_undo(name, Some(before));
                self.bump(name);
                Ok(v)
            }
            Err(e) => {
                *layer = before;
                Err(e)
            }
        }
    }

    pub fn add_label(&mut self, layer: &str, label: &str) -> Result<(), AnnotError> {
        self.edit(layer, |l, _| {
            l.add_label(label);
            Ok(())
        })
    }

    pub fn set_point(&mut self, layer: &str, label: &str, frame: usize, p: Point2) -> Result<(), AnnotError> {
        self.bounds.check(label, frame, p)?;
        self.edit(layer, |l, _| l.set_point(label, frame, p))
    }

    pub fn remove_point(&mut self, layer: &str, label: &str, frame: usize) -> Result<Option<Point2>, AnnotError> {
        self.bounds.check_frame(frame)?;
        self.edit(layer, |l, _| l.remove_point(label, frame))
    }

    pub fn trim<S: AsRef<str>>(&mut self, layer: &str, expected: &[S]) -> Result<Vec<usize>, AnnotError> {
        if expected.is_empty() {
            return Err(AnnotError::Precondition("trim needs at least one expected label".into()));
        }
        self.edit(layer, |l, _| Ok(l.trim(expected)))
    }

    /// Copies `label` (or all labels) within `range` from `src` into `dst`.
    pub fn copy_range(
        &mut self,
        src: &str,
        dst: &str,
        label: Option<&str>,
        range: RangeInclusive<usize>,
    ) -> Result<usize, AnnotError> {
        if !range.is_empty() {
            self.bounds.check_frame(*range.end())?;
        }
        let source = self.layer(src)?.clone();
        self.edit(dst, |l, _| l.copy_range_from(&source, label, range))
    }

    /// Reverts the most recent layer mutation. Returns the affected layer.
    pub fn undo(&mut self) -> Option<String> {
        let (name, previous) = self.undo.pop_back()?;
        match previous {
            Some(layer) => {
                self.layers.insert(name.clone(), layer);
                self.bump(&name);
            }
            None => {
                self.layers.remove(&name);
                self.revisions.remove(&name);
                if self.primary.as_deref() == Some(name.as_str()) {
                    self.primary = None;
                }
                if self.overlay.as_deref() == Some(name.as_str()) {
                    self.overlay = None;
                }
            }
        }
        Some(name)
    }

    pub fn undo_depth(&self) -> usize {
        self.undo.len()
    }

    /// Hash of all layer contents, for change detection.
    pub fn content_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for layer in self.layers.values() {
            to_canonical_json(layer).hash(&mut h);
        }
        h.finish()
    }

    fn push_undo(&mut self, name: &str, previous: Option<AnnotationLayer>) {
        if self.undo.len() == UNDO_DEPTH {
            self.undo.pop_front();
        }
        self.undo.push_back((name.to_string(), previous));
    }

    fn bump(&mut self, name: &str) -> u64 {
        let rev = self.revisions.entry(name.to_string()).or_insert(0);
        *rev += 1;
        *rev
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> SequenceBounds {
        SequenceBounds {
            frames: 100,
            width: 64,
            height: 48,
        }
    }

    fn layer_ab() -> AnnotationLayer {
        let mut l = AnnotationLayer::with_labels("L", ["A", "B"]).unwrap();
        for f in [1, 2, 3] {
            l.set_point("A", f, Point2::new(f as f64, 1.0)).unwrap();
        }
        for f in [1, 3] {
            l.set_point("B", f, Point2::new(f as f64, 2.0)).unwrap();
        }
        l
    }

    #[test]
    fn set_get_overwrite_remove() {
        let mut l = AnnotationLayer::with_labels("L", ["0"]).unwrap();
        l.set_point("0", 5, Point2::new(10.0, 20.0)).unwrap();
        assert_eq!(l.get("0", 5), Some(Point2::new(10.0, 20.0)));
        l.set_point("0", 5, Point2::new(11.0, 21.0)).unwrap();
        assert_eq!(l.get("0", 5), Some(Point2::new(11.0, 21.0)));
        let before = l.clone();
        assert_eq!(l.remove_point("0", 6).unwrap(), None);
        assert_eq!(l, before);
        assert!(matches!(
            l.set_point("nope", 1, Point2::ZERO),
            Err(AnnotError::LabelNotFound { .. })
        ));
    }

    #[test]
    fn trim_removes_incomplete_frames() {
        let mut l = layer_ab();
        assert_eq!(l.trim(&["A", "B"]), vec![2]);
        assert_eq!(l.label("A").unwrap().frames().collect::<Vec<_>>(), vec![1, 3]);
        let snapshot = l.clone();
        assert!(l.trim(&["A", "B"]).is_empty());
        assert_eq!(l, snapshot);
    }

    #[test]
    fn trim_with_empty_expected_label_removes_everything() {
        let mut l = layer_ab();
        l.add_label("C");
        assert_eq!(l.trim(&["A", "B", "C"]), vec![1, 2, 3]);
        assert!(l.annotated_frames().is_empty());
    }

    #[test]
    fn copy_range_semantics() {
        let src = layer_ab();
        let mut dst = AnnotationLayer::new("D").unwrap();
        assert_eq!(dst.copy_range_from(&src, None, 5..=4).unwrap(), 0);
        assert_eq!(dst.annotated_frames(), Vec::<usize>::new());

        dst.add_label("A");
        dst.set_point("A", 2, Point2::new(99.0, 99.0)).unwrap();
        dst.set_point("A", 9, Point2::new(9.0, 9.0)).unwrap();
        dst.copy_range_from(&src, Some("A"), 2..=3).unwrap();
        assert_eq!(dst.get("A", 2), Some(Point2::new(2.0, 1.0)));
        assert_eq!(dst.get("A", 3), Some(Point2::new(3.0, 1.0)));
        assert_eq!(dst.get("A", 1), None);
        assert_eq!(dst.get("A", 9), Some(Point2::new(9.0, 9.0)));
        assert!(matches!(
            dst.copy_range_from(&src, Some("Z"), 0..=5),
            Err(AnnotError::LabelNotFound { .. })
        ));
    }

    #[test]
    fn nearest_frame_prefers_earlier_on_tie() {
        let t: Trajectory = [(10, Point2::ZERO), (20, Point2::ZERO)].into_iter().collect();
        assert_eq!(t.nearest_frame(15), Some(10));
        assert_eq!(t.nearest_frame(16), Some(20));
        assert_eq!(t.nearest_frame(0), Some(10));
        assert_eq!(t.nearest_frame(99), Some(20));
        assert_eq!(Trajectory::new().nearest_frame(3), None);
    }

    #[test]
    fn store_validates_and_tracks_revisions() {
        let mut s = AnnotationStore::new(bounds());
        s.add_layer(AnnotationLayer::with_labels("labeled_data", ["0"]).unwrap())
            .unwrap();
        assert_eq!(s.revision("labeled_data").unwrap(), 0);
        s.set_point("labeled_data", "0", 5, Point2::new(10.0, 20.0)).unwrap();
        assert_eq!(s.revision("labeled_data").unwrap(), 1);
        assert!(matches!(
            s.set_point("labeled_data", "0", 100, Point2::new(1.0, 1.0)),
            Err(AnnotError::FrameOutOfRange { .. })
        ));
        assert!(matches!(
            s.set_point("labeled_data", "0", 1, Point2::new(64.0, 1.0)),
            Err(AnnotError::PointOutOfBounds { .. })
        ));
        assert!(matches!(
            s.set_point("missing", "0", 1, Point2::new(1.0, 1.0)),
            Err(AnnotError::LayerNotFound(_))
        ));
        assert_eq!(s.revision("labeled_data").unwrap(), 1);
    }

    #[test]
    fn store_selection_invariant() {
        let mut s = AnnotationStore::new(bounds());
        s.create_layer("a").unwrap();
        s.create_layer("b").unwrap();
        s.set_primary(Some("a")).unwrap();
        assert!(matches!(s.set_overlay(Some("a")), Err(AnnotError::SameSelection(_))));
        s.set_overlay(Some("b")).unwrap();
        assert!(matches!(s.set_primary(Some("b")), Err(AnnotError::SameSelection(_))));
        assert!(s.set_primary(Some("zzz")).is_err());
        assert!(matches!(s.create_layer("a"), Err(AnnotError::DuplicateLayer(_))));
    }

    #[test]
    fn undo_restores_previous_state_with_bounded_depth() {
        let mut s = AnnotationStore::new(bounds());
        s.add_layer(AnnotationLayer::with_labels("L", ["0"]).unwrap()).unwrap();
        s.set_point("L", "0", 1, Point2::new(1.0, 1.0)).unwrap();
        let h1 = s.content_hash();
        s.set_point("L", "0", 2, Point2::new(2.0, 2.0)).unwrap();
        assert_ne!(s.content_hash(), h1);
        assert_eq!(s.undo().as_deref(), Some("L"));
        assert_eq!(s.content_hash(), h1);

        for f in 0..150 {
            s.set_point("L", "0", f % 100, Point2::new(3.0, 3.0)).unwrap();
        }
        assert_eq!(s.undo_depth(), UNDO_DEPTH);
    }
}
