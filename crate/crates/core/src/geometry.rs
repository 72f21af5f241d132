//! Metrics derived from tracked points: calibrated distances, normalised
//! deformation, quadrilateral area, and fascicle length / pennation angle
//! from aponeurosis lines.
//!
//! All geometry is evaluated in millimetre space, i.e. after applying the
//! per-axis calibration, so angles are physical even for anisotropic pixels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::annot::{AnnotError, AnnotationLayer};
use crate::media::Calibration;
use crate::point::Point2;

/// Lines whose normalised direction cross product is at most this are parallel.
pub const PARALLEL_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("lines do not intersect (parallel or degenerate)")]
    NoIntersection,
    #[error("degenerate line: `{0}` has coincident endpoints")]
    DegenerateLine(&'static str),
    #[error("fascicle model needs five distinct labels")]
    DuplicateLabels,
    #[error("label `{label}` has no point at frame {frame}")]
    MissingPoint { label: String, frame: usize },
    #[error("reference length at frame {frame} is {}", match .length { Some(l) => l.to_string(), None => "missing".into() })]
    BadReference { frame: usize, length: Option<f64> },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
}

impl From<AnnotError> for GeometryError {
    fn from(e: AnnotError) -> Self {
        match e {
            AnnotError::LabelNotFound { label, .. } => GeometryError::UnknownLabel(label),
            other => GeometryError::UnknownLabel(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Millimeters,
    SquareMillimeters,
    Dimensionless,
    Degrees,
}

impl Unit {
    pub fn suffix(&self) -> &'static str {
        match self {
            Unit::Millimeters => "mm",
            Unit::SquareMillimeters => "mm2",
            Unit::Dimensionless => "ratio",
            Unit::Degrees => "deg",
        }
    }
}

/// A sparse per-frame metric. Frames where inputs are missing are absent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries {
    pub name: String,
    pub unit: Unit,
    pub values: BTreeMap<usize, f64>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>, unit: Unit) -> Self {
        Self {
            name: name.into(),
            unit,
            values: BTreeMap::new(),
        }
    }

    pub fn get(&self, frame: usize) -> Option<f64> {
        self.values.get(&frame).copied()
    }
}

/// Infinite-line intersection of `p1p2` and `q1q2`.
pub fn line_intersection(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> Result<Point2, GeometryError> {
    let r = p2 - p1;
    let s = q2 - q1;
    let (rn, sn) = (r.norm(), s.norm());
    if rn == 0.0 || sn == 0.0 || !(rn.is_finite() && sn.is_finite()) {
        return Err(GeometryError::NoIntersection);
    }
    let denom = r.cross(s);
    if (denom / (rn * sn)).abs() <= PARALLEL_TOL {
        return Err(GeometryError::NoIntersection);
    }
    let t = (q1 - p1).cross(s) / denom;
    Ok(p1 + r * t)
}

/// Calibrated distance between two pixel positions.
pub fn distance_mm(a: Point2, b: Point2, cal: &Calibration) -> f64 {
    cal.to_mm(b - a).norm()
}

pub fn distance_series(layer: &AnnotationLayer, label_a: &str, label_b: &str, cal: &Calibration) -> Result<MetricSeries, GeometryError> {
    let ta = layer.label(label_a)?;
    let tb = layer.label(label_b)?;
    let mut out = MetricSeries::new(format!("distance_{label_a}_{label_b}"), Unit::Millimeters);
    for (f, pa) in ta.iter() {
        if let Some(pb) = tb.get(f) {
            out.values.insert(f, distance_mm(pa, pb, cal));
        }
    }
    Ok(out)
}

/// `(L - L0) / L0` relative to the value at frame `t0`.
pub fn deformation_series(distance: &MetricSeries, t0: usize) -> Result<MetricSeries, GeometryError> {
    let l0 = distance.get(t0);
    let l0 = match l0 {
        Some(v) if v > 0.0 && v.is_finite() => v,
        _ => return Err(GeometryError::BadReference { frame: t0, length: l0 }),
    };
    let mut out = MetricSeries::new(format!("{}_deformation", distance.name), Unit::Dimensionless);
    for (&f, &l) in &distance.values {
        out.values.insert(f, (l - l0) / l0);
    }
    Ok(out)
}

/// Shoelace area of the polygon through `labels` in order, in mm².
pub fn polygon_area_series(layer: &AnnotationLayer, labels: &[&str], cal: &Calibration) -> Result<MetricSeries, GeometryError> {
    let trajs = labels
        .iter()
        .map(|l| layer.label(l))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = MetricSeries::new(format!("area_{}", labels.join("_")), Unit::SquareMillimeters);
    if trajs.is_empty() {
        return Ok(out);
    }
    for f in trajs[0].frames() {
        let pts: Option<Vec<Point2>> = trajs
            .iter()
            .map(|t| t.get(f).map(|p| cal.to_mm(p)))
            .collect();
        if let Some(pts) = pts {
            out.values.insert(f, shoelace(&pts));
        }
    }
    Ok(out)
}

pub fn shoelace(pts: &[Point2]) -> f64 {
    let n = pts.len();
    let twice: f64 = (0..n).map(|i| pts[i].cross(pts[(i + 1) % n])).sum();
    0.5 * twice.abs()
}

/// Five labels defining the aponeuroses and the fascicle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FascicleModel {
    /// Two points on the upper (superficial) aponeurosis.
    pub upper: [String; 2],
    /// Two points on the lower (deep) aponeurosis; the first is where the
    /// fascicle meets it.
    pub lower: [String; 2],
    /// A further point along the fascicle.
    pub fascicle_dir: String,
}

impl FascicleModel {
    pub fn new(upper: [&str; 2], lower: [&str; 2], fascicle_dir: &str) -> Result<Self, GeometryError> {
        let m = Self {
            upper: upper.map(str::to_string),
            lower: lower.map(str::to_string),
            fascicle_dir: fascicle_dir.to_string(),
        };
        let all = m.labels();
        for i in 0..all.len() {
            if all[i + 1..].contains(&all[i]) {
                return Err(GeometryError::DuplicateLabels);
            }
        }
        Ok(m)
    }

    /// Upper 0, upper 1, lower 0 (intersection), lower 1, fascicle direction.
    pub fn labels(&self) -> [&str; 5] {
        [
            &self.upper[0],
            &self.upper[1],
            &self.lower[0],
            &self.lower[1],
            &self.fascicle_dir,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FascicleMeasurement {
    pub length_mm: f64,
    pub pennation_deg: f64,
}

/// Fascicle length and pennation angle from five pixel positions, in the
/// order of [`FascicleModel::labels`].
pub fn fascicle_from_points(pts: [Point2; 5], cal: &Calibration) -> Result<FascicleMeasurement, GeometryError> {
    let [u0, u1, l0, l1, fd] = pts.map(|p| cal.to_mm(p));
    if u0 == u1 {
        return Err(GeometryError::DegenerateLine("upper aponeurosis"));
    }
    if l0 == l1 {
        return Err(GeometryError::DegenerateLine("lower aponeurosis"));
    }
    if l0 == fd {
        return Err(GeometryError::DegenerateLine("fascicle"));
    }
    let upper_hit = line_intersection(l0, fd, u0, u1)?;
    let fascicle = fd - l0;
    let lower = l1 - l0;
    let cross = fascicle.cross(lower).abs();
    let dot = fascicle.dot(lower).abs();
    if cross / (fascicle.norm() * lower.norm()) <= PARALLEL_TOL {
        return Err(GeometryError::NoIntersection);
    }
    Ok(FascicleMeasurement {
        length_mm: upper_hit.distance(l0),
        pennation_deg: cross.atan2(dot).to_degrees(),
    })
}

pub fn fascicle_metrics(
    layer: &AnnotationLayer,
    model: &FascicleModel,
    frame: usize,
    cal: &Calibration,
) -> Result<FascicleMeasurement, GeometryError> {
    let mut pts = [Point2::ZERO; 5];
    for (slot, label) in pts.iter_mut().zip(model.labels()) {
        *slot = layer
            .label(label)?
            .get(frame)
            .ok_or_else(|| GeometryError::MissingPoint {
                label: label.to_string(),
                frame,
            })?;
    }
    fascicle_from_points(pts, cal)
}

/// Length and pennation series over every frame where all five labels exist.
/// Frames whose geometry is degenerate are left out.
pub fn fascicle_series(
    layer: &AnnotationLayer,
    model: &FascicleModel,
    cal: &Calibration,
) -> Result<(MetricSeries, MetricSeries), GeometryError> {
    let mut length = MetricSeries::new("fascicle_length", Unit::Millimeters);
    let mut pennation = MetricSeries::new("pennation_angle", Unit::Degrees);
    for label in model.labels() {
        layer.label(label)?;
    }
    for f in layer.label(model.labels()[0])?.frames() {
        if let Ok(m) = fascicle_metrics(layer, model, f, cal) {
            length.values.insert(f, m.length_mm);
            pennation.values.insert(f, m.pennation_deg);
        }
    }
    Ok((length, pennation))
}

/// `frame,time_s,<series...>` with one row per frame present in any series.
/// Missing values are empty cells.
pub fn metrics_to_csv(series: &[&MetricSeries], fps: f64) -> String {
    let mut out = String::from("frame,time_s");
    for s in series {
        let _ = write!(out, ",{}_{}", s.name, s.unit.suffix());
    }
    out.push('\n');
    for f in union_frames(series) {
        let _ = write!(out, "{f},{}", f as f64 / fps);
        for s in series {
            out.push(',');
            if let Some(v) = s.get(f) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

/// JSON mirror of [`metrics_to_csv`].
pub fn metrics_to_json(series: &[&MetricSeries], fps: f64) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = union_frames(series)
        .into_iter()
        .map(|f| {
            let mut row = serde_json::Map::new();
            row.insert("frame".into(), f.into());
            row.insert("time_s".into(), (f as f64 / fps).into());
            for s in series {
                let key = format!("{}_{}", s.name, s.unit.suffix());
                row.insert(key, s.get(f).map_or(serde_json::Value::Null, Into::into));
            }
            serde_json::Value::Object(row)
        })
        .collect();
    let meta: Vec<serde_json::Value> = series
        .iter()
        .map(|s| serde_json::json!({"name": s.name, "unit": s.unit}))
        .collect();
    serde_json::json!({"fps": fps, "series": meta, "rows": rows})
}

fn union_frames(series: &[&MetricSeries]) -> Vec<usize> {
    let set: std::collections::BTreeSet<usize> = series.iter().flat_map(|s| s.values.keys().copied()).collect();
    set.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso() -> Calibration {
        Calibration::default()
    }

    #[test]
    fn intersections() {
        let p = line_intersection(
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, -1.0),
            Point2::new(0.0, 1.0),
        )
        .unwrap();
        assert_eq!(p, Point2::new(0.0, 0.0));
        assert_eq!(
            line_intersection(
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
                Point2::new(5.0, 1.0)
            ),
            Err(GeometryError::NoIntersection)
        );
        // y = 0 against the line through (0, 10) with direction (1, -1)
        let p = line_intersection(
            Point2::new(-3.0, 0.0),
            Point2::new(7.0, 0.0),
            Point2::new(0.0, 10.0),
            Point2::new(1.0, 9.0),
        )
        .unwrap();
        assert!((p - Point2::new(10.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn distances() {
        let cal = iso();
        assert_eq!(distance_mm(Point2::new(2.0, 2.0), Point2::new(2.0, 2.0), &cal), 0.0);
        assert_eq!(distance_mm(Point2::new(0.0, 0.0), Point2::new(3.0, 4.0), &cal), 5.0);
        let aniso = Calibration::new(2.0, 1.0, 50.0).unwrap();
        let d = distance_mm(Point2::new(0.0, 0.0), Point2::new(3.0, 4.0), &aniso);
        assert!((d - 52f64.sqrt()).abs() < 1e-12);
        assert!((d - 7.211).abs() < 5e-4);
    }

    #[test]
    fn deformation() {
        let mut s = MetricSeries::new("d", Unit::Millimeters);
        s.values.insert(0, 10.0);
        s.values.insert(1, 11.0);
        s.values.insert(2, 10.0);
        let d = deformation_series(&s, 0).unwrap();
        assert_eq!(d.get(0), Some(0.0));
        assert!((d.get(1).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(deformation_series(&s, 7), Err(GeometryError::BadReference { .. })));
        s.values.insert(3, 0.0);
        assert!(matches!(deformation_series(&s, 3), Err(GeometryError::BadReference { .. })));
    }

    #[test]
    fn fascicle_analytic_cases() {
        let m = fascicle_from_points(
            [
                Point2::new(-5.0, 0.0),
                Point2::new(20.0, 0.0),
                Point2::new(0.0, 10.0),
                Point2::new(20.0, 10.0),
                Point2::new(10.0, 0.0),
            ],
            &iso(),
        )
        .unwrap();
        assert!((m.length_mm - 200f64.sqrt()).abs() < 1e-9);
        assert!((m.pennation_deg - 45.0).abs() < 1e-9);

        let m = fascicle_from_points(
            [
                Point2::new(0.0, 0.0),
                Point2::new(20.0, 0.0),
                Point2::new(5.0, 10.0),
                Point2::new(20.0, 10.0),
                Point2::new(5.0, 3.0),
            ],
            &iso(),
        )
        .unwrap();
        assert!((m.length_mm - 10.0).abs() < 1e-12);
        assert_eq!(m.pennation_deg, 90.0);
    }

    #[test]
    fn fascicle_degenerate_inputs() {
        let cal = iso();
        let parallel = [
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
            Point2::new(0.0, 10.0),
            Point2::new(10.0, 10.0),
            Point2::new(5.0, 10.0),
        ];
        assert_eq!(fascicle_from_points(parallel, &cal), Err(GeometryError::NoIntersection));
        let degenerate = [
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 10.0),
            Point2::new(10.0, 10.0),
            Point2::new(5.0, 0.0),
        ];
        assert!(matches!(
            fascicle_from_points(degenerate, &cal),
            Err(GeometryError::DegenerateLine(_))
        ));
        assert_eq!(
            FascicleModel::new(["a", "b"], ["c", "a"], "e"),
            Err(GeometryError::DuplicateLabels)
        );
    }

    #[test]
    fn sparse_series_skip_missing_frames() {
        let mut l = AnnotationLayer::with_labels("l", ["a", "b"]).unwrap();
        l.set_point("a", 0, Point2::new(0.0, 0.0)).unwrap();
        l.set_point("a", 1, Point2::new(0.0, 0.0)).unwrap();
        l.set_point("b", 1, Point2::new(3.0, 4.0)).unwrap();
        let s = distance_series(&l, "a", "b", &iso()).unwrap();
        assert_eq!(s.values.len(), 1);
        assert_eq!(s.get(1), Some(5.0));
        assert_eq!(s.get(0), None);
        let csv = metrics_to_csv(&[&s], 50.0);
        assert_eq!(csv, "frame,time_s,distance_a_b_mm\n1,0.02,5\n");
    }

    #[test]
    fn shoelace_unit_square() {
        let sq = [
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 3.0),
            Point2::new(0.0, 3.0),
        ];
        assert_eq!(shoelace(&sq), 6.0);
    }
}
