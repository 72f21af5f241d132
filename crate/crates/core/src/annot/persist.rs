//! Canonical `<name>.annot.json` layer files.
//!
//! ```json
//! {
//!   "schema": "ustrack-layer/1",
//!   "layer": "labeled_data",
//!   "labels": {
//!     "0": {
//!       "5": [10.0, 20.5]
//!     }
//!   }
//! }
//! ```
//!
//! Labels are written in lexicographic order, frames in numeric order, and
//! coordinates in shortest round-trip decimal form, so saving the same layer
//! always yields the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::{AnnotError, AnnotationLayer, SequenceBounds, Trajectory};
use crate::point::Point2;

pub const LAYER_SCHEMA: &str = "ustrack-layer/1";

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn json_num(v: f64) -> String {
    serde_json::to_string(&v).expect("finite floats serialize")
}

pub fn to_canonical_json(layer: &AnnotationLayer) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"schema\": {},", json_str(LAYER_SCHEMA));
    let _ = writeln!(out, "  \"layer\": {},", json_str(layer.name()));
    if layer.labels().is_empty() {
        out.push_str("  \"labels\": {}\n}\n");
        return out;
    }
    out.push_str("  \"labels\": {\n");
    let n_labels = layer.labels().len();
    for (i, (label, traj)) in layer.labels().iter().enumerate() {
        let _ = write!(out, "    {}: {{", json_str(label));
        if traj.is_empty() {
            out.push('}');
        } else {
            out.push('\n');
            let n = traj.len();
            for (j, (frame, p)) in traj.iter().enumerate() {
                let _ = write!(out, "      \"{frame}\": [{}, {}]", json_num(p.x), json_num(p.y));
                out.push_str(if j + 1 < n { ",\n" } else { "\n" });
            }
            out.push_str("    }");
        }
        out.push_str(if i + 1 < n_labels { ",\n" } else { "\n" });
    }
    out.push_str("  }\n}\n");
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    #[allow(dead_code)]
    schema: String,
    layer: String,
    labels: BTreeMap<String, BTreeMap<String, [f64; 2]>>,
}

/// Parses a layer document. `origin` only labels error messages.
pub fn from_json_str(text: &str, origin: &Path) -> Result<AnnotationLayer, AnnotError> {
    let parse_err = |e: serde_json::Error| AnnotError::Parse {
        path: origin.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    let value: Value = serde_json::from_str(text).map_err(parse_err)?;
    let schema = value.get("schema").and_then(Value::as_str).unwrap_or("<missing>");
    if schema != LAYER_SCHEMA {
        return Err(AnnotError::Version {
            found: schema.to_string(),
            expected: LAYER_SCHEMA,
        });
    }
    let raw: RawLayer = serde_json::from_value(value).map_err(|e| AnnotError::Parse {
        path: origin.to_path_buf(),
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;

    let mut layer = AnnotationLayer::new(raw.layer)?;
    for (label, frames) in raw.labels {
        let mut traj = Trajectory::new();
        for (key, [x, y]) in frames {
            let frame = parse_frame_key(&key).ok_or_else(|| AnnotError::Validation {
                label: label.clone(),
                frame: None,
                message: format!("frame key `{key}` is not a non-negative integer"),
            })?;
            let p = Point2::new(x, y);
            if !p.is_finite() {
                return Err(AnnotError::Validation {
                    label,
                    frame: Some(frame),
                    message: "point is not finite".into(),
                });
            }
            if traj.insert(frame, p).is_some() {
                return Err(AnnotError::Validation {
                    label,
                    frame: Some(frame),
                    message: "duplicate frame key".into(),
                });
            }
        }
        layer.insert_trajectory(label, traj);
    }
    Ok(layer)
}

fn parse_frame_key(key: &str) -> Option<usize> {
    if key.is_empty() || !key.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    key.parse().ok()
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AnnotError> {
    let io_err = |source| AnnotError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn save_layer(layer: &AnnotationLayer, path: &Path) -> Result<(), AnnotError> {
    write_atomic(path, to_canonical_json(layer).as_bytes())
}

/// Loads a layer file, optionally validating it against sequence bounds.
pub fn load_layer(path: &Path, bounds: Option<&SequenceBounds>) -> Result<AnnotationLayer, AnnotError> {
    let text = fs::read_to_string(path).map_err(|source| AnnotError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let layer = from_json_str(&text, path)?;
    if let Some(b) = bounds {
        layer.validate(b)?;
    }
    Ok(layer)
}
