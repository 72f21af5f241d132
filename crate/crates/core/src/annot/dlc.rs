//! Keypoint CSV interchange for pose-estimation model outputs.
//!
//! Three header rows (`scorer`, `bodyparts`, `coords`) followed by one row per
//! frame. The first column holds the frame index (or an image path whose
//! trailing digits give the index). Each body part contributes `x, y` and an
//! optional `likelihood` column. Empty or `NaN` cells mean "no point".

use std::collections::BTreeSet;
use std::io::{Read, Write};

use super::{AnnotError, AnnotationLayer};
use crate::point::Point2;

#[derive(Debug, Clone, Default)]
pub struct CsvImportOptions {
    /// Drop points whose likelihood is below this value.
    pub min_likelihood: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coord {
    X,
    Y,
    Likelihood,
}

fn csv_err(e: impl std::fmt::Display) -> AnnotError {
    AnnotError::Csv(e.to_string())
}

fn frame_from_index(cell: &str, row: usize) -> usize {
    if let Ok(f) = cell.trim().parse::<usize>() {
        return f;
    }
    // e.g. labeled-data/video/img00123.png
    let stem = cell.rsplit(['/', '\\']).next().unwrap_or(cell);
    let stem = stem.split('.').next().unwrap_or(stem);
    let digits: String = stem
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().unwrap_or(row)
}

fn parse_value(cell: &str, row: usize, col: usize) -> Result<Option<f64>, AnnotError> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| AnnotError::Csv(format!("row {row}, column {col}: `{cell}` is not a number")))
}

pub fn import_csv<R: Read>(reader: R, layer_name: &str, opts: &CsvImportOptions) -> Result<AnnotationLayer, AnnotError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let mut header = |name: &str| -> Result<csv::StringRecord, AnnotError> {
        let rec = records
            .next()
            .ok_or_else(|| AnnotError::Csv(format!("missing `{name}` header row")))?
            .map_err(csv_err)?;
        Ok(rec)
    };
    let _scorer = header("scorer")?;
    let bodyparts = header("bodyparts")?;
    let coords = header("coords")?;
    if bodyparts.len() != coords.len() {
        return Err(AnnotError::Csv("bodyparts and coords rows differ in length".into()));
    }

    let mut columns: Vec<(String, Coord)> = Vec::new();
    for (part, coord) in bodyparts.iter().zip(coords.iter()).skip(1) {
        let c = match coord.trim() {
            "x" => Coord::X,
            "y" => Coord::Y,
            "likelihood" => Coord::Likelihood,
            other => return Err(AnnotError::Csv(format!("unknown coords entry `{other}`"))),
        };
        columns.push((part.trim().to_string(), c));
    }

    let mut layer = AnnotationLayer::new(layer_name)?;
    let parts: BTreeSet<&str> = columns.iter().map(|(p, _)| p.as_str()).collect();
    for p in &parts {
        let has = |c| columns.iter().any(|(q, cc)| q == p && *cc == c);
        if !has(Coord::X) || !has(Coord::Y) {
            return Err(AnnotError::Csv(format!("body part `{p}` lacks x or y columns")));
        }
        layer.add_label(*p);
    }

    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let frame = frame_from_index(rec.get(0).unwrap_or(""), row);
        for part in &parts {
            let (mut x, mut y, mut lik) = (None, None, None);
            for (col, (p, c)) in columns.iter().enumerate() {
                if p != part {
                    continue;
                }
                let v = parse_value(rec.get(col + 1).unwrap_or(""), row, col + 1)?;
                match c {
                    Coord::X => x = v,
                    Coord::Y => y = v,
                    Coord::Likelihood => lik = v,
                }
            }
            let keep = match (opts.min_likelihood, lik) {
                (Some(min), Some(l)) => l >= min,
                _ => true,
            };
            if let (Some(x), Some(y), true) = (x, y, keep) {
                layer.set_point(part, frame, Point2::new(x, y))?;
            }
        }
    }
    Ok(layer)
}

/// Writes the layer as keypoint CSV without likelihood columns.
///
/// Rows cover `0..frames` when given, otherwise every annotated frame.
pub fn export_csv<W: Write>(layer: &AnnotationLayer, writer: W, scorer: &str, frames: Option<usize>) -> Result<(), AnnotError> {
    let mut w = csv::Writer::from_writer(writer);
    let labels: Vec<&str> = layer.label_ids().collect();

    let mut row = vec!["scorer".to_string()];
    row.extend(labels.iter().flat_map(|_| [scorer.to_string(), scorer.to_string()]));
    w.write_record(&row).map_err(csv_err)?;
    let mut row = vec!["bodyparts".to_string()];
    row.extend(labels.iter().flat_map(|l| [l.to_string(), l.to_string()]));
    w.write_record(&row).map_err(csv_err)?;
    let mut row = vec!["coords".to_string()];
    row.extend(labels.iter().flat_map(|_| ["x".to_string(), "y".to_string()]));
    w.write_record(&row).map_err(csv_err)?;

    let rows: Vec<usize> = match frames {
        Some(n) => (0..n).collect(),
        None => layer.annotated_frames(),
    };
    for f in rows {
        let mut row = vec![f.to_string()];
        for l in &labels {
            match layer.get(l, f) {
                Some(p) => {
                    row.push(format!("{}", p.x));
                    row.push(format!("{}", p.y));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const WITH_LIKELIHOOD: &str = "\
scorer,net,net,net,net,net,net
bodyparts,0,0,0,1,1,1
coords,x,y,likelihood,x,y,likelihood
0,10.5,20.25,0.99,30,40,0.2
1,11,21,0.98,,,
labeled-data/vid/img00007.png,12,22,0.97,31,41,0.95
";

    #[test]
    fn imports_likelihood_and_missing_cells() {
        let l = import_csv(WITH_LIKELIHOOD.as_bytes(), "dlc", &CsvImportOptions::default()).unwrap();
        assert_eq!(l.get("0", 0), Some(Point2::new(10.5, 20.25)));
        assert_eq!(l.get("1", 1), None);
        assert_eq!(l.get("0", 7), Some(Point2::new(12.0, 22.0)));
        assert_eq!(l.get("1", 0), Some(Point2::new(30.0, 40.0)));

        let opts = CsvImportOptions {
            min_likelihood: Some(0.5),
        };
        let l = import_csv(WITH_LIKELIHOOD.as_bytes(), "dlc", &opts).unwrap();
        assert_eq!(l.get("1", 0), None);
        assert_eq!(l.get("1", 7), Some(Point2::new(31.0, 41.0)));
    }

    #[test]
    fn export_then_import_round_trips() {
        let l = import_csv(WITH_LIKELIHOOD.as_bytes(), "dlc", &CsvImportOptions::default()).unwrap();
        let mut buf = Vec::new();
        export_csv(&l, &mut buf, "ustrack", None).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("scorer,ustrack,ustrack,ustrack,ustrack\nbodyparts,0,0,1,1\ncoords,x,y,x,y\n"));
        let back = import_csv(buf.as_slice(), "dlc", &CsvImportOptions::default()).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn rejects_garbage() {
        let bad = "scorer,a,a\nbodyparts,0,0\ncoords,x,z\n";
        assert!(import_csv(bad.as_bytes(), "x", &CsvImportOptions::default()).is_err());
        let bad = "scorer,a,a\nbodyparts,0,0\ncoords,x,y\n0,abc,1\n";
        assert!(import_csv(bad.as_bytes(), "x", &CsvImportOptions::default()).is_err());
    }
}
