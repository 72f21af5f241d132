//! Subcommand implementations. Every output goes through a temporary file
//! or directory that is renamed into place once complete.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde_json::json;
use ustrack_core::annot::{
    export_csv, import_csv, interpolate_gaps, load_layer, save_layer, write_atomic, CsvImportOptions,
    InterpolateOptions, SequenceBounds,
};
use ustrack_core::evalkit::{psd, rmse, trajectory_jitter, Spectrum};
use ustrack_core::geometry::{
    deformation_series, distance_series, fascicle_series, metrics_to_csv, metrics_to_json, polygon_area_series,
    FascicleModel, MetricSeries,
};
use ustrack_core::jitterfilter::filter_layer;
use ustrack_core::media::{open_sequence, write_sequence, Manifest, MANIFEST_FILE};
use ustrack_core::synth::{render_sequence, SpeckleSpec, SynthSpec};
use ustrack_core::{
    AnnotationLayer, Calibration, FilterConfig, FrameSequence, Point2, RstcConfig, TrackStatus, Tracker, Trajectory,
};

use crate::args::*;
use crate::server::{self, Session, SessionConfig};
use crate::UsageError;

/// File name of the ground-truth layer written by `synth`.
pub const TRUTH_FILE: &str = "truth.annot.json";

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(&a),
        Command::Track(a) => track(&a),
        Command::Interp(a) => interp(&a),
        Command::Filter(a) => filter(&a),
        Command::Metrics(a) => metrics(&a),
        Command::Eval(a) => eval(&a),
        Command::Serve(a) => serve(&a),
        Command::ImportCsv(a) => import(&a),
        Command::ExportCsv(a) => export(&a),
        Command::Trim(a) => trim(&a),
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} {} does not exist or is not a file", path.display());
    }
    Ok(())
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        bail!("{what} {} does not exist or is not a directory", path.display());
    }
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn require_out(path: &Path) -> Result<()> {
    let parent = parent_dir(path);
    if !parent.is_dir() {
        bail!("output directory {} does not exist", parent.display());
    }
    if path.is_dir() {
        bail!("output {} is a directory", path.display());
    }
    Ok(())
}

fn open_frames(dir: &Path) -> Result<FrameSequence> {
    open_sequence(dir, None).with_context(|| format!("opening frames {}", dir.display()))
}

fn load(path: &Path, bounds: Option<&SequenceBounds>) -> Result<AnnotationLayer> {
    load_layer(path, bounds).with_context(|| format!("loading layer {}", path.display()))
}

fn save(layer: &AnnotationLayer, out: &Path) -> Result<()> {
    save_layer(layer, out).with_context(|| format!("writing {}", out.display()))
}

fn write_file(out: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(out, bytes).with_context(|| format!("writing {}", out.display()))
}

fn write_json(out: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(out, text.as_bytes())
}

/// The requested labels, or every label of the layer.
fn select_labels(layer: &AnnotationLayer, requested: &[String], origin: &Path) -> Result<Vec<String>> {
    if requested.is_empty() {
        return Ok(layer.label_ids().map(str::to_string).collect());
    }
    for l in requested {
        if !layer.has_label(l) {
            bail!("label `{l}` not found in layer `{}` ({})", layer.name(), origin.display());
        }
    }
    Ok(requested.to_vec())
}

fn frame_range(from: Option<usize>, to: Option<usize>, n: usize) -> Result<(usize, usize)> {
    let (a, b) = (from.unwrap_or(0), to.unwrap_or(n - 1));
    if a > b || b >= n {
        bail!("frame range {a}..={b} is outside the {n}-frame sequence");
    }
    Ok((a, b))
}

fn calibration(frames: Option<&Path>, args: &CalibrationArgs) -> Result<Calibration> {
    let mut manifest = Manifest::default();
    if let Some(dir) = frames {
        require_dir(dir, "frame directory")?;
        let path = dir.join(MANIFEST_FILE);
        if path.is_file() {
            manifest = Manifest::read(&path)?;
        }
    }
    if args.fps.is_some() {
        manifest.fps = args.fps;
    }
    if args.mm_per_px.is_some() {
        manifest.mm_per_px = args.mm_per_px;
    }
    Ok(manifest.calibration()?)
}

fn synth(a: &SynthArgs) -> Result<()> {
    let parent = parent_dir(&a.out);
    require_dir(parent, "output parent directory")?;
    check_replaceable(&a.out)?;
    let spec = SynthSpec {
        width: a.width,
        height: a.height,
        frames: a.frame_count,
        fps: a.fps,
        seed: a.seed,
        speckle: SpeckleSpec {
            sigma: a.speckle_sigma,
            gain: a.speckle_gain,
        },
        motion: a.motion(),
        sensor_noise: a.sensor_noise,
        mm_per_px: a.mm_per_px,
    };
    let points = if a.points.is_empty() {
        vec![Point2::new((a.width as f64 - 1.0) / 2.0, (a.height as f64 - 1.0) / 2.0)]
    } else {
        a.points.clone()
    };
    let (seq, truth) = render_sequence(&spec, &points)?;

    let staging = tempfile::Builder::new()
        .prefix(".ustrack-synth-")
        .tempdir_in(parent)
        .with_context(|| format!("creating a staging directory in {}", parent.display()))?;
    write_sequence(staging.path(), &seq)?;
    save(&truth, &staging.path().join(TRUTH_FILE))?;
    replace_dir(staging, &a.out)?;
    eprintln!(
        "synth: {} frames of {}x{} and {} truth point(s) in {}",
        seq.len(),
        seq.width(),
        seq.height(),
        points.len(),
        a.out.display()
    );
    Ok(())
}

fn is_synth_output(name: &str) -> bool {
    name == MANIFEST_FILE
        || name == TRUTH_FILE
        || name
            .strip_prefix("frame_")
            .and_then(|r| r.strip_suffix(".png"))
            .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

/// An existing output directory may only be replaced if everything in it
/// looks like an earlier `synth` run.
fn check_replaceable(out: &Path) -> Result<()> {
    if !out.exists() {
        return Ok(());
    }
    if !out.is_dir() {
        bail!("output {} exists and is not a directory", out.display());
    }
    for entry in fs::read_dir(out).with_context(|| format!("reading {}", out.display()))? {
        let entry = entry?;
        let name = entry.file_name();
        if !entry.path().is_file() || !name.to_str().is_some_and(is_synth_output) {
            bail!(
                "refusing to replace {}: it contains {}, which synth did not write",
                out.display(),
                name.to_string_lossy()
            );
        }
    }
    Ok(())
}

/// Moves the staged directory to `out`. A previous `out` is set aside first
/// and restored if the final rename fails.
fn replace_dir(staging: tempfile::TempDir, out: &Path) -> Result<()> {
    let moved = |e| anyhow::Error::new(e).context(format!("moving output into {}", out.display()));
    if !out.exists() {
        return fs::rename(staging.path(), out).map_err(moved);
    }
    let holder = tempfile::Builder::new()
        .prefix(".ustrack-old-")
        .tempdir_in(parent_dir(out))?;
    let old = holder.path().join("old");
    fs::rename(out, &old).with_context(|| format!("moving aside {}", out.display()))?;
    if let Err(e) = fs::rename(staging.path(), out) {
        let _ = fs::rename(&old, out);
        return Err(moved(e));
    }
    Ok(())
}

fn track(a: &TrackArgs) -> Result<()> {
    require_dir(&a.frames, "frame directory")?;
    require_file(&a.layer, "layer")?;
    require_out(&a.out)?;
    let seq = open_frames(&a.frames)?;
    let layer = load(&a.layer, Some(&SequenceBounds::of(&seq)))?;
    let labels = select_labels(&layer, &a.labels, &a.layer)?;
    let (from, to) = frame_range(a.from, a.to, seq.len())?;
    let tracker = Tracker::new(&seq, a.lk.config())?;

    let tracked: Vec<(String, Trajectory, Option<usize>)> = labels
        .par_iter()
        .map(|label| -> Result<_> {
            let traj = layer.label(label)?;
            let (seed, start) = traj
                .range(from..=to)
                .next()
                .ok_or_else(|| anyhow!("label `{label}` has no annotated frame in {from}..={to}"))?;
            let forward = tracker.track_range(start, seed, to)?;
            let backward = tracker.track_range(start, seed, from)?;
            let mut out = Trajectory::new();
            let mut lost_at = None;
            for (k, tp) in forward.iter().enumerate() {
                out.insert(seed + k, tp.p);
                if tp.status == TrackStatus::Lost && lost_at.is_none() {
                    lost_at = Some(seed + k);
                }
            }
            for (k, tp) in backward.iter().enumerate() {
                out.insert(seed - k, tp.p);
                if tp.status == TrackStatus::Lost {
                    lost_at = Some(lost_at.map_or(seed - k, |f: usize| f.min(seed - k)));
                }
            }
            Ok((label.clone(), out, lost_at))
        })
        .collect::<Result<_>>()?;

    let mut out = AnnotationLayer::new(format!("{}_lk", layer.name()))?;
    for (label, traj, lost_at) in tracked {
        if let Some(f) = lost_at {
            eprintln!("track: label `{label}` lost at frame {f}; the last estimate is held from there");
        }
        out.insert_trajectory(label, traj);
    }
    save(&out, &a.out)?;
    eprintln!("track: wrote layer `{}` to {}", out.name(), a.out.display());
    Ok(())
}

fn interp(a: &InterpArgs) -> Result<()> {
    require_dir(&a.frames, "frame directory")?;
    require_file(&a.layer, "layer")?;
    require_out(&a.out)?;
    let seq = open_frames(&a.frames)?;
    let mut layer = load(&a.layer, Some(&SequenceBounds::of(&seq)))?;
    let (from, to) = frame_range(a.from, a.to, seq.len())?;
    let tracker = Tracker::new(&seq, a.lk.config())?;
    let opts = InterpolateOptions {
        alpha: a.alpha,
        overwrite: a.overwrite,
        anchors: None,
    };
    let written = if a.labels.is_empty() {
        interpolate_gaps(&tracker, &mut layer, None, from..=to, &opts)?
    } else {
        select_labels(&layer, &a.labels, &a.layer)?;
        let mut n = 0;
        for label in &a.labels {
            n += interpolate_gaps(&tracker, &mut layer, Some(label), from..=to, &opts)
                .with_context(|| format!("interpolating label `{label}`"))?;
        }
        n
    };
    save(&layer, &a.out)?;
    eprintln!("interp: wrote {written} point(s) to {}", a.out.display());
    Ok(())
}

fn filter(a: &FilterArgs) -> Result<()> {
    require_dir(&a.frames, "frame directory")?;
    require_file(&a.layer, "layer")?;
    require_out(&a.out)?;
    let cfg = FilterConfig {
        window: a.window.window(),
        rstc: RstcConfig {
            alpha: a.alpha,
            track: a.lk.config(),
        },
    };
    cfg.rstc.validate()?;
    let seq = open_frames(&a.frames)?;
    let layer = load(&a.layer, Some(&SequenceBounds::of(&seq)))?;
    let labels = select_labels(&layer, &a.labels, &a.layer)?;
    let mut input = AnnotationLayer::new(layer.name())?;
    for l in &labels {
        input.insert_trajectory(l.clone(), layer.label(l)?.clone());
    }
    let out = filter_layer(&seq, &input, &cfg).with_context(|| format!("filtering {}", a.layer.display()))?;
    save(&out, &a.out)?;
    eprintln!(
        "filter: wrote layer `{}` ({} label(s), window {} frames) to {}",
        out.name(),
        labels.len(),
        cfg.window.frames(seq.fps())?,
        a.out.display()
    );
    Ok(())
}

fn metrics(a: &MetricsArgs) -> Result<()> {
    if a.distances.is_empty() && a.area.is_empty() && a.fascicle.is_empty() {
        return Err(UsageError("nothing to measure: pass --distance, --area or --fascicle".into()).into());
    }
    if !a.fascicle.is_empty() && a.fascicle.len() != 5 {
        return Err(UsageError(format!("--fascicle needs 5 labels, got {}", a.fascicle.len())).into());
    }
    if !a.area.is_empty() && a.area.len() < 3 {
        return Err(UsageError(format!("--area needs at least 3 labels, got {}", a.area.len())).into());
    }
    require_file(&a.layer, "layer")?;
    require_out(&a.out)?;
    let cal = calibration(a.frames.as_deref(), &a.cal)?;
    let layer = load(&a.layer, None)?;

    let mut series: Vec<MetricSeries> = Vec::new();
    for (x, y) in &a.distances {
        let d = distance_series(&layer, x, y, &cal).with_context(|| format!("distance {x}:{y}"))?;
        if let Some(t0) = a.ref_frame {
            let def = deformation_series(&d, t0).with_context(|| format!("deformation of {x}:{y}"))?;
            series.push(d);
            series.push(def);
        } else {
            series.push(d);
        }
    }
    if !a.area.is_empty() {
        let labels: Vec<&str> = a.area.iter().map(String::as_str).collect();
        series.push(polygon_area_series(&layer, &labels, &cal).context("area")?);
    }
    if !a.fascicle.is_empty() {
        let f = &a.fascicle;
        let model = FascicleModel::new([&f[0], &f[1]], [&f[2], &f[3]], &f[4])?;
        let (length, pennation) = fascicle_series(&layer, &model, &cal).context("fascicle")?;
        series.push(length);
        series.push(pennation);
    }

    let refs: Vec<&MetricSeries> = series.iter().collect();
    let format = a.format.unwrap_or_else(|| {
        if a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Format::Json
        } else {
            Format::Csv
        }
    });
    match format {
        Format::Csv => write_file(&a.out, metrics_to_csv(&refs, cal.fps).as_bytes())?,
        Format::Json => write_json(&a.out, &metrics_to_json(&refs, cal.fps))?,
    }
    eprintln!("metrics: wrote {} series to {}", series.len(), a.out.display());
    Ok(())
}

/// Consecutive points from a label's first to last annotated frame, or
/// `None` when there are gaps.
fn contiguous(traj: &Trajectory) -> Option<(usize, Vec<Point2>)> {
    let first = traj.frames().next()?;
    let pts: Vec<(usize, Point2)> = traj.iter().collect();
    pts.iter()
        .enumerate()
        .all(|(k, (f, _))| *f == first + k)
        .then(|| (first, pts.into_iter().map(|(_, p)| p).collect()))
}

fn label_spectrum(traj: &Trajectory, cal: &Calibration) -> Result<Spectrum> {
    let (_, pts) = contiguous(traj).ok_or_else(|| anyhow!("trajectory has gaps"))?;
    let xs: Vec<f64> = pts.iter().map(|p| p.x * cal.mm_per_px_x).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.y * cal.mm_per_px_y).collect();
    let mut sx = psd(&xs, cal.fps)?;
    let sy = psd(&ys, cal.fps)?;
    sx.power.iter_mut().zip(&sy.power).for_each(|(a, b)| *a += b);
    Ok(sx)
}

fn eval(a: &EvalArgs) -> Result<()> {
    require_file(&a.layer, "layer")?;
    if let Some(t) = &a.truth {
        require_file(t, "truth layer")?;
    }
    require_out(&a.out)?;
    if let Some(p) = &a.psd_out {
        require_out(p)?;
    }
    let cal = calibration(a.frames.as_deref(), &a.cal)?;
    let layer = load(&a.layer, None)?;
    let truth = a.truth.as_deref().map(|t| load(t, None)).transpose()?;
    let labels = select_labels(&layer, &a.labels, &a.layer)?;

    let mut per_label = serde_json::Map::new();
    let mut sq_sum = 0.0;
    let mut rmse_count = 0usize;
    for label in &labels {
        let traj = layer.label(label)?;
        let mut entry = serde_json::Map::new();
        entry.insert("points".into(), traj.len().into());
        if let Some(t) = &truth {
            let reference = t
                .label(label)
                .with_context(|| format!("truth layer {}", a.truth.as_ref().unwrap().display()))?;
            let r = rmse(traj, reference, &cal).with_context(|| format!("rmse of label `{label}`"))?;
            sq_sum += r * r;
            rmse_count += 1;
            entry.insert("rmse_mm".into(), r.into());
        }
        let jitter = match contiguous(traj) {
            Some((first, pts)) => Some(
                trajectory_jitter(&Trajectory::from_dense(&pts), pts.len(), &cal, a.cutoff)
                    .with_context(|| format!("jitter of label `{label}` (frames from {first})"))?,
            ),
            None => {
                eprintln!("eval: label `{label}` has gaps; jitter not computed");
                None
            }
        };
        entry.insert("jitter_mm".into(), jitter.map_or(serde_json::Value::Null, Into::into));
        per_label.insert(label.clone(), entry.into());
    }

    let mut report = json!({
        "layer": layer.name(),
        "fps": cal.fps,
        "mm_per_px": [cal.mm_per_px_x, cal.mm_per_px_y],
        "jitter_cutoff_hz": a.cutoff,
        "labels": per_label,
    });
    if rmse_count > 0 {
        report["rmse_mm"] = (sq_sum / rmse_count as f64).sqrt().into();
    }

    let spectrum = match &a.psd_out {
        Some(path) => {
            let label = a
                .psd_label
                .clone()
                .or_else(|| labels.first().cloned())
                .ok_or_else(|| anyhow!("layer `{}` has no labels for --psd-out", layer.name()))?;
            let traj = layer
                .label(&label)
                .with_context(|| format!("--psd-label in {}", a.layer.display()))?;
            let s = label_spectrum(traj, &cal).with_context(|| format!("spectrum of label `{label}`"))?;
            report["psd"] = json!({
                "label": label,
                "segment_len": s.segment_len,
                "overlap": s.overlap,
                "segments": s.segments,
                "window": s.window,
            });
            Some((path, s))
        }
        None => None,
    };
    write_json(&a.out, &report)?;
    if let Some((path, s)) = spectrum {
        write_file(path, s.to_csv().as_bytes())?;
    }
    eprintln!("eval: wrote {}", a.out.display());
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    require_dir(&a.frames, "frame directory")?;
    for l in &a.layers {
        require_file(l, "layer")?;
    }
    require_dir(&a.out, "save directory")?;
    let seq = open_frames(&a.frames)?;
    let bounds = SequenceBounds::of(&seq);
    let layers = a.layers.iter().map(|p| load(p, Some(&bounds))).collect::<Result<Vec<_>>>()?;
    let config = SessionConfig {
        filter: FilterConfig {
            window: a.window.window(),
            rstc: RstcConfig {
                alpha: a.alpha,
                track: a.lk.config(),
            },
        },
        save_dir: a.out.clone(),
    };
    config.filter.rstc.validate()?;
    let session = Arc::new(Session::new(seq, layers, config)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(crate::worker_threads())
        .enable_all()
        .build()?;
    runtime
        .block_on(server::serve(session, a.port))
        .with_context(|| format!("serving on port {}", a.port))
}

fn import(a: &ImportCsvArgs) -> Result<()> {
    require_file(&a.csv, "csv")?;
    require_out(&a.out)?;
    let name = match &a.name {
        Some(n) => n.clone(),
        None => a
            .csv
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| anyhow!("cannot derive a layer name from {}; pass --name", a.csv.display()))?,
    };
    let file = fs::File::open(&a.csv).with_context(|| format!("opening {}", a.csv.display()))?;
    let opts = CsvImportOptions {
        min_likelihood: a.min_likelihood,
    };
    let layer = import_csv(std::io::BufReader::new(file), &name, &opts)
        .with_context(|| format!("importing {}", a.csv.display()))?;
    if let Some(dir) = &a.frames {
        require_dir(dir, "frame directory")?;
        let seq = open_frames(dir)?;
        layer
            .validate(&SequenceBounds::of(&seq))
            .with_context(|| format!("validating {} against {}", a.csv.display(), dir.display()))?;
    }
    save(&layer, &a.out)?;
    eprintln!(
        "import-csv: layer `{}` with {} label(s) written to {}",
        layer.name(),
        layer.labels().len(),
        a.out.display()
    );
    Ok(())
}

fn export(a: &ExportCsvArgs) -> Result<()> {
    require_file(&a.layer, "layer")?;
    require_out(&a.out)?;
    let (layer, frames) = match &a.frames {
        Some(dir) => {
            require_dir(dir, "frame directory")?;
            let seq = open_frames(dir)?;
            (load(&a.layer, Some(&SequenceBounds::of(&seq)))?, Some(seq.len()))
        }
        None => (load(&a.layer, None)?, None),
    };
    let mut buf = Vec::new();
    export_csv(&layer, &mut buf, &a.scorer, frames)?;
    write_file(&a.out, &buf)?;
    eprintln!("export-csv: wrote {}", a.out.display());
    Ok(())
}

fn trim(a: &TrimArgs) -> Result<()> {
    require_file(&a.layer, "layer")?;
    require_out(&a.out)?;
    let mut layer = load(&a.layer, None)?;
    let removed = layer.trim(&a.labels);
    save(&layer, &a.out)?;
    eprintln!("trim: removed {} frame(s), wrote {}", removed.len(), a.out.display());
    Ok(())
}
