//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ustrack_core::jitterfilter::{Window, DEFAULT_WINDOW_SECONDS};
use ustrack_core::rstc::DEFAULT_ALPHA;
use ustrack_core::synth::{Axis, MotionField, SpeckleSpec};
use ustrack_core::{Point2, TrackConfig};

pub const DEFAULT_PORT: u16 = 8472;

#[derive(Debug, Parser)]
#[command(name = "ustrack", version, about = "Point tracking and jitter filtering for ultrasound image sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic speckle sequence and its ground-truth layer.
    Synth(SynthArgs),
    /// Propagate each label from its first annotated frame with pyramidal LK.
    Track(TrackArgs),
    /// Fill gaps between annotated frames with bidirectional tracklets.
    Interp(InterpArgs),
    /// Apply the sliding-window jitter filter to a dense layer.
    Filter(FilterArgs),
    /// Derive distance, deformation, area and fascicle metrics.
    Metrics(MetricsArgs),
    /// RMSE against a reference layer, jitter and power spectra.
    Eval(EvalArgs),
    /// Serve frames and annotations over HTTP on localhost.
    Serve(ServeArgs),
    /// Convert a keypoint CSV into a layer file.
    ImportCsv(ImportCsvArgs),
    /// Write a layer as keypoint CSV.
    ExportCsv(ExportCsvArgs),
    /// Drop frames that lack any of the expected labels.
    Trim(TrimArgs),
}

/// Parses `x,y`.
pub fn parse_point(s: &str) -> Result<Point2, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected `x,y`, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number"));
    let p = Point2::new(num(x)?, num(y)?);
    if !p.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(p)
}

/// Parses `a:b` into a label pair.
pub fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(':') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(format!("expected `label_a:label_b`, got `{s}`")),
    }
}

/// Parses `s` or `sx,sy` as mm per pixel.
pub fn parse_scale(s: &str) -> Result<[f64; 2], String> {
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number"));
    match s.split_once(',') {
        Some((x, y)) => Ok([num(x)?, num(y)?]),
        None => {
            let v = num(s)?;
            Ok([v, v])
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LkArgs {
    /// LK window side in pixels (odd).
    #[arg(long, default_value_t = TrackConfig::default().win)]
    pub lk_win: usize,
    /// Pyramid levels.
    #[arg(long, default_value_t = TrackConfig::default().levels)]
    pub lk_levels: usize,
}

impl LkArgs {
    pub fn config(&self) -> TrackConfig {
        TrackConfig {
            win: self.lk_win,
            levels: self.lk_levels,
            ..TrackConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
#[group(multiple = false)]
pub struct WindowArgs {
    /// Filter window length in frames.
    #[arg(long)]
    pub window_frames: Option<usize>,
    /// Filter window length in seconds, converted with the sequence fps
    /// [default: 0.6].
    #[arg(long)]
    pub window_seconds: Option<f64>,
}

impl WindowArgs {
    pub fn window(&self) -> Window {
        match (self.window_frames, self.window_seconds) {
            (Some(f), _) => Window::Frames(f),
            (None, Some(s)) => Window::Seconds(s),
            (None, None) => Window::Seconds(DEFAULT_WINDOW_SECONDS),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CalibrationArgs {
    /// Frame rate; overrides the sequence manifest.
    #[arg(long)]
    pub fps: Option<f64>,
    /// Millimetres per pixel, `s` or `sx,sy`; overrides the sequence manifest.
    #[arg(long, value_parser = parse_scale)]
    pub mm_per_px: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MotionKind {
    Translation,
    Sinusoid,
    Shear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    X,
    Y,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (frames, manifest and `truth.annot.json`).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long = "frame-count", default_value_t = 100)]
    pub frame_count: usize,
    #[arg(long, default_value_t = 50.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_scale, default_value = "1")]
    pub mm_per_px: [f64; 2],
    /// Gaussian blur sigma of the speckle texture.
    #[arg(long, default_value_t = SpeckleSpec::default().sigma)]
    pub speckle_sigma: f64,
    #[arg(long, default_value_t = SpeckleSpec::default().gain)]
    pub speckle_gain: f64,
    /// Standard deviation of per-frame additive noise.
    #[arg(long, default_value_t = 0.0)]
    pub sensor_noise: f64,
    #[arg(long, value_enum, default_value_t = MotionKind::Translation)]
    pub motion: MotionKind,
    /// Translation velocity, px/frame.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub vx: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub vy: f64,
    /// Sinusoid amplitude, px.
    #[arg(long, default_value_t = 5.0)]
    pub amplitude: f64,
    /// Sinusoid frequency, Hz.
    #[arg(long, default_value_t = 1.0)]
    pub freq: f64,
    #[arg(long, value_enum, default_value_t = AxisArg::X)]
    pub axis: AxisArg,
    /// Shear rate per frame.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub shear_rate: f64,
    /// Tracked material points `x,y`; repeatable [default: frame centre].
    #[arg(long = "point", value_parser = parse_point)]
    pub points: Vec<Point2>,
}

impl SynthArgs {
    pub fn motion(&self) -> MotionField {
        match self.motion {
            MotionKind::Translation => MotionField::Translation { vx: self.vx, vy: self.vy },
            MotionKind::Sinusoid => MotionField::Sinusoid {
                amplitude: self.amplitude,
                freq_hz: self.freq,
                axis: match self.axis {
                    AxisArg::X => Axis::X,
                    AxisArg::Y => Axis::Y,
                },
            },
            MotionKind::Shear => MotionField::Shear {
                rate: self.shear_rate,
                center_y: (self.height as f64 - 1.0) / 2.0,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Frame directory.
    #[arg(long)]
    pub frames: PathBuf,
    /// Layer with at least one point per label to track from.
    #[arg(long)]
    pub layer: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated label ids [default: all].
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// First frame of the tracked range.
    #[arg(long)]
    pub from: Option<usize>,
    /// Last frame of the tracked range.
    #[arg(long)]
    pub to: Option<usize>,
    #[command(flatten)]
    pub lk: LkArgs,
}

#[derive(Debug, Args)]
pub struct InterpArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub layer: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[arg(long)]
    pub from: Option<usize>,
    #[arg(long)]
    pub to: Option<usize>,
    /// Replace existing points between anchors.
    #[arg(long)]
    pub overwrite: bool,
    /// Sigmoid steepness.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[command(flatten)]
    pub lk: LkArgs,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub frames: PathBuf,
    /// Dense input layer.
    #[arg(long)]
    pub layer: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[command(flatten)]
    pub lk: LkArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub layer: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Frame directory whose manifest provides the calibration.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[command(flatten)]
    pub cal: CalibrationArgs,
    /// Distance between two labels, `a:b`; repeatable.
    #[arg(long = "distance", value_parser = parse_pair)]
    pub distances: Vec<(String, String)>,
    /// Reference frame for deformation of each distance.
    #[arg(long)]
    pub ref_frame: Option<usize>,
    /// Polygon area over comma-separated labels, in order.
    #[arg(long, value_delimiter = ',')]
    pub area: Vec<String>,
    /// Fascicle model labels `upper0,upper1,lower0,lower1,fascicle`.
    #[arg(long, value_delimiter = ',')]
    pub fascicle: Vec<String>,
    /// Output format [default: from the `--out` extension].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Layer under evaluation.
    #[arg(long)]
    pub layer: PathBuf,
    /// Scalar metrics as JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Reference layer for RMSE.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[command(flatten)]
    pub cal: CalibrationArgs,
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// High-pass cutoff of the jitter metric, Hz.
    #[arg(long, default_value_t = ustrack_core::evalkit::DEFAULT_JITTER_CUTOFF_HZ)]
    pub cutoff: f64,
    /// Power spectrum CSV (`freq,power`) of one label.
    #[arg(long)]
    pub psd_out: Option<PathBuf>,
    /// Label for `--psd-out` [default: first evaluated label].
    #[arg(long)]
    pub psd_label: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub frames: PathBuf,
    /// Layer files to open; repeatable.
    #[arg(long = "layer")]
    pub layers: Vec<PathBuf>,
    /// Directory that saved layers are written to.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[command(flatten)]
    pub lk: LkArgs,
}

#[derive(Debug, Args)]
pub struct ImportCsvArgs {
    /// Keypoint CSV file.
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Layer name [default: CSV file stem].
    #[arg(long)]
    pub name: Option<String>,
    /// Drop points below this likelihood.
    #[arg(long)]
    pub min_likelihood: Option<f64>,
    /// Validate points against this sequence.
    #[arg(long)]
    pub frames: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportCsvArgs {
    #[arg(long)]
    pub layer: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Emit one row per frame of this sequence instead of annotated frames only.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long, default_value = "ustrack")]
    pub scorer: String,
}

#[derive(Debug, Args)]
pub struct TrimArgs {
    #[arg(long)]
    pub layer: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Labels every kept frame must have.
    #[arg(long, value_delimiter = ',', required = true)]
    pub labels: Vec<String>,
}
