//! Frame sequences, calibrated sub-pixel sampling and image pyramids.
//!
//! Intensities are stored as `f64` in `[0, 1]` regardless of the source bit
//! depth. Sampling and gradients clamp to the frame edge, so every query is
//! total.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::point::Point2;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RAW_FILE: &str = "frames.y8";
pub const DEFAULT_FPS: f64 = 50.0;

/// Smallest side length (px) a pyramid level may have.
pub const MIN_PYRAMID_SIDE: usize = 8;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("frame {index} ({}): {message}", path.display())]
    Load {
        index: usize,
        path: PathBuf,
        message: String,
    },
    #[error("invalid manifest {}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
    #[error("structural error: {0}")]
    Structural(String),
    #[error("invalid calibration: {0}")]
    Calibration(String),
    #[error("no frames found in {}", .0.display())]
    Empty(PathBuf),
    #[error("png encoding failed: {0}")]
    Encode(String),
}

/// A single grayscale frame, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    index: usize,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(index: usize, width: usize, height: usize, data: Vec<f64>) -> Result<Self, MediaError> {
        if width == 0 || height == 0 {
            return Err(MediaError::Structural(format!(
                "frame {index} has empty dimensions {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(MediaError::Structural(format!(
                "frame {index}: expected {} intensities for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(MediaError::Structural(format!(
                "frame {index}: intensity {} at pixel ({}, {}) outside [0, 1]",
                data[pos],
                pos % width,
                pos / width
            )));
        }
        Ok(Self {
            index,
            width,
            height,
            data,
        })
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel. Values are
    /// clamped to `[0, 1]`.
    pub fn from_fn(index: usize, width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            index,
            width,
            height,
            data,
        }
    }

    /// 8-bit luma, normalised by 1/255.
    pub fn from_luma8(index: usize, width: usize, height: usize, bytes: &[u8]) -> Result<Self, MediaError> {
        if bytes.len() != width * height {
            return Err(MediaError::Structural(format!(
                "frame {index}: expected {} bytes for {width}x{height}, got {}",
                width * height,
                bytes.len()
            )));
        }
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Frame::new(index, width, height, data)
    }

    #[inline]
    pub fn index(&self) -> usize {
        self.index
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    /// True when `p` lies inside `[0, w-1] x [0, h-1]`.
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }

    pub fn clamp_point(&self, p: Point2) -> Point2 {
        Point2::new(
            p.x.clamp(0.0, (self.width - 1) as f64),
            p.y.clamp(0.0, (self.height - 1) as f64),
        )
    }

    #[inline]
    pub fn sample(&self, p: Point2) -> f64 {
        sample_bilinear(self, p)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn to_luma8(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v * 255.0).round() as u8).collect()
    }

    /// Encodes the frame as an 8-bit grayscale PNG.
    pub fn encode_png(&self) -> Result<Vec<u8>, MediaError> {
        let img = GrayImage::from_raw(self.width as u32, self.height as u32, self.to_luma8())
            .ok_or_else(|| MediaError::Encode("buffer size mismatch".into()))?;
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)
            .map_err(|e| MediaError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }
}

/// Bilinear interpolation with clamp-to-edge borders. Exact at integer
/// coordinates.
#[inline]
pub fn sample_bilinear(frame: &Frame, p: Point2) -> f64 {
    let w = frame.width;
    let h = frame.height;
    let x = p.x.clamp(0.0, (w - 1) as f64);
    let y = p.y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let ax = x - x0 as f64;
    let ay = y - y0 as f64;

    let row0 = &frame.data[y0 * w..];
    let row1 = &frame.data[y1 * w..];
    let top = row0[x0] + ax * (row0[x1] - row0[x0]);
    let bottom = row1[x0] + ax * (row1[x1] - row1[x0]);
    top + ay * (bottom - top)
}

/// Bilinear samples on the integer lattice `origin + (i, j)`, `i < cols`,
/// `j < rows`, written row-major into `out`. All lattice points share one
/// sub-pixel fraction, so interior lattices skip clamping and reuse weights.
pub fn sample_grid(frame: &Frame, origin: Point2, cols: usize, rows: usize, out: &mut Vec<f64>) {
    out.clear();
    let (w, h) = (frame.width, frame.height);
    let (fx, fy) = (origin.x.floor(), origin.y.floor());
    let interior = fx >= 0.0
        && fy >= 0.0
        && fx + cols as f64 <= (w - 1) as f64
        && fy + rows as f64 <= (h - 1) as f64;
    if !interior {
        // Clamping is per axis, so taps are computed once per column and row
        // exactly as in `sample_bilinear`.
        let taps = |o: f64, n: usize, len: usize| -> Vec<(usize, usize, f64)> {
            (0..n)
                .map(|i| {
                    let c = (o + i as f64).clamp(0.0, (len - 1) as f64);
                    let c0 = c.floor() as usize;
                    (c0, (c0 + 1).min(len - 1), c - c0 as f64)
                })
                .collect()
        };
        let xs = taps(origin.x, cols, w);
        for (y0, y1, ay) in taps(origin.y, rows, h) {
            let (row0, row1) = (&frame.data[y0 * w..], &frame.data[y1 * w..]);
            for &(x0, x1, ax) in &xs {
                let top = row0[x0] + ax * (row0[x1] - row0[x0]);
                let bottom = row1[x0] + ax * (row1[x1] - row1[x0]);
                out.push(top + ay * (bottom - top));
            }
        }
        return;
    }
    let (ax, ay) = (origin.x - fx, origin.y - fy);
    let (x0, y0) = (fx as usize, fy as usize);
    for j in 0..rows {
        let r0 = &frame.data[(y0 + j) * w + x0..(y0 + j) * w + x0 + cols + 1];
        let r1 = &frame.data[(y0 + j + 1) * w + x0..(y0 + j + 1) * w + x0 + cols + 1];
        for i in 0..cols {
            let top = r0[i] + ax * (r0[i + 1] - r0[i]);
            let bottom = r1[i] + ax * (r1[i + 1] - r1[i]);
            out.push(top + ay * (bottom - top));
        }
    }
}

/// Central differences of bilinear samples, one pixel either side.
#[inline]
pub fn gradient(frame: &Frame, p: Point2) -> (f64, f64) {
    let gx = (sample_bilinear(frame, Point2::new(p.x + 1.0, p.y))
        - sample_bilinear(frame, Point2::new(p.x - 1.0, p.y)))
        * 0.5;
    let gy = (sample_bilinear(frame, Point2::new(p.x, p.y + 1.0))
        - sample_bilinear(frame, Point2::new(p.x, p.y - 1.0)))
        * 0.5;
    (gx, gy)
}

/// Pixel spacing and frame rate of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mm_per_px_x: f64,
    pub mm_per_px_y: f64,
    pub fps: f64,
}

impl Calibration {
    pub fn new(mm_per_px_x: f64, mm_per_px_y: f64, fps: f64) -> Result<Self, MediaError> {
        for (name, v) in [("mm_per_px_x", mm_per_px_x), ("mm_per_px_y", mm_per_px_y), ("fps", fps)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MediaError::Calibration(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            mm_per_px_x,
            mm_per_px_y,
            fps,
        })
    }

    /// Pixel displacement converted to millimetres.
    #[inline]
    pub fn to_mm(&self, d: Point2) -> Point2 {
        d.scale(self.mm_per_px_x, self.mm_per_px_y)
    }
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            mm_per_px_x: 1.0,
            mm_per_px_y: 1.0,
            fps: DEFAULT_FPS,
        }
    }
}

/// Ordered frames of identical size sharing one calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    calibration: Calibration,
}

impl FrameSequence {
    /// Frames are re-indexed `0..N-1` in the given order.
    pub fn new(frames: Vec<Frame>, calibration: Calibration) -> Result<Self, MediaError> {
        let first = frames
            .first()
            .ok_or_else(|| MediaError::Structural("sequence has no frames".into()))?;
        let (w, h) = (first.width, first.height);
        if let Some(bad) = frames.iter().position(|f| f.width != w || f.height != h) {
            return Err(MediaError::Structural(format!(
                "frame {bad} is {}x{}, expected {w}x{h}",
                frames[bad].width, frames[bad].height
            )));
        }
        let frames = frames
            .into_iter()
            .enumerate()
            .map(|(i, f)| f.with_index(i))
            .collect();
        Ok(Self { frames, calibration })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    #[inline]
    pub fn frame(&self, index: usize) -> &Frame {
        &self.frames[index]
    }

    pub fn get(&self, index: usize) -> Option<&Frame> {
        self.frames.get(index)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn calibration(&self) -> Calibration {
        self.calibration
    }

    pub fn fps(&self) -> f64 {
        self.calibration.fps
    }

    /// The same frames in reverse temporal order.
    pub fn reversed(&self) -> FrameSequence {
        let frames = self.frames.iter().rev().cloned().collect();
        FrameSequence::new(frames, self.calibration).expect("reversal preserves structure")
    }
}

/// Gaussian pyramid; level 0 is the original frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    levels: Vec<Frame>,
}

impl Pyramid {
    pub fn levels(&self) -> &[Frame] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &Frame {
        &self.levels[k]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Largest level count keeping at least [`MIN_PYRAMID_SIDE`] px per axis at
/// the coarsest level, i.e. the largest `L` with `2^(L-1) <= min(w, h) / 8`.
/// Never less than 1.
pub fn max_pyramid_levels(width: usize, height: usize) -> usize {
    let side = width.min(height);
    let mut levels = 1;
    while (1usize << levels) * MIN_PYRAMID_SIDE <= side {
        levels += 1;
    }
    levels
}

pub fn build_pyramid(frame: &Frame, levels: usize) -> Pyramid {
    let count = levels.max(1).min(max_pyramid_levels(frame.width, frame.height));
    let mut out = Vec::with_capacity(count);
    out.push(frame.clone());
    for _ in 1..count {
        let next = pyr_down(out.last().expect("non-empty"));
        out.push(next);
    }
    Pyramid { levels: out }
}

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Separable [1,4,6,4,1]/16 blur (clamped borders), then keep even pixels.
fn pyr_down(src: &Frame) -> Frame {
    let (w, h) = (src.width, src.height);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut horiz = vec![0.0; w * h];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, c) in BINOMIAL.iter().enumerate() {
                acc += c * row[clamp(x as isize + k as isize - 2, w)];
            }
            horiz[y * w + x] = acc;
        }
    }

    let nw = w.div_ceil(2);
    let nh = h.div_ceil(2);
    let mut data = Vec::with_capacity(nw * nh);
    for ny in 0..nh {
        let y = 2 * ny;
        for nx in 0..nw {
            let x = 2 * nx;
            let mut acc = 0.0;
            for (k, c) in BINOMIAL.iter().enumerate() {
                acc += c * horiz[clamp(y as isize + k as isize - 2, h) * w + x];
            }
            data.push(acc.clamp(0.0, 1.0));
        }
    }
    Frame {
        index: src.index,
        width: nw,
        height: nh,
        data,
    }
}

/// `manifest.json` next to the frames.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mm_per_px: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, MediaError> {
        let text = fs::read_to_string(path).map_err(|source| MediaError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| MediaError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn calibration(&self) -> Result<Calibration, MediaError> {
        let [mx, my] = self.mm_per_px.unwrap_or([1.0, 1.0]);
        Calibration::new(mx, my, self.fps.unwrap_or(DEFAULT_FPS))
    }

    pub fn for_sequence(seq: &FrameSequence) -> Self {
        let cal = seq.calibration();
        Manifest {
            fps: Some(cal.fps),
            mm_per_px: Some([cal.mm_per_px_x, cal.mm_per_px_y]),
            ..Default::default()
        }
    }
}

/// Opens a frame directory.
///
/// The directory holds either `frame_NNNNNN.png` / `.pgm` files (sorted
/// lexicographically) or a raw 8-bit `frames.y8` blob. When `manifest` is
/// `None`, `manifest.json` is read from the directory if present; missing
/// fields fall back to 50 fps and 1 mm/px.
pub fn open_sequence(dir: &Path, manifest: Option<&Manifest>) -> Result<FrameSequence, MediaError> {
    let manifest = match manifest {
        Some(m) => m.clone(),
        None => {
            let path = dir.join(MANIFEST_FILE);
            if path.exists() {
                Manifest::read(&path)?
            } else {
                Manifest::default()
            }
        }
    };
    let calibration = manifest.calibration()?;
    let raw = dir.join(RAW_FILE);
    let frames = if raw.exists() {
        load_raw(&raw, &manifest)?
    } else {
        load_image_dir(dir)?
    };
    FrameSequence::new(frames, calibration)
}

fn load_raw(path: &Path, manifest: &Manifest) -> Result<Vec<Frame>, MediaError> {
    let missing = |field: &str| MediaError::Manifest {
        path: path.with_file_name(MANIFEST_FILE),
        message: format!("raw sequences require `{field}`"),
    };
    let w = manifest.width.ok_or_else(|| missing("width"))?;
    let h = manifest.height.ok_or_else(|| missing("height"))?;
    let n = manifest.count.ok_or_else(|| missing("count"))?;
    let bytes = fs::read(path).map_err(|source| MediaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let expected = w * h * n;
    if bytes.len() != expected {
        return Err(MediaError::Structural(format!(
            "{} holds {} bytes, manifest declares {w}x{h}x{n} = {expected}",
            path.display(),
            bytes.len()
        )));
    }
    if n == 0 {
        return Err(MediaError::Empty(path.to_path_buf()));
    }
    bytes
        .chunks_exact(w * h)
        .enumerate()
        .map(|(i, chunk)| Frame::from_luma8(i, w, h, chunk))
        .collect()
}

fn is_frame_file(path: &Path) -> bool {
    let name = match path.file_name().and_then(|n| n.to_str()) {
        Some(n) => n,
        None => return false,
    };
    let ext_ok = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("pgm"))
        .unwrap_or(false);
    ext_ok && name.starts_with("frame_")
}

fn load_image_dir(dir: &Path) -> Result<Vec<Frame>, MediaError> {
    let entries = fs::read_dir(dir).map_err(|source| MediaError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| MediaError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if is_frame_file(&path) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(MediaError::Empty(dir.to_path_buf()));
    }
    paths.sort();

    let frames: Vec<Frame> = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| load_image(i, p))
        .collect::<Result<_, _>>()?;
    let (w, h) = (frames[0].width, frames[0].height);
    if let Some(bad) = frames.iter().find(|f| f.width != w || f.height != h) {
        return Err(MediaError::Structural(format!(
            "frame {} ({}) is {}x{}, expected {w}x{h}",
            bad.index,
            paths[bad.index].display(),
            bad.width,
            bad.height
        )));
    }
    Ok(frames)
}

fn load_image(index: usize, path: &Path) -> Result<Frame, MediaError> {
    let load_err = |message: String| MediaError::Load {
        index,
        path: path.to_path_buf(),
        message,
    };
    let bytes = fs::read(path).map_err(|e| load_err(e.to_string()))?;
    let img = image::load_from_memory(&bytes).map_err(|e| load_err(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|b| f64::from(b) / 255.0).collect(),
        DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(|b| f64::from(b) / 65535.0).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|px| rec601_luma(px.0) / 255.0)
            .collect(),
    };
    Frame::new(index, w, h, data).map_err(|e| load_err(e.to_string()))
}

/// Rec.601 luma of an 8-bit RGB triple, on the 0..255 scale.
pub fn rec601_luma(rgb: [u8; 3]) -> f64 {
    (0.299 * f64::from(rgb[0]) + 0.587 * f64::from(rgb[1]) + 0.114 * f64::from(rgb[2])).clamp(0.0, 255.0)
}

/// Writes `frame_NNNNNN.png` files plus `manifest.json`.
pub fn write_sequence(dir: &Path, seq: &FrameSequence) -> Result<(), MediaError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| MediaError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    seq.frames().par_iter().try_for_each(|frame| {
        let path = dir.join(format!("frame_{:06}.png", frame.index()));
        let png = frame.encode_png()?;
        fs::write(&path, png).map_err(io_err(&path))
    })?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&Manifest::for_sequence(seq)).expect("manifest serializes");
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))
}
