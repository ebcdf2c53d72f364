//! Raster carriers, the HSIF/FMAP containers, sequence manifests and
//! ground-truth CSV files.
//!
//! HSIF layout (little-endian): `"HSIF"`, version `u16 = 1`, width `u32`,
//! height `u32`, channels `u32`, dtype `u8 = 0` (f32), then channel-major
//! f32 planes, each plane row-major.
//!
//! FMAP layout: `"FMAP"`, version `u16 = 1`, width `u32`, height `u32`,
//! channels `u32`, stride `u16`, then f32 planes in the same order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HSIF_MAGIC: &[u8; 4] = b"HSIF";
pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";
const HSIF_HEADER_LEN: usize = 19;
const FMAP_HEADER_LEN: usize = 20;
const FORMAT_VERSION: u16 = 1;

/// Multi-channel 2-D raster of `f32`, channel-major planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ChannelStack {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "{width}x{height}x{channels} stack needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    /// Builds a stack from `f(channel, row, col)`. Non-finite outputs are
    /// replaced by zero.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    let v = f(c, y, x);
                    data.push(if v.is_finite() { v } else { 0.0 });
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.plane_len().max(1)).take(self.channels)
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &ChannelStack) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Stacks the channels of `other` after those of `self`.
    pub fn concat_channels(&self, other: &ChannelStack) -> Result<ChannelStack> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Dimension(format!(
                "cannot concatenate {}x{} with {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(ChannelStack {
            width: self.width,
            height: self.height,
            channels: self.channels + other.channels,
            data,
        })
    }

    pub fn select_channels(&self, indices: &[usize]) -> Result<ChannelStack> {
        let mut data = Vec::with_capacity(indices.len() * self.plane_len());
        for &c in indices {
            if c >= self.channels {
                return Err(Error::Dimension(format!(
                    "channel {c} out of range for {}-channel stack",
                    self.channels
                )));
            }
            data.extend_from_slice(self.plane(c));
        }
        Ok(ChannelStack {
            width: self.width,
            height: self.height,
            channels: indices.len(),
            data,
        })
    }

    /// Single-channel average of the given channels (all channels when
    /// `indices` is empty).
    pub fn mean_of_channels(&self, indices: &[usize]) -> Result<ChannelStack> {
        let all: Vec<usize>;
        let indices = if indices.is_empty() {
            all = (0..self.channels).collect();
            &all[..]
        } else {
            indices
        };
        if self.channels == 1 && indices == [0] {
            return Ok(self.clone());
        }
        let mut acc = vec![0.0f32; self.plane_len()];
        for &c in indices {
            if c >= self.channels {
                return Err(Error::Dimension(format!(
                    "channel {c} out of range for {}-channel stack",
                    self.channels
                )));
            }
            for (a, v) in acc.iter_mut().zip(self.plane(c)) {
                *a += v;
            }
        }
        let inv = 1.0 / indices.len() as f32;
        acc.iter_mut().for_each(|a| *a *= inv);
        Ok(ChannelStack {
            width: self.width,
            height: self.height,
            channels: 1,
            data: acc,
        })
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum()
    }
}

/// Integer rectangle in canonical-frame pixels; `(x, y)` is the top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl Rect {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        assert!(w > 0 && h > 0, "Rect needs positive size, got {w}x{h}");
        Self { x, y, w, h }
    }

    pub fn try_new(x: i64, y: i64, w: i64, h: i64) -> Result<Self> {
        if w <= 0 || h <= 0 {
            return Err(Error::Contract(format!("Rect needs positive size, got {w}x{h}")));
        }
        Ok(Self { x, y, w, h })
    }

    /// Square of side `size` whose center is nearest to `(cx, cy)`.
    pub fn centered(cx: f64, cy: f64, size: i64) -> Self {
        let x = (cx - size as f64 / 2.0).round() as i64;
        let y = (cy - size as f64 / 2.0).round() as i64;
        Self::new(x, y, size, size)
    }

    pub fn full(stack: &ChannelStack) -> Self {
        Self::new(0, 0, stack.width() as i64, stack.height() as i64)
    }

    pub fn right(&self) -> i64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x as f64 + self.w as f64 / 2.0, self.y as f64 + self.h as f64 / 2.0)
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x as f64 && y >= self.y as f64 && x < self.right() as f64 && y < self.bottom() as f64
    }

    pub fn translate(&self, dx: i64, dy: i64) -> Rect {
        Rect { x: self.x + dx, y: self.y + dy, ..*self }
    }
}

/// Extracts `roi` from every channel; pixels outside the stack replicate
/// the nearest edge pixel.
pub fn crop(stack: &ChannelStack, roi: Rect) -> ChannelStack {
    let (w, h) = (roi.w as usize, roi.h as usize);
    let max_x = stack.width() as i64 - 1;
    let max_y = stack.height() as i64 - 1;
    let cols: Vec<usize> = (0..roi.w).map(|i| (roi.x + i).clamp(0, max_x) as usize).collect();
    let mut data = Vec::with_capacity(w * h * stack.channels());
    for c in 0..stack.channels() {
        let plane = stack.plane(c);
        for j in 0..roi.h {
            let sy = (roi.y + j).clamp(0, max_y) as usize;
            let row = &plane[sy * stack.width()..(sy + 1) * stack.width()];
            data.extend(cols.iter().map(|&sx| row[sx]));
        }
    }
    ChannelStack {
        width: w,
        height: h,
        channels: stack.channels(),
        data,
    }
}

fn check_writable(stack: &ChannelStack) -> Result<()> {
    if stack.width == 0 || stack.height == 0 || stack.channels == 0 {
        return Err(Error::Dimension("cannot write an empty stack".into()));
    }
    if let Some(i) = stack.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

fn put_dims(out: &mut Vec<u8>, stack: &ChannelStack) -> Result<()> {
    for (name, v) in [("width", stack.width), ("height", stack.height), ("channels", stack.channels)] {
        let v = u32::try_from(v).map_err(|_| Error::Dimension(format!("{name} {v} exceeds u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn put_payload(out: &mut Vec<u8>, stack: &ChannelStack) {
    out.reserve(stack.data.len() * 4);
    for v in &stack.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_hsif(stack: &ChannelStack) -> Result<Vec<u8>> {
    check_writable(stack)?;
    let mut out = Vec::with_capacity(HSIF_HEADER_LEN + stack.data.len() * 4);
    out.extend_from_slice(HSIF_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_dims(&mut out, stack)?;
    out.push(0);
    put_payload(&mut out, stack);
    Ok(out)
}

pub fn encode_fmap(stack: &ChannelStack, stride: u16) -> Result<Vec<u8>> {
    check_writable(stack)?;
    if stride == 0 {
        return Err(Error::Contract("feature-map stride must be positive".into()));
    }
    let mut out = Vec::with_capacity(FMAP_HEADER_LEN + stack.data.len() * 4);
    out.extend_from_slice(FMAP_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_dims(&mut out, stack)?;
    out.extend_from_slice(&stride.to_le_bytes());
    put_payload(&mut out, stack);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() < self.pos + n {
            return Err(Error::Format {
                offset: self.bytes.len(),
                message: format!("header truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn nonzero_u32(&mut self, what: &str) -> Result<usize> {
        let offset = self.pos;
        let v = self.u32(what)?;
        if v == 0 {
            return Err(Error::Format {
                offset,
                message: format!("{what} must be positive"),
            });
        }
        Ok(v as usize)
    }
}

fn decode_header<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<(Reader<'a>, usize, usize, usize)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != magic {
        return Err(Error::Format {
            offset: 0,
            message: format!("expected magic {:?}", String::from_utf8_lossy(magic)),
        });
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let width = r.nonzero_u32("width")?;
    let height = r.nonzero_u32("height")?;
    let channels = r.nonzero_u32("channel count")?;
    Ok((r, width, height, channels))
}

fn decode_payload(bytes: &[u8], offset: usize, width: usize, height: usize, channels: usize) -> Result<ChannelStack> {
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Format {
            offset: 6,
            message: "dimensions overflow".into(),
        })?;
    let payload = &bytes[offset..];
    let expected = count.checked_mul(4).ok_or_else(|| Error::Format {
        offset: 6,
        message: "dimensions overflow".into(),
    })?;
    if payload.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: payload.len(),
        });
    }
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Format {
                offset: offset + i * 4,
                message: "non-finite sample".into(),
            });
        }
        data.push(v);
    }
    Ok(ChannelStack {
        width,
        height,
        channels,
        data,
    })
}

pub fn decode_hsif(bytes: &[u8]) -> Result<ChannelStack> {
    let (mut r, width, height, channels) = decode_header(bytes, HSIF_MAGIC)?;
    let offset = r.pos;
    let dtype = r.take(1, "dtype")?[0];
    if dtype != 0 {
        return Err(Error::Format {
            offset,
            message: format!("unsupported dtype {dtype}"),
        });
    }
    decode_payload(bytes, r.pos, width, height, channels)
}

pub fn decode_fmap(bytes: &[u8]) -> Result<(ChannelStack, u16)> {
    let (mut r, width, height, channels) = decode_header(bytes, FMAP_MAGIC)?;
    let offset = r.pos;
    let stride = r.u16("stride")?;
    if stride == 0 {
        return Err(Error::Format {
            offset,
            message: "stride must be positive".into(),
        });
    }
    Ok((decode_payload(bytes, r.pos, width, height, channels)?, stride))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads an HSIF container or an 8-bit grayscale/RGB raster (PNG, PGM,
/// PPM). 8-bit rasters are scaled by 1/255.
pub fn load_frame(path: impl AsRef<Path>) -> Result<ChannelStack> {
    let path = path.as_ref();
    let bytes = read(path)?;
    if bytes.starts_with(HSIF_MAGIC) {
        return decode_hsif(&bytes);
    }
    let img = image::load_from_memory(&bytes).map_err(|source| match source {
        image::ImageError::Unsupported(_) => Error::Format {
            offset: 0,
            message: "unrecognized magic bytes".into(),
        },
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let stack = if img.color().has_color() {
        let rgb = img.to_rgb8();
        let px = rgb.as_raw();
        ChannelStack::from_fn(w, h, 3, |c, y, x| px[(y * w + x) * 3 + c] as f32 / 255.0)
    } else {
        let gray = img.to_luma8();
        let px = gray.as_raw();
        ChannelStack::from_fn(w, h, 1, |_, y, x| px[y * w + x] as f32 / 255.0)
    };
    Ok(stack)
}

pub fn save_frame(path: impl AsRef<Path>, stack: &ChannelStack) -> Result<()> {
    write(path.as_ref(), &encode_hsif(stack)?)
}

pub fn load_feature_map(path: impl AsRef<Path>) -> Result<(ChannelStack, u16)> {
    decode_fmap(&read(path.as_ref())?)
}

pub fn save_feature_map(path: impl AsRef<Path>, stack: &ChannelStack, stride: u16) -> Result<()> {
    write(path.as_ref(), &encode_fmap(stack, stride)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub path: String,
    pub index: u64,
    pub timestamp: f64,
}

/// Description of a frame sequence on disk. Relative paths resolve against
/// the directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub fps: f64,
    pub channels: usize,
    pub frames: Vec<FrameEntry>,
    /// Per-frame homography mapping frame pixels to canonical pixels,
    /// 9 values row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homographies: Option<Vec<[f64; 9]>>,
    /// Ground-truth CSV of the first target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    /// Ground-truth CSVs of targets 1, 2, ...
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub additional_ground_truth: Vec<String>,
    /// CSV `frame,target,occluded` emitted by the simulator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelengths_nm: Option<Vec<f64>>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SequenceManifest {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if self.channels == 0 {
            return Err(Error::Config("channel count must be positive".into()));
        }
        for pair in self.frames.windows(2) {
            if pair[1].index <= pair[0].index {
                return Err(Error::Config(format!(
                    "frame indices must increase strictly ({} then {})",
                    pair[0].index, pair[1].index
                )));
            }
        }
        if let Some(hs) = &self.homographies {
            if hs.len() != self.frames.len() {
                return Err(Error::Config(format!(
                    "{} homographies for {} frames",
                    hs.len(),
                    self.frames.len()
                )));
            }
        }
        if let Some(wl) = &self.wavelengths_nm {
            if wl.len() != self.channels {
                return Err(Error::Config(format!(
                    "{} wavelength labels for {} channels",
                    wl.len(),
                    self.channels
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: SequenceManifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path.as_ref(), e))?;
        text.push('\n');
        write(path.as_ref(), text.as_bytes())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn frame_path(&self, i: usize) -> PathBuf {
        self.resolve(&self.frames[i].path)
    }

    pub fn load_frame(&self, i: usize) -> Result<ChannelStack> {
        load_frame(self.frame_path(i))
    }

    pub fn ground_truth_paths(&self) -> Vec<PathBuf> {
        self.ground_truth
            .iter()
            .chain(&self.additional_ground_truth)
            .map(|p| self.resolve(p))
            .collect()
    }
}

/// One row of a ground-truth CSV `frame,cx,cy,w,h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthRow {
    pub frame: u64,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

pub const GROUND_TRUTH_HEADER: &str = "frame,cx,cy,w,h";

pub fn write_ground_truth(path: impl AsRef<Path>, rows: &[GroundTruthRow]) -> Result<()> {
    let mut out = String::from(GROUND_TRUTH_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.frame, r.cx, r.cy, r.w, r.h));
    }
    write(path.as_ref(), out.as_bytes())
}

/// Parses a numeric CSV with the given header, returning one vector of
/// fields per data row.
pub(crate) fn read_numeric_csv(path: &Path, header: &str) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ncols = header.split(',').count();
    let mut lines = text.lines().enumerate();
    let csv_err = |line: usize, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    match lines.next() {
        Some((_, first)) if first.trim() == header => {}
        Some((_, first)) => return Err(csv_err(1, format!("expected header '{header}', found '{first}'"))),
        None => return Err(csv_err(1, "empty file".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != ncols {
            return Err(csv_err(i + 1, format!("expected {ncols} fields, found {}", fields.len())));
        }
        let row = fields
            .iter()
            .map(|f| match *f {
                "true" => Ok(1.0),
                "false" => Ok(0.0),
                f => f.parse::<f64>().map_err(|e| csv_err(i + 1, format!("'{f}': {e}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthRow>> {
    let path = path.as_ref();
    read_numeric_csv(path, GROUND_TRUTH_HEADER)?
        .into_iter()
        .map(|r| {
            if r[0] < 0.0 || r[0].fract() != 0.0 {
                return Err(Error::Csv {
                    path: path.to_path_buf(),
                    line: 0,
                    message: format!("frame index {} is not a non-negative integer", r[0]),
                });
            }
            Ok(GroundTruthRow {
                frame: r[0] as u64,
                cx: r[1],
                cy: r[2],
                w: r[3],
                h: r[4],
            })
        })
        .collect()
}
