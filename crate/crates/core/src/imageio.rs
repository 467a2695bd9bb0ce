//! Grayscale rasters, occlusion masks and dataset manifests.
//!
//! Binary PGM (`P5`, maxval 255) is the canonical on-disk format. 8-bit
//! grayscale PNG is accepted on input. Pixel values are never rescaled.

use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roi::AnnulusGeometry;

/// Threshold at or above which a raster value counts as a usable mask pixel.
pub const MASK_THRESHOLD: u8 = 128;

/// Exact manifest CSV header.
pub const MANIFEST_HEADER: [&str; 13] = [
    "sample_id",
    "left",
    "right",
    "mask_left",
    "mask_right",
    "pupil_cx",
    "pupil_cy",
    "pupil_r",
    "iris_cx",
    "iris_cy",
    "iris_r",
    "label",
    "tags",
];

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image file: {0}")]
    CorruptFile(String),
    #[error("unsupported bit depth: {0}")]
    DepthMismatch(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("raster dimensions differ: {0}")]
    DimensionMismatch(String),
    #[error("duplicate sample id `{0}`")]
    DuplicateSampleId(String),
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("malformed manifest row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub type Result<T, E = ImageIoError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ImageIoError + '_ {
    move |source| ImageIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Row-major 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImageIoError::InvalidRaster(format!(
                "zero-sized raster {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(ImageIoError::InvalidRaster(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }
}

/// Row-major occlusion mask; `true` marks a usable iris pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImageIoError::InvalidRaster(format!(
                "zero-sized mask {width}x{height}"
            )));
        }
        if bits.len() != width * height {
            return Err(ImageIoError::InvalidRaster(format!(
                "expected {} mask bits for {width}x{height}, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Thresholds a raster at [`MASK_THRESHOLD`].
    pub fn from_gray(image: &GrayImage) -> Self {
        Self {
            width: image.width,
            height: image.height,
            bits: image.pixels.iter().map(|&p| p >= MASK_THRESHOLD).collect(),
        }
    }

    /// Encodes the mask as a `{0, 255}` raster.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_dims(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }

    /// Pixel-wise AND.
    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if !other.same_dims(self.width, self.height) {
            return Err(ImageIoError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    BonaFide,
    Attack,
    Unknown,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::BonaFide => "bonafide",
            Label::Attack => "attack",
            Label::Unknown => "unknown",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "bonafide" => Ok(Label::BonaFide),
            "attack" => Ok(Label::Attack),
            "unknown" => Ok(Label::Unknown),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Co-registered left-lit and right-lit captures of one eye with their masks.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub left: GrayImage,
    pub right: GrayImage,
    pub mask_left: BinaryMask,
    pub mask_right: BinaryMask,
    pub label: Label,
    pub sample_id: String,
}

impl ImagePair {
    pub fn new(
        left: GrayImage,
        right: GrayImage,
        mask_left: BinaryMask,
        mask_right: BinaryMask,
        label: Label,
        sample_id: impl Into<String>,
    ) -> Result<Self> {
        let (w, h) = (left.width, left.height);
        if right.width != w
            || right.height != h
            || !mask_left.same_dims(w, h)
            || !mask_right.same_dims(w, h)
        {
            return Err(ImageIoError::DimensionMismatch(format!(
                "left {}x{}, right {}x{}, mask_left {}x{}, mask_right {}x{}",
                w,
                h,
                right.width,
                right.height,
                mask_left.width,
                mask_left.height,
                mask_right.width,
                mask_right.height
            )));
        }
        Ok(Self {
            left,
            right,
            mask_left,
            mask_right,
            label,
            sample_id: sample_id.into(),
        })
    }

    /// Pair with all-true masks.
    pub fn unmasked(left: GrayImage, right: GrayImage) -> Result<Self> {
        let mask = BinaryMask::filled(left.width, left.height, true)?;
        Self::new(left, right, mask.clone(), mask, Label::Unknown, "")
    }

    pub fn width(&self) -> usize {
        self.left.width
    }

    pub fn height(&self) -> usize {
        self.left.height
    }
}

// ---------------------------------------------------------------------------
// PGM / PNG

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

struct HeaderCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let c = self.data[self.pos];
            if c == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageIoError::CorruptFile(format!("missing PGM {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageIoError::CorruptFile(format!("bad PGM {what}")))
    }
}

/// Decodes a binary PGM (`P5`) byte buffer.
pub fn decode_pgm(data: &[u8]) -> Result<GrayImage> {
    if data.len() < 2 || &data[..2] != b"P5" {
        return Err(ImageIoError::UnsupportedFormat(
            "expected binary PGM magic `P5`".into(),
        ));
    }
    let mut cur = HeaderCursor { data, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(ImageIoError::DepthMismatch(format!(
            "PGM maxval {maxval}, only 255 is supported"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match data.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(ImageIoError::CorruptFile("truncated PGM header".into())),
    }
    let (width, height) = (width as usize, height as usize);
    let needed = width
        .checked_mul(height)
        .ok_or_else(|| ImageIoError::CorruptFile("PGM dimensions overflow".into()))?;
    let payload = &data[cur.pos..];
    if payload.len() < needed {
        return Err(ImageIoError::CorruptFile(format!(
            "PGM payload has {} bytes, expected {needed}",
            payload.len()
        )));
    }
    GrayImage::new(width, height, payload[..needed].to_vec())
}

/// Encodes an image as canonical binary PGM.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

fn decode_png(data: &[u8]) -> Result<GrayImage> {
    let mut decoder = png::Decoder::new(io::Cursor::new(data));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageIoError::CorruptFile(format!("PNG header: {e}")))?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale {
        return Err(ImageIoError::UnsupportedFormat(format!(
            "PNG color type {color:?}, expected grayscale"
        )));
    }
    if depth != png::BitDepth::Eight {
        return Err(ImageIoError::DepthMismatch(format!(
            "PNG bit depth {depth:?}, expected 8"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageIoError::CorruptFile("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageIoError::CorruptFile(format!("PNG payload: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let stride = info.line_size;
    let mut pixels = Vec::with_capacity(w * h);
    for row in buf.chunks(stride).take(h) {
        pixels.extend_from_slice(&row[..w]);
    }
    GrayImage::new(w, h, pixels)
}

/// Decodes PGM or PNG from memory, sniffing the format from its magic bytes.
pub fn decode_gray(data: &[u8]) -> Result<GrayImage> {
    if data.starts_with(&PNG_SIGNATURE) {
        decode_png(data)
    } else {
        decode_pgm(data)
    }
}

pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(io_err(path))?;
    decode_gray(&data)
}

pub fn save_gray(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, &encode_pgm(image))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    load_gray(path).map(|g| BinaryMask::from_gray(&g))
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    save_gray(&mask.to_gray(), path)
}

/// Writes a 16-bit big-endian PGM (maxval 65535).
pub fn save_gray16(width: usize, height: usize, values: &[u16], path: impl AsRef<Path>) -> Result<()> {
    if values.len() != width * height || width == 0 || height == 0 {
        return Err(ImageIoError::InvalidRaster(format!(
            "{} values for {width}x{height}",
            values.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for v in values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    write_bytes(path.as_ref(), &out)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub left: PathBuf,
    pub right: PathBuf,
    pub mask_left: PathBuf,
    pub mask_right: PathBuf,
    pub annulus: Option<AnnulusGeometry>,
    pub label: Label,
    pub tags: Vec<String>,
}

impl ManifestEntry {
    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    /// Loads the four rasters referenced by this entry.
    pub fn load_pair(&self) -> Result<ImagePair> {
        ImagePair::new(
            load_gray(&self.left)?,
            load_gray(&self.right)?,
            load_mask(&self.mask_left)?,
            load_mask(&self.mask_right)?,
            self.label,
            self.sample_id.clone(),
        )
    }
}

/// Ordered list of samples. Paths are resolved against the manifest directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn parse_opt_f64(field: &str, name: &str, line: usize) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| ImageIoError::MalformedRow {
            line,
            reason: format!("column `{name}` is not a finite number: `{field}`"),
        })
}

/// Parses manifest CSV text. Relative paths are joined onto `base_dir`.
/// Path existence is not checked here; see [`load_manifest`].
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => {
            return Err(ImageIoError::MalformedRow {
                line: 1,
                reason: e.to_string(),
            })
        }
        None => {
            return Err(ImageIoError::MalformedRow {
                line: 1,
                reason: "empty manifest".into(),
            })
        }
    };
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != MANIFEST_HEADER {
        return Err(ImageIoError::MalformedRow {
            line: 1,
            reason: format!("header must be `{}`", MANIFEST_HEADER.join(",")),
        });
    }

    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| ImageIoError::MalformedRow {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if rec.len() != MANIFEST_HEADER.len() {
            return Err(ImageIoError::MalformedRow {
                line,
                reason: format!("expected {} columns, got {}", MANIFEST_HEADER.len(), rec.len()),
            });
        }
        let col = |i: usize| rec[i].trim();
        let sample_id = col(0).to_string();
        if sample_id.is_empty() {
            return Err(ImageIoError::MalformedRow {
                line,
                reason: "empty sample_id".into(),
            });
        }
        let path = |i: usize| -> Result<PathBuf> {
            if col(i).is_empty() {
                return Err(ImageIoError::MalformedRow {
                    line,
                    reason: format!("empty `{}` path", MANIFEST_HEADER[i]),
                });
            }
            Ok(base_dir.join(col(i)))
        };
        let (left, right, mask_left, mask_right) = (path(1)?, path(2)?, path(3)?, path(4)?);

        let circle: Vec<Option<f64>> = (5..11)
            .map(|i| parse_opt_f64(col(i), MANIFEST_HEADER[i], line))
            .collect::<Result<_>>()?;
        let annulus = if circle.iter().all(Option::is_none) {
            None
        } else if circle.iter().all(Option::is_some) {
            let c: Vec<f64> = circle.into_iter().flatten().collect();
            let geom = AnnulusGeometry::new((c[0], c[1]), c[2], (c[3], c[4]), c[5]).map_err(
                |e| ImageIoError::MalformedRow {
                    line,
                    reason: e.to_string(),
                },
            )?;
            Some(geom)
        } else {
            return Err(ImageIoError::MalformedRow {
                line,
                reason: "circle columns must be all empty or all present".into(),
            });
        };
        let label = col(11)
            .parse::<Label>()
            .map_err(|reason| ImageIoError::MalformedRow { line, reason })?;
        let tags = col(12)
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(String::from)
            .collect();

        if !seen.insert(sample_id.clone()) {
            return Err(ImageIoError::DuplicateSampleId(sample_id));
        }
        entries.push(ManifestEntry {
            sample_id,
            left,
            right,
            mask_left,
            mask_right,
            annulus,
            label,
            tags,
        });
    }
    Ok(DatasetManifest { entries })
}

/// Loads a manifest and checks that every referenced file exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let manifest = parse_manifest(&text, base)?;
    for e in &manifest.entries {
        for p in [&e.left, &e.right, &e.mask_left, &e.mask_right] {
            if !p.is_file() {
                return Err(ImageIoError::MissingFile(p.clone()));
            }
        }
    }
    Ok(manifest)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

/// Serializes a manifest. Paths under `base_dir` are written relative to it.
pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let rel = |p: &Path| -> String {
        p.strip_prefix(base)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let io = |e: csv::Error| ImageIoError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e),
    };
    w.write_record(MANIFEST_HEADER).map_err(io)?;
    for e in &manifest.entries {
        let g = e.annulus;
        let record = [
            e.sample_id.clone(),
            rel(&e.left),
            rel(&e.right),
            rel(&e.mask_left),
            rel(&e.mask_right),
            fmt_opt(g.map(|g| g.pupil_center.0)),
            fmt_opt(g.map(|g| g.pupil_center.1)),
            fmt_opt(g.map(|g| g.pupil_radius)),
            fmt_opt(g.map(|g| g.iris_center.0)),
            fmt_opt(g.map(|g| g.iris_center.1)),
            fmt_opt(g.map(|g| g.iris_radius)),
            e.label.as_str().to_string(),
            e.tags.join(";"),
        ];
        w.write_record(&record).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| ImageIoError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e.to_string()),
    })?;
    write_bytes(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_tiny_pgm() {
        let data = b"P5\n2 2\n255\n\x00\x80\xff\x40";
        let img = decode_pgm(data).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0, 128, 255, 64]);
    }

    #[test]
    fn accepts_comment_after_magic() {
        let data = b"P5\n# made by hand\n2 1\n255\n\x01\x02";
        assert_eq!(decode_pgm(data).unwrap().pixels(), &[1, 2]);
    }

    #[test]
    fn rejects_16_bit_pgm() {
        let data = b"P5\n1 1\n65535\n\x00\x01";
        assert!(matches!(decode_pgm(data), Err(ImageIoError::DepthMismatch(_))));
    }

    #[test]
    fn rejects_truncated_payload() {
        let data = b"P5\n2 2\n255\n\x00\x01\x02";
        assert!(matches!(decode_pgm(data), Err(ImageIoError::CorruptFile(_))));
    }

    #[test]
    fn rejects_ascii_pgm() {
        let data = b"P2\n1 1\n255\n7\n";
        assert!(matches!(decode_gray(data), Err(ImageIoError::UnsupportedFormat(_))));
    }

    #[test]
    fn mask_threshold() {
        let img = GrayImage::new(4, 1, vec![0, 255, 127, 128]).unwrap();
        let m = BinaryMask::from_gray(&img);
        assert_eq!(m.bits(), &[false, true, false, true]);
        let zero = BinaryMask::from_gray(&GrayImage::filled(3, 2, 0).unwrap());
        assert_eq!(zero.count(), 0);
    }

    #[test]
    fn pair_rejects_mismatched_dims() {
        let a = GrayImage::filled(2, 2, 0).unwrap();
        let b = GrayImage::filled(3, 2, 0).unwrap();
        let m = BinaryMask::filled(2, 2, true).unwrap();
        let err = ImagePair::new(a, b, m.clone(), m, Label::Unknown, "x").unwrap_err();
        assert!(matches!(err, ImageIoError::DimensionMismatch(_)));
    }

    #[test]
    fn png_gray8_is_read_exactly() {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, 3, 2);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0, 1, 2, 253, 254, 255]).unwrap();
        }
        let img = decode_gray(&buf).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.pixels(), &[0, 1, 2, 253, 254, 255]);
    }

    #[test]
    fn png_rgb_is_unsupported() {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, 1, 1);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[1, 2, 3]).unwrap();
        }
        assert!(matches!(decode_gray(&buf), Err(ImageIoError::UnsupportedFormat(_))));
    }

    #[test]
    fn png_16_bit_is_depth_mismatch() {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, 1, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[1, 2]).unwrap();
        }
        assert!(matches!(decode_gray(&buf), Err(ImageIoError::DepthMismatch(_))));
    }

    proptest! {
        #[test]
        fn pgm_round_trip(w in 1usize..24, h in 1usize..24, seed in any::<u64>()) {
            let pixels: Vec<u8> = (0..w * h)
                .map(|i| (seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407)) >> 56) as u8)
                .collect();
            let img = GrayImage::new(w, h, pixels).unwrap();
            let bytes = encode_pgm(&img);
            let back = decode_pgm(&bytes).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(encode_pgm(&back), bytes);
        }

        #[test]
        fn mask_round_trip(w in 1usize..16, h in 1usize..16, bits in proptest::collection::vec(any::<bool>(), 256)) {
            let m = BinaryMask::new(w, h, bits[..w * h].to_vec()).unwrap();
            let back = BinaryMask::from_gray(&decode_pgm(&encode_pgm(&m.to_gray())).unwrap());
            prop_assert_eq!(back, m);
        }
    }
}
