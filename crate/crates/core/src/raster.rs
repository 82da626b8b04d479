//! Frame decoding and the pixel-level primitives shared by every feature.
//!
//! Binary PGM (`P5`) and PPM (`P6`) with maxval 255 are always supported.
//! PNG and JPEG go through the `image` crate when the `codecs` feature is on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Side length of the canonical thumbnail used for keyframe comparison and
/// range-finder indexing. 30×30 = 900 pixels.
pub const THUMB_SIDE: usize = 30;
pub const THUMB_PIXELS: usize = THUMB_SIDE * THUMB_SIDE;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RasterError {
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("unsupported image format")]
    UnsupportedFormat,
    #[error("raster dimensions must be at least 1x1 (got {0}x{1})")]
    EmptyRaster(usize, usize),
    #[error("pixel buffer holds {got} pixels, expected {expected}")]
    PixelCount { expected: usize, got: usize },
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbRaster {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, RasterError> {
        check_dims(width, height, pixels.len())?;
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, RasterError> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, RasterError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }
}

/// Row-major 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RasterError> {
        check_dims(width, height, pixels.len())?;
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, RasterError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
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

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<(), RasterError> {
    if width == 0 || height == 0 {
        return Err(RasterError::EmptyRaster(width, height));
    }
    let expected = width
        .checked_mul(height)
        .ok_or(RasterError::EmptyRaster(width, height))?;
    if expected != len {
        return Err(RasterError::PixelCount { expected, got: len });
    }
    Ok(())
}

/// 256-bin gray-level histogram.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrayHistogram {
    #[serde(with = "bins_serde")]
    bins: [u32; 256],
}

impl GrayHistogram {
    pub fn from_bins(bins: [u32; 256]) -> Self {
        Self { bins }
    }

    pub fn bins(&self) -> &[u32; 256] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|&b| b as u64).sum()
    }

    /// Number of pixels whose gray level lies in `lo..=hi`.
    pub fn count_in(&self, lo: u8, hi: u8) -> u64 {
        self.bins[lo as usize..=hi as usize].iter().map(|&b| b as u64).sum()
    }
}

mod bins_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bins: &[u32; 256], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(bins.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u32; 256], D::Error> {
        let v = Vec::<u32>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<u32>| serde::de::Error::invalid_length(v.len(), &"256 bins"))
    }
}

/// Decode an encoded frame. PGM input is replicated into r=g=b.
pub fn decode_frame(bytes: &[u8]) -> Result<RgbRaster, RasterError> {
    match bytes.get(..2) {
        Some(b"P6") => decode_pnm(bytes, 3),
        Some(b"P5") => decode_pnm(bytes, 1),
        _ => decode_other(bytes),
    }
}

#[cfg(feature = "codecs")]
fn decode_other(bytes: &[u8]) -> Result<RgbRaster, RasterError> {
    let format = image::guess_format(bytes).map_err(|_| RasterError::UnsupportedFormat)?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
        return Err(RasterError::UnsupportedFormat);
    }
    // Palette images are expanded to RGB by the decoder.
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| RasterError::MalformedImage(e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let pixels = img.pixels().map(|p| p.0).collect();
    RgbRaster::new(w as usize, h as usize, pixels)
}

#[cfg(not(feature = "codecs"))]
fn decode_other(_bytes: &[u8]) -> Result<RgbRaster, RasterError> {
    Err(RasterError::UnsupportedFormat)
}

struct PnmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PnmCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, RasterError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(RasterError::MalformedImage(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::MalformedImage(format!("bad {what}")))
    }
}

fn decode_pnm(bytes: &[u8], channels: usize) -> Result<RgbRaster, RasterError> {
    let mut cur = PnmCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(RasterError::UnsupportedFormat);
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(RasterError::MalformedImage("missing payload separator".into())),
    }
    if width == 0 || height == 0 {
        return Err(RasterError::MalformedImage(format!("zero dimension {width}x{height}")));
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| RasterError::MalformedImage("dimensions overflow".into()))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < need {
        return Err(RasterError::MalformedImage(format!(
            "truncated payload: {} of {need} bytes",
            payload.len()
        )));
    }
    let payload = &payload[..need];
    let pixels = if channels == 3 {
        payload.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    } else {
        payload.iter().map(|&v| [v, v, v]).collect()
    };
    RgbRaster::new(width, height, pixels)
}

pub fn encode_ppm(img: &RgbRaster) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.pixels.len() * 3);
    for p in &img.pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn encode_pgm(img: &GrayRaster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// Luminance of one pixel: round-half-up of 0.299·r + 0.587·g + 0.114·b,
/// evaluated in exact integer thousandths.
#[inline]
pub fn luminance(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(u32::from);
    let milli = 299 * r + 587 * g + 114 * b;
    ((milli + 500) / 1000).min(255) as u8
}

pub fn to_gray(img: &RgbRaster) -> GrayRaster {
    GrayRaster {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| luminance(p)).collect(),
    }
}

/// Nearest-neighbour resample: output (x, y) samples input (⌊x·W/w⌋, ⌊y·H/h⌋).
///
/// Panics if `w` or `h` is zero.
pub fn rescale(img: &GrayRaster, w: usize, h: usize) -> GrayRaster {
    assert!(w >= 1 && h >= 1, "rescale target must be at least 1x1");
    if (w, h) == (img.width, img.height) {
        return img.clone();
    }
    let xs: Vec<usize> = (0..w).map(|x| x * img.width / w).collect();
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &img.pixels[(y * img.height / h) * img.width..][..img.width];
        pixels.extend(xs.iter().map(|&sx| row[sx]));
    }
    GrayRaster { width: w, height: h, pixels }
}

/// The canonical 30×30 thumbnail of a frame.
pub fn thumbnail(img: &RgbRaster) -> GrayRaster {
    rescale(&to_gray(img), THUMB_SIDE, THUMB_SIDE)
}

pub fn gray_histogram(img: &GrayRaster) -> GrayHistogram {
    let mut bins = [0u32; 256];
    for &v in &img.pixels {
        bins[v as usize] += 1;
    }
    GrayHistogram { bins }
}
