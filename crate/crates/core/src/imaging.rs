//! Grayscale rasters, binary PGM I/O and the geometric primitives used by
//! every pipeline stage.
//!
//! Intensities are stored as `f32` in `[0, 1]`, row-major. Interpolation
//! arithmetic runs in `f64`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("truncated PGM payload: expected {expected} bytes, got {actual}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("unsupported PGM maxval {0} (expected 255 or 65535)")]
    UnsupportedMaxval(u32),
    #[error("rectangle {rect:?} exceeds {width}x{height} image")]
    OutOfBounds { rect: Rect, width: usize, height: usize },
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("pixel buffer length {actual} does not match {width}x{height}")]
    LengthMismatch { width: usize, height: usize, actual: usize },
    #[error("intensity {value} at index {index} is outside [0, 1]")]
    IntensityOutOfRange { index: usize, value: f32 },
}

/// Axis-aligned pixel rectangle; `(x0, y0)` is the inclusive top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    pub const fn x1(&self) -> usize {
        self.x0 + self.w
    }

    pub const fn y1(&self) -> usize {
        self.y0 + self.h
    }

    pub fn center_x(&self) -> f64 {
        self.x0 as f64 + self.w as f64 / 2.0
    }

    pub fn center_y(&self) -> f64 {
        self.y0 as f64 + self.h as f64 / 2.0
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// True when the rectangle is non-empty and lies entirely inside a
    /// `width x height` raster.
    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.x1() <= width && self.y1() <= height
    }

    /// Smallest rectangle covering both.
    pub fn union(&self, other: &Rect) -> Rect {
        let x0 = self.x0.min(other.x0);
        let y0 = self.y0.min(other.y0);
        let x1 = self.x1().max(other.x1());
        let y1 = self.y1().max(other.y1());
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidDimensions { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImageError::LengthMismatch { width, height, actual: pixels.len() });
        }
        if let Some((index, &value)) =
            pixels.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::IntensityOutOfRange { index, value });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
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

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }
}

fn skip_ws_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn header_field(bytes: &[u8], pos: &mut usize, name: &str) -> Result<u32, ImageError> {
    *pos = skip_ws_and_comments(bytes, *pos);
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageError::MalformedHeader(format!("missing or non-numeric {name}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse::<u32>().ok())
        .ok_or_else(|| ImageError::MalformedHeader(format!("{name} out of range")))
}

/// Decode a binary (P5) PGM with maxval 255 or 65535.
pub fn load_pgm(bytes: &[u8]) -> Result<ImageGray, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(ImageError::MalformedHeader("bad magic, expected P5".into()));
    }
    let mut pos = 2;
    if pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
        return Err(ImageError::MalformedHeader("bad magic, expected P5".into()));
    }
    let width = header_field(bytes, &mut pos, "width")? as usize;
    let height = header_field(bytes, &mut pos, "height")? as usize;
    let maxval = header_field(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::MalformedHeader("missing separator after maxval".into())),
    }
    let sample_bytes = match maxval {
        255 => 1,
        65535 => 2,
        other => return Err(ImageError::UnsupportedMaxval(other)),
    };
    let expected = width * height * sample_bytes;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(ImageError::TruncatedData { expected, actual: payload.len() });
    }
    let scale = maxval as f32;
    let pixels = if sample_bytes == 1 {
        payload[..expected].iter().map(|&b| b as f32 / scale).collect()
    } else {
        payload[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / scale)
            .collect()
    };
    ImageGray::new(width, height, pixels)
}

/// Encode as an 8-bit binary PGM. Intensities are rounded to the nearest level.
pub fn save_pgm(img: &ImageGray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&p| (p * 255.0).round() as u8));
    out
}

/// Encode as a 16-bit (big-endian) binary PGM.
pub fn save_pgm16(img: &ImageGray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
    for &p in &img.pixels {
        out.extend(((p * 65535.0).round() as u16).to_be_bytes());
    }
    out
}

pub fn crop(img: &ImageGray, r: Rect) -> Result<ImageGray, ImageError> {
    if !r.fits_within(img.width, img.height) {
        return Err(ImageError::OutOfBounds { rect: r, width: img.width, height: img.height });
    }
    let mut pixels = Vec::with_capacity(r.area());
    for y in r.y0..r.y1() {
        let row = y * img.width;
        pixels.extend_from_slice(&img.pixels[row + r.x0..row + r.x1()]);
    }
    Ok(ImageGray { width: r.w, height: r.h, pixels })
}

/// Source sampling positions for one axis: `(lower index, upper index, weight of upper)`.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let max = (src - 1) as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Bilinear resize with pixel-center alignment:
/// `src = (dst + 0.5) * (src_dim / dst_dim) - 0.5`, clamped to `[0, src_dim - 1]`.
pub fn resize_bilinear(img: &ImageGray, w: usize, h: usize) -> Result<ImageGray, ImageError> {
    if w == 0 || h == 0 {
        return Err(ImageError::InvalidDimensions { width: w, height: h });
    }
    let xs = axis_taps(img.width, w);
    let ys = axis_taps(img.height, h);
    let mut pixels = Vec::with_capacity(w * h);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let p00 = img.get(x0, y0);
            let p10 = img.get(x1, y0);
            let p01 = img.get(x0, y1);
            let p11 = img.get(x1, y1);
            let top = p00 as f64 * (1.0 - tx) + p10 as f64 * tx;
            let bottom = p01 as f64 * (1.0 - tx) + p11 as f64 * tx;
            let v = top * (1.0 - ty) + bottom * ty;
            // keep the result a convex combination after rounding
            let lo = p00.min(p10).min(p01).min(p11);
            let hi = p00.max(p10).max(p01).max(p11);
            pixels.push((v as f32).clamp(lo, hi));
        }
    }
    Ok(ImageGray { width: w, height: h, pixels })
}

/// Min-max stretch to `[0, 1]`. A constant image maps to all zeros.
pub fn normalize_minmax(img: &ImageGray) -> ImageGray {
    let (min, max) = img
        .pixels
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    let range = max as f64 - min as f64;
    let pixels = if range <= 0.0 {
        vec![0.0; img.pixels.len()]
    } else {
        img.pixels
            .iter()
            .map(|&p| (((p as f64 - min as f64) / range) as f32).clamp(0.0, 1.0))
            .collect()
    };
    ImageGray { width: img.width, height: img.height, pixels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pgm(header: &str, payload: &[u8]) -> Vec<u8> {
        let mut v = header.as_bytes().to_vec();
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn load_8bit() {
        let img = load_pgm(&pgm("P5 2 2 255\n", &[0, 255, 128, 64])).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn load_16bit_big_endian() {
        let img = load_pgm(&pgm("P5 1 1 65535\n", &[0xFF, 0xFF])).unwrap();
        assert_eq!(img.pixels(), &[1.0]);
        let img = load_pgm(&pgm("P5 2 1 65535\n", &[0x01, 0x00, 0x00, 0x01])).unwrap();
        assert_eq!(img.pixels(), &[256.0 / 65535.0, 1.0 / 65535.0]);
    }

    #[test]
    fn load_skips_comments() {
        let img = load_pgm(&pgm("P5\n# made by hand\n2 # w\n1\n# max\n255\n", &[10, 20])).unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.pixels()[1], 20.0 / 255.0);
    }

    #[test]
    fn load_errors() {
        assert_eq!(
            load_pgm(&pgm("P5 2 2 255\n", &[1, 2, 3])),
            Err(ImageError::TruncatedData { expected: 4, actual: 3 })
        );
        assert!(matches!(load_pgm(b"P2 1 1 255\n\x00"), Err(ImageError::MalformedHeader(_))));
        assert!(matches!(load_pgm(b"P5 a 1 255\n\x00"), Err(ImageError::MalformedHeader(_))));
        assert!(matches!(load_pgm(b""), Err(ImageError::MalformedHeader(_))));
        assert_eq!(load_pgm(b"P5 1 1 1023\n\x00\x00"), Err(ImageError::UnsupportedMaxval(1023)));
    }

    #[test]
    fn crop_cases() {
        let img = ImageGray::from_fn(3, 3, |x, y| if (x, y) == (1, 1) { 0.5 } else { 0.0 }).unwrap();
        assert_eq!(crop(&img, img.full_rect()).unwrap(), img);
        assert_eq!(crop(&img, Rect::new(1, 1, 1, 1)).unwrap().pixels(), &[0.5]);
        assert!(matches!(crop(&img, Rect::new(2, 2, 2, 2)), Err(ImageError::OutOfBounds { .. })));
    }

    #[test]
    fn resize_cases() {
        let img = ImageGray::from_fn(5, 4, |x, y| (x * 4 + y) as f32 / 32.0).unwrap();
        let same = resize_bilinear(&img, 5, 4).unwrap();
        for (a, b) in same.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }

        let flat = ImageGray::filled(7, 3, 0.7).unwrap();
        let up = resize_bilinear(&flat, 13, 11).unwrap();
        assert!(up.pixels().iter().all(|&p| (p - 0.7).abs() < 1e-6));

        // dst x=0..3 map to src -0.25 (clamped to 0), 0.25, 0.75, 1.25 (clamped to 1)
        let ramp = ImageGray::new(2, 1, vec![0.0, 1.0]).unwrap();
        let out = resize_bilinear(&ramp, 4, 1).unwrap();
        let expected = [0.0, 0.25, 0.75, 1.0];
        for (a, b) in out.pixels().iter().zip(expected) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(resize_bilinear(&ramp, 0, 1).is_err());
    }

    #[test]
    fn normalize_cases() {
        let img = ImageGray::new(2, 1, vec![0.2, 0.6]).unwrap();
        let n = normalize_minmax(&img);
        assert!((n.pixels()[0] - 0.0).abs() < 1e-7 && (n.pixels()[1] - 1.0).abs() < 1e-7);

        let flat = ImageGray::filled(3, 3, 0.4).unwrap();
        assert!(normalize_minmax(&flat).pixels().iter().all(|&p| p == 0.0));

        let span = ImageGray::new(3, 1, vec![0.0, 0.3, 1.0]).unwrap();
        let n = normalize_minmax(&span);
        for (a, b) in n.pixels().iter().zip(span.pixels()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn arb_image() -> impl Strategy<Value = ImageGray> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(0.0f32..=1.0, w * h)
                .prop_map(move |px| ImageGray::new(w, h, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn resize_is_convex(img in arb_image(), w in 1usize..20, h in 1usize..20) {
            let out = resize_bilinear(&img, w, h).unwrap();
            let min = img.pixels().iter().cloned().fold(f32::INFINITY, f32::min) as f64;
            let max = img.pixels().iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            for &p in out.pixels() {
                prop_assert!(p as f64 >= min - 1e-9 && p as f64 <= max + 1e-9);
            }
            prop_assert_eq!(crop(&out, out.full_rect()).unwrap(), out);
        }

        #[test]
        fn pgm8_round_trip(w in 1usize..16, h in 1usize..16, seed in proptest::collection::vec(any::<u8>(), 256)) {
            let raw: Vec<u8> = (0..w * h).map(|i| seed[i % seed.len()]).collect();
            let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
            bytes.extend_from_slice(&raw);
            let img = load_pgm(&bytes).unwrap();
            prop_assert_eq!(save_pgm(&img), bytes);
        }
    }
}
