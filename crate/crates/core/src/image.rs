//! Grayscale rasters with physical pixel size, and binary PGM (P5) I/O.
//!
//! Samples are stored as `f64` in `[0, 1]` regardless of the source bit depth.
//! The pixel size travels inside the file as a header comment:
//!
//! ```text
//! P5
//! # pixel_size_nm=0.8
//! 2048 2048
//! 255
//! <binary samples>
//! ```
//!
//! 16-bit samples are big-endian. Quantization on save uses round-half-to-even.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIXEL_SIZE_KEY: &str = "pixel_size_nm=";

pub const MIN_DIMENSION: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::UnsupportedFormat(format!("bit depth {other}"))),
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }
}

/// Row-major grayscale raster. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixel_size: f64,
    samples: Vec<f64>,
    bit_depth_source: Option<BitDepth>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixel_size: f64, samples: Vec<f64>) -> Result<Self> {
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} is smaller than {MIN_DIMENSION}x{MIN_DIMENSION}"
            )));
        }
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(Error::InvalidImage(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        if samples.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height,
                samples.len()
            )));
        }
        if let Some(i) = samples
            .iter()
            .position(|v| !(v.is_finite() && (0.0..=1.0).contains(v)))
        {
            return Err(Error::InvalidImage(format!(
                "sample {} at index {i} outside [0, 1]",
                samples[i]
            )));
        }
        Ok(Self {
            width,
            height,
            pixel_size,
            samples,
            bit_depth_source: None,
        })
    }

    /// Like [`GrayImage::new`] but clamps every sample into `[0, 1]` first.
    /// Non-finite samples are still rejected.
    pub fn from_clamped(
        width: usize,
        height: usize,
        pixel_size: f64,
        mut samples: Vec<f64>,
    ) -> Result<Self> {
        for v in samples.iter_mut() {
            if v.is_finite() {
                *v = v.clamp(0.0, 1.0);
            }
        }
        Self::new(width, height, pixel_size, samples)
    }

    pub fn constant(width: usize, height: usize, pixel_size: f64, value: f64) -> Result<Self> {
        Self::new(width, height, pixel_size, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bit_depth_source(&self) -> Option<BitDepth> {
        self.bit_depth_source
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.width)
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Mean of every column, top to bottom.
    pub fn column_means(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.width];
        for row in self.rows() {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.height as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn same_geometry(&self, other: &GrayImage) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.pixel_size == other.pixel_size
    }

    /// Replace the samples while keeping geometry and provenance.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(self.width, self.height, self.pixel_size, samples)?;
        out.bit_depth_source = self.bit_depth_source;
        Ok(out)
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut samples = Vec::with_capacity(self.samples.len());
        for row in self.rows() {
            samples.extend(row.iter().rev());
        }
        Self {
            samples,
            ..self.clone()
        }
    }

    pub fn flip_vertical(&self) -> Self {
        let mut samples = Vec::with_capacity(self.samples.len());
        for row in self.samples.rchunks_exact(self.width) {
            samples.extend_from_slice(row);
        }
        Self {
            samples,
            ..self.clone()
        }
    }

    /// Rows `[start, end)` as a new image.
    pub fn crop_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.height {
            return Err(Error::param(format!(
                "row range {start}..{end} invalid for height {}",
                self.height
            )));
        }
        let mut out = Self::new(
            self.width,
            end - start,
            self.pixel_size,
            self.samples[start * self.width..end * self.width].to_vec(),
        )?;
        out.bit_depth_source = self.bit_depth_source;
        Ok(out)
    }
}

/// Integer level for `value` at `depth`, rounding half to even.
pub fn quantize(value: f64, depth: BitDepth) -> u32 {
    let max = depth.max_value() as f64;
    (value.clamp(0.0, 1.0) * max).round_ties_even() as u32
}

/// Load a binary PGM. `pixel_size_override` wins over the header comment.
pub fn load_image(path: &Path, pixel_size_override: Option<f64>) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, pixel_size_override)
}

pub fn decode_pgm(bytes: &[u8], pixel_size_override: Option<f64>) -> Result<GrayImage> {
    let mut cursor = HeaderCursor::new(bytes);
    let magic = cursor
        .token()?
        .ok_or_else(|| Error::MalformedHeader("empty file".into()))?;
    if magic != b"P5" {
        return Err(Error::UnsupportedFormat(format!(
            "magic {:?}, only binary PGM (P5) is supported",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(Error::MalformedHeader("missing whitespace after maxval".into())),
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::UnsupportedFormat(format!("maxval {maxval}")));
    }
    let depth = if maxval < 256 {
        BitDepth::Eight
    } else {
        BitDepth::Sixteen
    };
    let pixel_size = match pixel_size_override.or(cursor.pixel_size) {
        Some(p) => p,
        None => return Err(Error::MissingPixelSize),
    };

    let n = width * height;
    let raster = &bytes[cursor.pos..];
    let bytes_per_sample = if depth == BitDepth::Eight { 1 } else { 2 };
    if raster.len() < n * bytes_per_sample {
        return Err(Error::MalformedHeader(format!(
            "raster truncated: {} bytes for {n} samples",
            raster.len()
        )));
    }
    let scale = maxval as f64;
    let samples: Vec<f64> = match depth {
        BitDepth::Eight => raster[..n]
            .iter()
            .map(|&b| (b as f64 / scale).min(1.0))
            .collect(),
        BitDepth::Sixteen => raster[..2 * n]
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / scale).min(1.0))
            .collect(),
    };
    let mut image = GrayImage::new(width, height, pixel_size, samples)?;
    image.bit_depth_source = Some(depth);
    Ok(image)
}

pub fn encode_pgm(image: &GrayImage, depth: BitDepth) -> Vec<u8> {
    let mut out = Vec::with_capacity(image.samples.len() * 2 + 64);
    // Display for f64 prints the shortest string that round-trips
    write!(
        out,
        "P5\n# {PIXEL_SIZE_KEY}{}\n{} {}\n{}\n",
        image.pixel_size,
        image.width,
        image.height,
        depth.max_value()
    )
    .expect("writing to a Vec cannot fail");
    match depth {
        BitDepth::Eight => out.extend(image.samples.iter().map(|&v| quantize(v, depth) as u8)),
        BitDepth::Sixteen => {
            for &v in &image.samples {
                out.extend_from_slice(&(quantize(v, depth) as u16).to_be_bytes());
            }
        }
    }
    out
}

pub fn save_image(image: &GrayImage, path: &Path, depth: BitDepth) -> Result<()> {
    fs::write(path, encode_pgm(image, depth)).map_err(|e| Error::io(path, e))
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    pixel_size: Option<f64>,
}

impl<'a> HeaderCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self {
            bytes,
            pos: 0,
            pixel_size: None,
        }
    }

    fn skip_space_and_comments(&mut self) -> Result<()> {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                let start = self.pos + 1;
                let end = self.bytes[start..]
                    .iter()
                    .position(|&c| c == b'\n')
                    .map_or(self.bytes.len(), |i| start + i);
                let comment = String::from_utf8_lossy(&self.bytes[start..end]);
                if let Some(value) = comment.trim().strip_prefix(PIXEL_SIZE_KEY) {
                    let parsed: f64 = value.trim().parse().map_err(|_| {
                        Error::MalformedHeader(format!("bad pixel size comment {value:?}"))
                    })?;
                    self.pixel_size = Some(parsed);
                }
                self.pos = end;
            } else {
                break;
            }
        }
        Ok(())
    }

    fn token(&mut self) -> Result<Option<&'a [u8]>> {
        self.skip_space_and_comments()?;
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        Ok((self.pos > start).then(|| &self.bytes[start..self.pos]))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let tok = self
            .token()?
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::MalformedHeader(format!("bad {what} {:?}", String::from_utf8_lossy(tok)))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm_bytes(header: &str, raster: &[u8]) -> Vec<u8> {
        let mut v = header.as_bytes().to_vec();
        v.extend_from_slice(raster);
        v
    }

    #[test]
    fn full_scale_8bit() {
        let bytes = pgm_bytes("P5\n# pixel_size_nm=0.8\n8 8\n255\n", &[255; 64]);
        let img = decode_pgm(&bytes, None).unwrap();
        assert!(img.samples().iter().all(|&v| v == 1.0));
        assert_eq!(img.pixel_size(), 0.8);
        assert_eq!(img.bit_depth_source(), Some(BitDepth::Eight));
    }

    #[test]
    fn zero_16bit() {
        let bytes = pgm_bytes("P5\n# pixel_size_nm=1.5\n8 9\n65535\n", &[0; 144]);
        let img = decode_pgm(&bytes, None).unwrap();
        assert_eq!(img.height(), 9);
        assert!(img.samples().iter().all(|&v| v == 0.0));
        assert_eq!(img.bit_depth_source(), Some(BitDepth::Sixteen));
    }

    #[test]
    fn reference_geometry() {
        let bytes = pgm_bytes(
            "P5\n# pixel_size_nm=0.8\n2048 2048\n255\n",
            &vec![17u8; 2048 * 2048],
        );
        let img = decode_pgm(&bytes, None).unwrap();
        assert_eq!((img.width(), img.height(), img.pixel_size()), (2048, 2048, 0.8));
    }

    #[test]
    fn missing_pixel_size_is_an_error_unless_overridden() {
        let bytes = pgm_bytes("P5\n8 8\n255\n", &[3; 64]);
        assert!(matches!(decode_pgm(&bytes, None), Err(Error::MissingPixelSize)));
        let img = decode_pgm(&bytes, Some(2.0)).unwrap();
        assert_eq!(img.pixel_size(), 2.0);
    }

    #[test]
    fn override_wins_over_header() {
        let bytes = pgm_bytes("P5\n# pixel_size_nm=0.8\n8 8\n255\n", &[3; 64]);
        assert_eq!(decode_pgm(&bytes, Some(1.25)).unwrap().pixel_size(), 1.25);
    }

    #[test]
    fn rejects_other_formats_and_bad_headers() {
        let ascii = b"P2\n8 8\n255\n0 0 0".to_vec();
        assert!(matches!(
            decode_pgm(&ascii, Some(1.0)),
            Err(Error::UnsupportedFormat(_))
        ));
        let short = pgm_bytes("P5\n8 8\n255\n", &[0; 10]);
        assert!(matches!(
            decode_pgm(&short, Some(1.0)),
            Err(Error::MalformedHeader(_))
        ));
        let garbage = b"P5\nx 8\n255\n".to_vec();
        assert!(matches!(
            decode_pgm(&garbage, Some(1.0)),
            Err(Error::MalformedHeader(_))
        ));
        let tiny = pgm_bytes("P5\n4 4\n255\n", &[0; 16]);
        assert!(matches!(
            decode_pgm(&tiny, Some(1.0)),
            Err(Error::InvalidImage(_))
        ));
    }

    #[test]
    fn invariants_enforced() {
        assert!(GrayImage::new(8, 8, 0.0, vec![0.0; 64]).is_err());
        assert!(GrayImage::new(8, 8, 1.0, vec![1.5; 64]).is_err());
        assert!(GrayImage::new(8, 8, 1.0, vec![f64::NAN; 64]).is_err());
        assert!(GrayImage::new(8, 8, 1.0, vec![0.0; 63]).is_err());
    }

    #[test]
    fn half_quantizes_to_even_neighbour() {
        // 0.5 * 255 = 127.5, ties to even -> 128
        assert_eq!(quantize(0.5, BitDepth::Eight), 128);
        // oracle: every 8-bit level reproduces itself, and every midpoint
        // between levels rounds to the even one
        for level in 0..=255u32 {
            assert_eq!(quantize(level as f64 / 255.0, BitDepth::Eight), level);
            if level < 255 {
                let mid = (level as f64 + 0.5) / 255.0;
                let q = quantize(mid, BitDepth::Eight);
                assert!(q == level || q == level + 1);
                assert_eq!(q % 2, 0, "midpoint {level}.5 went to odd {q}");
            }
        }
        let img = GrayImage::constant(8, 8, 0.8, 0.5).unwrap();
        let back = decode_pgm(&encode_pgm(&img, BitDepth::Eight), None).unwrap();
        assert!(back.samples().iter().all(|&v| (v - 0.5).abs() <= 1.0 / 255.0));
    }

    #[test]
    fn endpoints_preserved() {
        for depth in [BitDepth::Eight, BitDepth::Sixteen] {
            let img = GrayImage::constant(8, 8, 0.8, 1.0).unwrap();
            let bytes = encode_pgm(&img, depth);
            let back = decode_pgm(&bytes, None).unwrap();
            assert!(back.samples().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn file_roundtrip_and_purity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let samples: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let img = GrayImage::new(10, 10, 0.3, samples).unwrap();
        save_image(&img, &path, BitDepth::Sixteen).unwrap();
        let a = load_image(&path, None).unwrap();
        let b = load_image(&path, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pixel_size(), 0.3);
        for (x, y) in a.samples().iter().zip(img.samples()) {
            assert!((x - y).abs() <= 1.0 / 65535.0);
        }
    }

    #[test]
    fn flips_are_involutions() {
        let samples: Vec<f64> = (0..80).map(|i| (i % 7) as f64 / 7.0).collect();
        let img = GrayImage::new(10, 8, 1.0, samples).unwrap();
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_vertical().flip_vertical(), img);
        assert_eq!(img.flip_horizontal().get(0, 3), img.get(9, 3));
        assert_eq!(img.flip_vertical().get(4, 0), img.get(4, 7));
    }

    mod prop {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn roundtrip_within_one_step(
                w in 8usize..20, h in 8usize..20, seed in any::<u64>(), sixteen in any::<bool>()
            ) {
                use rand::{RngExt, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let samples: Vec<f64> = (0..w * h).map(|_| rng.random::<f64>()).collect();
                let img = GrayImage::new(w, h, 0.8, samples).unwrap();
                let depth = if sixteen { BitDepth::Sixteen } else { BitDepth::Eight };
                let back = decode_pgm(&encode_pgm(&img, depth), None).unwrap();
                let step = 1.0 / depth.max_value() as f64;
                for (a, b) in back.samples().iter().zip(img.samples()) {
                    prop_assert!((a - b).abs() <= step);
                }
            }
        }
    }
}
