//! Grayscale fundus images: decoding, validation and re-encoding.
//!
//! Supported inputs are Netpbm PGM (plain `P2` and raw `P5`, any maxval up to
//! 65535) and 8/16-bit grayscale PNG. Colour inputs are rejected rather than
//! converted.

use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on decoded pixel count; guards allocations driven by headers.
pub const MAX_PIXELS: usize = 1 << 28;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("unrecognized image format")]
    UnknownFormat,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("sample value {value} exceeds maxval {max}")]
    SampleOutOfRange { value: u32, max: u16 },
    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(u8),
    #[error("not a grayscale image: {0}")]
    NotGrayscale(String),
    #[error("png: {0}")]
    Png(String),
    #[error("pixel ({x}, {y}) outside {width}x{height} image")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
}

/// Which eye an image was captured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Laterality {
    #[serde(rename = "OD")]
    Od,
    #[serde(rename = "OS")]
    Os,
    #[default]
    Unknown,
}

impl fmt::Display for Laterality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Laterality::Od => "OD",
            Laterality::Os => "OS",
            Laterality::Unknown => "Unknown",
        })
    }
}

impl FromStr for Laterality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "OD" => Ok(Laterality::Od),
            "OS" => Ok(Laterality::Os),
            "" | "UNKNOWN" => Ok(Laterality::Unknown),
            other => Err(format!("unknown laterality '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Plain (ASCII) PGM.
    PgmAscii,
    /// Raw (binary) PGM.
    PgmBinary,
    Png,
}

impl ImageFormat {
    /// Guesses the format from magic bytes.
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
        if bytes.starts_with(PNG_MAGIC) {
            Some(ImageFormat::Png)
        } else if bytes.starts_with(b"P2") {
            Some(ImageFormat::PgmAscii)
        } else if bytes.starts_with(b"P5") {
            Some(ImageFormat::PgmBinary)
        } else {
            None
        }
    }
}

/// An immutable grayscale raster with integer intensities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FafImage {
    width: usize,
    height: usize,
    max_value: u16,
    pixels: Vec<u16>,
    laterality: Laterality,
}

impl FafImage {
    pub fn new(
        width: usize,
        height: usize,
        max_value: u16,
        pixels: Vec<u16>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if max_value == 0 {
            return Err(ImageError::InvalidRaster("max_value must be positive".into()));
        }
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| ImageError::InvalidRaster("dimensions overflow".into()))?;
        if pixels.len() != expected {
            return Err(ImageError::InvalidRaster(format!(
                "expected {expected} pixels, got {}",
                pixels.len()
            )));
        }
        if let Some(&v) = pixels.iter().find(|&&v| v > max_value) {
            return Err(ImageError::SampleOutOfRange {
                value: v as u32,
                max: max_value,
            });
        }
        Ok(Self {
            width,
            height,
            max_value,
            pixels,
            laterality: Laterality::Unknown,
        })
    }

    /// A constant image, handy for tests and calibration.
    pub fn filled(width: usize, height: usize, max_value: u16, value: u16) -> Result<Self, ImageError> {
        Self::new(width, height, max_value, vec![value; width * height])
    }

    pub fn with_laterality(mut self, laterality: Laterality) -> Self {
        self.laterality = laterality;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn max_value(&self) -> u16 {
        self.max_value
    }

    pub fn laterality(&self) -> Laterality {
        self.laterality
    }

    /// Row-major intensities.
    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn pixel_at(&self, x: usize, y: usize) -> Result<u16, ImageError> {
        if x >= self.width || y >= self.height {
            return Err(ImageError::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.pixels[y * self.width + x])
    }

    /// Serializes as PGM, raw (`P5`) or plain (`P2`).
    pub fn to_pgm(&self, binary: bool) -> Vec<u8> {
        let mut out = format!(
            "{}\n{} {}\n{}\n",
            if binary { "P5" } else { "P2" },
            self.width,
            self.height,
            self.max_value
        )
        .into_bytes();
        if binary {
            if self.max_value < 256 {
                out.extend(self.pixels.iter().map(|&v| v as u8));
            } else {
                for &v in &self.pixels {
                    out.extend_from_slice(&v.to_be_bytes());
                }
            }
        } else {
            for row in self.pixels.chunks(self.width) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        out
    }

    /// Serializes as grayscale PNG. Only maxval 255 (8-bit) and 65535
    /// (16-bit) have a lossless PNG representation.
    pub fn to_png(&self) -> Result<Vec<u8>, ImageError> {
        let (depth, data) = match self.max_value {
            255 => (
                png::BitDepth::Eight,
                self.pixels.iter().map(|&v| v as u8).collect::<Vec<_>>(),
            ),
            65535 => (
                png::BitDepth::Sixteen,
                self.pixels.iter().flat_map(|v| v.to_be_bytes()).collect(),
            ),
            other => {
                return Err(ImageError::InvalidRaster(format!(
                    "maxval {other} has no lossless PNG encoding"
                )))
            }
        };
        encode_png(self.width, self.height, depth, &data)
    }

    /// 8-bit display rendering, rescaling intensities to 0..=255.
    pub fn render_png_8bit(&self) -> Result<Vec<u8>, ImageError> {
        let max = self.max_value as u32;
        let data: Vec<u8> = self
            .pixels
            .iter()
            .map(|&v| ((v as u32 * 255 + max / 2) / max) as u8)
            .collect();
        encode_png(self.width, self.height, png::BitDepth::Eight, &data)
    }
}

fn encode_png(
    width: usize,
    height: usize,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<Vec<u8>, ImageError> {
    let png_err = |e: png::EncodingError| ImageError::Png(e.to_string());
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(depth);
        let mut writer = encoder.write_header().map_err(png_err)?;
        writer.write_image_data(data).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(out)
}

/// Decodes an image. Without a hint the format is sniffed from magic bytes.
pub fn load_image(bytes: &[u8], hint: Option<ImageFormat>) -> Result<FafImage, ImageError> {
    let format = hint
        .or_else(|| ImageFormat::sniff(bytes))
        .ok_or(ImageError::UnknownFormat)?;
    match format {
        ImageFormat::PgmAscii | ImageFormat::PgmBinary => decode_pgm(bytes),
        ImageFormat::Png => decode_png(bytes),
    }
}

struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmCursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self) -> Option<Result<u64, ()>> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return if self.pos >= self.bytes.len() {
                None
            } else {
                Some(Err(()))
            };
        }
        let token = std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| ());
        Some(token.and_then(|t| t.parse::<u64>().map_err(|_| ())))
    }

    fn header_field(&mut self, name: &str) -> Result<u64, ImageError> {
        match self.next_uint() {
            Some(Ok(v)) => Ok(v),
            Some(Err(())) => Err(ImageError::MalformedHeader(format!("invalid {name}"))),
            None => Err(ImageError::MalformedHeader(format!("missing {name}"))),
        }
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<FafImage, ImageError> {
    let binary = match bytes.get(..2) {
        Some(b"P2") => false,
        Some(b"P5") => true,
        _ => return Err(ImageError::MalformedHeader("bad magic number".into())),
    };
    let mut cur = PgmCursor { bytes, pos: 2 };
    if !cur.bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(ImageError::MalformedHeader("bad magic number".into()));
    }
    let width = cur.header_field("width")?;
    let height = cur.header_field("height")?;
    let maxval = cur.header_field("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader("zero dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::MalformedHeader(format!(
            "maxval {maxval} outside 1..=65535"
        )));
    }
    let max = maxval as u16;
    let count = width
        .checked_mul(height)
        .filter(|&n| n <= MAX_PIXELS as u64)
        .ok_or_else(|| ImageError::MalformedHeader("image too large".into()))?
        as usize;

    let pixels = if binary {
        // exactly one whitespace byte separates maxval from the raster
        if !cur.bytes.get(cur.pos).is_some_and(|b| b.is_ascii_whitespace()) {
            return Err(ImageError::MalformedHeader(
                "missing whitespace after maxval".into(),
            ));
        }
        let raster = &bytes[cur.pos + 1..];
        let sample_bytes = if max < 256 { 1 } else { 2 };
        let available = raster.len() / sample_bytes;
        if available < count {
            return Err(ImageError::Truncated {
                expected: count,
                found: available,
            });
        }
        let pixels: Vec<u16> = if sample_bytes == 1 {
            raster[..count].iter().map(|&b| b as u16).collect()
        } else {
            raster[..2 * count]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        };
        pixels
    } else {
        let mut pixels = Vec::with_capacity(count.min(bytes.len()));
        while pixels.len() < count {
            match cur.next_uint() {
                Some(Ok(v)) if v <= maxval => pixels.push(v as u16),
                Some(Ok(v)) => {
                    return Err(ImageError::SampleOutOfRange {
                        value: v.min(u32::MAX as u64) as u32,
                        max,
                    })
                }
                Some(Err(())) => {
                    return Err(ImageError::MalformedHeader(format!(
                        "invalid sample at index {}",
                        pixels.len()
                    )))
                }
                None => {
                    return Err(ImageError::Truncated {
                        expected: count,
                        found: pixels.len(),
                    })
                }
            }
        }
        pixels
    };
    FafImage::new(width as usize, height as usize, max, pixels)
}

fn decode_png(bytes: &[u8]) -> Result<FafImage, ImageError> {
    let png_err = |e: png::DecodingError| ImageError::Png(e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let info = reader.info();
    let (width, height) = (info.width as usize, info.height as usize);
    match info.color_type {
        png::ColorType::Grayscale => {}
        other => return Err(ImageError::NotGrayscale(format!("{other:?}"))),
    }
    let sixteen = match info.bit_depth {
        png::BitDepth::Eight => false,
        png::BitDepth::Sixteen => true,
        other => return Err(ImageError::UnsupportedBitDepth(other as u8)),
    };
    if width.saturating_mul(height) > MAX_PIXELS {
        return Err(ImageError::MalformedHeader("image too large".into()));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::Png("output buffer size overflow".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let line = frame.line_size;
    let mut pixels = Vec::with_capacity(width * height);
    for row in buf.chunks(line).take(height) {
        if sixteen {
            pixels.extend(
                row[..2 * width]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]])),
            );
        } else {
            pixels.extend(row[..width].iter().map(|&b| b as u16));
        }
    }
    FafImage::new(width, height, if sixteen { 65535 } else { 255 }, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent reference reader for raw 8-bit PGM with a canonical
    /// single-line header.
    fn reference_p5_8bit(bytes: &[u8]) -> (usize, usize, Vec<u16>) {
        let text_end = bytes
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == b'\n')
            .map(|(i, _)| i)
            .nth(2)
            .unwrap();
        let header = std::str::from_utf8(&bytes[..text_end]).unwrap();
        let fields: Vec<usize> = header
            .split_whitespace()
            .skip(1)
            .map(|t| t.parse().unwrap())
            .collect();
        let raster = &bytes[text_end + 1..];
        (fields[0], fields[1], raster.iter().map(|&b| b as u16).collect())
    }

    #[test]
    fn minimal_plain_pgm() {
        let img = load_image(b"P2 1 1 255 \n 0", None).unwrap();
        assert_eq!((img.width(), img.height(), img.max_value()), (1, 1, 255));
        assert_eq!(img.pixels(), &[0]);
        assert_eq!(img.laterality(), Laterality::Unknown);
    }

    #[test]
    fn raw_pgm_matches_reference_reader() {
        let bytes = b"P5\n2 2\n255\n\x0a\x14\x1e\x28".to_vec();
        let img = load_image(&bytes, None).unwrap();
        assert_eq!(img.pixels(), &[10, 20, 30, 40]);
        let (w, h, px) = reference_p5_8bit(&bytes);
        assert_eq!((w, h), (img.width(), img.height()));
        assert_eq!(px, img.pixels());
    }

    #[test]
    fn truncated_plain_pgm() {
        let err = load_image(b"P2\n2 2\n255\n1 2 3", None).unwrap_err();
        assert_eq!(
            err,
            ImageError::Truncated {
                expected: 4,
                found: 3
            }
        );
    }

    #[test]
    fn truncated_raw_pgm() {
        let err = load_image(b"P5 2 2 255\n\x01\x02", None).unwrap_err();
        assert!(matches!(err, ImageError::Truncated { expected: 4, found: 2 }));
    }

    #[test]
    fn comments_in_header() {
        let img = load_image(b"P2\n# exported\n2 1 # width height\n15\n3 15\n", None).unwrap();
        assert_eq!(img.pixels(), &[3, 15]);
        assert_eq!(img.max_value(), 15);
    }

    #[test]
    fn sixteen_bit_raw_pgm_is_big_endian() {
        let img = load_image(b"P5 2 1 65535\n\x01\x00\xff\xff", None).unwrap();
        assert_eq!(img.pixels(), &[256, 65535]);
    }

    #[test]
    fn rejects_sample_above_maxval() {
        let err = load_image(b"P2 1 1 10\n11", None).unwrap_err();
        assert!(matches!(err, ImageError::SampleOutOfRange { value: 11, max: 10 }));
    }

    #[test]
    fn rejects_bad_headers() {
        for bad in [
            &b"P2"[..],
            b"P2 0 1 255\n",
            b"P2 1 1 70000\n0",
            b"P2 a 1 255\n0",
            b"P3 1 1 255\n0 0 0",
            b"P5 1 1 255",
            b"P21 1 255\n0",
        ] {
            assert!(load_image(bad, None).is_err(), "{:?}", String::from_utf8_lossy(bad));
        }
    }

    #[test]
    fn png_round_trip_8_and_16_bit() {
        for max in [255u16, 65535] {
            let px: Vec<u16> = (0..12u16).map(|i| i * (max / 11)).collect();
            let img = FafImage::new(4, 3, max, px).unwrap();
            let back = load_image(&img.to_png().unwrap(), None).unwrap();
            assert_eq!(back, img);
        }
    }

    #[test]
    fn rejects_colour_png() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 1, 1);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[1, 2, 3]).unwrap();
        }
        assert!(matches!(load_image(&out, None), Err(ImageError::NotGrayscale(_))));
    }

    #[test]
    fn rejects_low_bit_depth_png() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 8, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::One);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0b1010_1010]).unwrap();
        }
        assert_eq!(load_image(&out, None), Err(ImageError::UnsupportedBitDepth(1)));
    }

    #[test]
    fn pixel_at_is_row_major() {
        let one = FafImage::new(1, 1, 255, vec![7]).unwrap();
        assert_eq!(one.pixel_at(0, 0), Ok(7));
        let img = FafImage::new(2, 2, 255, vec![10, 20, 30, 40]).unwrap();
        assert_eq!(img.pixel_at(1, 0), Ok(20));
        assert_eq!(img.pixel_at(0, 1), Ok(30));
        assert!(matches!(img.pixel_at(2, 0), Err(ImageError::OutOfBounds { .. })));
    }

    #[test]
    fn odd_maxval_png_is_rejected_but_renders() {
        let img = FafImage::new(2, 1, 1023, vec![0, 1023]).unwrap();
        assert!(img.to_png().is_err());
        let rendered = load_image(&img.render_png_8bit().unwrap(), None).unwrap();
        assert_eq!(rendered.pixels(), &[0, 255]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn raster() -> impl Strategy<Value = FafImage> {
            (1usize..6, 1usize..6, prop_oneof![Just(255u16), Just(1000), Just(65535)])
                .prop_flat_map(|(w, h, max)| {
                    proptest::collection::vec(0..=max, w * h)
                        .prop_map(move |px| FafImage::new(w, h, max, px).unwrap())
                })
        }

        proptest! {
            #[test]
            fn pgm_round_trip(img in raster()) {
                for binary in [false, true] {
                    let back = load_image(&img.to_pgm(binary), None).unwrap();
                    prop_assert_eq!(&back, &img);
                }
            }

            #[test]
            fn plain_and_raw_agree(img in raster()) {
                let plain = load_image(&img.to_pgm(false), None).unwrap();
                let raw = load_image(&img.to_pgm(true), None).unwrap();
                prop_assert_eq!(plain, raw);
            }

            #[test]
            fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
                let _ = load_image(&bytes, None);
                let mut pgm = b"P2 ".to_vec();
                pgm.extend_from_slice(&bytes);
                let _ = load_image(&pgm, None);
            }
        }
    }
}
