//! Binary PPM (P6) images with 8-bit channels.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Channel-interleaved RGB, row-major.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn features(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Option<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()?.parse().ok()
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<RgbImage, String> {
    if !bytes.starts_with(b"P6") {
        return Err("missing P6 magic".into());
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number().ok_or("bad width")?;
    let height = h.number().ok_or("bad height")?;
    let maxval = h.number().ok_or("bad maxval")?;
    if width == 0 || height == 0 {
        return Err(format!("invalid dimensions {width}x{height}"));
    }
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported, expected 255"));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing whitespace after header".into());
    }
    let raster = &bytes[h.pos + 1..];
    let expected = width * height * 3;
    if raster.len() < expected {
        return Err(format!("raster has {} bytes, expected {expected}", raster.len()));
    }
    RgbImage::new(width, height, raster[..expected].to_vec()).map_err(|e| e.to_string())
}

pub fn read(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|m| Error::format(path, m))
}

pub fn write(path: &Path, image: &RgbImage) -> Result<()> {
    fs::write(path, image.encode()).map_err(|e| Error::io(path, e))
}
