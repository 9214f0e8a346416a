//! Binary `P6` PPM with max value 255. Encoding clamps to `[0, 1]` and rounds
//! half away from zero; decoding maps a byte `v` to `v / 255`. Linear RGB.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

pub fn encode_ppm<T: Scalar>(image: &Image<T>) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.to_bytes());
    out
}

pub fn write_ppm<T: Scalar>(path: impl AsRef<Path>, image: &Image<T>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

pub fn read_ppm<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn err(&self, what: impl Into<String>) -> Error {
        Error::Parse { offset: self.pos as u64, what: what.into() }
    }

    /// Skips whitespace and `#` comments.
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse { offset: start as u64, what: format!("{what} out of range") })
    }
}

pub fn decode_ppm<T: Scalar>(bytes: &[u8]) -> Result<Image<T>> {
    let mut h = Header { bytes, pos: 0 };
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(h.err("missing P6 magic"));
    }
    h.pos = 2;
    let width = h.number("width")?;
    let height = h.number("height")?;
    h.skip_space();
    let start = h.pos;
    let maxval = h.number("max value")?;
    if maxval != 255 {
        return Err(Error::Parse { offset: start as u64, what: format!("max value {maxval}, only 255 is supported") });
    }
    match bytes.get(h.pos) {
        Some(b' ' | b'\t' | b'\n' | b'\r') => h.pos += 1,
        _ => return Err(h.err("expected a single whitespace byte after the max value")),
    }
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(3))
        .ok_or_else(|| h.err("image dimensions overflow"))?;
    let data = &bytes[h.pos..];
    if data.len() != n {
        return Err(h.err(format!("expected {n} pixel bytes, found {}", data.len())));
    }
    Image::from_bytes(width, height, data)
}
