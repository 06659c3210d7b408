//! Netpbm graymaps: binary `P5` and ASCII `P2`, maxval up to 65535.
//!
//! A file with maxval `m` is read as a `j`-bit image with the smallest `j` such
//! that `2^j - 1 >= m`. Images are written with maxval `2^j - 1`.

use std::path::Path;

use crate::codec::GrayImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// `P2`
    Ascii,
    /// `P5`
    Binary,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len()
            && !self.data[self.pos].is_ascii_whitespace()
            && self.data[self.pos] != b'#'
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Pgm(format!(
                "unexpected end of data while reading {what}"
            )));
        }
        Ok(&self.data[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self.token(what)?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::Pgm(format!(
                    "invalid {what}: {:?}",
                    String::from_utf8_lossy(tok)
                ))
            })
    }
}

fn bits_for_maxval(maxval: u32) -> u32 {
    32 - maxval.leading_zeros()
}

/// Parses a `P2` or `P5` graymap.
pub fn decode(data: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor { data, pos: 0 };
    let format = match cur.token("magic number")? {
        b"P2" => PgmFormat::Ascii,
        b"P5" => PgmFormat::Binary,
        other => {
            return Err(Error::Pgm(format!(
                "unsupported magic number {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Pgm(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Pgm(format!("maxval {maxval} outside 1..=65535")));
    }
    let count = width * height;
    let pixels: Vec<u32> = match format {
        PgmFormat::Ascii => (0..count)
            .map(|_| cur.number("pixel"))
            .collect::<Result<_>>()?,
        PgmFormat::Binary => {
            // exactly one whitespace byte separates the header from the raster
            if cur.pos >= data.len() || !data[cur.pos].is_ascii_whitespace() {
                return Err(Error::Pgm("missing whitespace after maxval".into()));
            }
            let start = cur.pos + 1;
            let wide = maxval > 255;
            let need = count * if wide { 2 } else { 1 };
            let raster = data.get(start..start + need).ok_or_else(|| {
                Error::Pgm(format!(
                    "raster truncated: need {need} bytes, have {}",
                    data.len().saturating_sub(start)
                ))
            })?;
            if wide {
                raster
                    .chunks_exact(2)
                    .map(|b| u16::from_be_bytes([b[0], b[1]]) as u32)
                    .collect()
            } else {
                raster.iter().map(|&b| b as u32).collect()
            }
        }
    };
    if let Some(k) = pixels.iter().position(|&p| p > maxval) {
        return Err(Error::Pgm(format!(
            "pixel {} at index {k} exceeds maxval {maxval}",
            pixels[k]
        )));
    }
    GrayImage::new(width, height, bits_for_maxval(maxval), pixels)
}

/// Serializes with maxval `2^j - 1`.
pub fn encode(img: &GrayImage, format: PgmFormat) -> Vec<u8> {
    let maxval = img.max_label();
    let magic = match format {
        PgmFormat::Ascii => "P2",
        PgmFormat::Binary => "P5",
    };
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", img.width(), img.height()).into_bytes();
    match format {
        PgmFormat::Ascii => {
            for row in img.pixels().chunks(img.width()) {
                let mut line = String::new();
                for &p in row {
                    let tok = p.to_string();
                    // netpbm asks for lines of at most 70 characters
                    if !line.is_empty() && line.len() + 1 + tok.len() > 70 {
                        out.extend_from_slice(line.as_bytes());
                        out.push(b'\n');
                        line.clear();
                    }
                    if !line.is_empty() {
                        line.push(' ');
                    }
                    line.push_str(&tok);
                }
                out.extend_from_slice(line.as_bytes());
                out.push(b'\n');
            }
        }
        PgmFormat::Binary => {
            if maxval > 255 {
                for &p in img.pixels() {
                    out.extend_from_slice(&(p as u16).to_be_bytes());
                }
            } else {
                out.extend(img.pixels().iter().map(|&p| p as u8));
            }
        }
    }
    out
}

pub fn read(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&data).map_err(|e| match e {
        Error::Pgm(msg) => Error::Pgm(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write(path: impl AsRef<Path>, img: &GrayImage, format: PgmFormat) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(img, format)).map_err(|e| Error::io(path, e))
}
