//! Portable anymap input (P2, P3, P5, P6 with maxval up to 255) and indexed
//! color output for label maps.

use std::path::Path;

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::map_icm::LabelField;
use crate::observation::ObservationField;

/// A raster with intensities in `[0, 255]`, one or three channels per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub rows: usize,
    pub cols: usize,
    pub pixels: ObservationField,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
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

    fn number(&mut self) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.fail(if self.pos >= self.bytes.len() {
                "unexpected end of file"
            } else {
                "expected a decimal number"
            }));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.fail("number out of range"))
    }
}

pub fn parse_pnm(bytes: &[u8]) -> Result<Image> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = bytes.get(..2).ok_or_else(|| cur.fail("file shorter than magic"))?;
    let (channels, binary) = match magic {
        b"P2" => (1, false),
        b"P3" => (3, false),
        b"P5" => (1, true),
        b"P6" => (3, true),
        _ => return Err(cur.fail("not a P2/P3/P5/P6 anymap")),
    };
    cur.pos = 2;
    let cols = cur.number()?;
    let rows = cur.number()?;
    let maxval = cur.number()?;
    if cols == 0 || rows == 0 {
        return Err(cur.fail("zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(cur.fail(format!("unsupported maxval {maxval}, expected 1..=255")));
    }
    let count = rows * cols * channels;
    let scale = 255.0 / maxval as f64;
    let mut values = Vec::with_capacity(count);
    if binary {
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(cur.fail("expected whitespace before raster")),
        }
        let body = bytes
            .get(cur.pos..cur.pos + count)
            .ok_or_else(|| Error::Format {
                offset: bytes.len(),
                message: format!("truncated raster, expected {count} bytes from {}", cur.pos),
            })?;
        for (k, &b) in body.iter().enumerate() {
            if b as usize > maxval {
                return Err(Error::Format {
                    offset: cur.pos + k,
                    message: format!("sample {b} exceeds maxval {maxval}"),
                });
            }
            values.push(f64::from(b) * scale);
        }
    } else {
        for _ in 0..count {
            let start = cur.pos;
            let v = cur.number()?;
            if v > maxval {
                return Err(Error::Format {
                    offset: start,
                    message: format!("sample {v} exceeds maxval {maxval}"),
                });
            }
            values.push(v as f64 * scale);
        }
    }
    Ok(Image {
        rows,
        cols,
        pixels: ObservationField::new(channels, values)?,
    })
}

/// Reads an anymap keeping its native channel count.
pub fn load_image(path: &Path) -> Result<Image> {
    parse_pnm(&read_file(path)?)
}

/// Reads an anymap as RGB; grayscale channels are replicated.
pub fn load_color_image(path: &Path) -> Result<Image> {
    let img = load_image(path)?;
    if img.pixels.dim() == 3 {
        return Ok(img);
    }
    let rgb: Vec<f64> = img.pixels.values().iter().flat_map(|&v| [v, v, v]).collect();
    Ok(Image {
        rows: img.rows,
        cols: img.cols,
        pixels: ObservationField::new(3, rgb)?,
    })
}

/// Binary P6 with maxval 255.
pub fn write_ppm(path: &Path, rows: usize, cols: usize, rgb: &[u8]) -> Result<()> {
    write_file(path, &encode_ppm(rows, cols, rgb)?)
}

fn encode_ppm(rows: usize, cols: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    if rgb.len() != rows * cols * 3 {
        return Err(Error::DimensionMismatch {
            expected: rows * cols * 3,
            found: rgb.len(),
        });
    }
    let mut out = format!("P6\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    Ok(out)
}

const PALETTE: [[u8; 3]; 16] = [
    [0, 0, 0],
    [255, 255, 255],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [128, 0, 0],
];

/// Fixed color of a label: a 16-entry table, then a formula for higher labels.
pub fn palette_color(label: usize) -> [u8; 3] {
    match PALETTE.get(label) {
        Some(c) => *c,
        None => {
            let l = (label % 256) as u8;
            [l, l.wrapping_mul(97), 255 - l]
        }
    }
}

pub fn render_labels(labels: &LabelField) -> Vec<u8> {
    labels.as_slice().iter().flat_map(|&l| palette_color(l)).collect()
}

pub fn write_label_raster(path: &Path, rows: usize, cols: usize, labels: &LabelField) -> Result<()> {
    write_ppm(path, rows, cols, &render_labels(labels))
}

/// Maps palette colors back to labels; `num_labels` bounds the search.
pub fn decode_label_raster(img: &Image, num_labels: usize) -> Result<LabelField> {
    if img.pixels.dim() != 3 {
        return Err(Error::Format {
            offset: 0,
            message: "label rasters are RGB".into(),
        });
    }
    let mut labels = Vec::with_capacity(img.pixels.len());
    for (i, px) in img.pixels.iter().enumerate() {
        let rgb = [px[0] as u8, px[1] as u8, px[2] as u8];
        let l = (0..num_labels)
            .find(|&l| palette_color(l) == rgb)
            .ok_or_else(|| Error::Format {
                offset: i * 3,
                message: format!("pixel {i} color {rgb:?} is not in the label palette"),
            })?;
        labels.push(l);
    }
    LabelField::new(labels, num_labels)
}

pub fn read_label_raster(path: &Path, num_labels: usize) -> Result<(Image, LabelField)> {
    let img = load_image(path)?;
    let labels = decode_label_raster(&img, num_labels)?;
    Ok((img, labels))
}
