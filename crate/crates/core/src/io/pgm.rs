//! PGM (P2/P5) reading and 16-bit P5 label-map writing.
//!
//! P5 samples are one byte when `maxval < 256` and two bytes, big-endian,
//! otherwise. Written label maps are always P5 with `maxval = 65535`, a
//! header of the form `P5\n<width> <height>\n65535\n`, and raw labels as
//! samples.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::domain::{DomainSpec, Label, LabelField, RealField};
use crate::error::{Error, Result};
use crate::skew::ImageField;

/// Decoded PGM samples, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| parse_err(start, format!("{what} out of range")))
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Pgm> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(parse_err(0, "missing PGM magic number"));
    }
    let binary = match bytes[1] {
        b'5' => true,
        b'2' => false,
        other => {
            return Err(parse_err(
                1,
                format!("unsupported format P{}; only P2 and P5 are read", other as char),
            ))
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(parse_err(maxval_at, format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(maxval_at, format!("maxval {maxval} outside 1..=65535")));
    }
    let maxval = maxval as u16;
    let count = width
        .checked_mul(height)
        .ok_or_else(|| parse_err(0, "image dimensions overflow"))?;

    let samples = if binary {
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(parse_err(cur.pos, "expected single whitespace after maxval")),
        }
        let bps = if maxval < 256 { 1 } else { 2 };
        let expected = count * bps;
        let payload = &bytes[cur.pos..];
        if payload.len() < expected {
            return Err(parse_err(
                bytes.len(),
                format!(
                    "truncated payload: expected {expected} bytes, got {}",
                    payload.len()
                ),
            ));
        }
        let samples: Vec<u16> = if bps == 1 {
            payload[..expected].iter().map(|&b| b as u16).collect()
        } else {
            payload[..expected]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        };
        if let Some(i) = samples.iter().position(|&s| s > maxval) {
            return Err(parse_err(
                cur.pos + i * bps,
                format!("sample {} exceeds maxval {maxval}", samples[i]),
            ));
        }
        samples
    } else {
        let mut v = Vec::with_capacity(count);
        for i in 0..count {
            cur.skip_space_and_comments();
            let at = cur.pos;
            let s = cur.number("sample").map_err(|e| match e {
                Error::Parse { offset, .. } if offset >= bytes.len() => parse_err(
                    offset,
                    format!("truncated payload: expected {count} samples, got {i}"),
                ),
                e => e,
            })?;
            if s > maxval as u64 {
                return Err(parse_err(at, format!("sample {s} exceeds maxval {maxval}")));
            }
            v.push(s as u16);
        }
        v
    };
    Ok(Pgm {
        width,
        height,
        maxval,
        samples,
    })
}

pub fn read_pgm_raw(path: impl AsRef<Path>) -> Result<Pgm> {
    parse_pgm(&fs::read(path)?)
}

/// Reads a PGM as intensities `sample / maxval` on a zero-padded
/// `height × width` domain.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageField> {
    image_from_pgm(&read_pgm_raw(path)?)
}

pub fn image_from_pgm(pgm: &Pgm) -> Result<ImageField> {
    let domain = DomainSpec::padded(&[pgm.height, pgm.width])?;
    let scale = pgm.maxval as f64;
    let values = pgm.samples.iter().map(|&s| s as f64 / scale).collect();
    ImageField::new(RealField::new(domain, values)?)
}

/// `(height, width)` of a 1-D or 2-D domain; 1-D fields are one row.
fn raster_shape(domain: &DomainSpec) -> Result<(usize, usize)> {
    match domain.dims() {
        [w] => Ok((1, *w)),
        [h, w] => Ok((*h, *w)),
        dims => Err(Error::Unsupported(format!(
            "label maps are written for 1-D and 2-D domains, got {}-D",
            dims.len()
        ))),
    }
}

pub fn encode_pgm16(width: usize, height: usize, samples: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(samples.len() * 2);
    for &s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn encode_pgm8(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    out
}

/// The CSV written next to a label map.
pub fn csv_sidecar(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

/// Writes `path` as a 16-bit P5 map of raw labels and the sidecar CSV
/// `row,col,label` (see [`csv_sidecar`]).
pub fn write_labels(psi: &LabelField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = raster_shape(psi.domain())?;
    fs::write(path, encode_pgm16(w, h, psi.labels()))?;

    let mut csv = csv::Writer::from_path(csv_sidecar(path))?;
    csv.write_record(["row", "col", "label"])?;
    for (i, &l) in psi.labels().iter().enumerate() {
        csv.write_record([(i / w).to_string(), (i % w).to_string(), l.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads a `row,col,label` CSV back onto `domain`.
pub fn read_label_csv(path: impl AsRef<Path>, domain: &DomainSpec, num_labels: usize) -> Result<LabelField> {
    let (h, w) = raster_shape(domain)?;
    let mut labels = vec![0 as Label; h * w];
    let mut seen = vec![false; h * w];
    let mut reader = csv::Reader::from_path(path)?;
    for record in reader.deserialize() {
        let (row, col, label): (usize, usize, Label) = record?;
        if row >= h || col >= w {
            return Err(Error::InvalidArgument(format!("pixel ({row}, {col}) outside {h}x{w}")));
        }
        labels[row * w + col] = label;
        seen[row * w + col] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidArgument(format!("pixel ({}, {}) missing", i / w, i % w)));
    }
    LabelField::new(domain.clone(), labels, num_labels)
}

/// Writes an 8-bit grayscale image of intensities.
pub fn write_image(img: &ImageField, path: impl AsRef<Path>) -> Result<()> {
    let (h, w) = raster_shape(img.domain())?;
    let samples: Vec<u8> = img
        .intensity()
        .values()
        .iter()
        .map(|v| (v * 255.0).round() as u8)
        .collect();
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pgm8(w, h, &samples))?;
    Ok(())
}
