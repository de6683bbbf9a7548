//! Tensor files: NPY v1.0 (2-D, little-endian `f4`/`f8`, C order) and
//! headered CSV.

use std::fs;
use std::path::Path;

use crate::error::{Error, NpyErrorKind, Result};
use crate::tensor::Tensor2D;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE: usize = 10;

/// Element type written to an NPY file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpyDtype {
    F32,
    F64,
}

impl NpyDtype {
    fn descr(self) -> &'static str {
        match self {
            NpyDtype::F32 => "<f4",
            NpyDtype::F64 => "<f8",
        }
    }

    fn width(self) -> usize {
        match self {
            NpyDtype::F32 => 4,
            NpyDtype::F64 => 8,
        }
    }
}

fn npy_err(offset: usize, kind: NpyErrorKind) -> Error {
    Error::Npy { offset, kind }
}

pub fn encode_npy(x: &Tensor2D, dtype: NpyDtype) -> Vec<u8> {
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}), }}",
        dtype.descr(),
        x.rows(),
        x.cols()
    );
    // pad so the data starts on a 64-byte boundary; the header ends in '\n'
    let unpadded = PREAMBLE + header.len() + 1;
    header.push_str(&" ".repeat((64 - unpadded % 64) % 64));
    header.push('\n');
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + x.data().len() * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for &v in x.data() {
        match dtype {
            NpyDtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            NpyDtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

struct Header {
    dtype: NpyDtype,
    shape: (usize, usize),
}

/// Finds `'key':` in the header dict and returns the offset just past the colon.
fn find_key(header: &str, key: &str, base: usize) -> Result<usize> {
    let pat = format!("'{key}'");
    let at = header
        .find(&pat)
        .ok_or_else(|| npy_err(base, NpyErrorKind::MalformedHeader(format!("missing key {key}"))))?;
    let rest = &header[at + pat.len()..];
    let colon = rest.trim_start();
    if !colon.starts_with(':') {
        return Err(npy_err(
            base + at,
            NpyErrorKind::MalformedHeader(format!("expected ':' after {key}")),
        ));
    }
    Ok(at + pat.len() + (rest.len() - colon.len()) + 1)
}

fn parse_header(header: &str, base: usize) -> Result<Header> {
    let trimmed = header.trim_end();
    if !trimmed.starts_with('{') || !trimmed.ends_with('}') {
        return Err(npy_err(base, NpyErrorKind::MalformedHeader("header is not a dict".into())));
    }

    let at = find_key(header, "descr", base)?;
    let rest = header[at..].trim_start();
    let value_at = at + (header[at..].len() - rest.len());
    let quote = rest
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| npy_err(base + value_at, NpyErrorKind::MalformedHeader("descr is not a string".into())))?;
    let end = rest[1..]
        .find(quote)
        .ok_or_else(|| npy_err(base + value_at, NpyErrorKind::MalformedHeader("unterminated descr".into())))?;
    let descr = &rest[1..1 + end];
    let dtype = match descr {
        "<f8" => NpyDtype::F64,
        "<f4" => NpyDtype::F32,
        other => return Err(npy_err(base + value_at, NpyErrorKind::UnsupportedDtype(other.into()))),
    };

    let at = find_key(header, "fortran_order", base)?;
    let rest = header[at..].trim_start();
    if rest.starts_with("True") {
        return Err(npy_err(base + at, NpyErrorKind::FortranOrder));
    }
    if !rest.starts_with("False") {
        return Err(npy_err(base + at, NpyErrorKind::MalformedHeader("fortran_order is not a bool".into())));
    }

    let at = find_key(header, "shape", base)?;
    let rest = header[at..].trim_start();
    let value_at = at + (header[at..].len() - rest.len());
    let bad_shape = || npy_err(base + value_at, NpyErrorKind::MalformedHeader("shape is not a tuple".into()));
    if !rest.starts_with('(') {
        return Err(bad_shape());
    }
    let close = rest.find(')').ok_or_else(bad_shape)?;
    let dims = rest[1..close]
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| bad_shape()))
        .collect::<Result<Vec<_>>>()?;
    if dims.len() != 2 {
        return Err(npy_err(
            base + value_at,
            NpyErrorKind::WrongRank { expected: 2, found: dims.len() },
        ));
    }
    Ok(Header { dtype, shape: (dims[0], dims[1]) })
}

pub fn decode_npy(bytes: &[u8]) -> Result<Tensor2D> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(npy_err(0, NpyErrorKind::BadMagic));
    }
    if bytes.len() < PREAMBLE {
        return Err(npy_err(bytes.len(), NpyErrorKind::Truncated { expected: PREAMBLE, found: bytes.len() }));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(npy_err(6, NpyErrorKind::UnsupportedVersion(major, minor)));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE + header_len;
    if bytes.len() < data_start {
        return Err(npy_err(
            bytes.len(),
            NpyErrorKind::Truncated { expected: data_start, found: bytes.len() },
        ));
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE..data_start])
        .map_err(|e| npy_err(PREAMBLE + e.valid_up_to(), NpyErrorKind::MalformedHeader("header is not ASCII".into())))?;
    let Header { dtype, shape: (rows, cols) } = parse_header(header, PREAMBLE)?;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| npy_err(PREAMBLE, NpyErrorKind::MalformedHeader("shape overflows".into())))?;
    let expected = n * dtype.width();
    let payload = &bytes[data_start..];
    if payload.len() != expected {
        return Err(npy_err(
            data_start,
            NpyErrorKind::Truncated { expected, found: payload.len() },
        ));
    }
    let data: Vec<f64> = match dtype {
        NpyDtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
        NpyDtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4"))))
            .collect(),
    };
    Tensor2D::new(rows, cols, data)
}

/// Header `c0,c1,...`, then one line per row with 17 significant digits.
pub fn encode_csv(x: &Tensor2D) -> String {
    let mut out = (0..x.cols()).map(|c| format!("c{c}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in x.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_csv(text: &str) -> Result<Tensor2D> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Csv { line: 1, msg: "empty file".into() })?;
    let cols = header.split(',').count();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols {
            return Err(Error::Csv {
                line: i + 1,
                msg: format!("expected {cols} fields, found {}", fields.len()),
            });
        }
        for f in fields {
            let v = f.trim().parse::<f64>().map_err(|_| Error::Csv {
                line: i + 1,
                msg: format!("not a number: '{f}'"),
            })?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Csv { line: 2, msg: "no data rows".into() });
    }
    Tensor2D::new(rows, cols, data)
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

/// Loads `.npy` or `.csv` by extension.
pub fn load_tensor(path: &Path) -> Result<Tensor2D> {
    match extension(path).as_deref() {
        Some("npy") => decode_npy(&fs::read(path).map_err(|e| Error::io(path, e))?),
        Some("csv") => decode_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?),
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

/// Saves as `.npy` (float64) or `.csv` by extension.
pub fn save_tensor(x: &Tensor2D, path: &Path) -> Result<()> {
    let bytes = match extension(path).as_deref() {
        Some("npy") => encode_npy(x, NpyDtype::F64),
        Some("csv") => encode_csv(x).into_bytes(),
        _ => return Err(Error::UnsupportedFormat(path.to_path_buf())),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
