//! Minimal NPY v1.0 reader/writer for C-order u8/f32/f64 arrays.

use super::{DataError, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone)]
pub enum NpyData {
    U8(Vec<u8>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl NpyData {
    pub fn len(&self) -> usize {
        match self {
            NpyData::U8(v) => v.len(),
            NpyData::F32(v) => v.len(),
            NpyData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

/// Pulls the value of `key` out of the header's python-literal dict. The
/// header grammar is fixed by the format, so plain string scanning is enough.
fn dict_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let pat = format!("'{key}':");
    let start = header
        .find(&pat)
        .ok_or_else(|| DataError::BadHeader(format!("missing key {key}")))?
        + pat.len();
    let rest = header[start..].trim_start();
    // Value ends at the next top-level comma or the closing brace.
    let mut depth = 0usize;
    for (i, c) in rest.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth = depth.saturating_sub(1),
            ',' | '}' if depth == 0 => return Ok(rest[..i].trim()),
            _ => {}
        }
    }
    Err(DataError::BadHeader(format!("unterminated value for {key}")))
}

fn parse_shape(text: &str) -> Result<Vec<usize>> {
    let inner = text
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| DataError::BadHeader(format!("bad shape {text}")))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| DataError::BadHeader(format!("bad shape {text}")))
        })
        .collect()
}

pub fn load_npy(path: &Path) -> Result<NpyArray> {
    let bytes = fs::read(path)?;
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(DataError::BadMagic);
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(DataError::UnsupportedVersion(bytes[6], bytes[7]));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let body_start = 10 + header_len;
    if bytes.len() < body_start {
        return Err(DataError::Truncated {
            expected: body_start,
            found: bytes.len(),
        });
    }
    let header = std::str::from_utf8(&bytes[10..body_start])
        .map_err(|_| DataError::BadHeader("non-ASCII header".into()))?;

    match dict_value(header, "fortran_order")? {
        "False" => {}
        "True" => return Err(DataError::FortranOrder),
        other => return Err(DataError::BadHeader(format!("fortran_order = {other}"))),
    }
    let descr = dict_value(header, "descr")?.trim_matches(|c| c == '\'' || c == '"');
    let shape = parse_shape(dict_value(header, "shape")?)?;
    let count: usize = shape.iter().product();

    let body = &bytes[body_start..];
    let need = |width: usize| -> Result<()> {
        if body.len() < count * width {
            Err(DataError::Truncated {
                expected: body_start + count * width,
                found: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    let data = match descr {
        "|u1" | "<u1" | "u1" => {
            need(1)?;
            NpyData::U8(body[..count].to_vec())
        }
        "<f4" => {
            need(4)?;
            NpyData::F32(
                body[..count * 4]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        "<f8" => {
            need(8)?;
            NpyData::F64(
                body[..count * 8]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        other => return Err(DataError::UnsupportedDtype(other.to_string())),
    };
    Ok(NpyArray {
        shape,
        data,
    })
}

/// Writes a v1.0 file readable by [`load_npy`] (and by numpy).
pub fn write_npy(path: &Path, array: &NpyArray) -> Result<()> {
    let count: usize = array.shape.iter().product();
    assert_eq!(count, array.data.len(), "shape does not match data length");
    let descr = match array.data {
        NpyData::U8(_) => "|u1",
        NpyData::F32(_) => "<f4",
        NpyData::F64(_) => "<f8",
    };
    let shape = match array.shape.len() {
        1 => format!("({},)", array.shape[0]),
        _ => format!(
            "({})",
            array
                .shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut header =
        format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape}, }}");
    // Total header size (magic + version + length field + dict) padded to 64.
    let unpadded = 10 + header.len() + 1;
    header.push_str(&" ".repeat(unpadded.div_ceil(64) * 64 - unpadded));
    header.push('\n');

    let mut file = fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&[1, 0])?;
    file.write_all(&(header.len() as u16).to_le_bytes())?;
    file.write_all(header.as_bytes())?;
    match &array.data {
        NpyData::U8(v) => file.write_all(v)?,
        NpyData::F32(v) => {
            for x in v {
                file.write_all(&x.to_le_bytes())?;
            }
        }
        NpyData::F64(v) => {
            for x in v {
                file.write_all(&x.to_le_bytes())?;
            }
        }
    }
    Ok(())
}
