//! Binary array files: one line of JSON header, then the raw payload.
//!
//! ```text
//! {"dtype":"f64","shape":[H,W],"byte_order":"little","semantics":"capture"}\n
//! <H·W little-endian f64>            (dtype f64)
//! <H·W interleaved re,im f64 pairs>  (dtype c128)
//! ```

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Grid, RealImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    C128,
}

impl DType {
    pub fn item_size(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::C128 => 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayHeader {
    pub dtype: DType,
    /// `[height, width]`
    pub shape: [usize; 2],
    pub byte_order: String,
    pub semantics: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    Real(RealImage),
    Complex(ComplexField),
}

impl ArrayData {
    pub fn grid(&self) -> Grid {
        match self {
            ArrayData::Real(x) => x.grid(),
            ArrayData::Complex(x) => x.grid(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            ArrayData::Real(_) => DType::F64,
            ArrayData::Complex(_) => DType::C128,
        }
    }
}

pub fn encode_array(data: &ArrayData, semantics: &str) -> Result<Vec<u8>> {
    let grid = data.grid();
    let header = ArrayHeader {
        dtype: data.dtype(),
        shape: [grid.height(), grid.width()],
        byte_order: "little".into(),
        semantics: semantics.into(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(grid.len() * header.dtype.item_size());
    match data {
        ArrayData::Real(x) => {
            for v in x.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        ArrayData::Complex(x) => {
            for v in x.values() {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_array(bytes: &[u8]) -> Result<(ArrayHeader, ArrayData)> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("missing header terminator"))?;
    let header: ArrayHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::format(format!("bad header: {e}")))?;
    if header.byte_order != "little" {
        return Err(Error::format(format!("unsupported byte order {:?}", header.byte_order)));
    }
    let [height, width] = header.shape;
    let grid = Grid::new(width, height)?;
    let payload = &bytes[newline + 1..];
    let expected = grid.len() * header.dtype.item_size();
    if payload.len() != expected {
        return Err(Error::format(format!(
            "payload is {} bytes, header promises {expected}",
            payload.len()
        )));
    }
    let floats: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let data = match header.dtype {
        DType::F64 => ArrayData::Real(RealImage::new(grid, floats).map_err(|e| Error::format(e.to_string()))?),
        DType::C128 => {
            let values = floats.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
            ArrayData::Complex(ComplexField::new(grid, values).map_err(|e| Error::format(e.to_string()))?)
        }
    };
    Ok((header, data))
}

pub fn write_real(path: impl AsRef<Path>, image: &RealImage, semantics: &str) -> Result<()> {
    fs::write(path, encode_array(&ArrayData::Real(image.clone()), semantics)?)?;
    Ok(())
}

pub fn write_complex(path: impl AsRef<Path>, field: &ComplexField, semantics: &str) -> Result<()> {
    fs::write(path, encode_array(&ArrayData::Complex(field.clone()), semantics)?)?;
    Ok(())
}

pub fn read_array(path: impl AsRef<Path>) -> Result<(ArrayHeader, ArrayData)> {
    decode_array(&fs::read(path)?)
}

pub fn read_real(path: impl AsRef<Path>) -> Result<RealImage> {
    let path = path.as_ref();
    match read_array(path)?.1 {
        ArrayData::Real(x) => Ok(x),
        ArrayData::Complex(_) => Err(Error::format(format!("{} holds complex data", path.display()))),
    }
}

pub fn read_complex(path: impl AsRef<Path>) -> Result<ComplexField> {
    let path = path.as_ref();
    match read_array(path)?.1 {
        ArrayData::Complex(x) => Ok(x),
        ArrayData::Real(_) => Err(Error::format(format!("{} holds real data", path.display()))),
    }
}
