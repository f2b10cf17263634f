//! Dense row-major `f32` tensors and the `.ptns` file format.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! 0..4    magic "PTNS"
//! 4..8    version = 1
//! 8..12   dtype code (0 = f32)
//! 12..16  ndim (<= 4)
//! ...     ndim dims
//! ...     product(dims) f32 values, row-major, little-endian
//! ```

use std::path::Path;

use crate::error::{Error, Result, TensorError};
use crate::io::write_atomic;

pub const MAGIC: [u8; 4] = *b"PTNS";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;
pub const MAX_NDIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

fn element_count(dims: &[usize]) -> Result<usize, TensorError> {
    if dims.len() > MAX_NDIM {
        return Err(TensorError::DimOverflow(format!(
            "{} dims exceeds the maximum of {MAX_NDIM}",
            dims.len()
        )));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| TensorError::DimOverflow(format!("{dims:?} is too large")))
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        let n = element_count(&dims)?;
        if n != data.len() {
            return Err(TensorError::ShapeMismatch { dims, len: data.len() });
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self, TensorError> {
        let n = element_count(&dims)?;
        Ok(Tensor { dims, data: vec![0.0; n] })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// `(channels, height, width)` for a 3-D tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.dims[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::DimMismatch(format!("expected C x H x W, got {:?}", self.dims))),
        }
    }

    /// `(height, width)` for a 2-D tensor.
    pub fn hw(&self) -> Result<(usize, usize)> {
        match self.dims[..] {
            [h, w] => Ok((h, w)),
            _ => Err(Error::DimMismatch(format!("expected H x W, got {:?}", self.dims))),
        }
    }

    /// One `H x W` plane of a 3-D tensor.
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.dims[1] * self.dims[2];
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let plane = self.dims[1] * self.dims[2];
        &mut self.data[c * plane..(c + 1) * plane]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&DTYPE_F32.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cursor.take(4)?.try_into().unwrap();
        if magic != MAGIC {
            return Err(TensorError::BadMagic(magic));
        }
        let version = cursor.u32()?;
        if version != VERSION {
            return Err(TensorError::UnsupportedVersion(version));
        }
        let dtype = cursor.u32()?;
        if dtype != DTYPE_F32 {
            return Err(TensorError::UnsupportedDtype(dtype));
        }
        let ndim = cursor.u32()? as usize;
        if ndim > MAX_NDIM {
            return Err(TensorError::DimOverflow(format!(
                "{ndim} dims exceeds the maximum of {MAX_NDIM}"
            )));
        }
        let dims = (0..ndim)
            .map(|_| cursor.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n = element_count(&dims)?;
        let payload = cursor.take(n * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let rest = bytes.len() - cursor.pos;
        if rest != 0 {
            return Err(TensorError::TrailingBytes { found: rest });
        }
        Ok(Tensor { dims, data })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(TensorError::Truncated {
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TensorError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
    Tensor::from_bytes(&bytes).map_err(|e| Error::from(e).at(path))
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    if tensor.dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::from(TensorError::DimOverflow(format!("{:?}", tensor.dims))).at(path));
    }
    write_atomic(path, &tensor.to_bytes())
}
