//! Flat f32 tensors and the "EVK0" binary container.
//!
//! Layout: magic `EVK0`, u8 dtype code (0x01 = f32, the only code in v1),
//! u32 ndim, u64 dims[ndim], then the row-major little-endian payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::GeomError;

pub const MAGIC: &[u8; 4] = b"EVK0";
pub const DTYPE_F32: u8 = 0x01;
const MAX_NDIM: u32 = 8;

/// Dense row-major f32 tensor. All values finite, all extents positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBlob {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl TensorBlob {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, GeomError> {
        if dims.is_empty() || dims.len() > MAX_NDIM as usize {
            return Err(GeomError::DimOverflow(format!("ndim {}", dims.len())));
        }
        let mut product: usize = 1;
        for &d in &dims {
            if d == 0 {
                return Err(GeomError::DimOverflow("zero extent".into()));
            }
            product = product
                .checked_mul(d)
                .ok_or_else(|| GeomError::DimOverflow("element count overflow".into()))?;
        }
        if data.len() != product {
            return Err(GeomError::DimOverflow(format!(
                "data length {} != dim product {}",
                data.len(),
                product
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self, GeomError> {
        let n = dims.iter().product();
        Self::new(dims, vec![0.0; n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to the payload; callers must keep values finite.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub fn write_tensor(path: &Path, blob: &TensorBlob) -> Result<(), GeomError> {
    if blob.data.iter().any(|v| !v.is_finite()) {
        return Err(GeomError::NonFinite);
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[DTYPE_F32])?;
    w.write_all(&(blob.dims.len() as u32).to_le_bytes())?;
    for &d in &blob.dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in &blob.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<TensorBlob, GeomError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GeomError::BadMagic);
    }
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype)?;
    if dtype[0] != DTYPE_F32 {
        return Err(GeomError::DimOverflow(format!(
            "unsupported dtype code {:#04x}",
            dtype[0]
        )));
    }
    let mut ndim_bytes = [0u8; 4];
    r.read_exact(&mut ndim_bytes)?;
    let ndim = u32::from_le_bytes(ndim_bytes);
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(GeomError::DimOverflow(format!("ndim {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    for _ in 0..ndim {
        let mut d = [0u8; 8];
        r.read_exact(&mut d)?;
        let d = u64::from_le_bytes(d);
        if d == 0 {
            return Err(GeomError::DimOverflow("zero extent".into()));
        }
        dims.push(usize::try_from(d).map_err(|_| GeomError::DimOverflow(format!("extent {d}")))?);
    }
    let mut count: usize = 1;
    for &d in &dims {
        count = count
            .checked_mul(d)
            .ok_or_else(|| GeomError::DimOverflow("element count overflow".into()))?;
    }
    let mut payload = vec![0u8; count * 4];
    r.read_exact(&mut payload)?;
    let mut data = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(4) {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(GeomError::NonFinite);
        }
        data.push(v);
    }
    TensorBlob::new(dims, data)
}
