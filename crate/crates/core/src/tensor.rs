//! Dense row-major tensors and the CFT1 binary format.
//!
//! Layout of a CFT1 stream (all integers little-endian, no padding):
//!
//! | bytes            | content                                   |
//! |------------------|-------------------------------------------|
//! | 0..4             | magic `CFT1`                              |
//! | 4                | version, always 1                         |
//! | 5                | dtype code: 0 = f32, 1 = f64, 2 = i32     |
//! | 6                | ndim, 1 to 5                              |
//! | 7                | zero pad                                  |
//! | 8..8+8*ndim      | extents as u64                            |
//! | rest             | row-major payload, last dim fastest       |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CFT1";
pub const VERSION: u8 = 1;
pub const MAX_RANK: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    F32,
    F64,
    I32,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
            DType::I32 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            2 => Ok(DType::I32),
            other => Err(Error::BadDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I32(Vec<i32>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::I32(_) => DType::I32,
        }
    }
}

/// Immutable dense tensor. Constructors enforce the length and finiteness invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: TensorData,
}

fn check_dims(dims: &[usize], len: usize) -> Result<()> {
    if dims.is_empty() || dims.len() > MAX_RANK {
        return Err(Error::BadRank(dims.len()));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::ShapeMismatch(format!("zero extent in {dims:?}")));
    }
    let n: usize = dims.iter().product();
    if n != len {
        return Err(Error::ShapeMismatch(format!(
            "dims {dims:?} need {n} scalars, got {len}"
        )));
    }
    Ok(())
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        check_dims(&dims, data.len())?;
        match &data {
            TensorData::F32(v) => {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(i));
                }
            }
            TensorData::F64(v) => {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(i));
                }
            }
            TensorData::I32(_) => {}
        }
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(dims, TensorData::F64(data))
    }

    pub fn from_f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(dims, TensorData::F32(data))
    }

    pub fn from_i32(dims: Vec<usize>, data: Vec<i32>) -> Result<Self> {
        Self::new(dims, TensorData::I32(data))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.len() == 0
    }

    /// Widens every scalar to f64; exact for all three dtypes.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::I32(v) => v.iter().map(|&x| f64::from(x)).collect(),
        }
    }

    pub fn into_f64_vec(self) -> Vec<f64> {
        match self.data {
            TensorData::F64(v) => v,
            other => Tensor { dims: self.dims, data: other }.to_f64_vec(),
        }
    }

    /// Serializes as CFT1 and returns the number of bytes written.
    pub fn write_to<W: Write>(&self, sink: &mut W) -> Result<usize> {
        let mut header = Vec::with_capacity(8 + 8 * self.dims.len());
        header.extend_from_slice(&MAGIC);
        header.push(VERSION);
        header.push(self.dtype().code());
        header.push(self.dims.len() as u8);
        header.push(0);
        for &d in &self.dims {
            header.extend_from_slice(&(d as u64).to_le_bytes());
        }
        sink.write_all(&header)?;

        let mut payload = Vec::with_capacity(self.len() * self.dtype().size());
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
            TensorData::I32(v) => v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
        }
        sink.write_all(&payload)?;
        Ok(header.len() + payload.len())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Parses one CFT1 tensor from the stream.
    pub fn read_from<R: Read>(source: &mut R) -> Result<Self> {
        let mut head = [0u8; 8];
        let got = read_up_to(source, &mut head)?;
        if got < 4 || head[0..4] != MAGIC {
            let mut m = [0u8; 4];
            m[..got.min(4)].copy_from_slice(&head[..got.min(4)]);
            return Err(Error::BadMagic(m));
        }
        if got < 8 {
            return Err(Error::TruncatedPayload { expected: 8, found: got });
        }
        if head[4] != VERSION {
            return Err(Error::BadVersion(head[4]));
        }
        let dtype = DType::from_code(head[5])?;
        let ndim = head[6] as usize;
        if ndim == 0 || ndim > MAX_RANK {
            return Err(Error::BadRank(ndim));
        }

        let mut ext = vec![0u8; 8 * ndim];
        let got = read_up_to(source, &mut ext)?;
        if got < ext.len() {
            return Err(Error::TruncatedPayload { expected: ext.len(), found: got });
        }
        let mut dims = Vec::with_capacity(ndim);
        for chunk in ext.chunks_exact(8) {
            let d = u64::from_le_bytes(chunk.try_into().unwrap());
            let d = usize::try_from(d)
                .map_err(|_| Error::ShapeMismatch(format!("extent {d} overflows usize")))?;
            dims.push(d);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::ShapeMismatch(format!("extents {dims:?} overflow")))?;
        let nbytes = count
            .checked_mul(dtype.size())
            .ok_or_else(|| Error::ShapeMismatch(format!("extents {dims:?} overflow")))?;

        let mut payload = Vec::new();
        let found = source.take(nbytes as u64).read_to_end(&mut payload)?;
        if found < nbytes {
            return Err(Error::TruncatedPayload { expected: nbytes, found });
        }

        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            DType::F64 => TensorData::F64(
                payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
            DType::I32 => TensorData::I32(
                payload.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect(),
            ),
        };
        Tensor::new(dims, data)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<usize> {
        let mut w = BufWriter::new(File::create(path)?);
        let n = self.write_to(&mut w)?;
        w.flush()?;
        Ok(n)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn read_up_to<R: Read>(source: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

/// Input and per-scale feature extents. Scale 0 is the finest grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub input_w: usize,
    pub input_h: usize,
    pub frames: usize,
    /// Spatial pooling stride of each scale, in input pixels, finest first.
    pub strides: Vec<usize>,
}

impl Geometry {
    pub fn new(input_w: usize, input_h: usize, frames: usize, strides: Vec<usize>) -> Result<Self> {
        let g = Self { input_w, input_h, frames, strides };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_w == 0 || self.input_h == 0 || self.frames == 0 {
            return Err(Error::Config("input extents must be positive".into()));
        }
        if self.strides.is_empty() {
            return Err(Error::Config("at least one scale is required".into()));
        }
        let base = self.strides[0];
        for &s in &self.strides {
            if s == 0 || self.input_w % s != 0 || self.input_h % s != 0 {
                return Err(Error::Config(format!(
                    "stride {s} must be positive and divide {}x{}",
                    self.input_w, self.input_h
                )));
            }
            if s % base != 0 {
                return Err(Error::Config(format!(
                    "stride {s} is not a multiple of the finest stride {base}"
                )));
            }
        }
        Ok(())
    }

    pub fn n_scales(&self) -> usize {
        self.strides.len()
    }

    /// Feature grid extents (W_s, H_s) of a scale.
    pub fn grid(&self, scale: usize) -> (usize, usize) {
        let s = self.strides[scale];
        (self.input_w / s, self.input_h / s)
    }

    /// Grid shared by every slice of a 5D score volume.
    pub fn finest_grid(&self) -> (usize, usize) {
        self.grid(0)
    }

    /// How many finest cells span one cell of `scale`, per axis.
    pub fn upsample_factor(&self, scale: usize) -> usize {
        self.strides[scale] / self.strides[0]
    }
}
