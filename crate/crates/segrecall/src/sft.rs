//! `SFT1` tensors: magic, `u8` dtype (0 = f32, 1 = f64), `u8` rank, `rank`
//! little-endian `u32` dimensions, then the row-major little-endian payload.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use segrecall_core::decision::PriorsMap;
use segrecall_core::gcn::FeatureMap;
use segrecall_core::linalg::Matrix;
use segrecall_core::ProbMap;

pub const MAGIC: &[u8; 4] = b"SFT1";

#[derive(Debug, thiserror::Error)]
pub enum SftError {
    #[error("not an SFT1 tensor")]
    BadMagic,
    #[error("unknown dtype code {0}")]
    DType(u8),
    #[error("tensor payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{found} trailing bytes after tensor payload")]
    Trailing { found: usize },
    #[error("expected a rank-{expected} tensor, found rank {found} with dims {dims:?}")]
    Rank { expected: usize, found: usize, dims: Vec<u32> },
    #[error("tensor has {0} dimensions; rank must fit in a byte")]
    TooManyDims(usize),
    #[error("dimension {0} does not fit in u32")]
    DimTooLarge(usize),
    #[error(transparent)]
    Domain(#[from] segrecall_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Data {
    pub fn len(&self) -> usize {
        match self {
            Data::F32(v) => v.len(),
            Data::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn code(&self) -> u8 {
        match self {
            Data::F32(_) => 0,
            Data::F64(_) => 1,
        }
    }

    /// Widens to f64 (exact for f32 input).
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Data::F32(v) => v.iter().map(|&x| x as f64).collect(),
            Data::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: Data,
}

impl Tensor {
    pub fn f64(dims: &[usize], data: Vec<f64>) -> Result<Self, SftError> {
        Self::checked(dims, Data::F64(data))
    }

    pub fn f32(dims: &[usize], data: Vec<f32>) -> Result<Self, SftError> {
        Self::checked(dims, Data::F32(data))
    }

    fn checked(dims: &[usize], data: Data) -> Result<Self, SftError> {
        if dims.len() > u8::MAX as usize {
            return Err(SftError::TooManyDims(dims.len()));
        }
        let dims = dims
            .iter()
            .map(|&d| u32::try_from(d).map_err(|_| SftError::DimTooLarge(d)))
            .collect::<Result<Vec<_>, _>>()?;
        let expected: usize = dims.iter().map(|&d| d as usize).product();
        if expected != data.len() {
            return Err(segrecall_core::Error::DimensionMismatch(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            ))
            .into());
        }
        Ok(Self { dims, data })
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    /// The dimensions, checked against the expected rank.
    pub fn shape<const N: usize>(&self) -> Result<[usize; N], SftError> {
        if self.dims.len() != N {
            return Err(SftError::Rank { expected: N, found: self.dims.len(), dims: self.dims.clone() });
        }
        Ok(core::array::from_fn(|i| self.dims[i] as usize))
    }
}

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor) -> io::Result<()> {
    let mut buf = Vec::with_capacity(6 + 4 * t.dims.len() + 8 * t.data.len());
    buf.extend_from_slice(MAGIC);
    buf.push(t.data.code());
    buf.push(t.dims.len() as u8);
    for d in &t.dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    match &t.data {
        Data::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        Data::F64(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
    }
    w.write_all(&buf)
}

/// Parses the header only: dtype code and dimensions.
pub fn read_header<R: Read>(mut r: R) -> Result<(u8, Vec<u32>), SftError> {
    let mut head = [0u8; 6];
    r.read_exact(&mut head).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => SftError::BadMagic,
        _ => e.into(),
    })?;
    if &head[..4] != MAGIC {
        return Err(SftError::BadMagic);
    }
    let code = head[4];
    if code > 1 {
        return Err(SftError::DType(code));
    }
    let mut raw = vec![0u8; 4 * head[5] as usize];
    r.read_exact(&mut raw).map_err(|_| SftError::Truncated { expected: raw.len(), found: 0 })?;
    let dims = raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("chunk of 4"))).collect();
    Ok((code, dims))
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<Tensor, SftError> {
    let (code, dims) = read_header(&mut r)?;
    let width = if code == 0 { 4 } else { 8 };
    let expected = dims
        .iter()
        .try_fold(width, |acc: usize, &d| acc.checked_mul(d as usize))
        .ok_or(SftError::DimTooLarge(usize::MAX))?;
    // sized by what is actually on disk, not by the untrusted header
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() < expected {
        return Err(SftError::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(SftError::Trailing { found: payload.len() - expected });
    }
    let data = if code == 0 {
        Data::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4"))).collect())
    } else {
        Data::F64(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
    };
    Ok(Tensor { dims, data })
}

pub fn load(path: &Path) -> Result<Tensor, SftError> {
    read_tensor(fs::File::open(path)?)
}

pub fn load_header(path: &Path) -> Result<(u8, Vec<u32>), SftError> {
    read_header(fs::File::open(path)?)
}

pub fn save(path: &Path, t: &Tensor) -> io::Result<()> {
    let mut buf = Vec::new();
    write_tensor(&mut buf, t)?;
    fs::write(path, buf)
}

impl TryFrom<&Tensor> for ProbMap {
    type Error = SftError;

    /// `[height, width, classes]`, validated for normalization.
    fn try_from(t: &Tensor) -> Result<Self, SftError> {
        let [h, w, c] = t.shape()?;
        Ok(ProbMap::new(h, w, c, t.data.to_f64())?)
    }
}

impl From<&ProbMap> for Tensor {
    fn from(p: &ProbMap) -> Self {
        Tensor::f64(&[p.height(), p.width(), p.num_classes()], p.data().to_vec())
            .expect("probability map dims are consistent")
    }
}

impl From<&PriorsMap> for Tensor {
    fn from(p: &PriorsMap) -> Self {
        Tensor::f64(&[p.height(), p.width(), p.num_classes()], p.data().to_vec()).expect("priors dims are consistent")
    }
}

/// Priors tensor `[height, width, classes]`; smoothing and floor come from the sidecar.
pub fn priors_from_tensor(t: &Tensor, sigma: f64, floor: f64) -> Result<PriorsMap, SftError> {
    let [h, w, c] = t.shape()?;
    Ok(PriorsMap::new(h, w, c, t.data.to_f64(), sigma, floor)?)
}

impl TryFrom<&Tensor> for Matrix {
    type Error = SftError;

    fn try_from(t: &Tensor) -> Result<Self, SftError> {
        let [r, c] = t.shape()?;
        Ok(Matrix::new(r, c, t.data.to_f64())?)
    }
}

impl From<&Matrix> for Tensor {
    fn from(m: &Matrix) -> Self {
        Tensor::f64(&[m.rows(), m.cols()], m.data().to_vec()).expect("matrix dims are consistent")
    }
}

impl TryFrom<&Tensor> for FeatureMap {
    type Error = SftError;

    fn try_from(t: &Tensor) -> Result<Self, SftError> {
        let [h, w, d] = t.shape()?;
        Ok(FeatureMap::new(h, w, d, t.data.to_f64())?)
    }
}

impl From<&FeatureMap> for Tensor {
    fn from(f: &FeatureMap) -> Self {
        Tensor::f64(&[f.height(), f.width(), f.depth()], f.data().to_vec()).expect("feature map dims are consistent")
    }
}
