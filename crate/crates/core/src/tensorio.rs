//! `HVT1` tensor files, label maps and region remapping.
//!
//! Layout, all little-endian, no padding:
//!
//! ```text
//! offset 0   magic   b"HVT1"
//! offset 4   dtype   u8   0 = f32, 1 = f64
//! offset 5   ndim    u8   1..=4
//! offset 6   dims    ndim x u32
//! then       payload product(dims) values, last dimension fastest
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{ArrayD, ArrayView, Dimension, IxDyn};

use crate::error::{Error, Result};
use crate::maps::EvidenceTensor;
use crate::votefield::check_permutation;

pub const MAGIC: &[u8; 4] = b"HVT1";
pub const MAX_RANK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }
}

/// A dense tensor as stored in an `HVT1` file.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        if shape.is_empty() || shape.len() > MAX_RANK {
            return Err(Error::UnsupportedRank(shape.len()));
        }
        if shape.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::ShapeMismatch(format!(
                "dimension in {shape:?} exceeds u32"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_f32<D: Dimension>(array: ArrayView<'_, f32, D>) -> Result<Self> {
        Self::new(
            array.shape().to_vec(),
            TensorData::F32(array.iter().copied().collect()),
        )
    }

    pub fn from_f64<D: Dimension>(array: ArrayView<'_, f64, D>) -> Result<Self> {
        Self::new(
            array.shape().to_vec(),
            TensorData::F64(array.iter().copied().collect()),
        )
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    /// Values as `f32`, narrowing `f64` payloads.
    pub fn to_f32_array(&self) -> ArrayD<f32> {
        let values = match &self.data {
            TensorData::F32(v) => v.clone(),
            TensorData::F64(v) => v.iter().map(|&x| x as f32).collect(),
        };
        ArrayD::from_shape_vec(IxDyn(&self.shape), values).expect("validated shape")
    }

    pub fn to_f64_array(&self) -> ArrayD<f64> {
        let values = match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        };
        ArrayD::from_shape_vec(IxDyn(&self.shape), values).expect("validated shape")
    }

    /// Same values in the other precision.
    pub fn cast(&self, dtype: DType) -> Tensor {
        let data = match dtype {
            DType::F32 => TensorData::F32(self.to_f32_array().into_raw_vec_and_offset().0),
            DType::F64 => TensorData::F64(self.to_f64_array().into_raw_vec_and_offset().0),
        };
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    /// `f32` view with a fixed rank; fails with `ShapeMismatch` on any other rank.
    pub fn to_f32_fixed<D: Dimension>(&self) -> Result<ndarray::Array<f32, D>> {
        self.to_f32_array().into_dimensionality::<D>().map_err(|_| {
            Error::ShapeMismatch(format!(
                "expected a rank-{} tensor, got shape {:?}",
                D::NDIM.unwrap_or(0),
                self.shape
            ))
        })
    }
}

pub fn encode(tensor: &Tensor) -> Vec<u8> {
    let dtype = tensor.dtype();
    let mut out = Vec::with_capacity(6 + 4 * tensor.shape.len() + dtype.size() * tensor.data.len());
    out.extend_from_slice(MAGIC);
    out.push(dtype.code());
    out.push(tensor.shape.len() as u8);
    for &d in &tensor.shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match &tensor.data {
        TensorData::F32(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F64(v) => v
            .iter()
            .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 6 {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        return Err(Error::TruncatedFile);
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let dtype = DType::from_code(bytes[4])?;
    let rank = bytes[5] as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::UnsupportedRank(rank));
    }
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::TruncatedFile);
    }
    let shape: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")) as usize)
        .collect();
    let payload_len = shape
        .iter()
        .try_fold(dtype.size(), |acc, &d| acc.checked_mul(d))
        .ok_or(Error::TruncatedFile)?;
    let payload = &bytes[header..];
    if payload.len() < payload_len {
        return Err(Error::TruncatedFile);
    }
    if payload.len() > payload_len {
        return Err(Error::TrailingBytes(payload.len() - payload_len));
    }
    let data = match dtype {
        DType::F32 => TensorData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
                .collect(),
        ),
        DType::F64 => TensorData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
        ),
    };
    Ok(Tensor { shape, data })
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode(&fs::read(path)?)
}

pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(tensor))?;
    Ok(())
}

/// Class names indexed by class id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap(Vec<String>);

impl LabelMap {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidLabels("no class names".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::InvalidLabels(format!("duplicate name `{dup}`")));
        }
        Ok(Self(names))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// `class0`, `class1`, ... for when no label file is given.
    pub fn numbered(classes: usize) -> Self {
        Self((0..classes).map(|c| format!("class{c}")).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn name(&self, class_id: usize) -> Option<&str> {
        self.0.get(class_id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }
}

/// Reorders region channels: channel `r` of the result is channel `perm[r]`
/// of the input. Pair with [`VoteField::permute_regions`](crate::VoteField::permute_regions)
/// using the same `perm` to keep votes unchanged.
pub fn remap_regions(evidence: &EvidenceTensor, perm: &[usize]) -> Result<EvidenceTensor> {
    check_permutation(perm, evidence.regions())?;
    Ok(evidence.select_regions(perm))
}
