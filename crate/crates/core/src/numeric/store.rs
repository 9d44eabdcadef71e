//! Flat storage for named parameter tensors.

use serde::{Deserialize, Serialize};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TensorId(pub usize);

/// A contiguous range of one stored tensor, the unit a tape leaf refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamSlice {
    pub tensor: TensorId,
    pub offset: usize,
    pub len: usize,
}

/// A row-major `rows × cols` block of learnable values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ParamTensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    tensors: Vec<ParamTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tensors(tensors: Vec<ParamTensor>) -> Self {
        Self { tensors }
    }

    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize, data: Vec<f64>) -> TensorId {
        assert_eq!(data.len(), rows * cols, "tensor data does not match its shape");
        self.tensors.push(ParamTensor { name: name.into(), rows, cols, data });
        TensorId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: TensorId) -> &ParamTensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: TensorId) -> &mut ParamTensor {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Slice covering the whole tensor.
    pub fn whole(&self, id: TensorId) -> ParamSlice {
        ParamSlice { tensor: id, offset: 0, len: self.get(id).len() }
    }

    /// Slice covering one row of the tensor.
    pub fn row_slice(&self, id: TensorId, row: usize) -> ParamSlice {
        let cols = self.get(id).cols;
        ParamSlice { tensor: id, offset: row * cols, len: cols }
    }

    pub fn slice_values(&self, s: ParamSlice) -> &[f64] {
        &self.get(s.tensor).data[s.offset..s.offset + s.len]
    }

    pub fn slice_values_mut(&mut self, s: ParamSlice) -> &mut [f64] {
        &mut self.get_mut(s.tensor).data[s.offset..s.offset + s.len]
    }

    /// Total scalar count across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(ParamTensor::len).sum()
    }

    /// First tensor holding a NaN or infinite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .find(|t| t.data.iter().any(|v| !v.is_finite()))
            .map(|t| t.name.as_str())
    }
}
