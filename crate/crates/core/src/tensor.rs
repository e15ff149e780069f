//! Dense row-major f64 tensors.
//!
//! This is deliberately minimal: the network works on small desk-scale
//! rasters, and everything hot (convolutions, loss kernels) indexes the
//! flat buffer directly through slices.

use crate::error::{DwdError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(DwdError::validation(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Rank-0 tensor holding a single value.
    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn as_scalar(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Contiguous row `[c][y][..]` of a rank-3 `[C, H, W]` tensor.
    pub fn row(&self, c: usize, y: usize) -> &[f64] {
        let (h, w) = (self.shape[1], self.shape[2]);
        debug_assert!(c < self.shape[0] && y < h);
        let base = (c * h + y) * w;
        &self.data[base..base + w]
    }

    pub fn row_mut(&mut self, c: usize, y: usize) -> &mut [f64] {
        let (h, w) = (self.shape[1], self.shape[2]);
        debug_assert!(c < self.shape[0] && y < h);
        let base = (c * h + y) * w;
        &mut self.data[base..base + w]
    }

    /// Plane `[c]` of a rank-3 tensor as a flat `H*W` slice.
    pub fn plane(&self, c: usize) -> &[f64] {
        let hw = self.shape[1] * self.shape[2];
        &self.data[c * hw..(c + 1) * hw]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_length_mismatch() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn row_indexing_is_row_major() {
        let t = Tensor::from_vec(&[2, 2, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.row(0, 1), &[3.0, 4.0, 5.0]);
        assert_eq!(t.row(1, 0), &[6.0, 7.0, 8.0]);
    }
}
