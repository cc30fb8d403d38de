//! Minimal dense f64 tensor with explicit shape.
//!
//! Row-major storage, ranks 1..=3 in practice. Deliberately tiny: the layers
//! index into raw slices for speed, this type only carries shape metadata
//! across layer boundaries and validates composability.

use crate::error::{Result, RtError};

#[derive(Debug, Clone, PartialEq)]
pub struct NdArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl NdArray {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        NdArray {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(RtError::shape(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                expect,
                data.len()
            )));
        }
        Ok(NdArray { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterpret the shape without touching data (row-major, so this is
    /// free). Errors if the element count would change.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(RtError::shape(format!(
                "cannot reshape {} elements into {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Row `i` of a rank-2 array.
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.rank(), 2);
        let w = self.shape[1];
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        debug_assert_eq!(self.rank(), 2);
        let w = self.shape[1];
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_element_count() {
        assert!(NdArray::from_vec(vec![2, 3], vec![0.0; 6]).is_ok());
        let err = NdArray::from_vec(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, RtError::Shape(_)), "got {err:?}");
    }

    #[test]
    fn reshape_is_free_and_checked() {
        let a = NdArray::from_vec(vec![2, 3], (0..6).map(|v| v as f64).collect()).unwrap();
        let b = a.clone().reshape(vec![6]).unwrap();
        assert_eq!(b.data(), a.data());
        assert!(a.reshape(vec![4]).is_err());
    }

    #[test]
    fn rows_slice_row_major() {
        let a = NdArray::from_vec(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(a.row(0), &[1., 2., 3.]);
        assert_eq!(a.row(1), &[4., 5., 6.]);
    }
}
