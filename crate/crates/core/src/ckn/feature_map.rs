use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A spatial grid of feature vectors, stored row-major over locations with
/// the channel vector of each location contiguous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "feature map {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite feature map value at index {pos}")));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    /// Single-channel map from a row-major grid of values.
    pub fn from_grid(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        Self::new(height, width, 1, values.to_vec())
    }

    #[inline]
    pub fn locations(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn offset(&self, row: usize, col: usize) -> usize {
        (row * self.width + col) * self.channels
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> &[f64] {
        let o = self.offset(row, col);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let o = self.offset(row, col);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &FeatureMap) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length_and_nan() {
        assert!(matches!(FeatureMap::new(2, 2, 1, vec![0.0; 3]), Err(Error::Dimension(_))));
        assert!(matches!(
            FeatureMap::new(1, 1, 1, vec![f64::NAN]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn location_layout_is_row_major() {
        let m = FeatureMap::new(2, 3, 2, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(m.at(1, 2), &[10.0, 11.0]);
        assert_eq!(m.at(0, 1), &[2.0, 3.0]);
    }
}
