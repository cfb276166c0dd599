//! Dense `channels x height x width` array of `f64`, the single tensor type
//! used for images, feature maps and supervision targets.

use crate::error::{Error, Result};

/// Row-major per channel: `data[(c * height + y) * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn full(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch {
                op: "Grid::from_vec",
                expected: format!("{} values", channels * height * width),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// A `1x1x1` grid holding one value.
    pub fn scalar(value: f64) -> Self {
        Self::from_vec(1, 1, 1, vec![value]).expect("scalar shape")
    }

    /// A `1x1xn` grid holding a flat vector.
    pub fn vector(values: Vec<f64>) -> Self {
        let n = values.len();
        Self::from_vec(1, 1, n, values).expect("vector shape")
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.channels, self.height, self.width)
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    #[inline]
    pub fn add_at(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        self.data[i] += v;
    }

    /// Update a position with the per-pixel maximum.
    #[inline]
    pub fn max_at(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(c, y, x);
        if v > self.data[i] {
            self.data[i] = v;
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Contiguous row `y` of channel `c`.
    #[inline]
    pub fn row(&self, c: usize, y: usize) -> &[f64] {
        let start = (c * self.height + y) * self.width;
        &self.data[start..start + self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize, y: usize) -> &mut [f64] {
        let start = (c * self.height + y) * self.width;
        &mut self.data[start..start + self.width]
    }

    /// Copy of channel `c` as a `1xHxW` grid.
    pub fn channel(&self, c: usize) -> Grid {
        let start = c * self.height * self.width;
        let end = start + self.height * self.width;
        Grid {
            channels: 1,
            height: self.height,
            width: self.width,
            data: self.data[start..end].to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.shape() == other.shape()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bilinear lookup at continuous coordinates, clamped to the border.
    ///
    /// Exact at lattice points and linear along each axis between them.
    pub fn sample_bilinear(&self, c: usize, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let v00 = self.at(c, y0, x0);
        let v01 = self.at(c, y0, x1);
        let v10 = self.at(c, y1, x0);
        let v11 = self.at(c, y1, x1);
        v00 * (1.0 - fy) * (1.0 - fx)
            + v01 * (1.0 - fy) * fx
            + v10 * fy * (1.0 - fx)
            + v11 * fy * fx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_layout_is_row_major_per_channel() {
        let mut g = Grid::zeros(2, 3, 4);
        g.set(1, 2, 3, 7.0);
        assert_eq!(g.data()[(1 * 3 + 2) * 4 + 3], 7.0);
        assert_eq!(g.at(1, 2, 3), 7.0);
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Grid::from_vec(1, 2, 2, vec![0.0; 5]).is_err());
    }

    #[test]
    fn bilinear_exact_at_lattice_and_linear_between() {
        let g = Grid::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(g.sample_bilinear(0, 0.0, 0.0), 1.0);
        assert_eq!(g.sample_bilinear(0, 1.0, 0.0), 2.0);
        assert_eq!(g.sample_bilinear(0, 0.0, 1.0), 3.0);
        assert_eq!(g.sample_bilinear(0, 1.0, 1.0), 4.0);
        assert!((g.sample_bilinear(0, 0.5, 0.0) - 1.5).abs() < 1e-12);
        assert!((g.sample_bilinear(0, 0.0, 0.5) - 2.0).abs() < 1e-12);
        // outside samples clamp to the border
        assert_eq!(g.sample_bilinear(0, -3.0, 0.0), 1.0);
        assert_eq!(g.sample_bilinear(0, 5.0, 5.0), 4.0);
    }
}
