//! Discretization of the flat complex torus `C^n / (Z^n + i Z^n)`.
//!
//! Real coordinates are ordered `(x_1, y_1, ..., x_n, y_n)` with `z_j = x_j + i y_j`;
//! every axis has unit period sampled at `N` points, and fields are stored
//! row-major over this lattice (`x_1` slowest, `y_n` fastest).

use crate::error::{CoreError, Result};

pub const MAX_DIM: usize = 3;
/// Largest number of real axes (2 * MAX_DIM).
pub const MAX_AXES: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    n: usize,
    points_per_axis: usize,
}

impl TorusGrid {
    /// Build a grid with complex dimension `n` and `points_per_axis` samples
    /// per real axis. Requires `1 <= n <= 3` and even `points_per_axis >= 8`.
    pub fn new(n: usize, points_per_axis: usize) -> Result<Self> {
        if n < 1 || n > MAX_DIM {
            return Err(CoreError::InvalidGrid(format!(
                "complex dimension n must be in 1..=3, got {n}"
            )));
        }
        if points_per_axis < 8 || points_per_axis % 2 != 0 {
            return Err(CoreError::InvalidGrid(format!(
                "points per axis must be even and >= 8, got {points_per_axis}"
            )));
        }
        // Guard N^(2n) against overflow on unreasonable inputs.
        let total = (points_per_axis as u128).checked_pow(2 * n as u32);
        match total {
            Some(t) if t <= (1u128 << 34) => {}
            _ => {
                return Err(CoreError::InvalidGrid(format!(
                    "grid too large: {points_per_axis}^{}",
                    2 * n
                )))
            }
        }
        Ok(Self { n, points_per_axis })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Samples per real axis (N).
    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Grid spacing h = 1/N.
    pub fn spacing(&self) -> f64 {
        1.0 / self.points_per_axis as f64
    }

    /// Number of real axes (2n).
    pub fn axes(&self) -> usize {
        2 * self.n
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis.pow(2 * self.n as u32)
    }

    /// Stride of `axis` in the flat row-major ordering.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((self.axes() - 1 - axis) as u32)
    }

    /// Real axis index of `x_j` for complex coordinate `j` (0-based).
    pub fn x_axis(&self, j: usize) -> usize {
        2 * j
    }

    /// Real axis index of `y_j` for complex coordinate `j` (0-based).
    pub fn y_axis(&self, j: usize) -> usize {
        2 * j + 1
    }

    /// Decompose a flat index into lattice coordinates.
    pub fn coords_of(&self, mut index: usize) -> [usize; MAX_AXES] {
        let mut coords = [0usize; MAX_AXES];
        for axis in (0..self.axes()).rev() {
            coords[axis] = index % self.points_per_axis;
            index /= self.points_per_axis;
        }
        coords
    }

    /// Flat index of lattice coordinates (entries beyond 2n ignored).
    pub fn index_of(&self, coords: &[usize]) -> usize {
        let mut idx = 0usize;
        for axis in 0..self.axes() {
            idx = idx * self.points_per_axis + (coords[axis] % self.points_per_axis);
        }
        idx
    }

    /// Position of a lattice point in [0,1)^{2n}.
    pub fn position_of(&self, index: usize) -> [f64; MAX_AXES] {
        let coords = self.coords_of(index);
        let mut pos = [0.0f64; MAX_AXES];
        let h = self.spacing();
        for axis in 0..self.axes() {
            pos[axis] = coords[axis] as f64 * h;
        }
        pos
    }

    /// Shift a flat index by `offset` cells along `axis`, wrapping periodically.
    pub fn shift(&self, index: usize, axis: usize, offset: isize) -> usize {
        let n = self.points_per_axis;
        let stride = self.stride(axis);
        let coord = (index / stride) % n;
        let shifted = (coord as isize + offset).rem_euclid(n as isize) as usize;
        index - coord * stride + shifted * stride
    }

    /// Integer frequency of Fourier mode index `k` along one axis, in
    /// `[-N/2, N/2)`; used by the spectral backend.
    pub fn frequency(&self, k: usize) -> i64 {
        let n = self.points_per_axis as i64;
        let k = k as i64;
        if k <= n / 2 - 1 {
            k
        } else {
            k - n
        }
    }

    /// Frequency with the Nyquist mode zeroed, the convention used for
    /// first-order derivative symbols.
    pub fn frequency_deriv(&self, k: usize) -> i64 {
        let n = self.points_per_axis as i64;
        if (k as i64) == n / 2 {
            0
        } else {
            self.frequency(k)
        }
    }

    /// Shortest wrapped displacement between two positions on the unit circle.
    pub fn wrapped_delta(a: f64, b: f64) -> f64 {
        let mut d = a - b;
        d -= d.round();
        d
    }

    /// Torus distance between a lattice point and an arbitrary position.
    pub fn torus_distance(&self, index: usize, center: &[f64]) -> f64 {
        let pos = self.position_of(index);
        let mut sum = 0.0;
        for axis in 0..self.axes() {
            let d = Self::wrapped_delta(pos[axis], center[axis]);
            sum += d * d;
        }
        sum.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let g = TorusGrid::new(1, 8).unwrap();
        assert_eq!(g.total_points(), 64);
        let g = TorusGrid::new(2, 16).unwrap();
        assert_eq!(g.total_points(), 65536);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(TorusGrid::new(2, 7).is_err());
        assert!(TorusGrid::new(0, 8).is_err());
        assert!(TorusGrid::new(4, 8).is_err());
        assert!(TorusGrid::new(2, 6).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = TorusGrid::new(2, 8).unwrap();
        for idx in [0usize, 1, 17, 4095, 511] {
            let c = g.coords_of(idx);
            assert_eq!(g.index_of(&c), idx);
        }
    }

    #[test]
    fn shift_wraps() {
        let g = TorusGrid::new(1, 8).unwrap();
        let idx = g.index_of(&[7, 3]);
        assert_eq!(g.coords_of(g.shift(idx, 0, 1))[0], 0);
        assert_eq!(g.coords_of(g.shift(idx, 0, -8))[0], 7);
        assert_eq!(g.coords_of(g.shift(idx, 1, 5))[1], 0);
    }

    #[test]
    fn frequencies() {
        let g = TorusGrid::new(1, 8).unwrap();
        let f: Vec<i64> = (0..8).map(|k| g.frequency(k)).collect();
        assert_eq!(f, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert_eq!(g.frequency_deriv(4), 0);
    }
}
