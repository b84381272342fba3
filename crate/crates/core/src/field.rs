//! Grid-sampled fields: scalar potentials, densities, Hermitian matrix fields,
//! eigenvalue fields and set masks.

use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::grid::TorusGrid;

/// Default tolerance below which density values are considered rounding noise.
pub const DENSITY_NEG_TOL: f64 = 1e-10;

/// Sentinel standing in for -infinity in fields with poles.
pub const NEG_INFINITY_SENTINEL: f64 = f64::MIN;

/// Values at or below this threshold are treated as sentinel markers.
pub fn is_sentinel(v: f64) -> bool {
    v <= NEG_INFINITY_SENTINEL
}

/// A real scalar sample of a function on the torus.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.total_points()],
        }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.total_points()],
        }
    }

    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(CoreError::GridMismatch(format!(
                "expected {} values, got {}",
                grid.total_points(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(usize) -> f64) -> Self {
        Self {
            grid,
            values: (0..grid.total_points()).map(f).collect(),
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Error if any value is non-finite (sentinels count as non-finite here).
    pub fn ensure_finite(&self) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() || is_sentinel(*v) {
                return Err(CoreError::NonFinite(i));
            }
        }
        Ok(())
    }

    pub fn has_sentinels(&self) -> bool {
        self.values.iter().any(|v| is_sentinel(*v))
    }

    /// Mean of the values; equals the integral against the unit-volume form.
    pub fn mean(&self) -> f64 {
        chunked_sum(&self.values) / self.values.len() as f64
    }

    /// Subtract the mean in place (the mean-zero gauge).
    pub fn remove_mean(&mut self) {
        let m = self.mean();
        for v in &mut self.values {
            *v -= m;
        }
    }

    pub fn add_constant(&mut self, c: f64) {
        for v in &mut self.values {
            *v += c;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    /// Oscillation max - min.
    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    /// Pointwise a + s*b.
    pub fn axpy(&self, s: f64, b: &ScalarField) -> Result<ScalarField> {
        self.check_same_grid(b)?;
        let values = self
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x + s * y)
            .collect();
        Ok(ScalarField {
            grid: self.grid,
            values,
        })
    }

    pub fn sub(&self, b: &ScalarField) -> Result<ScalarField> {
        self.axpy(-1.0, b)
    }

    pub fn sup_distance(&self, b: &ScalarField) -> Result<f64> {
        self.check_same_grid(b)?;
        Ok(self
            .values
            .iter()
            .zip(&b.values)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
    }

    pub fn pointwise_max(&self, b: &ScalarField) -> Result<ScalarField> {
        self.check_same_grid(b)?;
        let values = self
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| x.max(*y))
            .collect();
        Ok(ScalarField {
            grid: self.grid,
            values,
        })
    }

    /// Lower truncation max(phi, floor); sentinels are lifted to the floor.
    pub fn truncate_below(&self, floor: f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| v.max(floor)).collect(),
        }
    }

    pub fn check_same_grid(&self, b: &ScalarField) -> Result<()> {
        if self.grid != b.grid {
            return Err(CoreError::GridMismatch(
                "scalar fields on different grids".into(),
            ));
        }
        Ok(())
    }
}

/// A nonnegative density against the normalized volume form. Values may carry
/// small negative rounding noise in memory; the write path clamps at zero.
#[derive(Clone, Debug)]
pub struct DensityField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl DensityField {
    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.total_points() {
            return Err(CoreError::GridMismatch(format!(
                "expected {} values, got {}",
                grid.total_points(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.total_points()],
        }
    }

    pub fn from_scalar(f: &ScalarField) -> Self {
        Self {
            grid: f.grid(),
            values: f.values().to_vec(),
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Total mass = mean of the values (total volume is 1).
    pub fn mass(&self) -> f64 {
        chunked_sum(&self.values) / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// Validate that this is a genuine density: finite, >= -tol everywhere.
    pub fn validate_nonnegative(&self, tol: f64) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::NonFinite(i));
            }
            if *v < -tol {
                return Err(CoreError::InvalidDensity(format!(
                    "negative density {v:.3e} at index {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn as_scalar(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.clone(),
        }
    }
}

/// Per-point Hermitian n x n matrix, the field of omega + dd^c u in omega-units.
/// Entries stored row-major per point (k fastest), n^2 complex numbers each.
#[derive(Clone, Debug)]
pub struct HermitianHessianField {
    grid: TorusGrid,
    entries: Vec<Complex64>,
}

impl HermitianHessianField {
    pub fn zeros(grid: TorusGrid) -> Self {
        let n2 = grid.n() * grid.n();
        Self {
            grid,
            entries: vec![Complex64::new(0.0, 0.0); grid.total_points() * n2],
        }
    }

    pub fn from_entries(grid: TorusGrid, entries: Vec<Complex64>) -> Result<Self> {
        let n2 = grid.n() * grid.n();
        if entries.len() != grid.total_points() * n2 {
            return Err(CoreError::GridMismatch(format!(
                "expected {} matrix entries, got {}",
                grid.total_points() * n2,
                entries.len()
            )));
        }
        Ok(Self { grid, entries })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Complex64] {
        &mut self.entries
    }

    /// The n x n matrix at flat point index `idx`.
    pub fn matrix_at(&self, idx: usize) -> &[Complex64] {
        let n2 = self.grid.n() * self.grid.n();
        &self.entries[idx * n2..(idx + 1) * n2]
    }

    /// Largest deviation from Hermitian symmetry over all points.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.grid.n();
        let mut worst = 0.0f64;
        for idx in 0..self.grid.total_points() {
            let m = self.matrix_at(idx);
            for j in 0..n {
                worst = worst.max(m[j * n + j].im.abs());
                for k in (j + 1)..n {
                    let d = m[j * n + k] - m[k * n + j].conj();
                    worst = worst.max(d.norm());
                }
            }
        }
        worst
    }
}

/// Per-point sorted eigenvalues of I + H(u).
#[derive(Clone, Debug)]
pub struct EigenField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl EigenField {
    pub fn from_values(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.total_points() * grid.n() {
            return Err(CoreError::GridMismatch(format!(
                "expected {} eigenvalues, got {}",
                grid.total_points() * grid.n(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Ascending eigenvalues at flat point index `idx`.
    pub fn at(&self, idx: usize) -> &[f64] {
        let n = self.grid.n();
        &self.values[idx * n..(idx + 1) * n]
    }
}

/// Per-point indicator of a grid-representable Borel set.
#[derive(Clone, Debug)]
pub struct SetMask {
    grid: TorusGrid,
    mask: Vec<bool>,
}

impl SetMask {
    pub fn empty(grid: TorusGrid) -> Self {
        Self {
            grid,
            mask: vec![false; grid.total_points()],
        }
    }

    pub fn full(grid: TorusGrid) -> Self {
        Self {
            grid,
            mask: vec![true; grid.total_points()],
        }
    }

    pub fn from_mask(grid: TorusGrid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.total_points() {
            return Err(CoreError::GridMismatch(format!(
                "expected {} mask entries, got {}",
                grid.total_points(),
                mask.len()
            )));
        }
        Ok(Self { grid, mask })
    }

    pub fn from_predicate(grid: TorusGrid, pred: impl Fn(usize) -> bool) -> Self {
        Self {
            grid,
            mask: (0..grid.total_points()).map(pred).collect(),
        }
    }

    /// Axis-aligned periodic box: `|coord_a - center_a| <= half_width_a` wrapped.
    pub fn torus_box(grid: TorusGrid, center: &[f64], half_widths: &[f64]) -> Self {
        Self::from_predicate(grid, |idx| {
            let pos = grid.position_of(idx);
            (0..grid.axes()).all(|a| {
                TorusGrid::wrapped_delta(pos[a], center[a]).abs() <= half_widths[a] + 1e-12
            })
        })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn union(&self, other: &SetMask) -> Result<SetMask> {
        if self.grid != other.grid {
            return Err(CoreError::GridMismatch("masks on different grids".into()));
        }
        Ok(SetMask {
            grid: self.grid,
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(a, b)| *a || *b)
                .collect(),
        })
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|b| **b).count()
    }

    /// Volume of the set: fraction of grid points inside.
    pub fn volume(&self) -> f64 {
        self.count() as f64 / self.mask.len() as f64
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn is_full(&self) -> bool {
        self.count() == self.mask.len()
    }
}

/// Deterministic fixed-order chunked summation; reductions must be
/// reproducible bit-for-bit across runs.
pub fn chunked_sum(values: &[f64]) -> f64 {
    const CHUNK: usize = 4096;
    let mut partials = Vec::with_capacity(values.len() / CHUNK + 1);
    for chunk in values.chunks(CHUNK) {
        let mut s = 0.0;
        for v in chunk {
            s += v;
        }
        partials.push(s);
    }
    let mut total = 0.0;
    for p in partials {
        total += p;
    }
    total
}

/// Integral of a scalar field against the unit-volume form: the mean.
pub fn integrate(f: &ScalarField) -> f64 {
    f.mean()
}

/// Integral of a density field: its mass.
pub fn integrate_density(f: &DensityField) -> f64 {
    f.mass()
}

/// Mean of `f * g` over the grid, i.e. the integral of the product.
pub fn integrate_product(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.check_same_grid(g)?;
    let prods: Vec<f64> = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| a * b)
        .collect();
    Ok(chunked_sum(&prods) / prods.len() as f64)
}

/// Integral of `f` restricted to the masked set.
pub fn integrate_on(f: &ScalarField, mask: &SetMask) -> Result<f64> {
    if f.grid() != mask.grid() {
        return Err(CoreError::GridMismatch(
            "field and mask on different grids".into(),
        ));
    }
    let vals: Vec<f64> = f
        .values()
        .iter()
        .zip(mask.mask())
        .map(|(v, m)| if *m { *v } else { 0.0 })
        .collect();
    Ok(chunked_sum(&vals) / vals.len() as f64)
}
