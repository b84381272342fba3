//! Assembly of the complex Hessian H(u) in omega-units.
//!
//! With the flat background form chosen as (i/pi) sum_j dz_j wedge dzbar_j,
//! the matrix of omega + dd^c u relative to omega is exactly I + H(u) with
//! H_jk = d^2 u / dz_j dzbar_k. The only unit constant surviving in real
//! coordinates is the Wirtinger factor 1/4:
//!   H_jk = (1/4) [ (u_{x_j x_k} + u_{y_j y_k}) + i (u_{x_j y_k} - u_{y_j x_k}) ].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fft::SpectralOps;
use crate::field::{HermitianHessianField, ScalarField};
use crate::grid::{TorusGrid, MAX_AXES, MAX_DIM};

/// Unit constant mapping real second derivatives to d^2/dz dzbar.
pub const WIRTINGER_FACTOR: f64 = 0.25;

/// Differentiation backend for all Hessian assembly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// FFT derivatives, exact for resolvable trigonometric polynomials.
    Spectral,
    /// Second-order central differences, the cross-check backend.
    FiniteDifference,
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Spectral
    }
}

/// Full complex Hessian field of `u` with the configured backend.
pub fn complex_hessian(u: &ScalarField, backend: Backend) -> Result<HermitianHessianField> {
    u.ensure_finite()?;
    let grid = u.grid();
    let n = grid.n();
    let total = grid.total_points();
    let mut out = HermitianHessianField::zeros(grid);
    match backend {
        Backend::Spectral => {
            let ops = SpectralOps::new(grid);
            let u_hat = ops.forward(u.values());
            for j in 0..n {
                for k in j..n {
                    let entry = ops.hessian_entry_from_spectrum(&u_hat, j, k);
                    let entries = out.entries_mut();
                    if j == k {
                        for idx in 0..total {
                            entries[idx * n * n + j * n + j] = Complex64::new(entry[idx].re, 0.0);
                        }
                    } else {
                        for idx in 0..total {
                            entries[idx * n * n + j * n + k] = entry[idx];
                            entries[idx * n * n + k * n + j] = entry[idx].conj();
                        }
                    }
                }
            }
        }
        Backend::FiniteDifference => {
            let mut walker = StencilWalker::new(u);
            let entries = out.entries_mut();
            for idx in 0..total {
                let m = walker.hessian_matrix();
                entries[idx * n * n..(idx + 1) * n * n].copy_from_slice(&m[..n * n]);
                walker.advance();
            }
        }
    }
    Ok(out)
}

/// One complex Hessian entry H_jk(u) as a field, without materializing the
/// full matrix field. Spectral callers should reuse a forward transform via
/// [`SpectralOps::hessian_entry_from_spectrum`] when computing several entries.
pub fn hessian_entry(u: &ScalarField, j: usize, k: usize, backend: Backend) -> Vec<Complex64> {
    match backend {
        Backend::Spectral => {
            let ops = SpectralOps::new(u.grid());
            let u_hat = ops.forward(u.values());
            ops.hessian_entry_from_spectrum(&u_hat, j, k)
        }
        Backend::FiniteDifference => fd_hessian_entry(u, j, k),
    }
}

pub fn fd_hessian_entry(u: &ScalarField, j: usize, k: usize) -> Vec<Complex64> {
    let total = u.grid().total_points();
    let mut out = vec![Complex64::new(0.0, 0.0); total];
    let mut walker = StencilWalker::new(u);
    for slot in out.iter_mut() {
        *slot = walker.entry(j, k);
        walker.advance();
    }
    out
}

/// Incremental lattice walker evaluating central-difference second
/// derivatives point by point without materializing intermediate fields.
pub struct StencilWalker<'a> {
    grid: TorusGrid,
    u: &'a [f64],
    idx: usize,
    coords: [usize; MAX_AXES],
    /// delta_plus[a][c]: flat-index change for a +1 step along axis a at coord c.
    delta_plus: Vec<Vec<isize>>,
    delta_minus: Vec<Vec<isize>>,
    inv_h2: f64,
}

impl<'a> StencilWalker<'a> {
    pub fn new(u: &'a ScalarField) -> Self {
        Self::from_parts(u.grid(), u.values())
    }

    pub fn from_parts(grid: TorusGrid, values: &'a [f64]) -> Self {
        let u = values;
        let n = grid.points_per_axis();
        let mut delta_plus = Vec::with_capacity(grid.axes());
        let mut delta_minus = Vec::with_capacity(grid.axes());
        for axis in 0..grid.axes() {
            let stride = grid.stride(axis) as isize;
            let mut plus = Vec::with_capacity(n);
            let mut minus = Vec::with_capacity(n);
            for c in 0..n {
                plus.push(if c + 1 == n {
                    -stride * (n as isize - 1)
                } else {
                    stride
                });
                minus.push(if c == 0 {
                    stride * (n as isize - 1)
                } else {
                    -stride
                });
            }
            delta_plus.push(plus);
            delta_minus.push(minus);
        }
        let h = grid.spacing();
        Self {
            grid,
            u,
            idx: 0,
            coords: [0; MAX_AXES],
            delta_plus,
            delta_minus,
            inv_h2: 1.0 / (h * h),
        }
    }

    pub fn advance(&mut self) {
        self.idx += 1;
        let n = self.grid.points_per_axis();
        for a in (0..self.grid.axes()).rev() {
            self.coords[a] += 1;
            if self.coords[a] == n {
                self.coords[a] = 0;
            } else {
                break;
            }
        }
    }

    #[inline]
    fn at(&self, offset: isize) -> f64 {
        self.u[(self.idx as isize + offset) as usize]
    }

    /// Central-difference second derivative along axes a, b at the cursor.
    #[inline]
    pub fn second_derivative(&self, a: usize, b: usize) -> f64 {
        if a == b {
            let dp = self.delta_plus[a][self.coords[a]];
            let dm = self.delta_minus[a][self.coords[a]];
            (self.at(dp) - 2.0 * self.u[self.idx] + self.at(dm)) * self.inv_h2
        } else {
            let ap = self.delta_plus[a][self.coords[a]];
            let am = self.delta_minus[a][self.coords[a]];
            let bp = self.delta_plus[b][self.coords[b]];
            let bm = self.delta_minus[b][self.coords[b]];
            (self.at(ap + bp) - self.at(ap + bm) - self.at(am + bp) + self.at(am + bm))
                * 0.25
                * self.inv_h2
        }
    }

    /// H_jk(u) at the cursor.
    #[inline]
    pub fn entry(&self, j: usize, k: usize) -> Complex64 {
        let xj = 2 * j;
        let yj = 2 * j + 1;
        let xk = 2 * k;
        let yk = 2 * k + 1;
        let re = self.second_derivative(xj, xk) + self.second_derivative(yj, yk);
        let im = if j == k {
            0.0
        } else {
            self.second_derivative(xj, yk) - self.second_derivative(yj, xk)
        };
        Complex64::new(WIRTINGER_FACTOR * re, WIRTINGER_FACTOR * im)
    }

    /// Full Hermitian matrix I*0 + H(u) at the cursor (row-major, n x n in the
    /// leading block of the fixed-size array).
    #[inline]
    pub fn hessian_matrix(&self) -> [Complex64; MAX_DIM * MAX_DIM] {
        let n = self.grid.n();
        let mut m = [Complex64::new(0.0, 0.0); MAX_DIM * MAX_DIM];
        for j in 0..n {
            for k in j..n {
                let e = self.entry(j, k);
                m[j * n + k] = e;
                if j != k {
                    m[k * n + j] = e.conj();
                }
            }
        }
        m
    }
}

/// One mollification pass of radius 2h: the separable binomial kernel
/// (1,4,6,4,1)/16 applied along every axis with periodic wrap.
pub fn mollify(f: &ScalarField) -> ScalarField {
    const W: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let grid = f.grid();
    let n = grid.points_per_axis();
    let total = grid.total_points();
    let mut cur = f.values().to_vec();
    let mut line = vec![0.0f64; n];
    for axis in 0..grid.axes() {
        let stride = grid.stride(axis);
        let block = n * stride;
        let blocks = total / block;
        for b in 0..blocks {
            let base_block = b * block;
            for inner in 0..stride {
                let base = base_block + inner;
                for t in 0..n {
                    line[t] = cur[base + t * stride];
                }
                for t in 0..n {
                    let mut s = 0.0;
                    for (o, w) in W.iter().enumerate() {
                        let tt = (t + n + o - 2) % n;
                        s += w * line[tt];
                    }
                    cur[base + t * stride] = s;
                }
            }
        }
    }
    ScalarField::from_values(grid, cur).expect("same grid")
}

/// Radius of [`mollify`] in grid cells, recorded in reports.
pub const MOLLIFY_RADIUS_CELLS: u32 = 2;
