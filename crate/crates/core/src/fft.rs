//! FFT passes over the 2n-dimensional periodic lattice and the Fourier-side
//! machinery built on them: spectral derivative symbols and the flat-Laplacian
//! preconditioner solves.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::field::ScalarField;
use crate::grid::{TorusGrid, MAX_AXES};
use crate::hessian::Backend;

const PI: f64 = std::f64::consts::PI;

/// Cached FFT plans and frequency tables for one grid.
pub struct SpectralOps {
    grid: TorusGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Derivative-convention frequency (Nyquist zeroed) per mode index.
    freq_deriv: Vec<f64>,
}

impl SpectralOps {
    pub fn new(grid: TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points_per_axis();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let freq_deriv = (0..n).map(|k| grid.frequency_deriv(k) as f64).collect();
        Self {
            grid,
            fwd,
            inv,
            freq_deriv,
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.grid.points_per_axis();
        let total = self.grid.total_points();
        let plan = if inverse { &self.inv } else { &self.fwd };
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..self.grid.axes() {
            let stride = self.grid.stride(axis);
            let block = n * stride;
            let blocks = total / block;
            for b in 0..blocks {
                let base_block = b * block;
                for inner in 0..stride {
                    let base = base_block + inner;
                    for t in 0..n {
                        line[t] = data[base + t * stride];
                    }
                    plan.process(&mut line);
                    for t in 0..n {
                        data[base + t * stride] = line[t];
                    }
                }
            }
        }
        if inverse {
            let scale = 1.0 / total as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }

    /// Forward transform of a real field (unnormalized coefficients).
    pub fn forward(&self, real: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = real.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    /// Inverse transform, returning the real part.
    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spec, true);
        spec.into_iter().map(|c| c.re).collect()
    }

    pub fn forward_complex(&self, mut data: Vec<Complex64>) -> Vec<Complex64> {
        self.transform(&mut data, false);
        data
    }

    pub fn inverse_complex(&self, mut spec: Vec<Complex64>) -> Vec<Complex64> {
        self.transform(&mut spec, true);
        spec
    }

    /// Visit every mode with its derivative-convention frequency vector.
    /// The callback maps (frequencies, coefficient) to a new coefficient.
    pub fn map_modes(
        &self,
        spec: &[Complex64],
        mut f: impl FnMut(&[f64], Complex64) -> Complex64,
    ) -> Vec<Complex64> {
        let axes = self.grid.axes();
        let n = self.grid.points_per_axis();
        let mut out = vec![Complex64::new(0.0, 0.0); spec.len()];
        let mut coords = [0usize; MAX_AXES];
        let mut freqs = [0.0f64; MAX_AXES];
        for a in 0..axes {
            freqs[a] = self.freq_deriv[0];
        }
        for idx in 0..spec.len() {
            out[idx] = f(&freqs[..axes], spec[idx]);
            // Increment the mixed-radix counter (last axis fastest).
            for a in (0..axes).rev() {
                coords[a] += 1;
                if coords[a] == n {
                    coords[a] = 0;
                    freqs[a] = self.freq_deriv[0];
                } else {
                    freqs[a] = self.freq_deriv[coords[a]];
                    break;
                }
            }
        }
        out
    }

    /// Spectrum multiplier for the complex Hessian entry H_jk:
    /// -pi^2 (p_xj - i p_yj)(p_xk + i p_yk).
    pub fn hessian_symbol(freqs: &[f64], j: usize, k: usize) -> Complex64 {
        let a = Complex64::new(freqs[2 * j], -freqs[2 * j + 1]);
        let c = Complex64::new(freqs[2 * k], freqs[2 * k + 1]);
        -PI * PI * a * c
    }

    /// One entry field of the complex Hessian from a precomputed spectrum.
    pub fn hessian_entry_from_spectrum(
        &self,
        u_hat: &[Complex64],
        j: usize,
        k: usize,
    ) -> Vec<Complex64> {
        let spec = self.map_modes(u_hat, |freqs, c| Self::hessian_symbol(freqs, j, k) * c);
        self.inverse_complex(spec)
    }

    /// trace H(u) as a real field (equals Laplacian(u)/4 in these units).
    pub fn hessian_trace(&self, u: &ScalarField) -> ScalarField {
        let u_hat = self.forward(u.values());
        let spec = self.map_modes(&u_hat, |freqs, c| {
            let mut s = 0.0;
            for f in freqs {
                s += f * f;
            }
            -PI * PI * s * c
        });
        ScalarField::from_values(self.grid, self.inverse_real(spec)).expect("same grid")
    }

    /// Symbol of -(trace H) for the given backend: pi^2 |p~|^2 (spectral) or
    /// the 3-point central-difference equivalent. Nonnegative.
    pub fn neg_trace_symbol(&self, freqs: &[f64], backend: Backend) -> f64 {
        match backend {
            Backend::Spectral => {
                let mut s = 0.0;
                for f in freqs {
                    s += f * f;
                }
                PI * PI * s
            }
            Backend::FiniteDifference => {
                let n = self.grid.points_per_axis() as f64;
                let h2 = self.grid.spacing() * self.grid.spacing();
                let mut s = 0.0;
                for f in freqs {
                    // Note: the symbol of D^2 along one axis at integer
                    // frequency p is (2 cos(2 pi p / N) - 2)/h^2.
                    s += (2.0 - 2.0 * (2.0 * PI * f / n).cos()) / h2;
                }
                0.25 * s
            }
        }
    }

    /// Solve (scale * trace H + shift) v = rhs in Fourier space. With
    /// shift = 0 the constant mode of the answer is set to zero (mean gauge).
    /// `scale` must be positive; `shift` <= 0 matches the -beta u term of the
    /// exponential equation's linearization.
    pub fn inverse_shifted_trace(
        &self,
        rhs: &ScalarField,
        scale: f64,
        shift: f64,
        backend: Backend,
    ) -> ScalarField {
        let values = self.inverse_shifted_trace_raw(rhs.values(), scale, shift, backend);
        ScalarField::from_values(self.grid, values).expect("same grid")
    }

    pub fn inverse_shifted_trace_raw(
        &self,
        rhs: &[f64],
        scale: f64,
        shift: f64,
        backend: Backend,
    ) -> Vec<f64> {
        let r_hat = self.forward(rhs);
        let spec = self.map_modes(&r_hat, |freqs, c| {
            let denom = -scale * self.neg_trace_symbol(freqs, backend) + shift;
            if denom.abs() < 1e-300 {
                Complex64::new(0.0, 0.0)
            } else {
                c / denom
            }
        });
        self.inverse_real(spec)
    }
}
