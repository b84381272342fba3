//! Cone-safeguarded Newton solvers for the nondegenerate m-Hessian equation
//! and for the exponential (beta-penalized) equation.
//!
//! Both solve in log-residual form. The linearization is applied matrix-free:
//! the gradient matrix Theta of h_m (the polarized mixed-density linear form,
//! see [`crate::algebra::density_gradient`]) is contracted against H(delta),
//! and the resulting system is solved by BiCGStab preconditioned with the
//! inverse flat Laplacian in Fourier space. A damped line search rejects any
//! step leaving the Garding cone.

use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use crate::algebra::{density_gradient, minor_sums, binomial, positive_part};
use crate::error::{CoreError, Result};
use crate::fft::SpectralOps;
use crate::field::{chunked_sum, DensityField, ScalarField};
use crate::grid::{TorusGrid, MAX_DIM};
use crate::hessian::{complex_hessian, hessian_entry, Backend, StencilWalker};

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub max_newton_iters: usize,
    /// Sup-norm tolerance on the log-residual.
    pub residual_tol: f64,
    /// Backtracking factor of the damped line search.
    pub damping_factor: f64,
    pub max_halvings: usize,
    /// Relative tolerance floor for the inner linear solves.
    pub linear_tol: f64,
    pub max_linear_iters: usize,
    pub backend: Backend,
    /// Optional start; defaults to the warm start described per solver.
    pub initial_guess: Option<ScalarField>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_newton_iters: 60,
            residual_tol: 1e-9,
            damping_factor: 0.5,
            max_halvings: 30,
            linear_tol: 1e-10,
            max_linear_iters: 400,
            backend: Backend::Spectral,
            initial_guess: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub final_residual: f64,
    /// Line-search trials rejected for leaving the cone.
    pub safeguard_activations: usize,
    pub converged: bool,
    /// Normalizing constant c of log h_m(u) - log f = c; at rounding level
    /// for consistent discretizations, O(h^2) for the FD backend.
    pub log_mass_shift: f64,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Pointwise data of one Newton iterate.
struct Eval {
    /// h_m values.
    hm: Vec<f64>,
    /// min over k = 1..=m and points of h_k; positive iff strictly in-cone.
    margin: f64,
    /// mean of trace(Theta)/(n h_m), the preconditioner scale.
    cbar: f64,
}

fn eval_pointwise(u: &ScalarField, m: usize, backend: Backend) -> Result<Eval> {
    let grid = u.grid();
    let n = grid.n();
    let total = grid.total_points();
    let mut hm = vec![0.0f64; total];
    let mut margin = f64::INFINITY;
    let mut cbar_sum = 0.0f64;
    let binom_m = binomial(n, m);
    let trace_coeff = (n - m + 1) as f64 / binom_m;
    let mut process = |idx: usize, a: &[Complex64]| {
        let e = minor_sums(a, n);
        for k in 1..=m {
            let dk = e[k] / binomial(n, k);
            if dk < margin {
                margin = dk;
            }
        }
        let d = e[m] / binom_m;
        hm[idx] = d;
        // trace T_{m-1}(A) = (n - m + 1) e_{m-1}(A)
        if d > 0.0 {
            cbar_sum += trace_coeff * e[m - 1] / (n as f64 * d);
        }
    };
    match backend {
        Backend::Spectral => {
            let h = complex_hessian(u, backend)?;
            let mut a = [Complex64::new(0.0, 0.0); MAX_DIM * MAX_DIM];
            for idx in 0..total {
                a[..n * n].copy_from_slice(h.matrix_at(idx));
                for j in 0..n {
                    a[j * n + j] += 1.0;
                }
                process(idx, &a[..n * n]);
            }
        }
        Backend::FiniteDifference => {
            let mut walker = StencilWalker::new(u);
            for idx in 0..total {
                let mut a = walker.hessian_matrix();
                for j in 0..n {
                    a[j * n + j] += 1.0;
                }
                process(idx, &a[..n * n]);
                walker.advance();
            }
        }
    }
    drop(process);
    Ok(Eval {
        hm,
        margin,
        cbar: cbar_sum / total as f64,
    })
}

/// Gradient matrices Theta(x) of h_m at I + H(u), materialized (spectral path).
fn theta_field(u: &ScalarField, m: usize, backend: Backend) -> Result<Vec<Complex64>> {
    let grid = u.grid();
    let n = grid.n();
    let total = grid.total_points();
    let h = complex_hessian(u, backend)?;
    let mut theta = vec![Complex64::new(0.0, 0.0); total * n * n];
    let mut a = [Complex64::new(0.0, 0.0); MAX_DIM * MAX_DIM];
    for idx in 0..total {
        a[..n * n].copy_from_slice(h.matrix_at(idx));
        for j in 0..n {
            a[j * n + j] += 1.0;
        }
        let th = density_gradient(&a[..n * n], n, m);
        theta[idx * n * n..(idx + 1) * n * n].copy_from_slice(&th[..n * n]);
    }
    Ok(theta)
}

/// The two equations sharing the Newton driver.
enum ProblemKind<'a> {
    /// log h_m(u) - log f = c, with c the mean log-residual (mass shift).
    Hessian { log_f: &'a [f64] },
    /// log h_m(u) - beta (u - f) - log(g + 1/beta) = 0.
    Exponential {
        f: &'a [f64],
        log_rhs0: &'a [f64],
        beta: f64,
    },
}

impl<'a> ProblemKind<'a> {
    /// Zeroth-order coefficient of the linearized operator.
    fn beta(&self) -> f64 {
        match self {
            ProblemKind::Hessian { .. } => 0.0,
            ProblemKind::Exponential { beta, .. } => *beta,
        }
    }

    fn project_mean(&self) -> bool {
        matches!(self, ProblemKind::Hessian { .. })
    }

    /// Residual G, its normalizing constant, and sup |G|.
    fn residual(&self, u: &[f64], hm: &[f64]) -> (Vec<f64>, f64, f64) {
        match self {
            ProblemKind::Hessian { log_f } => {
                let raw: Vec<f64> = hm
                    .iter()
                    .zip(log_f.iter())
                    .map(|(h, lf)| h.ln() - lf)
                    .collect();
                let c = chunked_sum(&raw) / raw.len() as f64;
                let mut sup = 0.0f64;
                let g: Vec<f64> = raw
                    .iter()
                    .map(|r| {
                        let v = r - c;
                        sup = sup.max(v.abs());
                        v
                    })
                    .collect();
                (g, c, sup)
            }
            ProblemKind::Exponential { f, log_rhs0, beta } => {
                let mut sup = 0.0f64;
                let g: Vec<f64> = hm
                    .iter()
                    .zip(u.iter())
                    .zip(f.iter().zip(log_rhs0.iter()))
                    .map(|((h, ui), (fi, lr))| {
                        let v = h.ln() - beta * (ui - fi) - lr;
                        sup = sup.max(v.abs());
                        v
                    })
                    .collect();
                (g, 0.0, sup)
            }
        }
    }
}

/// Matrix-free application of the linearized operator
///   J delta = trace(Theta(x) H(delta)(x)) / h_m(x) - beta delta(x),
/// optionally followed by the mean-zero projection.
struct JacobianOp<'a> {
    grid: TorusGrid,
    m: usize,
    backend: Backend,
    w: &'a [f64],
    beta: f64,
    project_mean: bool,
    /// Spectral path: materialized Theta (n^2 per point) and FFT plans.
    theta: Option<&'a [Complex64]>,
    ops: Option<&'a SpectralOps>,
    /// FD path: the current iterate, walked per apply.
    u: Option<&'a ScalarField>,
}

impl<'a> JacobianOp<'a> {
    fn apply(&self, delta: &[f64], out: &mut [f64]) {
        let n = self.grid.n();
        let total = self.grid.total_points();
        match self.backend {
            Backend::Spectral => {
                let ops = self.ops.expect("spectral ops present");
                let theta = self.theta.expect("theta present");
                let d_hat = ops.forward(delta);
                out.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..n {
                    for k in j..n {
                        let entry = ops.hessian_entry_from_spectrum(&d_hat, j, k);
                        if j == k {
                            for idx in 0..total {
                                out[idx] += theta[idx * n * n + j * n + j].re * entry[idx].re;
                            }
                        } else {
                            for idx in 0..total {
                                let th = theta[idx * n * n + j * n + k];
                                let e = entry[idx];
                                out[idx] += 2.0 * (th.re * e.re + th.im * e.im);
                            }
                        }
                    }
                }
                for idx in 0..total {
                    out[idx] = self.w[idx] * out[idx] - self.beta * delta[idx];
                }
            }
            Backend::FiniteDifference => {
                let u = self.u.expect("fd iterate present");
                let mut uw = StencilWalker::new(u);
                let mut dw = StencilWalker::from_parts(self.grid, delta);
                let inv_n = 1.0 / n as f64;
                for idx in 0..total {
                    let hd = dw.hessian_matrix();
                    let tr = if self.m == 1 {
                        let mut t = 0.0;
                        for j in 0..n {
                            t += hd[j * n + j].re;
                        }
                        t * inv_n
                    } else {
                        let mut a = uw.hessian_matrix();
                        for j in 0..n {
                            a[j * n + j] += 1.0;
                        }
                        let th = density_gradient(&a[..n * n], n, self.m);
                        let mut t = 0.0;
                        for j in 0..n {
                            t += th[j * n + j].re * hd[j * n + j].re;
                            for k in (j + 1)..n {
                                let thc = th[j * n + k];
                                let e = hd[j * n + k];
                                t += 2.0 * (thc.re * e.re + thc.im * e.im);
                            }
                        }
                        t
                    };
                    out[idx] = self.w[idx] * tr - self.beta * delta[idx];
                    if self.m > 1 {
                        uw.advance();
                    }
                    dw.advance();
                }
            }
        }
        if self.project_mean {
            let mean = chunked_sum(out) / out.len() as f64;
            for v in out.iter_mut() {
                *v -= mean;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Preconditioned BiCGStab from x0 = 0. Returns (x, relative residual, iters).
fn bicgstab(
    op: &JacobianOp,
    precond: &mut impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    max_iters: usize,
) -> (Vec<f64>, f64, usize) {
    let len = b.len();
    let mut x = vec![0.0f64; len];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return (x, 0.0, 0);
    }
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut p = vec![0.0f64; len];
    let mut v = vec![0.0f64; len];
    let mut t = vec![0.0f64; len];
    let mut rho_prev = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut first = true;
    for iter in 1..=max_iters {
        let mut rho = dot(&r_hat, &r);
        if rho.abs() < 1e-300 {
            // Breakdown: restart the shadow residual.
            r_hat.copy_from_slice(&r);
            rho = dot(&r_hat, &r);
            if rho.abs() < 1e-300 {
                return (x, norm2(&r) / bnorm, iter);
            }
        }
        if first {
            p.copy_from_slice(&r);
            first = false;
        } else {
            let beta = (rho / rho_prev) * (alpha / omega);
            for i in 0..len {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        let p_hat = precond(&p);
        op.apply(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom.abs() < 1e-300 {
            return (x, norm2(&r) / bnorm, iter);
        }
        alpha = rho / denom;
        // s lives in r.
        for i in 0..len {
            r[i] -= alpha * v[i];
        }
        if norm2(&r) / bnorm < rel_tol {
            for i in 0..len {
                x[i] += alpha * p_hat[i];
            }
            return (x, norm2(&r) / bnorm, iter);
        }
        let s_hat = precond(&r);
        op.apply(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt < 1e-300 {
            for i in 0..len {
                x[i] += alpha * p_hat[i];
            }
            return (x, norm2(&r) / bnorm, iter);
        }
        omega = dot(&t, &r) / tt;
        for i in 0..len {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
        }
        for i in 0..len {
            r[i] -= omega * t[i];
        }
        let rel = norm2(&r) / bnorm;
        if rel < rel_tol {
            return (x, rel, iter);
        }
        rho_prev = rho;
    }
    (x, norm2(&r) / bnorm, max_iters)
}

struct NewtonOutcome {
    u: ScalarField,
    iterations: usize,
    final_residual: f64,
    safeguards: usize,
    converged: bool,
    mass_shift: f64,
}

fn newton_loop(
    kind: &ProblemKind,
    u0: ScalarField,
    m: usize,
    cfg: &SolverConfig,
) -> Result<NewtonOutcome> {
    let grid = u0.grid();
    let ops = SpectralOps::new(grid);
    let mut u = u0;
    let mut eval = eval_pointwise(&u, m, cfg.backend)?;
    if eval.margin <= 0.0 {
        return Err(CoreError::ConeViolation(format!(
            "cone-infeasible start (margin {:.3e})",
            eval.margin
        )));
    }
    let (mut g, mut c, mut res) = kind.residual(u.values(), &eval.hm);
    let mut safeguards = 0usize;
    let mut iterations = 0usize;
    let mut converged = res <= cfg.residual_tol;
    let beta = kind.beta();

    while !converged && iterations < cfg.max_newton_iters {
        // Assemble the Jacobian context at the current iterate.
        let w: Vec<f64> = eval.hm.iter().map(|h| 1.0 / h).collect();
        let theta_store;
        let theta_ref = match cfg.backend {
            Backend::Spectral => {
                theta_store = theta_field(&u, m, cfg.backend)?;
                Some(theta_store.as_slice())
            }
            Backend::FiniteDifference => None,
        };
        let op = JacobianOp {
            grid,
            m,
            backend: cfg.backend,
            w: &w,
            beta,
            project_mean: kind.project_mean(),
            theta: theta_ref,
            ops: Some(&ops),
            u: Some(&u),
        };
        let cbar = eval.cbar.max(1e-8);
        let mut precond = |r: &[f64]| -> Vec<f64> {
            ops.inverse_shifted_trace_raw(r, cbar, -beta, cfg.backend)
        };
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        // Inexact Newton forcing: solve no tighter than needed this step.
        let eta = (0.5 * res).clamp(cfg.linear_tol, 0.1);
        let (mut delta, _lin_rel, _lin_iters) =
            bicgstab(&op, &mut precond, &rhs, eta, cfg.max_linear_iters);
        if kind.project_mean() {
            let mean = chunked_sum(&delta) / delta.len() as f64;
            for v in delta.iter_mut() {
                *v -= mean;
            }
        }

        // Damped line search: stay strictly inside the cone and decrease
        // the sup residual.
        let mut t = 1.0f64;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let trial = ScalarField::from_values(
                grid,
                u.values()
                    .iter()
                    .zip(&delta)
                    .map(|(a, d)| a + t * d)
                    .collect(),
            )?;
            let trial_eval = eval_pointwise(&trial, m, cfg.backend)?;
            if trial_eval.margin <= 0.0 {
                safeguards += 1;
                t *= cfg.damping_factor;
                continue;
            }
            let (tg, tc, tres) = kind.residual(trial.values(), &trial_eval.hm);
            if tres <= (1.0 - 1e-4 * t) * res {
                u = trial;
                eval = trial_eval;
                g = tg;
                c = tc;
                res = tres;
                accepted = true;
                break;
            }
            t *= cfg.damping_factor;
        }
        if !accepted {
            break;
        }
        iterations += 1;
        converged = res <= cfg.residual_tol;
    }

    Ok(NewtonOutcome {
        u,
        iterations,
        final_residual: res,
        safeguards,
        converged,
        mass_shift: c,
    })
}

/// Solve (omega + dd^c u)^m wedge omega^{n-m} = f omega^n for a smooth
/// positive normalized density f, in the mean-zero gauge.
pub fn solve_hessian(
    f: &DensityField,
    m: usize,
    cfg: &SolverConfig,
) -> Result<(ScalarField, SolverReport)> {
    let start_time = Instant::now();
    let grid = f.grid();
    let n = grid.n();
    if m < 1 || m > n {
        return Err(CoreError::OutOfRange(format!("m = {m} not in 1..={n}")));
    }
    let fmin = f.min();
    if !fmin.is_finite() || fmin <= 0.0 {
        return Err(CoreError::InvalidDensity(format!(
            "solve_hessian needs f > 0 pointwise (min {fmin:.3e})"
        )));
    }
    let mass = f.mass();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(CoreError::InvalidDensity(format!(
            "density mass {mass} differs from 1 beyond 1e-8"
        )));
    }
    let log_f: Vec<f64> = f.values().iter().map(|v| v.ln()).collect();

    let ops = SpectralOps::new(grid);
    let mut u0 = match &cfg.initial_guess {
        Some(g0) => {
            if g0.grid() != grid {
                return Err(CoreError::GridMismatch("initial guess grid".into()));
            }
            let mut u = g0.clone();
            u.remove_mean();
            u
        }
        None => {
            // Warm start: the m = 1 style linearization (m/n) trace H(u) = f - 1.
            let rhs: Vec<f64> = f.values().iter().map(|v| v - 1.0).collect();
            let vals =
                ops.inverse_shifted_trace_raw(&rhs, m as f64 / n as f64, 0.0, cfg.backend);
            ScalarField::from_values(grid, vals)?
        }
    };
    // Scale back into the cone if the start is infeasible.
    for _ in 0..60 {
        if eval_pointwise(&u0, m, cfg.backend)?.margin > 0.0 {
            break;
        }
        u0.scale(0.5);
    }

    let kind = ProblemKind::Hessian { log_f: &log_f };
    let outcome = newton_loop(&kind, u0, m, cfg)?;
    let mut u = outcome.u;
    u.remove_mean();
    let report = SolverReport {
        iterations: outcome.iterations,
        final_residual: outcome.final_residual,
        safeguard_activations: outcome.safeguards,
        converged: outcome.converged,
        log_mass_shift: outcome.mass_shift,
        wall_time_s: start_time.elapsed().as_secs_f64(),
    };
    Ok((u, report))
}

/// Solve the beta-penalized equation
///   (omega + dd^c u)^m wedge omega^{n-m} = e^{beta(u - f)} (H_m(f)^+ + omega^n/beta)
/// in log-residual form. The zeroth-order term fixes the additive constant.
pub fn solve_exponential(
    f: &ScalarField,
    m: usize,
    beta: f64,
    cfg: &SolverConfig,
) -> Result<(ScalarField, SolverReport)> {
    let start_time = Instant::now();
    let grid = f.grid();
    let n = grid.n();
    if m < 1 || m > n {
        return Err(CoreError::OutOfRange(format!("m = {m} not in 1..={n}")));
    }
    if !(beta > 0.0) {
        return Err(CoreError::OutOfRange(format!("beta must be > 0, got {beta}")));
    }
    f.ensure_finite()?;
    let signed = crate::algebra::hessian_density_signed(f, m, cfg.backend)?;
    let g = positive_part(&signed);
    let log_rhs0: Vec<f64> = g.values().iter().map(|v| (v + 1.0 / beta).ln()).collect();

    let mut u0 = match &cfg.initial_guess {
        Some(g0) => {
            if g0.grid() != grid {
                return Err(CoreError::GridMismatch("initial guess grid".into()));
            }
            g0.clone()
        }
        None => ScalarField::constant(grid, f.min()),
    };
    if eval_pointwise(&u0, m, cfg.backend)?.margin <= 0.0 {
        u0 = ScalarField::constant(grid, f.min());
    }

    let kind = ProblemKind::Exponential {
        f: f.values(),
        log_rhs0: &log_rhs0,
        beta,
    };
    let outcome = newton_loop(&kind, u0, m, cfg)?;
    let report = SolverReport {
        iterations: outcome.iterations,
        final_residual: outcome.final_residual,
        safeguard_activations: outcome.safeguards,
        converged: outcome.converged,
        log_mass_shift: 0.0,
        wall_time_s: start_time.elapsed().as_secs_f64(),
    };
    Ok((outcome.u, report))
}

/// Discrete hessian entries of `u` streamed one (j, k) pair at a time;
/// exposed for modules needing entry access without full materialization.
pub fn hessian_entry_field(
    u: &ScalarField,
    j: usize,
    k: usize,
    backend: Backend,
) -> Vec<Complex64> {
    hessian_entry(u, j, k, backend)
}
