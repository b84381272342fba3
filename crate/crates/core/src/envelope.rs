//! Projection onto (omega, m)-subharmonic functions by beta-continuation,
//! orthogonality diagnostics, regularization of singular functions, relative
//! extremal functions and Hessian capacity.
//!
//! Envelopes are computed only through the beta-scheme: solve the penalized
//! equation along a geometric beta schedule, warm-starting each solve from the
//! previous one, and take the last iterate as P(f).

use serde::Serialize;

use crate::algebra::hessian_density_signed;
use crate::error::{CoreError, Result};
use crate::field::{chunked_sum, ScalarField, SetMask};
use crate::hessian::mollify;
use crate::solver::{solve_exponential, SolverConfig};

#[derive(Clone, Copy, Debug)]
pub struct BetaSchedule {
    pub beta0: f64,
    pub growth: f64,
    pub beta_max: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self {
            beta0: 1.0,
            growth: 2.0,
            beta_max: 16384.0,
        }
    }
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 > 0.0) || !(self.growth > 1.0) || self.beta_max < self.beta0 {
            return Err(CoreError::OutOfRange(format!(
                "invalid beta schedule: beta0 {}, growth {}, beta_max {}",
                self.beta0, self.growth, self.beta_max
            )));
        }
        Ok(())
    }

    pub fn betas(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut b = self.beta0;
        while b < self.beta_max * (1.0 - 1e-12) {
            out.push(b);
            b *= self.growth;
        }
        out.push(self.beta_max);
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BetaTraceEntry {
    pub beta: f64,
    pub iterations: usize,
    pub residual: f64,
    /// sup (u_beta - f); the upper-bound theorem keeps this at roundoff slack.
    pub sup_excess: f64,
    /// Hessian mass of u_beta on { u_beta < f - eps } at eps = contact_tol.
    pub defect: f64,
}

#[derive(Clone, Debug)]
pub struct EnvelopeResult {
    pub p: ScalarField,
    pub contact_mask: Vec<bool>,
    pub contact_tol: f64,
    /// Final defect integral at eps = contact_tol.
    pub defect: f64,
    pub trace: Vec<BetaTraceEntry>,
}

/// Default contact tolerance: 1e-4 times the obstacle oscillation, floored at
/// 1e-6 so constant obstacles keep a nonempty contact set under the finite
/// beta bias.
pub fn default_contact_tol(f: &ScalarField) -> f64 {
    (1e-4 * f.oscillation()).max(1e-6)
}

/// Hessian mass of `p` carried by the set { p < f - eps }.
fn defect_integral(
    p: &ScalarField,
    f: &ScalarField,
    m: usize,
    eps: f64,
    backend: crate::hessian::Backend,
) -> Result<f64> {
    let dens = hessian_density_signed(p, m, backend)?;
    let vals: Vec<f64> = dens
        .values()
        .iter()
        .zip(p.values().iter().zip(f.values()))
        .map(|(d, (pv, fv))| if *pv < fv - eps { *d } else { 0.0 })
        .collect();
    Ok(chunked_sum(&vals) / vals.len() as f64)
}

/// Projection P(f): the maximal (omega, m)-sh function below f, computed by
/// beta-continuation of the penalized equation.
pub fn project(
    f: &ScalarField,
    m: usize,
    sched: &BetaSchedule,
    cfg: &SolverConfig,
) -> Result<EnvelopeResult> {
    sched.validate()?;
    f.ensure_finite()?;
    let contact_tol = default_contact_tol(f);
    let mut trace = Vec::new();
    let mut current: Option<ScalarField> = cfg.initial_guess.clone();
    for beta in sched.betas() {
        let mut solve_cfg = cfg.clone();
        solve_cfg.initial_guess = current.take();
        let (u, report) = solve_exponential(f, m, beta, &solve_cfg)?;
        if !report.converged {
            return Err(CoreError::NonConvergence(format!(
                "beta = {beta}: residual {:.3e} after {} iterations",
                report.final_residual, report.iterations
            )));
        }
        let sup_excess = u
            .values()
            .iter()
            .zip(f.values())
            .fold(f64::NEG_INFINITY, |acc, (a, b)| acc.max(a - b));
        let defect = defect_integral(&u, f, m, contact_tol, cfg.backend)?;
        trace.push(BetaTraceEntry {
            beta,
            iterations: report.iterations,
            residual: report.final_residual,
            sup_excess,
            defect,
        });
        current = Some(u);
    }
    let p = current.expect("schedule is nonempty");
    let contact_mask = p
        .values()
        .iter()
        .zip(f.values())
        .map(|(a, b)| (a - b).abs() <= contact_tol)
        .collect();
    let defect = trace.last().map(|t| t.defect).unwrap_or(0.0);
    Ok(EnvelopeResult {
        p,
        contact_mask,
        contact_tol,
        defect,
        trace,
    })
}

/// sup |P(f) - P(g)| - sup |f - g|; nonpositive up to scheme tolerance by the
/// projection's 1-Lipschitz property.
pub fn lipschitz_check(
    f: &ScalarField,
    g: &ScalarField,
    m: usize,
    sched: &BetaSchedule,
    cfg: &SolverConfig,
) -> Result<f64> {
    let pf = project(f, m, sched, cfg)?;
    let pg = project(g, m, sched, cfg)?;
    let lhs = pf.p.sup_distance(&pg.p)?;
    let rhs = f.sup_distance(g)?;
    Ok(lhs - rhs)
}

/// Hessian mass of P(f) off the eps-contact set, recomputed from a result.
pub fn orthogonality_defect(
    res: &EnvelopeResult,
    f: &ScalarField,
    m: usize,
    eps: f64,
    backend: crate::hessian::Backend,
) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(CoreError::OutOfRange("eps must be positive".into()));
    }
    defect_integral(&res.p, f, m, eps, backend)
}

/// Decreasing smooth cone-valid approximants of a singular function:
/// phi_j = P( mollify(max(phi, -2^j)) + 2^-j ), with mollification applied
/// only where the truncation is active.
pub fn regularize(
    phi: &ScalarField,
    m: usize,
    levels: usize,
    sched: &BetaSchedule,
    cfg: &SolverConfig,
) -> Result<Vec<ScalarField>> {
    if levels < 1 {
        return Err(CoreError::OutOfRange("levels must be >= 1".into()));
    }
    if phi
        .values()
        .iter()
        .all(|v| crate::field::is_sentinel(*v))
    {
        return Err(CoreError::OutOfRange(
            "regularize: every value is a sentinel".into(),
        ));
    }
    let mut out = Vec::with_capacity(levels);
    let mut warm: Option<ScalarField> = None;
    for j in 1..=levels {
        let floor = -(2f64.powi(j as i32));
        let truncated = phi.truncate_below(floor);
        let truncation_active = phi.values().iter().any(|v| *v < floor);
        let smooth = if truncation_active {
            mollify(&truncated)
        } else {
            truncated
        };
        let mut obstacle = smooth;
        obstacle.add_constant(2f64.powi(-(j as i32)));
        let mut level_cfg = cfg.clone();
        level_cfg.initial_guess = warm.take();
        let res = project(&obstacle, m, sched, &level_cfg)?;
        warm = Some(res.p.clone());
        out.push(res.p);
    }
    Ok(out)
}

/// Relative extremal function h_{m,E}: the projection of the pre-smoothed
/// obstacle (-1 on E, 0 elsewhere).
pub fn relative_extremal(
    e: &SetMask,
    m: usize,
    sched: &BetaSchedule,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    let grid = e.grid();
    let indicator = ScalarField::from_values(
        grid,
        e.mask().iter().map(|b| if *b { -1.0 } else { 0.0 }).collect(),
    )?;
    let obstacle = mollify(&indicator);
    let res = project(&obstacle, m, sched, cfg)?;
    Ok(res.p)
}

/// Hessian m-capacity of a grid set: integral of (-h) H_m(h) for the relative
/// extremal function h.
pub fn capacity(e: &SetMask, m: usize, sched: &BetaSchedule, cfg: &SolverConfig) -> Result<f64> {
    let h = relative_extremal(e, m, sched, cfg)?;
    capacity_of_extremal(&h, m, cfg.backend)
}

/// Capacity integral from an already-computed extremal function.
pub fn capacity_of_extremal(
    h: &ScalarField,
    m: usize,
    backend: crate::hessian::Backend,
) -> Result<f64> {
    let dens = hessian_density_signed(h, m, backend)?;
    let vals: Vec<f64> = dens
        .values()
        .iter()
        .zip(h.values())
        .map(|(d, hv)| -hv * d)
        .collect();
    Ok(chunked_sum(&vals) / vals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    const PI: f64 = std::f64::consts::PI;

    fn short_sched() -> BetaSchedule {
        BetaSchedule {
            beta0: 1.0,
            growth: 4.0,
            beta_max: 4096.0,
        }
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn schedule_contains_endpoints() {
        let s = BetaSchedule::default();
        let betas = s.betas();
        assert_eq!(betas[0], 1.0);
        assert_eq!(*betas.last().unwrap(), 16384.0);
        assert_eq!(betas.len(), 15);
    }

    #[test]
    fn cone_valid_obstacle_is_fixed() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let f = ScalarField::from_fn(grid, |i| {
            let p = grid.position_of(i);
            0.02 * ((2.0 * PI * p[0]).cos() + (2.0 * PI * p[3]).cos())
        });
        let res = project(&f, 2, &short_sched(), &cfg()).unwrap();
        let err = res.p.sup_distance(&f).unwrap();
        assert!(err <= 1e-6, "P(f) differs from cone-valid f by {err:.3e}");
        assert!(res.defect.abs() <= 1e-12);
        assert!(res.contact_mask.iter().all(|b| *b));
    }

    #[test]
    fn constant_obstacle() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let f = ScalarField::constant(grid, 0.7);
        let res = project(&f, 1, &short_sched(), &cfg()).unwrap();
        for v in res.p.values() {
            assert!((v - 0.7).abs() < 1e-6);
        }
        assert!(res.defect.abs() <= 1e-12);
    }

    #[test]
    fn additive_equivariance() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let f = ScalarField::from_fn(grid, |i| {
            let p = grid.position_of(i);
            0.5 * (2.0 * PI * p[0]).cos()
        });
        let mut fc = f.clone();
        fc.add_constant(0.37);
        let s = short_sched();
        let pf = project(&f, 1, &s, &cfg()).unwrap();
        let pfc = project(&fc, 1, &s, &cfg()).unwrap();
        let mut shifted = pf.p.clone();
        shifted.add_constant(0.37);
        let d = pfc.p.sup_distance(&shifted).unwrap();
        assert!(d <= 1e-8, "equivariance gap {d:.3e}");
    }

    #[test]
    fn monotone_in_obstacle() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let f = ScalarField::from_fn(grid, |i| {
            let p = grid.position_of(i);
            0.4 * (2.0 * PI * p[0]).cos()
        });
        let g = ScalarField::from_fn(grid, |i| {
            let p = grid.position_of(i);
            0.4 * (2.0 * PI * p[0]).cos() + 0.1 + 0.05 * (2.0 * PI * p[2]).cos()
        });
        let s = short_sched();
        let pf = project(&f, 1, &s, &cfg()).unwrap();
        let pg = project(&g, 1, &s, &cfg()).unwrap();
        let worst = pf
            .p
            .values()
            .iter()
            .zip(pg.p.values())
            .fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b));
        assert!(worst <= 1e-6, "monotonicity violated by {worst:.3e}");
    }

    #[test]
    fn lipschitz_trivial_cases() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let f = ScalarField::from_fn(grid, |i| {
            let p = grid.position_of(i);
            0.3 * (2.0 * PI * p[0]).cos()
        });
        let s = short_sched();
        let same = lipschitz_check(&f, &f, 1, &s, &cfg()).unwrap();
        assert!(same <= 1e-12);
        let mut g = f.clone();
        g.add_constant(0.25);
        let shifted = lipschitz_check(&f, &g, 1, &s, &cfg()).unwrap();
        assert!(shifted <= 1e-6, "gap {shifted:.3e}");
    }

    #[test]
    fn extremal_endpoints_and_capacity() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let s = short_sched();
        let empty = SetMask::empty(grid);
        let h = relative_extremal(&empty, 2, &s, &cfg()).unwrap();
        assert!(h.sup_norm() <= 1e-6, "h for empty set: {}", h.sup_norm());
        assert!(capacity(&empty, 2, &s, &cfg()).unwrap().abs() <= 1e-6);

        let full = SetMask::full(grid);
        let h = relative_extremal(&full, 2, &s, &cfg()).unwrap();
        for v in h.values() {
            assert!((v + 1.0).abs() <= 1e-6);
        }
        let cap = capacity(&full, 2, &s, &cfg()).unwrap();
        assert!((cap - 1.0).abs() <= 1e-6, "Cap(X) = {cap}");
    }

    #[test]
    fn box_capacity_monotone() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let s = short_sched();
        let small = SetMask::torus_box(grid, &[0.5; 4], &[0.12; 4]);
        let large = SetMask::torus_box(grid, &[0.5; 4], &[0.25; 4]);
        let c_small = capacity(&small, 1, &s, &cfg()).unwrap();
        let c_large = capacity(&large, 1, &s, &cfg()).unwrap();
        assert!(c_small > 0.0);
        assert!(c_small <= c_large + 1e-4, "{c_small} vs {c_large}");
        assert!(c_large < 1.0);
    }

    #[test]
    fn regularize_smooth_cone_valid() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let phi = ScalarField::from_fn(grid, |i| {
            let p = grid.position_of(i);
            0.02 * ((2.0 * PI * p[0]).cos() + (2.0 * PI * p[3]).cos())
        });
        let s = short_sched();
        let seq = regularize(&phi, 2, 4, &s, &cfg()).unwrap();
        let mut prev: Option<&ScalarField> = None;
        for (j, pj) in seq.iter().enumerate() {
            let delta = 2f64.powi(-(j as i32 + 1));
            let above = pj
                .values()
                .iter()
                .zip(phi.values())
                .fold(f64::INFINITY, |m, (a, b)| m.min(a - b));
            assert!(above >= -1e-6, "phi_j dips below phi by {above:.3e}");
            let err = pj.sup_distance(&phi).unwrap();
            assert!(err <= delta + 1e-5, "level {j}: err {err:.3e} delta {delta}");
            if let Some(p) = prev {
                let inc = pj
                    .values()
                    .iter()
                    .zip(p.values())
                    .fold(f64::NEG_INFINITY, |m, (now, before)| m.max(now - before));
                assert!(inc <= 1e-6, "sequence not decreasing: {inc:.3e}");
            }
            prev = Some(pj);
        }
    }

    #[test]
    fn regularize_rejects_all_sentinel() {
        let grid = TorusGrid::new(1, 8).unwrap();
        let phi = ScalarField::constant(grid, crate::field::NEG_INFINITY_SENTINEL);
        assert!(regularize(&phi, 1, 2, &short_sched(), &cfg()).is_err());
    }

    #[test]
    fn kinked_obstacle_defect_decreases() {
        // max of two cone-valid fields has a kink; the envelope's defect trace
        // must be non-increasing in beta.
        let grid = TorusGrid::new(2, 16).unwrap();
        let a = ScalarField::from_fn(grid, |i| {
            let p = grid.position_of(i);
            0.3 * (2.0 * PI * p[0]).cos()
        });
        let res = project(&a, 1, &short_sched(), &cfg()).unwrap();
        for w in res.trace.windows(2) {
            assert!(
                w[1].defect <= w[0].defect + 1e-6,
                "defect increased: {} -> {}",
                w[0].defect,
                w[1].defect
            );
        }
        // Genuine non-contact region for an amplitude-0.3 cosine at m = 1.
        assert!(res.contact_mask.iter().any(|b| !*b));
        assert!(res.contact_mask.iter().any(|b| *b));
    }
}
