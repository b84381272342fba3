//! Pointwise algebra of the m-Hessian operator: elementary symmetric
//! polynomials, eigenvalues of I + H, cone tests, normalized densities,
//! positive parts and mixed-discriminant densities.
//!
//! The normalized density of order k is
//!   h_k(u) = S_k(mu) / binom(n, k),  mu = eigenvalues of I + H(u),
//! so that h_k(0) = 1 and (omega + dd^c u)^k wedge omega^{n-k} = h_k * omega^n.

use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::field::{DensityField, EigenField, HermitianHessianField, ScalarField};
use crate::grid::MAX_DIM;
use crate::hessian::{complex_hessian, Backend};

/// Default absolute tolerance for cone comparisons (densities are O(1)).
pub const CONE_TOL: f64 = 1e-9;

/// Relative Hermitian-asymmetry tolerance accepted at assembly.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub fn binomial(n: usize, k: usize) -> f64 {
    let mut num = 1.0;
    let mut den = 1.0;
    for i in 0..k {
        num *= (n - i) as f64;
        den *= (i + 1) as f64;
    }
    num / den
}

/// Elementary symmetric polynomial S_k(lambda); S_0 = 1.
pub fn elementary_symmetric(lambda: &[f64], k: usize) -> Result<f64> {
    if k > lambda.len() {
        return Err(CoreError::OutOfRange(format!(
            "S_{k} undefined for a vector of length {}",
            lambda.len()
        )));
    }
    // e_k via the stable product expansion prod (1 + t lambda_i).
    let mut e = [0.0f64; MAX_DIM + 1];
    e[0] = 1.0;
    for (i, l) in lambda.iter().enumerate() {
        for j in (1..=(i + 1).min(lambda.len())).rev() {
            e[j] += l * e[j - 1];
        }
    }
    Ok(e[k])
}

/// Sums of principal k x k minors e_k(A) for k = 0..=n of a Hermitian matrix
/// (row-major slice of n^2 complex entries). Real by Hermitian symmetry.
pub fn minor_sums(a: &[Complex64], n: usize) -> [f64; MAX_DIM + 1] {
    let mut e = [0.0f64; MAX_DIM + 1];
    e[0] = 1.0;
    match n {
        1 => {
            e[1] = a[0].re;
        }
        2 => {
            e[1] = a[0].re + a[3].re;
            e[2] = a[0].re * a[3].re - a[1].norm_sqr();
        }
        3 => {
            let d0 = a[0].re;
            let d1 = a[4].re;
            let d2 = a[8].re;
            e[1] = d0 + d1 + d2;
            e[2] = d0 * d1 - a[1].norm_sqr() + d0 * d2 - a[2].norm_sqr() + d1 * d2
                - a[5].norm_sqr();
            // det via cofactor expansion along the first row.
            let det = a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6]);
            e[3] = det.re;
        }
        _ => unreachable!("n <= 3"),
    }
    e
}

/// Ascending eigenvalues of a Hermitian matrix given as a row-major slice.
/// Closed forms for n <= 2, cyclic complex Jacobi for n = 3.
pub fn eigenvalues_point(a: &[Complex64], n: usize) -> [f64; MAX_DIM] {
    let mut out = [0.0f64; MAX_DIM];
    match n {
        1 => {
            out[0] = a[0].re;
        }
        2 => {
            let p = a[0].re;
            let q = a[3].re;
            let t = 0.5 * (p + q);
            let s = (0.25 * (p - q) * (p - q) + a[1].norm_sqr()).sqrt();
            out[0] = t - s;
            out[1] = t + s;
        }
        3 => {
            let mut m = [[a[0], a[1], a[2]], [a[3], a[4], a[5]], [a[6], a[7], a[8]]];
            let scale = m
                .iter()
                .flatten()
                .fold(0.0f64, |acc, c| acc.max(c.norm()))
                .max(1.0);
            let tol = 1e-15 * scale;
            for _sweep in 0..30 {
                let off = (m[0][1].norm_sqr() + m[0][2].norm_sqr() + m[1][2].norm_sqr()).sqrt();
                if off <= tol {
                    break;
                }
                for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
                    jacobi_rotate(&mut m, p, q);
                }
            }
            out[0] = m[0][0].re;
            out[1] = m[1][1].re;
            out[2] = m[2][2].re;
            out[..3].sort_by(|x, y| x.partial_cmp(y).unwrap());
        }
        _ => unreachable!("n <= 3"),
    }
    out
}

/// One complex Jacobi rotation zeroing the (p, q) entry of a Hermitian 3x3.
fn jacobi_rotate(m: &mut [[Complex64; 3]; 3], p: usize, q: usize) {
    let beta = m[p][q];
    let ab = beta.norm();
    if ab == 0.0 {
        return;
    }
    let phase = beta / ab;
    let alpha = m[p][p].re;
    let gamma = m[q][q].re;
    let tau = (alpha - gamma) / (2.0 * ab);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // Unitary U: U[p][p]=c, U[p][q]=-s*phase, U[q][p]=s*conj(phase), U[q][q]=c.
    for r in 0..3 {
        if r == p || r == q {
            continue;
        }
        let arp = m[r][p];
        let arq = m[r][q];
        let new_rp = arp * c + arq * s * phase.conj();
        let new_rq = -arp * s * phase + arq * c;
        m[r][p] = new_rp;
        m[p][r] = new_rp.conj();
        m[r][q] = new_rq;
        m[q][r] = new_rq.conj();
    }
    let app = alpha * c * c + 2.0 * ab * c * s + gamma * s * s;
    let aqq = alpha * s * s - 2.0 * ab * c * s + gamma * c * c;
    m[p][p] = Complex64::new(app, 0.0);
    m[q][q] = Complex64::new(aqq, 0.0);
    m[p][q] = Complex64::new(0.0, 0.0);
    m[q][p] = Complex64::new(0.0, 0.0);
}

/// Sorted eigenvalue field of I + H per point.
pub fn eigenvalues(h: &HermitianHessianField) -> Result<EigenField> {
    let grid = h.grid();
    let n = grid.n();
    let scale = h
        .entries()
        .iter()
        .fold(0.0f64, |acc, c| acc.max(c.norm()));
    let asym = h.max_asymmetry();
    if asym > HERMITIAN_TOL * (1.0 + scale) {
        return Err(CoreError::NotHermitian(asym));
    }
    let mut values = vec![0.0f64; grid.total_points() * n];
    let mut shifted = [Complex64::new(0.0, 0.0); MAX_DIM * MAX_DIM];
    for idx in 0..grid.total_points() {
        let m = h.matrix_at(idx);
        shifted[..n * n].copy_from_slice(m);
        for j in 0..n {
            shifted[j * n + j] += 1.0;
        }
        let mu = eigenvalues_point(&shifted[..n * n], n);
        values[idx * n..(idx + 1) * n].copy_from_slice(&mu[..n]);
    }
    EigenField::from_values(grid, values)
}

/// Normalized signed density h_k from an eigenvalue field.
pub fn density_from_eigen(eig: &EigenField, k: usize) -> Result<ScalarField> {
    let grid = eig.grid();
    let n = grid.n();
    if k > n {
        return Err(CoreError::OutOfRange(format!("k = {k} exceeds n = {n}")));
    }
    let norm = 1.0 / binomial(n, k);
    let mut values = vec![0.0f64; grid.total_points()];
    for (idx, v) in values.iter_mut().enumerate() {
        *v = elementary_symmetric(eig.at(idx), k)? * norm;
    }
    ScalarField::from_values(grid, values)
}

/// Signed pointwise density h_k(u); negative where u leaves the cone.
pub fn hessian_density_signed(u: &ScalarField, k: usize, backend: Backend) -> Result<ScalarField> {
    let h = complex_hessian(u, backend)?;
    let eig = eigenvalues(&h)?;
    density_from_eigen(&eig, k)
}

/// The Hessian measure density of order k relative to the unit-volume form.
pub fn hessian_density(u: &ScalarField, k: usize, backend: Backend) -> Result<DensityField> {
    Ok(DensityField::from_scalar(&hessian_density_signed(
        u, k, backend,
    )?))
}

/// Pointwise nonnegative part max(value, 0) of a signed density.
pub fn positive_part(d: &ScalarField) -> DensityField {
    let values = d.values().iter().map(|v| v.max(0.0)).collect();
    DensityField::from_values(d.grid(), values).expect("same grid")
}

/// Per-point cone test report: h_k >= -cone_tol for every k = 1..=m.
#[derive(Clone, Debug)]
pub struct ConeReport {
    pub m: usize,
    pub cone_tol: f64,
    /// pass[k-1][point]
    pub pass: Vec<Vec<bool>>,
    pub violating_fraction: Vec<f64>,
    /// Worst normalized density min_x h_k per k.
    pub worst_margin: Vec<f64>,
}

impl ConeReport {
    pub fn all_pass(&self) -> bool {
        self.violating_fraction.iter().all(|f| *f == 0.0)
    }
}

/// Test (omega, m)-subharmonicity of u through the normalized densities.
pub fn cone_membership(
    u: &ScalarField,
    m: usize,
    cone_tol: f64,
    backend: Backend,
) -> Result<ConeReport> {
    let n = u.grid().n();
    if m < 1 || m > n {
        return Err(CoreError::OutOfRange(format!("m = {m} not in 1..={n}")));
    }
    let h = complex_hessian(u, backend)?;
    let eig = eigenvalues(&h)?;
    let total = u.grid().total_points();
    let mut pass = Vec::with_capacity(m);
    let mut violating_fraction = Vec::with_capacity(m);
    let mut worst_margin = Vec::with_capacity(m);
    for k in 1..=m {
        let dens = density_from_eigen(&eig, k)?;
        let mut pk = vec![false; total];
        let mut viol = 0usize;
        let mut worst = f64::INFINITY;
        for (i, v) in dens.values().iter().enumerate() {
            worst = worst.min(*v);
            if *v >= -cone_tol {
                pk[i] = true;
            } else {
                viol += 1;
            }
        }
        pass.push(pk);
        violating_fraction.push(viol as f64 / total as f64);
        worst_margin.push(worst);
    }
    Ok(ConeReport {
        m,
        cone_tol,
        pass,
        violating_fraction,
        worst_margin,
    })
}

/// Minimum over k = 1..=m and over points of the normalized densities of
/// eigenvalues mu (of I + H). The interior-of-cone margin used by solvers.
pub fn min_density_margin(mu: &[f64; MAX_DIM], n: usize, m: usize) -> f64 {
    let mut worst = f64::INFINITY;
    for k in 1..=m {
        let e = elementary_symmetric(&mu[..n], k).expect("k <= n");
        worst = worst.min(e / binomial(n, k));
    }
    worst
}

/// Polarized mixed-discriminant density W(B_1, ..., B_m) of Hermitian
/// matrices together with n - m identity slots, normalized so that
/// W(I, ..., I) = 1 and W(B, ..., B) = e_m(B)/binom(n, m).
///
/// Uses the inclusion-exclusion polarization of e_m over subsets of the m
/// slots, valid for non-commuting factors.
pub fn polarized_mixed(mats: &[&[Complex64]], n: usize) -> f64 {
    let m = mats.len();
    let mut acc = 0.0f64;
    let mut sum = [Complex64::new(0.0, 0.0); MAX_DIM * MAX_DIM];
    for subset in 1u32..(1 << m) {
        for v in sum[..n * n].iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        let mut count = 0usize;
        for i in 0..m {
            if subset & (1 << i) != 0 {
                count += 1;
                for (s, b) in sum[..n * n].iter_mut().zip(mats[i].iter()) {
                    *s += b;
                }
            }
        }
        let sign = if (m - count) % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * minor_sums(&sum[..n * n], n)[m];
    }
    let mut m_fact = 1.0;
    for i in 1..=m {
        m_fact *= i as f64;
    }
    acc / (m_fact * binomial(n, m))
}

/// Gradient of h_m with respect to the matrix argument at A, i.e. the
/// matrix Theta with d/dt h_m(A + tB) = trace(Theta B). Equals the Newton
/// transformation T_{m-1}(A)/binom(n, m); the polarization route
/// m * W(B, A^{m-1}) is pinned against it in tests.
pub fn density_gradient(a: &[Complex64], n: usize, m: usize) -> [Complex64; MAX_DIM * MAX_DIM] {
    let e = minor_sums(a, n);
    let mut theta = [Complex64::new(0.0, 0.0); MAX_DIM * MAX_DIM];
    match m {
        1 => {
            for j in 0..n {
                theta[j * n + j] = Complex64::new(1.0, 0.0);
            }
        }
        2 => {
            // T_1(A) = e_1 I - A
            for j in 0..n {
                for k in 0..n {
                    theta[j * n + k] = -a[j * n + k];
                }
                theta[j * n + j] += e[1];
            }
        }
        3 => {
            // T_2(A) = e_2 I - e_1 A + A^2 (the adjugate for n = 3)
            for j in 0..n {
                for k in 0..n {
                    let mut sq = Complex64::new(0.0, 0.0);
                    for l in 0..n {
                        sq += a[j * n + l] * a[l * n + k];
                    }
                    theta[j * n + k] = sq - e[1] * a[j * n + k];
                }
                theta[j * n + j] += e[2];
            }
        }
        _ => unreachable!("m <= 3"),
    }
    let norm = 1.0 / binomial(n, m);
    for v in theta[..n * n].iter_mut() {
        *v *= norm;
    }
    theta
}

/// Mixed-discriminant density of the forms omega + dd^c phi_i with the given
/// multiplicities (total m <= n) and n - m background slots.
pub fn mixed_density(
    factors: &[(&ScalarField, usize)],
    backend: Backend,
) -> Result<DensityField> {
    if factors.is_empty() {
        return Err(CoreError::OutOfRange("no factors given".into()));
    }
    let grid = factors[0].0.grid();
    let n = grid.n();
    let m: usize = factors.iter().map(|(_, mult)| *mult).sum();
    if m < 1 || m > n || factors.iter().any(|(_, mult)| *mult == 0) {
        return Err(CoreError::OutOfRange(format!(
            "multiplicities must be positive with total in 1..={n}, got total {m}"
        )));
    }
    let mut hs = Vec::with_capacity(factors.len());
    for (f, _) in factors {
        if f.grid() != grid {
            return Err(CoreError::GridMismatch(
                "mixed factors on different grids".into(),
            ));
        }
        hs.push(complex_hessian(f, backend)?);
    }
    let total = grid.total_points();
    let mut values = vec![0.0f64; total];
    let mut mats: Vec<[Complex64; MAX_DIM * MAX_DIM]> =
        vec![[Complex64::new(0.0, 0.0); MAX_DIM * MAX_DIM]; factors.len()];
    for idx in 0..total {
        for (slot, h) in mats.iter_mut().zip(&hs) {
            slot[..n * n].copy_from_slice(h.matrix_at(idx));
            for j in 0..n {
                slot[j * n + j] += 1.0;
            }
        }
        let mut refs: Vec<&[Complex64]> = Vec::with_capacity(m);
        for (i, (_, mult)) in factors.iter().enumerate() {
            for _ in 0..*mult {
                refs.push(&mats[i][..n * n]);
            }
        }
        values[idx] = polarized_mixed(&refs, n);
    }
    Ok(DensityField::from_values(grid, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::integrate_density;
    use crate::grid::TorusGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    /// Brute-force S_k by enumerating k-subsets (independent oracle).
    fn sk_enumerated(lambda: &[f64], k: usize) -> f64 {
        fn rec(lambda: &[f64], k: usize, start: usize, prod: f64, acc: &mut f64) {
            if k == 0 {
                *acc += prod;
                return;
            }
            for i in start..lambda.len() {
                rec(lambda, k - 1, i + 1, prod * lambda[i], acc);
            }
        }
        let mut acc = 0.0;
        rec(lambda, k, 0, 1.0, &mut acc);
        acc
    }

    #[test]
    fn elementary_symmetric_values() {
        assert_eq!(elementary_symmetric(&[1.0, 1.0, 1.0], 2).unwrap(), 3.0);
        // Enumerating 2-subsets of (2, -1, 3): -2 + 6 - 3 = 1.
        assert_eq!(sk_enumerated(&[2.0, -1.0, 3.0], 2), 1.0);
        assert!((elementary_symmetric(&[2.0, -1.0, 3.0], 2).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(elementary_symmetric(&[5.0, -7.0], 0).unwrap(), 1.0);
        assert!(elementary_symmetric(&[1.0, 2.0], 3).is_err());
        for k in 0..=3 {
            let l = [0.3, -1.7, 2.4];
            assert!(
                (elementary_symmetric(&l, k).unwrap() - sk_enumerated(&l, k)).abs() < 1e-13
            );
        }
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        let mut a = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            a[j * n + j] = Complex64::new(rng.gen_range(-2.0..2.0), 0.0);
            for k in (j + 1)..n {
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                a[j * n + k] = c;
                a[k * n + j] = c.conj();
            }
        }
        a
    }

    /// Roots of the characteristic cubic of a Hermitian 3x3 via the
    /// trigonometric formula (independent oracle).
    fn cubic_roots(a: &[Complex64]) -> [f64; 3] {
        let e = minor_sums(a, 3);
        let (c2, c1, c0) = (e[1], e[2], e[3]);
        // lambda^3 - c2 lambda^2 + c1 lambda - c0 = 0, shift lambda = t + c2/3.
        let p = c1 - c2 * c2 / 3.0;
        let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
        // t^3 + p t - q = 0 ... sign convention checked against expansion:
        // (t + s)^3 - c2 (t+s)^2 + c1 (t+s) - c0 with s = c2/3 gives
        // t^3 + p t + (s^3 - c2 s^2 + c1 s - c0) = t^3 + p t - q.
        let s = c2 / 3.0;
        let q0 = s * s * s - c2 * s * s + c1 * s - c0;
        debug_assert!((q0 + q).abs() < 1e-9 * (1.0 + q.abs()));
        let mut roots = [0.0f64; 3];
        if p.abs() < 1e-14 {
            let r = (-q0).cbrt();
            roots = [r + s, r + s, r + s];
        } else {
            let rho = (-p / 3.0).max(0.0).sqrt();
            let arg = (-q0 / (2.0 * rho * rho * rho)).clamp(-1.0, 1.0);
            let theta = arg.acos();
            for (k, r) in roots.iter_mut().enumerate() {
                *r = 2.0 * rho * ((theta - 2.0 * PI * k as f64) / 3.0).cos() + s;
            }
        }
        roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
        roots
    }

    #[test]
    fn jacobi_matches_cubic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = random_hermitian(&mut rng, 3);
            let jac = eigenvalues_point(&a, 3);
            let orc = cubic_roots(&a);
            for i in 0..3 {
                assert!(
                    (jac[i] - orc[i]).abs() < 1e-10,
                    "jacobi {jac:?} oracle {orc:?}"
                );
            }
            // Residual check: char poly coefficients reproduced.
            let e = minor_sums(&a, 3);
            let s1 = jac[0] + jac[1] + jac[2];
            assert!((s1 - e[1]).abs() < 1e-12 * (1.0 + e[1].abs()));
        }
    }

    #[test]
    fn eigen_of_zero_hessian_is_ones() {
        let grid = TorusGrid::new(3, 8).unwrap();
        let h = HermitianHessianField::zeros(grid);
        let eig = eigenvalues(&h).unwrap();
        assert!(eig.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn eigen_of_diagonal() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let mut h = HermitianHessianField::zeros(grid);
        for idx in 0..grid.total_points() {
            let e = h.entries_mut();
            e[idx * 4] = Complex64::new(0.5, 0.0);
            e[idx * 4 + 3] = Complex64::new(-0.25, 0.0);
        }
        let eig = eigenvalues(&h).unwrap();
        for idx in 0..grid.total_points() {
            let mu = eig.at(idx);
            assert!((mu[0] - 0.75).abs() < 1e-15);
            assert!((mu[1] - 1.5).abs() < 1e-15);
        }
    }

    #[test]
    fn eigen_rejects_non_hermitian() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let mut h = HermitianHessianField::zeros(grid);
        h.entries_mut()[1] = Complex64::new(0.3, 0.0);
        assert!(matches!(
            eigenvalues(&h),
            Err(CoreError::NotHermitian(_))
        ));
    }

    #[test]
    fn density_of_zero_is_one() {
        let grid = TorusGrid::new(3, 8).unwrap();
        let u = ScalarField::zeros(grid);
        for k in 0..=3 {
            let d = hessian_density(&u, k, Backend::Spectral).unwrap();
            assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn density_trace_identity_n2_k1() {
        // h_1(u) = 1 + trace H / 2 for n = 2, checked against the spectral
        // Laplacian route (independent of the eigenvalue path).
        let grid = TorusGrid::new(2, 16).unwrap();
        let u = ScalarField::from_fn(grid, |i| {
            let p = grid.position_of(i);
            0.11 * (2.0 * PI * p[0]).cos() * (2.0 * PI * p[2]).cos()
                + 0.07 * (4.0 * PI * p[3]).sin()
        });
        let d = hessian_density_signed(&u, 1, Backend::Spectral).unwrap();
        let ops = crate::fft::SpectralOps::new(grid);
        let tr = ops.hessian_trace(&u);
        for idx in 0..grid.total_points() {
            let oracle = 1.0 + 0.5 * tr.values()[idx];
            assert!((d.values()[idx] - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn mass_conservation() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let u = ScalarField::from_fn(grid, |i| {
            let p = grid.position_of(i);
            0.05 * (2.0 * PI * p[0]).cos() * (2.0 * PI * p[3]).cos()
                + 0.04 * (2.0 * PI * (p[1] + p[2])).cos()
        });
        for k in 1..=2 {
            let d = hessian_density(&u, k, Backend::Spectral).unwrap();
            assert!(
                (integrate_density(&d) - 1.0).abs() < 1e-12,
                "k = {k}: {}",
                integrate_density(&d)
            );
        }
    }

    #[test]
    fn cone_zero_passes_and_large_cosine_violates_where_predicted() {
        let grid = TorusGrid::new(2, 16).unwrap();
        let zero = ScalarField::zeros(grid);
        let rep = cone_membership(&zero, 2, CONE_TOL, Backend::Spectral).unwrap();
        assert!(rep.all_pass());

        // u = A cos(2 pi x_1): eigenvalues of I + H are (1 - pi^2 A cos, 1);
        // the k = 1 density is 1 - (pi^2 A / 2) cos(2 pi x_1), violated exactly
        // where cos(2 pi x_1) > 2 / (pi^2 A).
        let amp = 0.5;
        let u = ScalarField::from_fn(grid, |i| amp * (2.0 * PI * grid.position_of(i)[0]).cos());
        let rep = cone_membership(&u, 1, CONE_TOL, Backend::Spectral).unwrap();
        let threshold = 2.0 / (PI * PI * amp);
        for idx in 0..grid.total_points() {
            let c = (2.0 * PI * grid.position_of(idx)[0]).cos();
            let expect_violation = c > threshold + 1e-9;
            assert_eq!(
                !rep.pass[0][idx],
                expect_violation,
                "idx {idx} cos {c} threshold {threshold}"
            );
        }
    }

    #[test]
    fn cone_nesting() {
        // Pass set for m = n is contained in the pass set for m = 1.
        let grid = TorusGrid::new(2, 16).unwrap();
        let u = ScalarField::from_fn(grid, |i| {
            let p = grid.position_of(i);
            0.4 * (2.0 * PI * p[0]).cos() + 0.3 * (2.0 * PI * p[3]).cos()
        });
        let rep = cone_membership(&u, 2, CONE_TOL, Backend::Spectral).unwrap();
        for idx in 0..grid.total_points() {
            let pass_all_m = rep.pass[0][idx] && rep.pass[1][idx];
            if pass_all_m {
                assert!(rep.pass[0][idx]);
            }
        }
        assert!(rep.violating_fraction[1] > 0.0);
    }

    #[test]
    fn positive_part_values() {
        let grid = TorusGrid::new(1, 8).unwrap();
        let one = ScalarField::constant(grid, 1.0);
        assert!(positive_part(&one).values().iter().all(|v| *v == 1.0));
        let neg = ScalarField::constant(grid, -3.0);
        assert!(positive_part(&neg).values().iter().all(|v| *v == 0.0));
        let wavy = ScalarField::from_fn(grid, |i| (2.0 * PI * grid.position_of(i)[0]).cos());
        let mass_pos = positive_part(&wavy).mass();
        let mass_abs = wavy.values().iter().map(|v| v.abs()).sum::<f64>()
            / grid.total_points() as f64;
        assert!(mass_pos > 0.0 && mass_pos < mass_abs);
    }

    #[test]
    fn mixed_density_diagonal_reduces_to_hessian_density() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let u = ScalarField::from_fn(grid, |i| {
            let p = grid.position_of(i);
            0.06 * (2.0 * PI * p[0]).cos() + 0.05 * (2.0 * PI * (p[2] + p[3])).cos()
        });
        let mixed = mixed_density(&[(&u, 2)], Backend::Spectral).unwrap();
        let direct = hessian_density(&u, 2, Backend::Spectral).unwrap();
        for (a, b) in mixed.values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_density_with_background_slot() {
        // factors (u, 1), (0, 1) for n = m = 2: density = (2 + trace H)/2.
        let grid = TorusGrid::new(2, 8).unwrap();
        let u = ScalarField::from_fn(grid, |i| {
            let p = grid.position_of(i);
            0.09 * (2.0 * PI * p[0]).cos() * (2.0 * PI * p[1]).cos()
        });
        let zero = ScalarField::zeros(grid);
        let mixed = mixed_density(&[(&u, 1), (&zero, 1)], Backend::Spectral).unwrap();
        let h = complex_hessian(&u, Backend::Spectral).unwrap();
        for idx in 0..grid.total_points() {
            let m = h.matrix_at(idx);
            let oracle = (2.0 + m[0].re + m[3].re) / 2.0;
            assert!((mixed.values()[idx] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_density_bilinear_on_diagonal_fields() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let u = ScalarField::from_fn(grid, |i| 0.05 * (2.0 * PI * grid.position_of(i)[0]).cos());
        let v = ScalarField::from_fn(grid, |i| 0.04 * (2.0 * PI * grid.position_of(i)[2]).cos());
        let w = ScalarField::from_fn(grid, |i| 0.03 * (4.0 * PI * grid.position_of(i)[0]).cos());
        let (a, b) = (0.7, -0.3);
        let combo = {
            let mut c = u.clone();
            c.scale(a);
            c.axpy(b, &v).unwrap()
        };
        // Multilinearity in one slot: W(a u + b v, w) = a W(u, w) + b W(v, w)
        // holds in the shifted sense: subtract the background contribution.
        let m_combo = mixed_density(&[(&combo, 1), (&w, 1)], Backend::Spectral).unwrap();
        let m_u = mixed_density(&[(&u, 1), (&w, 1)], Backend::Spectral).unwrap();
        let m_v = mixed_density(&[(&v, 1), (&w, 1)], Backend::Spectral).unwrap();
        let zero = ScalarField::zeros(grid);
        let m_0 = mixed_density(&[(&zero, 1), (&w, 1)], Backend::Spectral).unwrap();
        for idx in 0..grid.total_points() {
            let lhs = m_combo.values()[idx] - m_0.values()[idx];
            let rhs = a * (m_u.values()[idx] - m_0.values()[idx])
                + b * (m_v.values()[idx] - m_0.values()[idx]);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_density_symmetric_in_factors() {
        let grid = TorusGrid::new(3, 8).unwrap();
        let u = ScalarField::from_fn(grid, |i| 0.05 * (2.0 * PI * grid.position_of(i)[0]).cos());
        let v = ScalarField::from_fn(grid, |i| 0.04 * (2.0 * PI * grid.position_of(i)[3]).cos());
        let a = mixed_density(&[(&u, 1), (&v, 1)], Backend::Spectral).unwrap();
        let b = mixed_density(&[(&v, 1), (&u, 1)], Backend::Spectral).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn gradient_matches_polarized_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 2..=3usize {
            for m in 1..=n {
                for _ in 0..50 {
                    let a = random_hermitian(&mut rng, n);
                    let b = random_hermitian(&mut rng, n);
                    let theta = density_gradient(&a, n, m);
                    // trace(Theta B)
                    let mut tr = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        for k in 0..n {
                            tr += theta[j * n + k] * b[k * n + j];
                        }
                    }
                    // m * W(B, A^{m-1}) via polarization.
                    let mut refs: Vec<&[Complex64]> = vec![&b];
                    for _ in 0..(m - 1) {
                        refs.push(&a);
                    }
                    let w = polarized_mixed(&refs, n) * m as f64;
                    assert!(
                        (tr.re - w).abs() < 1e-11,
                        "n={n} m={m}: {} vs {}",
                        tr.re,
                        w
                    );
                    assert!(tr.im.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradient_is_derivative_of_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 3;
        let m = 2;
        let a = random_hermitian(&mut rng, n);
        let b = random_hermitian(&mut rng, n);
        let theta = density_gradient(&a, n, m);
        let mut tr = 0.0;
        for j in 0..n {
            for k in 0..n {
                tr += (theta[j * n + k] * b[k * n + j]).re;
            }
        }
        let t = 1e-6;
        let mut ap = a.clone();
        let mut am = a.clone();
        for i in 0..n * n {
            ap[i] += t * b[i];
            am[i] -= t * b[i];
        }
        let norm = 1.0 / binomial(n, m);
        let fd = (minor_sums(&ap, n)[m] - minor_sums(&am, n)[m]) * norm / (2.0 * t);
        assert!((tr - fd).abs() < 1e-8);
    }
}
