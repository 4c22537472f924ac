//! Numerical checks of the operator inequalities and trace identities used
//! in the mean-field argument. Every operator inequality is checked on the
//! discrete torus, so each report certifies the discrete analogue only.

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::density::{partial_trace, trace_norm};
use crate::error::{Error, Result};
use crate::fft::Spectral;
use crate::grid::GridSpec;
use crate::linalg::{self, CMat};
use crate::potential::PairPotential;

pub const DISCRETE_LABEL: &str = "discrete-torus analogue";

/// Ratio of the most negative allowed Hardy eigenvalue to `-c * mean(1/(r^2 + a^2))`.
pub const HARDY_ZERO_MODE_FACTOR: f64 = 1.5;
/// Allowed max/min spread of the compensated top eigenvalue across a radius sweep.
pub const L1_SPREAD_LIMIT: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct InequalityReport {
    pub lemma: &'static str,
    pub instance: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub parameters: Vec<(String, f64)>,
    pub seed: Option<u64>,
    pub label: &'static str,
}

fn report(
    lemma: &'static str,
    instance: String,
    measured: f64,
    tolerance: f64,
    passed: bool,
    parameters: Vec<(String, f64)>,
    seed: Option<u64>,
) -> InequalityReport {
    InequalityReport { lemma, instance, measured, tolerance, passed, parameters, seed, label: DISCRETE_LABEL }
}

/// Discrete `-Delta - c / (r^2 + a^2)` on a three-dimensional torus, applied spectrally.
struct HardyOperator {
    grid: GridSpec,
    spec: Spectral,
    p2: Vec<f64>,
    weight: Vec<f64>,
}

impl HardyOperator {
    fn new(grid: GridSpec, softening: f64, coefficient: f64) -> Self {
        let weight = grid.displacement_radii().iter().map(|r| coefficient / (r * r + softening * softening)).collect();
        Self { grid, spec: Spectral::new(grid.n()), p2: grid.momentum_sq(), weight }
    }

    fn apply(&self, x: &[C64], out: &mut Vec<C64>, scratch: &mut Vec<C64>) {
        out.clear();
        out.extend_from_slice(x);
        self.spec.forward(out, scratch, 3);
        out.iter_mut().zip(&self.p2).for_each(|(v, p)| *v *= *p);
        self.spec.inverse(out, scratch, 3);
        for ((o, xi), w) in out.iter_mut().zip(x).zip(&self.weight) {
            *o -= xi * *w;
        }
    }

    fn dense(&self) -> CMat {
        let m = self.grid.size();
        let mut a = linalg::zeros(m, m);
        let mut e = vec![C64::new(0.0, 0.0); m];
        let (mut col, mut scratch) = (Vec::new(), Vec::new());
        for j in 0..m {
            e[j] = C64::new(1.0, 0.0);
            self.apply(&e, &mut col, &mut scratch);
            e[j] = C64::new(0.0, 0.0);
            for i in 0..m {
                a[(i, j)] = col[i];
            }
        }
        linalg::hermitian_part(a.as_ref())
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn normalize(v: &mut [C64]) -> f64 {
    let n = dot(v, v).re.sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Smallest Rayleigh quotient reached by a locally optimal block-one
/// conjugate-gradient iteration started from `x`.
fn rayleigh_minimize(op: &HardyOperator, mut x: Vec<C64>, iterations: usize) -> Result<f64> {
    let m = x.len();
    let (mut ax, mut scratch) = (Vec::new(), Vec::new());
    normalize(&mut x);
    let mut prev: Option<Vec<C64>> = None;
    let mut best = f64::INFINITY;
    for _ in 0..iterations {
        op.apply(&x, &mut ax, &mut scratch);
        let rho = dot(&x, &ax).re;
        best = best.min(rho);
        let mut r: Vec<C64> = ax.iter().zip(&x).map(|(a, xi)| a - xi * rho).collect();
        let rnorm = dot(&r, &r).re.sqrt();
        if rnorm < 1e-11 {
            break;
        }
        // orthonormal basis of span{x, r, p}
        let mut basis = vec![x.clone()];
        let mut candidates = vec![std::mem::take(&mut r)];
        if let Some(p) = prev.take() {
            candidates.push(p);
        }
        for mut c in candidates {
            for b in &basis {
                let proj = dot(b, &c);
                c.iter_mut().zip(b).for_each(|(ci, bi)| *ci -= bi * proj);
            }
            if normalize(&mut c) > 1e-12 {
                basis.push(c);
            }
        }
        let k = basis.len();
        let applied: Vec<Vec<C64>> = basis
            .iter()
            .map(|b| {
                let mut out = Vec::new();
                op.apply(b, &mut out, &mut scratch);
                out
            })
            .collect();
        let small = Mat::from_fn(k, k, |i, j| dot(&basis[i], &applied[j]));
        let (vals, vecs) = linalg::hermitian_eigen(small.as_ref())?;
        best = best.min(vals[0]);
        let mut next = vec![C64::new(0.0, 0.0); m];
        for (i, b) in basis.iter().enumerate() {
            let c = vecs[(i, 0)];
            next.iter_mut().zip(b).for_each(|(n, bi)| *n += bi * c);
        }
        // search direction: the part of the update outside x
        let mut dir = next.clone();
        let c0 = vecs[(0, 0)];
        dir.iter_mut().zip(&x).for_each(|(d, xi)| *d -= xi * c0);
        normalize(&mut next);
        prev = Some(dir);
        x = next;
    }
    Ok(best)
}

/// Checks `c / (r^2 + a^2) <= -Delta` on a three-dimensional torus by Rayleigh
/// minimization from the constant vector and `samples` random starts.
pub fn check_hardy(grid: &GridSpec, softening: f64, coefficient: f64, samples: usize, seed: u64) -> Result<InequalityReport> {
    if grid.dim() != 3 {
        return Err(Error::InvalidArgument("the Hardy check is three-dimensional".into()));
    }
    if !(softening > 0.0 && softening.is_finite()) {
        return Err(Error::InvalidArgument(format!("softening must be positive, got {softening}")));
    }
    let op = HardyOperator::new(*grid, softening, coefficient);
    let m = grid.size();
    let mut lowest = rayleigh_minimize(&op, vec![C64::new(1.0, 0.0); m], 400)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let start = (0..m).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        lowest = lowest.min(rayleigh_minimize(&op, start, 400)?);
    }
    let mean_weight = op.weight.iter().sum::<f64>() / m as f64;
    let tolerance = HARDY_ZERO_MODE_FACTOR * mean_weight;
    Ok(report(
        "hardy",
        format!("n={} L={} a={} c={}", grid.n(), grid.length(), softening, coefficient),
        lowest,
        tolerance,
        lowest >= -tolerance,
        vec![
            ("n".into(), grid.n() as f64),
            ("length".into(), grid.length()),
            ("softening".into(), softening),
            ("coefficient".into(), coefficient),
            ("samples".into(), samples as f64),
        ],
        Some(seed),
    ))
}

/// Smallest eigenvalue of the discrete Hardy difference by a dense eigensolve.
pub fn hardy_min_eigenvalue_dense(grid: &GridSpec, softening: f64, coefficient: f64) -> Result<f64> {
    if grid.dim() != 3 {
        return Err(Error::InvalidArgument("the Hardy check is three-dimensional".into()));
    }
    linalg::guard(grid.size())?;
    let op = HardyOperator::new(*grid, softening, coefficient);
    Ok(linalg::hermitian_eigenvalues(op.dense().as_ref())?[0])
}

fn mode_vector(grid: &GridSpec, idx: usize) -> [usize; 3] {
    let mut a = grid.unflatten(idx);
    for x in a.iter_mut().skip(grid.dim()) {
        *x = 0;
    }
    a
}

/// Top eigenvalue of `S_x^{-1} S_y^{-1} W(x - y) S_x^{-1} S_y^{-1}`.
///
/// The operator commutes with the total momentum, so it is diagonalized
/// block by block; each block is indexed by the momentum of the first variable.
pub fn l1_top_eigenvalue(w: &PairPotential) -> Result<f64> {
    let grid = *w.grid();
    let m = grid.size();
    linalg::guard(m)?;
    if w.values().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("the domination check needs a nonnegative potential".into()));
    }
    if w.is_zero() {
        return Ok(0.0);
    }
    // W(z) = sum_k what(k) exp(ikz)
    let spec = Spectral::new(grid.n());
    let mut what: Vec<C64> = w.values().iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut scratch = Vec::new();
    spec.forward(&mut what, &mut scratch, grid.dim());
    let scale = 1.0 / (m as f64).sqrt();
    what.iter_mut().for_each(|c| *c *= scale);
    let inv_s: Vec<f64> = grid.momentum_sq().iter().map(|p2| 1.0 / (1.0 + p2).sqrt()).collect();
    let n = grid.n();
    let modes: Vec<[usize; 3]> = (0..m).map(|i| mode_vector(&grid, i)).collect();
    let sub = |a: &[usize; 3], b: &[usize; 3]| -> usize {
        grid.flatten(&[(a[0] + n - b[0]) % n, (a[1] + n - b[1]) % n, (a[2] + n - b[2]) % n])
    };
    let neg = |a: &[usize; 3]| grid.flatten(&[(n - a[0]) % n, (n - a[1]) % n, (n - a[2]) % n]);
    let even = what.iter().all(|c| c.im.abs() <= 1e-14 * (1.0 + c.re.abs()));
    let mut top = f64::NEG_INFINITY;
    for total in 0..m {
        // the block at -P is the complex conjugate of the block at P
        if neg(&modes[total]) < total {
            continue;
        }
        let pt = &modes[total];
        let weight: Vec<f64> = (0..m).map(|p| inv_s[p] * inv_s[sub(pt, &modes[p])]).collect();
        let largest = if even {
            let block = Mat::from_fn(m, m, |p, q| what[sub(&modes[p], &modes[q])].re * (weight[p] * weight[q]));
            let vals = block
                .self_adjoint_eigenvalues(faer::Side::Lower)
                .map_err(|e| Error::LinearAlgebra(format!("eigenvalues: {e:?}")))?;
            *vals.last().unwrap()
        } else {
            let block = Mat::from_fn(m, m, |p, q| what[sub(&modes[p], &modes[q])] * (weight[p] * weight[q]));
            *linalg::hermitian_eigenvalues(block.as_ref())?.last().unwrap()
        };
        top = top.max(largest);
    }
    Ok(top)
}

/// Dense two-variable version of [`l1_top_eigenvalue`] for small grids.
pub fn l1_top_eigenvalue_dense(w: &PairPotential) -> Result<f64> {
    let grid = *w.grid();
    let m = grid.size();
    linalg::guard(m * m)?;
    let inv: Vec<C64> = grid.momentum_sq().iter().map(|p2| C64::new(1.0 / (1.0 + p2).sqrt(), 0.0)).collect();
    let s1 = crate::density::left_multiplier(&grid, 1, &inv, linalg::identity(m).as_ref());
    let s = linalg::kron(s1.as_ref(), s1.as_ref());
    let diag = Mat::from_fn(m * m, m * m, |i, j| {
        if i == j {
            C64::new(w.between(i / m, i % m), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let t = &s * &diag * &s;
    Ok(*linalg::hermitian_eigenvalues(t.as_ref())?.last().unwrap())
}

/// `chi(r <= lambda) / r^kappa`, with the origin sample taken at `r = h/2`.
pub fn truncated_power(grid: &GridSpec, lambda: f64, kappa: f64) -> Result<PairPotential> {
    let half = 0.5 * grid.spacing();
    PairPotential::radial(*grid, |r| if r <= lambda { r.max(half).powf(-kappa) } else { 0.0 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DominationPoint {
    pub lambda: f64,
    pub top: f64,
    pub l1_norm: f64,
    /// `top / ||W||_1`
    pub rho: f64,
    /// `top / lambda^{3 - kappa}`
    pub compensated: f64,
}

/// Sweeps `chi(r <= lambda) / r^kappa` over `lambdas` and checks that the
/// compensated top eigenvalue stays within [`L1_SPREAD_LIMIT`].
pub fn check_l1_domination(grid: &GridSpec, kappa: f64, lambdas: &[f64]) -> Result<(InequalityReport, Vec<DominationPoint>)> {
    let mut points = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {lambda}")));
        }
        let w = truncated_power(grid, lambda, kappa)?;
        let top = l1_top_eigenvalue(&w)?;
        let l1 = w.l1_norm();
        points.push(DominationPoint {
            lambda,
            top,
            l1_norm: l1,
            rho: if l1 > 0.0 { top / l1 } else { 0.0 },
            compensated: top / lambda.powf(3.0 - kappa),
        });
    }
    let hi = points.iter().map(|p| p.compensated).fold(f64::NEG_INFINITY, f64::max);
    let lo = points.iter().map(|p| p.compensated).fold(f64::INFINITY, f64::min);
    let spread = if points.is_empty() || hi == 0.0 { 1.0 } else { hi / lo };
    let mut parameters = vec![("n".into(), grid.n() as f64), ("length".into(), grid.length()), ("kappa".into(), kappa)];
    parameters.extend(lambdas.iter().map(|l| ("lambda".to_string(), *l)));
    let rep = report(
        "l1-domination",
        format!("d={} n={} kappa={kappa}", grid.dim(), grid.n()),
        spread,
        L1_SPREAD_LIMIT,
        spread.is_finite() && spread < L1_SPREAD_LIMIT,
        parameters,
        None,
    );
    Ok((rep, points))
}

fn check_psd(a: &CMat, name: &str) -> Result<Vec<f64>> {
    let vals = linalg::hermitian_eigenvalues(a.as_ref())?;
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if linalg::hermiticity_defect(a.as_ref()) > 1e-10 * scale || vals[0] < -1e-10 * scale {
        return Err(Error::InvalidArgument(format!("{name} is not positive semidefinite")));
    }
    Ok(vals)
}

fn trace_sqrt(a: &CMat) -> Result<f64> {
    Ok(linalg::hermitian_eigenvalues(a.as_ref())?.iter().map(|v| v.max(0.0).sqrt()).sum())
}

/// `Tr sqrt(A B^2 A) = Tr sqrt(B A^2 B)` for positive `A`, `B`.
pub fn check_root_cycle(a: &CMat, b: &CMat) -> Result<InequalityReport> {
    if a.nrows() != b.nrows() || a.nrows() > 200 {
        return Err(Error::ShapeMismatch("root-cycle check needs equal dimensions up to 200".into()));
    }
    check_psd(a, "A")?;
    check_psd(b, "B")?;
    let lhs = trace_sqrt(&(a * b * b * a))?;
    let rhs = trace_sqrt(&(b * a * a * b))?;
    let diff = (lhs - rhs).abs();
    let tol = 1e-8 * (1.0 + lhs.abs());
    Ok(report(
        "rootcycle",
        format!("dim={} lhs={lhs:.12e} rhs={rhs:.12e}", a.nrows()),
        diff,
        tol,
        diff <= tol,
        vec![("dim".into(), a.nrows() as f64)],
        None,
    ))
}

/// `Tr sqrt(A + B) <= 2 (Tr sqrt(A) + Tr sqrt(B))`; `measured` is the ratio of the two sides.
pub fn check_sqrt_subadd(a: &CMat, b: &CMat) -> Result<InequalityReport> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch("square-root check needs equal dimensions".into()));
    }
    check_psd(a, "A")?;
    check_psd(b, "B")?;
    let lhs = trace_sqrt(&(a + b))?;
    let rhs = 2.0 * (trace_sqrt(a)? + trace_sqrt(b)?);
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(report(
        "sqr",
        format!("dim={} lhs={lhs:.12e} rhs={rhs:.12e}", a.nrows()),
        ratio,
        1.0,
        lhs <= rhs * (1.0 + 1e-12) + 1e-14,
        vec![("dim".into(), a.nrows() as f64)],
        None,
    ))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    Mat::from_fn(rows, cols, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// `G G*` for a random `dim x (dim + 2)` matrix `G`, scaled to unit trace.
pub fn random_psd(rng: &mut ChaCha8Rng, dim: usize) -> CMat {
    let g = random_matrix(rng, dim, dim + 2);
    let a = linalg::hermitian_part((&g * g.adjoint()).as_ref());
    let tr = linalg::trace(a.as_ref()).re;
    Mat::from_fn(dim, dim, |i, j| a[(i, j)] / tr)
}

/// Verifies on random instances the partial-trace relations
/// `Tr_1 |Tr_2 A| <= Tr |A|`, `Tr_1 |Tr_2 (I (x) A) B| = Tr_1 |Tr_2 B (I (x) A)|`
/// and the duality `Tr[B K] = Tr[A (K (x) I)]`.
pub fn check_partial_trace_calculus(seed: u64, d1: usize, d2: usize, instances: usize, duality_tests: usize) -> Result<Vec<InequalityReport>> {
    linalg::guard(d1 * d2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut fubini_worst, mut cycle_worst, mut duality_worst) = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let eye1 = linalg::identity(d1);
    let eye2 = linalg::identity(d2);
    for _ in 0..instances {
        let b = random_matrix(&mut rng, d1 * d2, d1 * d2);
        let a = random_psd(&mut rng, d2);
        // fubini: slack Tr_1|Tr_2 B| - Tr|B| must be <= 0
        let lhs = trace_norm(partial_trace(b.as_ref(), d1, d2)?.as_ref())?;
        let rhs = trace_norm(b.as_ref())?;
        fubini_worst = fubini_worst.max((lhs - rhs) / rhs);
        // partcycle
        let ia = linalg::kron(eye1.as_ref(), a.as_ref());
        let left = trace_norm(partial_trace((&ia * &b).as_ref(), d1, d2)?.as_ref())?;
        let right = trace_norm(partial_trace((&b * &ia).as_ref(), d1, d2)?.as_ref())?;
        cycle_worst = cycle_worst.max((left - right).abs() / (1.0 + left.abs()));
        // duality with random rank-one K
        let reduced = partial_trace(b.as_ref(), d1, d2)?;
        for _ in 0..duality_tests {
            let u = random_matrix(&mut rng, d1, 1);
            let v = random_matrix(&mut rng, d1, 1);
            let k = &u * v.adjoint();
            let lhs = linalg::trace((&reduced * &k).as_ref());
            let rhs = linalg::trace((&b * linalg::kron(k.as_ref(), eye2.as_ref())).as_ref());
            duality_worst = duality_worst.max((lhs - rhs).norm() / (1.0 + lhs.norm()));
        }
    }
    let params = vec![("d1".to_string(), d1 as f64), ("d2".to_string(), d2 as f64), ("instances".to_string(), instances as f64)];
    let instance = format!("{d1}x{d2}, {instances} random operators");
    Ok(vec![
        report("fubini", instance.clone(), fubini_worst, 1e-9, fubini_worst <= 1e-9, params.clone(), Some(seed)),
        report("partcycle", instance.clone(), cycle_worst, 1e-9, cycle_worst <= 1e-9, params.clone(), Some(seed)),
        report("partial-trace-duality", instance, duality_worst, 1e-10, duality_worst <= 1e-10, params, Some(seed)),
    ])
}

/// Root-cycle and square-root checks on `pairs` random positive pairs with
/// dimensions drawn from `dims`.
pub fn fuzz_trace_lemmas(seed: u64, pairs: usize, dims: std::ops::RangeInclusive<usize>) -> Result<Vec<InequalityReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * pairs);
    for _ in 0..pairs {
        let dim = rng.gen_range(dims.clone());
        let a = random_psd(&mut rng, dim);
        let b = random_psd(&mut rng, dim);
        let mut r = check_root_cycle(&a, &b)?;
        r.seed = Some(seed);
        out.push(r);
        let mut s = check_sqrt_subadd(&a, &b)?;
        s.seed = Some(seed);
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hardy_rejects_bad_input() {
        let g1 = GridSpec::new(1, 8, 8.0).unwrap();
        assert!(check_hardy(&g1, 1.0, 0.25, 1, 0).is_err());
        let g3 = GridSpec::new(3, 4, 4.0).unwrap();
        assert!(check_hardy(&g3, 0.0, 0.25, 1, 0).is_err());
    }

    #[test]
    fn hardy_large_softening_sees_the_free_laplacian() {
        let g = GridSpec::new(3, 4, 4.0).unwrap();
        let r = check_hardy(&g, 1e6, 0.25, 2, 1).unwrap();
        assert!(r.passed);
        assert!(r.measured.abs() < 1e-10);
    }

    #[test]
    fn hardy_rayleigh_minimum_matches_dense_eigensolve() {
        let g = GridSpec::new(3, 8, 8.0).unwrap();
        for c in [0.25, 4.0] {
            let dense = hardy_min_eigenvalue_dense(&g, g.spacing(), c).unwrap();
            let r = check_hardy(&g, g.spacing(), c, 2, 7).unwrap();
            assert!((r.measured - dense).abs() < 1e-8 * (1.0 + dense.abs()), "{} vs {dense}", r.measured);
        }
    }

    #[test]
    fn hardy_is_monotone_in_softening_and_fails_when_inflated() {
        let g = GridSpec::new(3, 8, 8.0).unwrap();
        let h = g.spacing();
        let mut last = f64::NEG_INFINITY;
        for a in [0.5 * h, h, 2.0 * h, 4.0 * h] {
            let r = check_hardy(&g, a, 0.25, 1, 3).unwrap();
            assert!(r.passed, "a={a}: {}", r.measured);
            assert!(r.measured >= last - 1e-10);
            last = r.measured;
        }
        assert!(!check_hardy(&g, h, 4.0, 1, 3).unwrap().passed);
        assert!(!check_hardy(&g, 0.5 * h, 4.0, 1, 3).unwrap().passed);
    }

    #[test]
    fn l1_blocks_match_dense_operator() {
        let g = GridSpec::new(1, 8, 4.0).unwrap();
        let w = PairPotential::radial(g, |r| 1.0 / (r * r + 0.3)).unwrap();
        let blocks = l1_top_eigenvalue(&w).unwrap();
        let dense = l1_top_eigenvalue_dense(&w).unwrap();
        assert!((blocks - dense).abs() < 1e-10);

        let mut point = vec![0.0; 8];
        point[0] = 1.0 / g.cell_volume();
        let delta = PairPotential::new(g, point).unwrap();
        assert!((l1_top_eigenvalue(&delta).unwrap() - l1_top_eigenvalue_dense(&delta).unwrap()).abs() < 1e-8);
        assert!((delta.l1_norm() - 1.0).abs() < 1e-15);
        assert_eq!(l1_top_eigenvalue(&PairPotential::zero(g)).unwrap(), 0.0);
        assert!(l1_top_eigenvalue(&PairPotential::constant(g, -1.0)).is_err());
    }

    #[test]
    fn l1_ratio_is_translation_invariant() {
        let g = GridSpec::new(1, 8, 4.0).unwrap();
        let base: Vec<f64> = (0..8).map(|i| if i < 3 { 1.0 + i as f64 } else { 0.0 }).collect();
        let mut shifted = base.clone();
        shifted.rotate_right(3);
        let a = l1_top_eigenvalue(&PairPotential::new(g, base).unwrap()).unwrap();
        let b = l1_top_eigenvalue(&PairPotential::new(g, shifted).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn root_cycle_and_square_root_special_cases() {
        let id = linalg::identity(5);
        let r = check_root_cycle(&id, &id).unwrap();
        assert!(r.passed && r.instance.contains("lhs=5.0"));
        let zero = linalg::zeros(5, 5);
        assert!(check_root_cycle(&id, &zero).unwrap().passed);
        assert!(check_sqrt_subadd(&id, &zero).unwrap().passed);
        assert!((check_sqrt_subadd(&id, &zero).unwrap().measured - 0.5).abs() < 1e-14);
        let same = check_sqrt_subadd(&id, &id).unwrap();
        assert!((same.measured - 2f64.sqrt() / 4.0).abs() < 1e-14);
        let neg = Mat::from_fn(2, 2, |i, j| if i == j { C64::new(-1.0, 0.0) } else { C64::new(0.0, 0.0) });
        assert!(check_root_cycle(&neg, &linalg::identity(2)).is_err());
        assert!(check_sqrt_subadd(&linalg::identity(2), &neg).is_err());
    }

    #[test]
    fn fuzzed_trace_lemmas_pass_and_are_reproducible() {
        let a = fuzz_trace_lemmas(5, 40, 2..=40).unwrap();
        assert!(a.iter().all(|r| r.passed));
        assert_eq!(a, fuzz_trace_lemmas(5, 40, 2..=40).unwrap());
    }

    #[test]
    fn partial_trace_calculus_passes() {
        let reps = check_partial_trace_calculus(9, 6, 7, 10, 20).unwrap();
        assert!(reps.iter().all(|r| r.passed), "{reps:?}");
        assert_eq!(reps, check_partial_trace_calculus(9, 6, 7, 10, 20).unwrap());
    }

    #[test]
    fn fubini_is_tight_for_positive_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_psd(&mut rng, 3);
        let b = random_psd(&mut rng, 4);
        let ab = linalg::kron(a.as_ref(), b.as_ref());
        let lhs = trace_norm(partial_trace(ab.as_ref(), 3, 4).unwrap().as_ref()).unwrap();
        assert!((lhs - trace_norm(ab.as_ref()).unwrap()).abs() < 1e-12);
    }
}
