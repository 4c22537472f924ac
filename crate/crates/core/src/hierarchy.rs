//! Free and interacting `k`-body flows of operators and residuals of the
//! finite and infinite BBGKY hierarchies in Duhamel form.
//!
//! Residuals are evaluated in the eigenbasis of the `k`-body Hamiltonian,
//! where `U(t - s)` acts entrywise by the phases `exp(-i (t - s)(l_a - l_b))`.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::density::{left_multiplier, trace_norm, ReducedDensityMatrix};
use crate::error::{Error, Result};
use crate::fft::particle_indices;
use crate::grid::GridSpec;
use crate::hartree::mean_field;
use crate::linalg::{self, CMat};
use crate::potential::PairPotential;
use crate::wavefn::WaveFn;

/// Largest order for the dense interacting propagator.
pub const MAX_INTERACTING_ORDER: usize = 2;

/// `e^{-itH_0} gamma e^{itH_0}` with `H_0 = -1/2 sum Delta_j`.
pub fn free_flow(gamma: &ReducedDensityMatrix, t: f64) -> Result<ReducedDensityMatrix> {
    let table: Vec<C64> = gamma.grid().momentum_sq().iter().map(|p2| C64::from_polar(1.0, -0.5 * t * p2)).collect();
    let out = crate::density::conjugate_by_multiplier(gamma.grid(), gamma.order(), &table, gamma.matrix());
    ReducedDensityMatrix::from_matrix(*gamma.grid(), gamma.order(), out)
}

/// Dense `k`-body Hamiltonian `-1/2 sum Delta_l + coupling sum_{l<j} V(x_l - x_j)`
/// with its eigendecomposition.
#[derive(Clone, Debug)]
pub struct KBodyHamiltonian {
    grid: GridSpec,
    order: usize,
    values: Vec<f64>,
    vectors: CMat,
}

impl KBodyHamiltonian {
    /// `H_N^{(k)}` with the mean-field coupling `1/particles`.
    pub fn new(grid: GridSpec, order: usize, particles: usize, pair: &PairPotential) -> Result<Self> {
        if order == 0 || order > MAX_INTERACTING_ORDER {
            return Err(Error::InvalidArgument(format!(
                "interacting flow supports orders 1..={MAX_INTERACTING_ORDER}, got {order}"
            )));
        }
        if particles == 0 {
            return Err(Error::InvalidArgument("particle count must be at least 1".into()));
        }
        if pair.grid() != &grid {
            return Err(Error::ShapeMismatch("potential lives on a different grid".into()));
        }
        let h = dense_hamiltonian(&grid, order, 1.0 / particles as f64, Some(pair))?;
        let (values, vectors) = linalg::hermitian_eigen(h.as_ref())?;
        Ok(Self { grid, order, values, vectors })
    }

    /// `-1/2 sum Delta_l` on `order` particles.
    pub fn free(grid: GridSpec, order: usize) -> Result<Self> {
        let h = dense_hamiltonian(&grid, order, 0.0, None)?;
        let (values, vectors) = linalg::hermitian_eigen(h.as_ref())?;
        Ok(Self { grid, order, values, vectors })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    fn check(&self, gamma: &ReducedDensityMatrix) -> Result<()> {
        if gamma.grid() != &self.grid || gamma.order() != self.order {
            return Err(Error::ShapeMismatch("operator and Hamiltonian differ in grid or order".into()));
        }
        Ok(())
    }

    fn to_eigenbasis(&self, a: faer::MatRef<'_, C64>) -> CMat {
        self.vectors.adjoint() * a * &self.vectors
    }

    fn from_eigenbasis(&self, a: faer::MatRef<'_, C64>) -> CMat {
        &self.vectors * a * self.vectors.adjoint()
    }

    /// `e^{-itH} gamma e^{itH}`
    pub fn flow(&self, gamma: &ReducedDensityMatrix, t: f64) -> Result<ReducedDensityMatrix> {
        self.check(gamma)?;
        let mut e = self.to_eigenbasis(gamma.matrix());
        rotate(&mut e, &self.values, t);
        ReducedDensityMatrix::from_matrix(self.grid, self.order, self.from_eigenbasis(e.as_ref()))
    }
}

fn rotate(a: &mut CMat, values: &[f64], t: f64) {
    let d: Vec<C64> = values.iter().map(|l| C64::from_polar(1.0, -t * l)).collect();
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            a[(i, j)] *= d[i] * d[j].conj();
        }
    }
}

fn dense_hamiltonian(grid: &GridSpec, order: usize, coupling: f64, pair: Option<&PairPotential>) -> Result<CMat> {
    let m = grid.size();
    let dim = (m as u128).pow(order as u32);
    if dim > linalg::DENSE_LIMIT as u128 {
        return Err(Error::SizeGuard { dim: dim.min(usize::MAX as u128) as usize, limit: linalg::DENSE_LIMIT });
    }
    let dim = dim as usize;
    let half_p2: Vec<C64> = grid.momentum_sq().iter().map(|p2| C64::new(0.5 * p2, 0.0)).collect();
    let k1 = linalg::hermitian_part(left_multiplier(grid, 1, &half_p2, linalg::identity(m).as_ref()).as_ref());
    let mut h = linalg::zeros(dim, dim);
    let mut di = vec![0usize; order];
    let mut dj = vec![0usize; order];
    for j in 0..dim {
        particle_indices(j, m, order, &mut dj);
        for i in 0..dim {
            particle_indices(i, m, order, &mut di);
            let mut s = C64::new(0.0, 0.0);
            for l in 0..order {
                if (0..order).all(|q| q == l || di[q] == dj[q]) {
                    s += k1[(di[l], dj[l])];
                }
            }
            h[(i, j)] = s;
        }
        if let Some(v) = pair {
            let mut u = 0.0;
            for l in 0..order {
                for q in (l + 1)..order {
                    u += v.between(dj[l], dj[q]);
                }
            }
            h[(j, j)] += C64::new(coupling * u, 0.0);
        }
    }
    Ok(h)
}

/// `e^{-itH_N^{(k)}} gamma e^{itH_N^{(k)}}` for `k <= 2`.
pub fn interacting_flow(
    gamma: &ReducedDensityMatrix,
    t: f64,
    particles: usize,
    pair: &PairPotential,
) -> Result<ReducedDensityMatrix> {
    KBodyHamiltonian::new(*gamma.grid(), gamma.order(), particles, pair)?.flow(gamma, t)
}

/// `Tr |U_{interacting}(t) gamma - U_{free}(t) gamma|`
pub fn flow_gap(gamma: &ReducedDensityMatrix, t: f64, particles: usize, pair: &PairPotential) -> Result<f64> {
    let a = interacting_flow(gamma, t, particles, pair)?;
    let b = free_flow(gamma, t)?;
    trace_norm(a.sub(&b)?.matrix())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    Trapezoid,
    /// Composite Simpson, closing an odd interval count with the 3/8 rule.
    /// A single interval borrows the next node when one exists.
    Simpson,
}

impl Quadrature {
    pub fn name(self) -> &'static str {
        match self {
            Quadrature::Trapezoid => "trapezoid",
            Quadrature::Simpson => "simpson",
        }
    }

    fn order(self) -> i32 {
        match self {
            Quadrature::Trapezoid => 2,
            Quadrature::Simpson => 4,
        }
    }
}

/// Weights for `intervals` equal steps of size `h`, out of `nodes` available.
/// The result can be one longer than `intervals + 1`.
pub fn quadrature_weights(intervals: usize, nodes: usize, h: f64, rule: Quadrature) -> Vec<f64> {
    let mut w = vec![0.0; intervals + 1];
    if intervals == 0 {
        return w;
    }
    let trapezoid = |w: &mut [f64], from: usize, to: usize| {
        for i in from..to {
            w[i] += 0.5 * h;
            w[i + 1] += 0.5 * h;
        }
    };
    match rule {
        Quadrature::Trapezoid => trapezoid(&mut w, 0, intervals),
        Quadrature::Simpson => {
            if intervals == 1 {
                if nodes > 2 {
                    return vec![5.0 * h / 12.0, 8.0 * h / 12.0, -h / 12.0];
                }
                trapezoid(&mut w, 0, 1);
                return w;
            }
            let simpson_end = if intervals.is_multiple_of(2) { intervals } else { intervals - 3 };
            for i in (0..simpson_end).step_by(2) {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
            }
            if simpson_end < intervals {
                let b = simpson_end;
                for (off, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                    w[b + off] += 3.0 * h / 8.0 * c;
                }
            }
        }
    }
    w
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyResidualReport {
    pub order: usize,
    pub times: Vec<f64>,
    pub rule: Quadrature,
    pub nodes: usize,
    pub residuals: Vec<f64>,
    /// `dt^2` of the underlying propagation, when known.
    pub splitting_scale: Option<f64>,
    /// `spacing^p` for the quadrature rule of order `p`.
    pub quadrature_scale: f64,
}

impl HierarchyResidualReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, &r| m.max(r))
    }
}

fn uniform_spacing(times: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("no quadrature nodes".into()));
    }
    if times[0] != 0.0 {
        return Err(Error::InvalidArgument("the first node must be t = 0".into()));
    }
    if times.len() == 1 {
        return Ok(0.0);
    }
    let h = times[1] - times[0];
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("node times must increase".into()));
    }
    for (j, t) in times.iter().enumerate() {
        if (t - j as f64 * h).abs() > 1e-9 * (1.0 + t.abs()) {
            return Err(Error::InvalidArgument(format!("missing or uneven node near t = {t}")));
        }
    }
    Ok(h)
}

/// Duhamel defect `gamma_t - U(t) gamma_0 + i c int_0^t U(t - s) B(s) ds` at every node.
fn duhamel_residuals(
    ham: &KBodyHamiltonian,
    times: &[f64],
    gammas: &[ReducedDensityMatrix],
    sources: &[CMat],
    coefficient: f64,
    rule: Quadrature,
) -> Result<Vec<f64>> {
    let h = uniform_spacing(times)?;
    if gammas.len() != times.len() || sources.len() != times.len() {
        return Err(Error::ShapeMismatch("trajectory and node counts differ".into()));
    }
    for g in gammas {
        ham.check(g)?;
    }
    // interaction picture: C_i = e^{i s_i H} B_i e^{-i s_i H} in the eigenbasis
    let picture: Vec<CMat> = sources
        .iter()
        .zip(times)
        .map(|(b, &s)| {
            let mut e = ham.to_eigenbasis(b.as_ref());
            rotate(&mut e, &ham.values, -s);
            e
        })
        .collect();
    let g0 = ham.to_eigenbasis(gammas[0].matrix());
    let dim = g0.nrows();
    let mut out = Vec::with_capacity(times.len());
    for (j, &t) in times.iter().enumerate() {
        let w = quadrature_weights(j, times.len(), h, rule);
        let mut integral = linalg::zeros(dim, dim);
        for (wi, c) in w.iter().zip(&picture) {
            if *wi != 0.0 {
                for b in 0..dim {
                    for a in 0..dim {
                        integral[(a, b)] += c[(a, b)] * *wi;
                    }
                }
            }
        }
        // U(t) [gamma_0 - i c integral]
        let mut free_part = Mat::from_fn(dim, dim, |a, b| g0[(a, b)] - C64::new(0.0, coefficient) * integral[(a, b)]);
        rotate(&mut free_part, &ham.values, t);
        let gt = ham.to_eigenbasis(gammas[j].matrix());
        out.push(trace_norm((gt - free_part).as_ref())?);
    }
    Ok(out)
}

/// Residual of the finite hierarchy for `gamma^{(k)}` along a recorded trajectory,
/// with the exact prefactor `(N - k)/N` and the pair field that drove the dynamics.
pub fn finite_hierarchy_residual(
    times: &[f64],
    gamma_k: &[ReducedDensityMatrix],
    gamma_k1: &[ReducedDensityMatrix],
    particles: usize,
    pair: &PairPotential,
    rule: Quadrature,
    dt: Option<f64>,
) -> Result<HierarchyResidualReport> {
    let first = gamma_k.first().ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let k = first.order();
    if k >= particles {
        return Err(Error::InvalidArgument(format!("order {k} needs more than {particles} particles")));
    }
    if gamma_k1.len() != gamma_k.len() {
        return Err(Error::ShapeMismatch("marginal trajectories have different lengths".into()));
    }
    let ham = KBodyHamiltonian::new(*first.grid(), k, particles, pair)?;
    let sources = gamma_k1
        .iter()
        .map(|g| {
            if g.order() != k + 1 {
                return Err(Error::ShapeMismatch("upper marginal has the wrong order".into()));
            }
            let mut acc = linalg::zeros(first.dim(), first.dim());
            for l in 0..k {
                acc += crate::density::collision_commutator(g, l, pair)?.into_matrix();
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let coefficient = (particles - k) as f64 / particles as f64;
    let residuals = duhamel_residuals(&ham, times, gamma_k, &sources, coefficient, rule)?;
    Ok(report(k, times, rule, residuals, dt))
}

fn report(order: usize, times: &[f64], rule: Quadrature, residuals: Vec<f64>, dt: Option<f64>) -> HierarchyResidualReport {
    let spacing = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
    HierarchyResidualReport {
        order,
        times: times.to_vec(),
        rule,
        nodes: times.len(),
        residuals,
        splitting_scale: dt.map(|d| d * d),
        quadrature_scale: spacing.powi(rule.order()),
    }
}

/// Collision source `sum_l Tr_{k+1}[V(x_l - x_{k+1}), (x)^{k+1} |psi><psi|]`, which for
/// product data is `sum_l (Phi(x_l) - Phi(x_l')) (x)^k |psi><psi|` with `Phi = V * |psi|^2`.
pub fn product_collision_source(psi: &WaveFn, order: usize, pair: &PairPotential) -> Result<CMat> {
    let field = mean_field(psi, pair)?;
    let gamma = ReducedDensityMatrix::projector(psi)?.tensor_power(order)?;
    let m = psi.grid().size();
    let dim = gamma.dim();
    let mut digits = vec![0usize; order];
    let phi: Vec<f64> = (0..dim)
        .map(|idx| {
            particle_indices(idx, m, order, &mut digits);
            digits.iter().map(|&x| field[x]).sum()
        })
        .collect();
    Ok(Mat::from_fn(dim, dim, |i, j| gamma.matrix()[(i, j)] * (phi[i] - phi[j])))
}

/// Residual of the infinite hierarchy for the product family `(x)^k |psi_t><psi_t|`
/// built from a Hartree trajectory.
pub fn infinite_hierarchy_residual(
    times: &[f64],
    states: &[WaveFn],
    order: usize,
    pair: &PairPotential,
    rule: Quadrature,
    dt: Option<f64>,
) -> Result<HierarchyResidualReport> {
    if order == 0 || order > MAX_INTERACTING_ORDER {
        return Err(Error::InvalidArgument(format!("order must be in 1..={MAX_INTERACTING_ORDER}, got {order}")));
    }
    let first = states.first().ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let ham = KBodyHamiltonian::free(*first.grid(), order)?;
    let gammas = states
        .iter()
        .map(|psi| ReducedDensityMatrix::projector(psi)?.tensor_power(order))
        .collect::<Result<Vec<_>>>()?;
    let sources = states
        .iter()
        .map(|psi| product_collision_source(psi, order, pair))
        .collect::<Result<Vec<_>>>()?;
    let residuals = duhamel_residuals(&ham, times, &gammas, &sources, 1.0, rule)?;
    Ok(report(order, times, rule, residuals, dt))
}
