//! Exact N-boson propagation on the tensor-product grid.
//!
//! A state is a complex tensor of `M^N` entries (`M = n^d`), particle 1
//! slowest. The Hamiltonian is `-1/2 sum Delta_l + coupling * sum_{l<j} V(x_l - x_j)`
//! with the pair field either the full potential or its cutoff-regular part.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::bosonic::BosonicPlan;
use crate::error::{Error, Result};
use crate::fft::{particle_indices, Spectral};
use crate::linalg::ordered_sum;
use crate::grid::{GridSpec, MemoryGuard};
use crate::hartree::{smooth_initial, step_count};
use crate::potential::{PairPotential, PotentialSplit};
use crate::wavefn::WaveFn;

const MASS_DRIFT_ABORT: f64 = 1e-6;
const CHUNK: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq)]
pub struct NBodyState {
    grid: GridSpec,
    particles: usize,
    values: Vec<C64>,
}

impl NBodyState {
    pub fn new(grid: GridSpec, particles: usize, values: Vec<C64>, guard: MemoryGuard) -> Result<Self> {
        let entries = guard.check(&grid, particles)?;
        if particles == 0 {
            return Err(Error::InvalidArgument("an N-body state needs at least one particle".into()));
        }
        if values.len() != entries {
            return Err(Error::ShapeMismatch(format!("{} values for {} entries", values.len(), entries)));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("N-body state"));
        }
        Ok(Self { grid, particles, values })
    }

    /// `prod_j psi(x_j)` without any normalization requirement.
    pub fn product_of(psi: &WaveFn, particles: usize, guard: MemoryGuard) -> Result<Self> {
        let grid = *psi.grid();
        let entries = guard.check(&grid, particles)?;
        if particles == 0 {
            return Err(Error::InvalidArgument("an N-body state needs at least one particle".into()));
        }
        let m = grid.size();
        let mut values = psi.values().to_vec();
        let mut len = m;
        for _ in 1..particles {
            let mut next = Vec::with_capacity(len * m);
            for &a in &values {
                next.extend(psi.values().iter().map(|&b| a * b));
            }
            values = next;
            len *= m;
        }
        debug_assert_eq!(len, entries);
        Ok(Self { grid, particles, values })
    }

    /// Product initial data `prod_j psi0(x_j)` for a normalized `psi0`.
    pub fn product_state(psi0: &WaveFn, particles: usize, guard: MemoryGuard) -> Result<Self> {
        let nrm = psi0.norm();
        if (nrm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("product data needs ||psi0|| = 1, got {nrm}")));
        }
        Self::product_of(psi0, particles, guard)
    }

    /// Regularized product data `prod_j exp((delta/N) Delta) psi0 (x_j)`.
    pub fn regularized_product(psi0: &WaveFn, particles: usize, delta: f64, guard: MemoryGuard) -> Result<Self> {
        if particles == 0 {
            return Err(Error::InvalidArgument("an N-body state needs at least one particle".into()));
        }
        let smoothed = smooth_initial(psi0, delta / particles as f64)?;
        Self::product_of(&smoothed, particles, guard)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    /// `h^{dN}`
    pub fn weight(&self) -> f64 {
        self.grid.cell_volume().powi(self.particles as i32)
    }

    pub fn norm(&self) -> f64 {
        (self.weight() * ordered_sum(self.values.len(), |i| self.values[i].norm_sqr())).sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let nrm = self.norm();
        if !(nrm > 0.0) {
            return Err(Error::InvalidArgument("cannot normalize a zero state".into()));
        }
        let s = 1.0 / nrm;
        self.values.par_iter_mut().for_each(|v| *v *= s);
        Ok(())
    }

    fn check_compatible(&self, other: &NBodyState) -> Result<()> {
        if self.grid != other.grid || self.particles != other.particles {
            return Err(Error::ShapeMismatch("states live on different grids or particle counts".into()));
        }
        Ok(())
    }

    pub fn inner(&self, other: &NBodyState) -> Result<C64> {
        self.check_compatible(other)?;
        let s: C64 = ordered_sum(self.values.len(), |i| self.values[i].conj() * other.values[i]);
        Ok(s * self.weight())
    }

    /// `||Psi - Phi||` in the weighted L^2 norm.
    pub fn distance(&self, other: &NBodyState) -> Result<f64> {
        self.check_compatible(other)?;
        let s: f64 = ordered_sum(self.values.len(), |i| (self.values[i] - other.values[i]).norm_sqr());
        Ok((s * self.weight()).sqrt())
    }

    /// Largest `||Psi - Psi o sigma||` over transpositions of two particles.
    pub fn symmetry_defect(&self) -> f64 {
        let m = self.grid.size();
        let n = self.particles;
        let mut worst = 0.0f64;
        for l in 0..n {
            for j in (l + 1)..n {
                let stride_l = m.pow((n - 1 - l) as u32);
                let stride_j = m.pow((n - 1 - j) as u32);
                let s: f64 = ordered_sum(self.values.len(), |idx| {
                    let a = (idx / stride_l) % m;
                    let b = (idx / stride_j) % m;
                    let swapped = idx - a * stride_l - b * stride_j + b * stride_l + a * stride_j;
                    (self.values[idx] - self.values[swapped]).norm_sqr()
                });
                worst = worst.max((s * self.weight()).sqrt());
            }
        }
        worst
    }

    /// Unitary DFT over all `d N` axes.
    pub fn fourier(&self) -> Vec<C64> {
        let spec = Spectral::new(self.grid.n());
        let mut data = self.values.clone();
        let mut scratch = Vec::new();
        spec.forward(&mut data, &mut scratch, self.grid.dim() * self.particles);
        data
    }

    /// `h^{dN} sum_P w(P) |Psi_hat(P)|^2` for a weight that is a sum of per-particle terms.
    fn additive_moment(&self, per_particle: &[f64], power: i32) -> f64 {
        let coeffs = self.fourier();
        let m = self.grid.size();
        let n = self.particles;
        let parts: Vec<f64> = coeffs
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut digits = vec![0usize; n];
                let mut acc = 0.0;
                for (off, v) in chunk.iter().enumerate() {
                    particle_indices(c * CHUNK + off, m, n, &mut digits);
                    let w: f64 = digits.iter().map(|&p| per_particle[p]).sum();
                    acc += w.powi(power) * v.norm_sqr();
                }
                acc
            })
            .collect();
        parts.into_iter().sum::<f64>() * self.weight()
    }

    /// `<Psi, L^k Psi>` with `L = (1/N) sum_l (1 - Delta_l)`, for `k` in {1, 2}.
    pub fn expectation_l_pow(&self, k: u32) -> Result<f64> {
        if !(1..=2).contains(&k) {
            return Err(Error::InvalidArgument(format!("L^k expectation supports k in {{1, 2}}, got {k}")));
        }
        let nrm = self.norm();
        if (nrm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("L^k expectation needs a normalized state, norm is {nrm}")));
        }
        let inv_n = 1.0 / self.particles as f64;
        let table: Vec<f64> = self.grid.momentum_sq().iter().map(|p2| (1.0 + p2) * inv_n).collect();
        Ok(self.additive_moment(&table, k as i32))
    }

    /// `<Psi, -1/2 sum Delta_l Psi>`
    pub fn kinetic_energy(&self) -> f64 {
        let table: Vec<f64> = self.grid.momentum_sq().iter().map(|p2| 0.5 * p2).collect();
        self.additive_moment(&table, 1)
    }
}

/// Which part of the pair potential drives the dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialMode {
    Full,
    Cutoff,
}

#[derive(Clone, Debug)]
pub struct NBodyHamiltonian {
    pub grid: GridSpec,
    pub particles: usize,
    pub coupling: f64,
    pub pair: PairPotential,
    pub mode: PotentialMode,
}

impl NBodyHamiltonian {
    /// `H_N` (mode full) or `H_{N,eps}` (mode cutoff) with the mean-field coupling `1/N`.
    pub fn from_split(split: &PotentialSplit, mode: PotentialMode) -> Self {
        let pair = match mode {
            PotentialMode::Full => split.v.clone(),
            PotentialMode::Cutoff => split.v1.clone(),
        };
        let particles = split.params.particles;
        Self { grid: *split.grid(), particles, coupling: 1.0 / particles as f64, pair, mode }
    }

    /// Generic Hamiltonian with an explicit pair field and coupling.
    pub fn with_pair(pair: PairPotential, particles: usize, coupling: f64) -> Self {
        Self { grid: *pair.grid(), particles, coupling, pair, mode: PotentialMode::Full }
    }

    /// Diagonal interaction `coupling * sum_{l<j} V(x_l - x_j)` on the whole tensor.
    pub fn interaction_tensor(&self, guard: MemoryGuard) -> Result<Vec<f64>> {
        let entries = guard.check(&self.grid, self.particles)?;
        Ok(pair_sum_tensor(&self.grid, self.particles, entries, &self.pair, self.coupling))
    }

    pub fn energy(&self, state: &NBodyState, guard: MemoryGuard) -> Result<f64> {
        check_state(self, state)?;
        let u = self.interaction_tensor(guard)?;
        let pot: f64 = ordered_sum(u.len(), |i| u[i] * state.values[i].norm_sqr());
        Ok(state.kinetic_energy() + pot * state.weight())
    }
}

fn pair_sum_tensor(grid: &GridSpec, particles: usize, entries: usize, pair: &PairPotential, coupling: f64) -> Vec<f64> {
    let m = grid.size();
    let table = grid.difference_table();
    let pv = pair.values();
    let mut out = vec![0.0; entries];
    if particles < 2 || pair.is_zero() {
        return out;
    }
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut digits = vec![0usize; particles];
        for (off, slot) in chunk.iter_mut().enumerate() {
            particle_indices(c * CHUNK + off, m, particles, &mut digits);
            let mut s = 0.0;
            for l in 0..particles {
                let row = digits[l] * m;
                for j in (l + 1)..particles {
                    s += pv[table[row + digits[j]] as usize];
                }
            }
            *slot = coupling * s;
        }
    });
    out
}

fn check_state(ham: &NBodyHamiltonian, state: &NBodyState) -> Result<()> {
    if ham.grid != state.grid || ham.particles != state.particles {
        return Err(Error::ShapeMismatch("Hamiltonian and state disagree on grid or particle count".into()));
    }
    Ok(())
}

/// Largest symmetry defect accepted by a propagator that exploits bosonic symmetry.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Strang propagator for a fixed step.
///
/// [`Propagator::new`] assumes bosonic states and works on the compact
/// symmetric representation; [`Propagator::general`] works on the full tensor.
pub struct Propagator {
    spec: Spectral,
    axes: usize,
    half: Vec<C64>,
    full: Vec<C64>,
    /// `exp(-i dt U)`, compact when `plan` is set
    phase: Vec<C64>,
    interacting: bool,
    plan: Option<BosonicPlan>,
    scratch: Vec<C64>,
    bufs: [Vec<C64>; 2],
}

impl Propagator {
    /// Propagator for bosonic (permutation-symmetric) states.
    pub fn new(ham: &NBodyHamiltonian, dt: f64, guard: MemoryGuard) -> Result<Self> {
        if ham.particles < 2 {
            return Self::general(ham, dt, guard);
        }
        Self::build(ham, dt, guard, true)
    }

    /// Propagator that makes no symmetry assumption on the state.
    pub fn general(ham: &NBodyHamiltonian, dt: f64, guard: MemoryGuard) -> Result<Self> {
        Self::build(ham, dt, guard, false)
    }

    fn build(ham: &NBodyHamiltonian, dt: f64, guard: MemoryGuard, bosonic: bool) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let plan = if bosonic {
            guard.check(&ham.grid, ham.particles)?;
            Some(BosonicPlan::new(ham.grid.n(), ham.grid.dim(), ham.particles)?)
        } else {
            None
        };
        let interacting = ham.particles >= 2 && !ham.pair.is_zero();
        let phase = if interacting {
            let u = ham.interaction_tensor(guard)?;
            let u = match &plan {
                Some(plan) => plan.compress(&u),
                None => u,
            };
            u.par_iter().map(|w| C64::from_polar(1.0, -dt * w)).collect()
        } else {
            guard.check(&ham.grid, ham.particles)?;
            Vec::new()
        };
        let p = ham.grid.axis_momenta();
        let axis_phase = |tau: f64| -> Vec<C64> { p.iter().map(|q| C64::from_polar(1.0, -0.5 * tau * q * q)).collect() };
        Ok(Self {
            spec: Spectral::new(ham.grid.n()),
            axes: ham.grid.dim() * ham.particles,
            half: axis_phase(0.5 * dt),
            full: axis_phase(dt),
            phase,
            interacting,
            plan,
            scratch: Vec::new(),
            bufs: [Vec::new(), Vec::new()],
        })
    }

    pub fn exploits_symmetry(&self) -> bool {
        self.plan.is_some()
    }

    /// Kinetic factor, preceded by the potential factor when `with_potential`.
    /// `work` is compact for a bosonic propagator.
    fn kinetic(&mut self, work: &mut Vec<C64>, full: bool, with_potential: bool) {
        let sym = if full { &self.full } else { &self.half };
        let pre = if with_potential && self.interacting { Some(self.phase.as_slice()) } else { None };
        match &self.plan {
            Some(plan) => {
                if let Some(pre) = pre {
                    work.par_iter_mut().zip(pre.par_iter()).for_each(|(v, f)| *v *= f);
                }
                plan.apply_separable(&self.spec, work, sym, &mut self.bufs);
            }
            None => self.spec.separable(work, &mut self.scratch, self.axes, sym, pre),
        }
    }

    fn check_symmetric(&self, state: &NBodyState) -> Result<()> {
        if let Some(plan) = &self.plan {
            let defect = plan.asymmetry(&state.values) * state.weight().sqrt();
            if defect > SYMMETRY_TOLERANCE * state.norm().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "state is not bosonic (symmetry defect {defect:.3e}); use Propagator::general"
                )));
            }
        }
        Ok(())
    }

    fn load(&self, state: &mut NBodyState) -> Vec<C64> {
        match &self.plan {
            Some(plan) => plan.compress(&state.values),
            None => std::mem::take(&mut state.values),
        }
    }

    fn store(&self, work: &mut Vec<C64>, state: &mut NBodyState) {
        match &self.plan {
            Some(plan) => plan.expand_into(work, &mut state.values),
            None => std::mem::swap(work, &mut state.values),
        }
    }

    /// One Strang step `K(dt/2) V(dt) K(dt/2)`. A bosonic propagator assumes,
    /// without checking, that the state is symmetric.
    pub fn step(&mut self, state: &mut NBodyState) {
        let mut work = self.load(state);
        self.kinetic(&mut work, false, false);
        self.kinetic(&mut work, false, true);
        self.store(&mut work, state);
    }

    /// Runs `steps` Strang steps with adjacent half kinetic factors fused,
    /// calling `observe(step, state)` after every step for which `record`
    /// returns true (always including the last).
    pub fn run<R, F>(&mut self, state: &mut NBodyState, steps: usize, record: R, mut observe: F) -> Result<()>
    where
        R: Fn(usize) -> bool,
        F: FnMut(usize, &NBodyState) -> Result<()>,
    {
        if steps == 0 {
            return Ok(());
        }
        self.check_symmetric(state)?;
        let mut work = self.load(state);
        self.kinetic(&mut work, false, false);
        for s in 1..=steps {
            if s == steps || record(s) {
                self.kinetic(&mut work, false, true);
                if work.iter().take(64).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    self.store(&mut work, state);
                    return Err(Error::NonFinite("N-body step"));
                }
                self.store(&mut work, state);
                observe(s, state)?;
                if s < steps {
                    work = self.load(state);
                    self.kinetic(&mut work, false, false);
                }
            } else {
                self.kinetic(&mut work, true, true);
            }
        }
        Ok(())
    }
}

/// One Strang step of the N-body evolution.
pub fn nbody_step(state: &NBodyState, dt: f64, ham: &NBodyHamiltonian, guard: MemoryGuard) -> Result<NBodyState> {
    check_state(ham, state)?;
    let mut prop = Propagator::new(ham, dt, guard)?;
    prop.check_symmetric(state)?;
    let mut out = state.clone();
    prop.step(&mut out);
    if out.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("N-body step"));
    }
    Ok(out)
}

/// Streams the trajectory to `observe(time, state)` at `t = 0`, every
/// `record_every` steps, and at the final time.
pub fn evolve_nbody_with<F>(
    psi0: &NBodyState,
    ham: &NBodyHamiltonian,
    t_final: f64,
    dt: f64,
    record_every: usize,
    guard: MemoryGuard,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(f64, &NBodyState) -> Result<()>,
{
    check_state(ham, psi0)?;
    let steps = step_count(t_final, dt)?;
    let record_every = record_every.max(1);
    observe(0.0, psi0)?;
    if steps == 0 {
        return Ok(());
    }
    let mass0 = psi0.norm();
    let mut prop = Propagator::new(ham, dt, guard)?;
    let mut state = psi0.clone();
    prop.run(
        &mut state,
        steps,
        |s| s % record_every == 0,
        |s, st| {
            let mass = st.norm();
            if !mass.is_finite() || (mass - mass0).abs() > MASS_DRIFT_ABORT {
                return Err(Error::Instability(format!(
                    "N-body norm drifted to {mass} at t = {}",
                    s as f64 * dt
                )));
            }
            observe(s as f64 * dt, st)
        },
    )
}

#[derive(Clone, Debug)]
pub struct NBodyTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<NBodyState>,
}

/// Collects the recorded states of [`evolve_nbody_with`].
pub fn evolve_nbody(
    psi0: &NBodyState,
    ham: &NBodyHamiltonian,
    t_final: f64,
    dt: f64,
    record_every: usize,
    guard: MemoryGuard,
) -> Result<NBodyTrajectory> {
    let mut traj = NBodyTrajectory { times: Vec::new(), states: Vec::new() };
    evolve_nbody_with(psi0, ham, t_final, dt, record_every, guard, |t, st| {
        traj.times.push(t);
        traj.states.push(st.clone());
        Ok(())
    })?;
    Ok(traj)
}

/// `||W Psi||` for the singular remainder `W = (1/N) sum_{l<j} V2(x_l - x_j)`.
pub fn remainder_norm(state: &NBodyState, split: &PotentialSplit) -> Result<f64> {
    if split.grid() != state.grid() || split.params.particles != state.particles {
        return Err(Error::ShapeMismatch("potential split and state disagree".into()));
    }
    let n = state.particles;
    let w = pair_sum_tensor(state.grid(), n, state.values.len(), &split.v2, 1.0 / n as f64);
    let s: f64 = ordered_sum(w.len(), |i| w[i] * w[i] * state.values[i].norm_sqr());
    Ok((s * state.weight()).sqrt())
}
