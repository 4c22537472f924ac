//! Split-step solver for the one-body Hartree equation
//! `i d/dt psi = -1/2 Delta psi + (V * |psi|^2) psi`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fft::Spectral;
use crate::potential::PairPotential;
use crate::wavefn::WaveFn;

/// Relative imaginary residue tolerated in a convolution of real fields.
const IMAG_REJECT: f64 = 1e-9;
/// Relative deviation from `V(x) = V(-x)` tolerated in a pair potential.
const EVEN_REJECT: f64 = 1e-12;
/// Mass drift that aborts a trajectory.
const MASS_DRIFT_ABORT: f64 = 1e-6;

fn check_same_grid(psi: &WaveFn, v: &PairPotential) -> Result<()> {
    if psi.grid() != v.grid() {
        return Err(Error::ShapeMismatch("wave function and potential live on different grids".into()));
    }
    Ok(())
}

/// Circular convolution `h^d sum_z V(x - z) f(z)`.
pub fn convolve(v: &PairPotential, f: &[f64]) -> Result<Vec<f64>> {
    let grid = v.grid();
    let m = grid.size();
    if f.len() != m {
        return Err(Error::ShapeMismatch("convolution operand length".into()));
    }
    let spec = Spectral::new(grid.n());
    let mut scratch = Vec::new();
    let mut vh: Vec<C64> = v.values().iter().map(|&x| C64::new(x, 0.0)).collect();
    let mut fh: Vec<C64> = f.iter().map(|&x| C64::new(x, 0.0)).collect();
    spec.forward(&mut vh, &mut scratch, grid.dim());
    spec.forward(&mut fh, &mut scratch, grid.dim());
    // unitary DFT: F(v (*) f) = sqrt(M) F(v) F(f)
    let factor = grid.cell_volume() * (m as f64).sqrt();
    let mut prod: Vec<C64> = vh.iter().zip(&fh).map(|(a, b)| a * b * factor).collect();
    spec.inverse(&mut prod, &mut scratch, grid.dim());

    let scale = prod.iter().fold(1.0f64, |s, c| s.max(c.re.abs()));
    let residue = prod.iter().fold(0.0f64, |s, c| s.max(c.im.abs())) / scale;
    if residue > IMAG_REJECT {
        return Err(Error::InvalidArgument(format!(
            "convolution has imaginary residue {residue:e}"
        )));
    }
    Ok(prod.into_iter().map(|c| c.re).collect())
}

/// Self-consistent field `(V * |psi|^2)(x)`.
pub fn mean_field(psi: &WaveFn, v: &PairPotential) -> Result<Vec<f64>> {
    check_same_grid(psi, v)?;
    if v.is_zero() {
        return Ok(vec![0.0; psi.grid().size()]);
    }
    let defect = v.evenness_defect();
    if defect > EVEN_REJECT * v.sup_norm() {
        return Err(Error::InvalidArgument(format!("pair potential is not even (defect {defect:e})")));
    }
    convolve(v, &psi.density())
}

/// `E = 1/2 ||grad psi||^2 + 1/2 <|psi|^2, V * |psi|^2>`.
pub fn energy(psi: &WaveFn, v: &PairPotential) -> Result<f64> {
    let kinetic = 0.5 * psi.spectral_moment(|p2| p2);
    let field = mean_field(psi, v)?;
    let h = psi.grid().cell_volume();
    let interaction: f64 = 0.5 * h * field.iter().zip(psi.values()).map(|(u, x)| u * x.norm_sqr()).sum::<f64>();
    Ok(kinetic + interaction)
}

/// Heat-kernel smoothing `exp(kappa Delta) psi`.
pub fn smooth_initial(psi: &WaveFn, kappa: f64) -> Result<WaveFn> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothing parameter must be >= 0, got {kappa}")));
    }
    if kappa == 0.0 {
        return Ok(psi.clone());
    }
    let table: Vec<C64> = psi
        .grid()
        .momentum_sq()
        .iter()
        .map(|p2| C64::new((-kappa * p2).exp(), 0.0))
        .collect();
    psi.apply_symbol_table(&table)
}

/// Kinetic propagator tables for a fixed step.
struct Kinetic {
    spec: Spectral,
    half: Vec<C64>,
}

impl Kinetic {
    fn new(psi: &WaveFn, dt: f64) -> Self {
        let half = psi
            .grid()
            .momentum_sq()
            .iter()
            .map(|p2| C64::from_polar(1.0, -0.25 * dt * p2))
            .collect();
        Self { spec: Spectral::new(psi.grid().n()), half }
    }

    fn apply(&self, values: &mut Vec<C64>, scratch: &mut Vec<C64>, dim: usize) {
        self.spec.forward(values, scratch, dim);
        values.iter_mut().zip(&self.half).for_each(|(c, m)| *c *= m);
        self.spec.inverse(values, scratch, dim);
    }
}

fn potential_kick(values: &mut [C64], v: &PairPotential, dt: f64) -> Result<()> {
    if v.is_zero() {
        return Ok(());
    }
    let density: Vec<f64> = values.iter().map(|x| x.norm_sqr()).collect();
    let field = convolve(v, &density)?;
    for (x, u) in values.iter_mut().zip(&field) {
        *x *= C64::from_polar(1.0, -dt * u);
    }
    Ok(())
}

fn finite_guard(values: &[C64]) -> Result<()> {
    if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("Hartree step"));
    }
    Ok(())
}

/// One Strang step: half kinetic, potential phase from the intermediate state, half kinetic.
pub fn hartree_step(psi: &WaveFn, dt: f64, v: &PairPotential) -> Result<WaveFn> {
    check_same_grid(psi, v)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let kin = Kinetic::new(psi, dt);
    let dim = psi.grid().dim();
    let mut values = psi.values().to_vec();
    let mut scratch = Vec::new();
    kin.apply(&mut values, &mut scratch, dim);
    potential_kick(&mut values, v, dt)?;
    kin.apply(&mut values, &mut scratch, dim);
    finite_guard(&values)?;
    WaveFn::new(*psi.grid(), values)
}

#[derive(Clone, Debug)]
pub struct HartreeDiagnostics {
    pub mass: f64,
    pub energy: f64,
    pub h1_norm: f64,
}

#[derive(Clone, Debug)]
pub struct HartreeTrajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<WaveFn>,
    pub diagnostics: Vec<HartreeDiagnostics>,
}

impl HartreeTrajectory {
    pub fn final_state(&self) -> &WaveFn {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// Largest relative energy deviation from the initial value.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.diagnostics[0].energy;
        self.diagnostics
            .iter()
            .map(|d| (d.energy - e0).abs() / e0.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    pub fn mass_drift(&self) -> f64 {
        let m0 = self.diagnostics[0].mass;
        self.diagnostics.iter().map(|d| (d.mass - m0).abs()).fold(0.0, f64::max)
    }
}

/// Number of steps for a horizon, requiring `T / dt` to be integral up to rounding.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidArgument(format!("final time must be >= 0, got {t_final}")));
    }
    let steps = (t_final / dt).round();
    if (steps * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(Error::InvalidArgument(format!("T = {t_final} is not a multiple of dt = {dt}")));
    }
    Ok(steps as usize)
}

fn diagnostics(psi: &WaveFn, v: &PairPotential) -> Result<HartreeDiagnostics> {
    Ok(HartreeDiagnostics { mass: psi.norm(), energy: energy(psi, v)?, h1_norm: psi.h1_norm() })
}

/// Integrates to `t_final`, recording every `record_every` steps and at the end.
pub fn evolve_hartree(
    psi0: &WaveFn,
    v: &PairPotential,
    t_final: f64,
    dt: f64,
    record_every: usize,
) -> Result<HartreeTrajectory> {
    check_same_grid(psi0, v)?;
    let steps = step_count(t_final, dt)?;
    let record_every = record_every.max(1);
    let kin = Kinetic::new(psi0, dt);
    let dim = psi0.grid().dim();
    let mass0 = psi0.norm();

    let mut traj = HartreeTrajectory {
        dt,
        times: vec![0.0],
        states: vec![psi0.clone()],
        diagnostics: vec![diagnostics(psi0, v)?],
    };
    let mut values = psi0.values().to_vec();
    let mut scratch = Vec::new();
    for step in 1..=steps {
        kin.apply(&mut values, &mut scratch, dim);
        potential_kick(&mut values, v, dt)?;
        kin.apply(&mut values, &mut scratch, dim);
        finite_guard(&values)?;
        if step % record_every == 0 || step == steps {
            let psi = WaveFn::new(*psi0.grid(), values.clone())?;
            let diag = diagnostics(&psi, v)?;
            if (diag.mass - mass0).abs() > MASS_DRIFT_ABORT {
                return Err(Error::Instability(format!(
                    "Hartree mass drifted to {} at t = {}",
                    diag.mass,
                    step as f64 * dt
                )));
            }
            if !diag.h1_norm.is_finite() {
                return Err(Error::Instability("Hartree H^1 norm blew up".into()));
            }
            traj.times.push(step as f64 * dt);
            traj.states.push(psi);
            traj.diagnostics.push(diag);
        }
    }
    Ok(traj)
}
