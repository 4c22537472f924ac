//! The experiment drivers. Every study returns a [`StudyResult`] whose rows
//! are sorted by parameter tuple and then by time.

use std::time::Instant;

use mfl_core::density::{reduce, trace_distance, ReducedDensityMatrix};
use mfl_core::hartree::{evolve_hartree, HartreeTrajectory};
use mfl_core::hierarchy::{finite_hierarchy_residual, infinite_hierarchy_residual, Quadrature};
use mfl_core::nbody::{evolve_nbody_with, remainder_norm, NBodyHamiltonian, NBodyState, PotentialMode};
use mfl_core::oplemmas::{self, InequalityReport};
use rayon::prelude::*;

use crate::config::{grid_from, ExperimentConfig, QuadratureConfig, StudyKind};
use crate::error::{HarnessError, Result};
use crate::result::{Cell, RunRows, StudyResult};

pub const HARTREE_COLUMNS: &[&str] = &["t", "mass", "energy", "h1_norm"];
pub const NBODY_COLUMNS: &[&str] = &["N", "t", "norm", "energy"];
pub const CONVERGENCE_COLUMNS: &[&str] = &["N", "t", "D1", "D2", "F", "norm"];
pub const CUTOFF_COLUMNS: &[&str] = &["epsilon", "t", "D", "W2", "slope_eps", "slope_t"];
pub const SMOOTHING_COLUMNS: &[&str] = &["delta", "t", "distance", "distance_over_delta", "drift"];
pub const HIERARCHY_COLUMNS: &[&str] = &["hierarchy", "N", "order", "dt", "t", "residual"];
pub const OPCHECK_COLUMNS: &[&str] = &["lemma", "instance", "parameter", "measured", "tolerance", "passed", "label"];

/// Runs the study named by `cfg.study`.
pub fn run_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let start = Instant::now();
    let mut result = match cfg.study {
        StudyKind::Hartree => run_hartree(cfg),
        StudyKind::Nbody => run_nbody(cfg),
        StudyKind::Convergence => run_convergence_study(cfg),
        StudyKind::CutoffStudy => run_cutoff_study(cfg),
        StudyKind::SmoothingStudy => run_smoothing_study(cfg),
        StudyKind::HierarchyResidual => run_hierarchy_residual(cfg),
        StudyKind::Opcheck => run_opcheck(cfg),
    }?;
    result.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

fn table(cfg: &ExperimentConfig, columns: &[&str]) -> StudyResult {
    StudyResult::new(cfg.study, cfg.digest(), columns)
}

fn hartree_trajectory(cfg: &ExperimentConfig) -> Result<HartreeTrajectory> {
    let psi0 = cfg.initial_state()?;
    let split = cfg.split(1, cfg.potential.cutoffs[0])?;
    let d = &cfg.dynamics;
    Ok(evolve_hartree(&psi0, &split.v, d.t_final, d.dt, d.record_every)?)
}

/// Collects `(t, state)` at every recorded time.
fn nbody_frames(cfg: &ExperimentConfig, state0: &NBodyState, ham: &NBodyHamiltonian) -> Result<Vec<(f64, NBodyState)>> {
    let d = &cfg.dynamics;
    let mut frames = Vec::new();
    evolve_nbody_with(state0, ham, d.t_final, d.dt, d.record_every, cfg.guard(), |t, st| {
        frames.push((t, st.clone()));
        Ok(())
    })?;
    Ok(frames)
}

fn check_time(expected: f64, t: f64) -> mfl_core::Result<()> {
    if (expected - t).abs() > 1e-12 {
        return Err(mfl_core::Error::ShapeMismatch(format!("recorded times disagree: {expected} vs {t}")));
    }
    Ok(())
}

pub fn run_hartree(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let traj = hartree_trajectory(cfg)?;
    let mut out = table(cfg, HARTREE_COLUMNS);
    for (t, diag) in traj.times.iter().zip(&traj.diagnostics) {
        out.push(vec![(*t).into(), diag.mass.into(), diag.energy.into(), diag.h1_norm.into()]);
    }
    Ok(out)
}

pub fn run_nbody(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let psi0 = cfg.initial_state()?;
    let runs: Vec<RunRows> = cfg
        .dynamics
        .particles
        .par_iter()
        .map(|&n| {
            let split = cfg.split(n, cfg.potential.cutoffs[0])?;
            let ham = NBodyHamiltonian::from_split(&split, PotentialMode::Full);
            let state0 = NBodyState::product_state(&psi0, n, cfg.guard())?;
            let d = &cfg.dynamics;
            let mut rows = Vec::new();
            evolve_nbody_with(&state0, &ham, d.t_final, d.dt, d.record_every, cfg.guard(), |t, st| {
                rows.push(vec![n.into(), t.into(), st.norm().into(), ham.energy(st, cfg.guard())?.into()]);
                Ok(())
            })?;
            Ok(RunRows { key: vec![n.into()], rows })
        })
        .collect::<Result<_>>()?;
    let mut out = table(cfg, NBODY_COLUMNS);
    out.merge(runs);
    Ok(out)
}

/// For each N: `D_k(N, t)` against the Hartree products and the
/// factorization defect `F(N, t)`. Two-particle quantities are evaluated every
/// `pair_every` steps and at the final time.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let hartree = hartree_trajectory(cfg)?;
    let psi0 = cfg.initial_state()?;
    let d = &cfg.dynamics;
    let steps = mfl_core::hartree::step_count(d.t_final, d.dt)?;
    let want1 = d.orders.contains(&1);
    let want2 = d.orders.contains(&2);
    let runs: Vec<RunRows> = d
        .particles
        .par_iter()
        .map(|&n| {
            let split = cfg.split(n, cfg.potential.cutoffs[0])?;
            let ham = NBodyHamiltonian::from_split(&split, PotentialMode::Full);
            let state0 = NBodyState::product_state(&psi0, n, cfg.guard())?;
            let mut rows = Vec::new();
            let mut frame = 0;
            evolve_nbody_with(&state0, &ham, d.t_final, d.dt, d.record_every, cfg.guard(), |t, st| {
                check_time(hartree.times[frame], t)?;
                let g_psi = ReducedDensityMatrix::projector(&hartree.states[frame])?;
                frame += 1;
                let g1 = reduce(st, 1)?;
                let d1 = trace_distance(&g1, &g_psi)?;
                let step = (t / d.dt).round() as usize;
                let (mut d2, mut f) = (Cell::Missing, Cell::Missing);
                if n >= 2 && (step % d.pair_every == 0 || step == steps) {
                    let g2 = reduce(st, 2)?;
                    if want2 {
                        d2 = trace_distance(&g2, &g_psi.tensor_power(2)?)?.into();
                    }
                    f = trace_distance(&g2, &g1.tensor(&g1)?)?.into();
                }
                let d1 = if want1 { d1.into() } else { Cell::Missing };
                rows.push(vec![n.into(), t.into(), d1, d2, f, st.norm().into()]);
                Ok(())
            })?;
            Ok(RunRows { key: vec![n.into()], rows })
        })
        .collect::<Result<_>>()?;
    let mut out = table(cfg, CONVERGENCE_COLUMNS);
    out.merge(runs);
    Ok(out)
}

fn log_slope(y1: f64, y0: f64, x1: f64, x0: f64) -> Cell {
    if y1 > 0.0 && y0 > 0.0 && x1 > 0.0 && x0 > 0.0 && x1 != x0 {
        Cell::Float((y1 / y0).ln() / (x1 / x0).ln())
    } else {
        Cell::Missing
    }
}

/// `D(eps, t) = ||Psi^{delta,eps}_t - Psi^delta_t||^2` between the cutoff and
/// the full evolution of the same regularized product data, with the
/// instantaneous `||W Psi^{delta,eps}_t||^2` and log-log slopes in `eps`
/// (against the next smaller radius) and in `t` (against the previous time).
pub fn run_cutoff_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let n = cfg.dynamics.study_particles;
    let psi0 = cfg.initial_state()?;
    let state0 = NBodyState::regularized_product(&psi0, n, cfg.potential.cutoff_delta, cfg.guard())?;
    let full = NBodyHamiltonian::from_split(&cfg.split(n, cfg.potential.cutoffs[0])?, PotentialMode::Full);
    let reference = nbody_frames(cfg, &state0, &full)?;
    let d = &cfg.dynamics;

    let mut cutoffs = cfg.potential.cutoffs.clone();
    cutoffs.sort_by(f64::total_cmp);
    cutoffs.dedup();
    let series: Vec<Vec<(f64, f64, f64)>> = cutoffs
        .par_iter()
        .map(|&eps| {
            let split = cfg.split(n, eps)?;
            let ham = NBodyHamiltonian::from_split(&split, PotentialMode::Cutoff);
            let mut rows = Vec::new();
            let mut frame = 0;
            evolve_nbody_with(&state0, &ham, d.t_final, d.dt, d.record_every, cfg.guard(), |t, st| {
                let (t_ref, ref_state) = &reference[frame];
                check_time(*t_ref, t)?;
                frame += 1;
                let dist = st.distance(ref_state)?;
                let w = remainder_norm(st, &split)?;
                rows.push((t, dist * dist, w * w));
                Ok(())
            })?;
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let runs = cutoffs
        .iter()
        .enumerate()
        .map(|(j, &eps)| {
            let rows = series[j]
                .iter()
                .enumerate()
                .map(|(i, &(t, dd, w2))| {
                    let slope_eps = if j > 0 { log_slope(dd, series[j - 1][i].1, eps, cutoffs[j - 1]) } else { Cell::Missing };
                    let slope_t = if i > 0 {
                        let (t0, d0, _) = series[j][i - 1];
                        log_slope(dd, d0, t, t0)
                    } else {
                        Cell::Missing
                    };
                    vec![eps.into(), t.into(), dd.into(), w2.into(), slope_eps, slope_t]
                })
                .collect();
            RunRows { key: vec![eps.into()], rows }
        })
        .collect();
    let mut out = table(cfg, CUTOFF_COLUMNS);
    out.merge(runs);
    Ok(out)
}

/// `||Psi_{N,t} - Psi^delta_{N,t}||` for both states evolved under the full
/// Hamiltonian; `drift` is the change since `t = 0`.
pub fn run_smoothing_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let n = cfg.dynamics.study_particles;
    let psi0 = cfg.initial_state()?;
    let ham = NBodyHamiltonian::from_split(&cfg.split(n, cfg.potential.cutoffs[0])?, PotentialMode::Full);
    let reference = nbody_frames(cfg, &NBodyState::product_state(&psi0, n, cfg.guard())?, &ham)?;
    let d = &cfg.dynamics;
    let runs: Vec<RunRows> = cfg
        .potential
        .deltas
        .par_iter()
        .map(|&delta| {
            let state0 = NBodyState::regularized_product(&psi0, n, delta, cfg.guard())?;
            let mut rows = Vec::new();
            let mut frame = 0;
            let mut initial = 0.0;
            evolve_nbody_with(&state0, &ham, d.t_final, d.dt, d.record_every, cfg.guard(), |t, st| {
                let (t_ref, ref_state) = &reference[frame];
                check_time(*t_ref, t)?;
                let dist = st.distance(ref_state)?;
                if frame == 0 {
                    initial = dist;
                }
                frame += 1;
                let ratio = if delta > 0.0 { Cell::Float(dist / delta) } else { Cell::Missing };
                rows.push(vec![delta.into(), t.into(), dist.into(), ratio, (dist - initial).abs().into()]);
                Ok(())
            })?;
            Ok(RunRows { key: vec![delta.into()], rows })
        })
        .collect::<Result<_>>()?;
    let mut out = table(cfg, SMOOTHING_COLUMNS);
    out.merge(runs);
    Ok(out)
}

/// Residuals of the finite (N-body marginals) and infinite (Hartree
/// products) hierarchies at every recorded time, for `dt` and, when
/// `refine` is set, for `dt / 2` with the same `record_every`.
pub fn run_hierarchy_residual(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let h = &cfg.hierarchy;
    let rule = match h.quadrature {
        QuadratureConfig::Trapezoid => Quadrature::Trapezoid,
        QuadratureConfig::Simpson => Quadrature::Simpson,
    };
    let n = cfg.dynamics.study_particles;
    if n <= h.order {
        return Err(HarnessError::Config(format!(
            "the finite hierarchy of order {} needs more than {} particles",
            h.order, h.order
        )));
    }
    let mut dts = vec![cfg.dynamics.dt];
    if h.refine {
        dts.push(0.5 * cfg.dynamics.dt);
    }
    let psi0 = cfg.initial_state()?;
    let jobs: Vec<(bool, f64)> = dts.iter().flat_map(|&dt| [(true, dt), (false, dt)]).collect();
    let runs: Vec<RunRows> = jobs
        .par_iter()
        .map(|&(finite, dt)| {
            let mut local = cfg.clone();
            local.dynamics.dt = dt;
            let split = local.split(n, local.potential.cutoffs[0])?;
            let (report, label, particles) = if finite {
                let ham = NBodyHamiltonian::from_split(&split, PotentialMode::Full);
                let frames = nbody_frames(&local, &NBodyState::product_state(&psi0, n, local.guard())?, &ham)?;
                let times: Vec<f64> = frames.iter().map(|f| f.0).collect();
                let gk = frames.iter().map(|f| reduce(&f.1, h.order)).collect::<mfl_core::Result<Vec<_>>>()?;
                let gk1 = frames.iter().map(|f| reduce(&f.1, h.order + 1)).collect::<mfl_core::Result<Vec<_>>>()?;
                drop(frames);
                let rep = finite_hierarchy_residual(&times, &gk, &gk1, n, &split.v, rule, Some(dt))?;
                (rep, "finite", Cell::from(n))
            } else {
                let traj = hartree_trajectory(&local)?;
                let rep = infinite_hierarchy_residual(&traj.times, &traj.states, h.order, &split.v, rule, Some(dt))?;
                (rep, "infinite", Cell::Missing)
            };
            let rows = report
                .times
                .iter()
                .zip(&report.residuals)
                .map(|(&t, &r)| vec![label.into(), particles.clone(), h.order.into(), dt.into(), t.into(), r.into()])
                .collect();
            Ok(RunRows { key: vec![label.into(), dt.into()], rows })
        })
        .collect::<Result<_>>()?;
    let mut out = table(cfg, HIERARCHY_COLUMNS);
    out.merge(runs);
    Ok(out)
}

fn report_row(r: &InequalityReport, parameter: Cell) -> Vec<Cell> {
    vec![
        r.lemma.into(),
        r.instance.as_str().into(),
        parameter,
        r.measured.into(),
        r.tolerance.into(),
        r.passed.into(),
        r.label.into(),
    ]
}

/// Hardy checks over softenings and constants, the `l1` domination sweep,
/// the fuzzed trace lemmas and the partial-trace calculus.
pub fn run_opcheck(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let o = &cfg.opcheck;
    let hardy_grid = grid_from(&o.hardy_grid)?;
    let l1_grid = grid_from(&o.l1_grid)?;
    let mut runs = Vec::new();

    let mut hardy = Vec::new();
    for (ci, &c) in o.hardy_coefficients.iter().enumerate() {
        for (ai, &a) in o.hardy_softenings_spacings.iter().enumerate() {
            let seed = cfg.seed.wrapping_add((ci * 1000 + ai) as u64);
            let r = oplemmas::check_hardy(&hardy_grid, a * hardy_grid.spacing(), c, o.hardy_samples, seed)?;
            hardy.push(report_row(&r, a.into()));
        }
    }
    runs.push(RunRows { key: vec!["1-hardy".into()], rows: hardy });

    let (rep, points) = oplemmas::check_l1_domination(&l1_grid, o.l1_kappa, &o.l1_lambdas)?;
    let mut rows = vec![report_row(&rep, Cell::Missing)];
    for p in &points {
        rows.push(vec![
            "l1-domination-point".into(),
            format!("lambda={} rho={:e} top={:e}", p.lambda, p.rho, p.top).as_str().into(),
            p.lambda.into(),
            p.compensated.into(),
            Cell::Missing,
            Cell::Missing,
            rep.label.into(),
        ]);
    }
    runs.push(RunRows { key: vec!["2-l1".into()], rows });

    let fuzz = oplemmas::fuzz_trace_lemmas(cfg.seed, o.fuzz_pairs, o.fuzz_min_dim..=o.fuzz_max_dim)?;
    runs.push(RunRows { key: vec!["3-fuzz".into()], rows: fuzz.iter().map(|r| report_row(r, Cell::Missing)).collect() });

    let [d1, d2] = o.bipartite_dims;
    let calc = oplemmas::check_partial_trace_calculus(cfg.seed, d1, d2, o.bipartite_instances, o.duality_tests)?;
    runs.push(RunRows { key: vec!["4-calculus".into()], rows: calc.iter().map(|r| report_row(r, Cell::Missing)).collect() });

    let mut out = table(cfg, OPCHECK_COLUMNS);
    out.merge(runs);
    Ok(out)
}
