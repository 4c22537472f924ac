use mfl_core::density::{reduce, trace_distance, ReducedDensityMatrix};
use mfl_core::hartree::{evolve_hartree, hartree_step};
use mfl_core::nbody::{evolve_nbody, evolve_nbody_with, NBodyHamiltonian, NBodyState, PotentialMode, Propagator};
use mfl_core::{CoreModel, Error, GridSpec, MemoryGuard, PotentialParams, PotentialSplit, Sign, WaveFn};

fn soft_split(g: GridSpec, particles: usize, sign: Sign) -> PotentialSplit {
    PotentialSplit::build(
        g,
        PotentialParams { sign, coupling: 1.0, cutoff: 4.0, particles, core: CoreModel::Soft { softening: g.spacing() } },
    )
    .unwrap()
}

fn packet(g: GridSpec) -> WaveFn {
    let mut psi = WaveFn::gaussian(g, [0.4, 0.0, 0.0], 1.0, [0.7, 0.0, 0.0]).unwrap();
    psi.normalize().unwrap();
    psi
}

#[test]
fn bosonic_and_general_propagators_agree() {
    let g = GridSpec::new(1, 16, 8.0).unwrap();
    for n in [2, 3, 4] {
        let ham = NBodyHamiltonian::from_split(&soft_split(g, n, Sign::Repulsive), PotentialMode::Full);
        let state = NBodyState::product_state(&packet(g), n, MemoryGuard::default()).unwrap();
        let mut fast = Propagator::new(&ham, 5e-3, MemoryGuard::default()).unwrap();
        let mut plain = Propagator::general(&ham, 5e-3, MemoryGuard::default()).unwrap();
        assert!(fast.exploits_symmetry());
        assert!(!plain.exploits_symmetry());
        let (mut a, mut b) = (state.clone(), state);
        fast.run(&mut a, 40, |s| s == 40, |_, _| Ok(())).unwrap();
        for _ in 0..40 {
            plain.step(&mut b);
        }
        assert!(a.distance(&b).unwrap() < 1e-12, "N={n}");
        assert!(a.symmetry_defect() < 1e-12);
    }
}

#[test]
fn bosonic_run_rejects_asymmetric_states() {
    let g = GridSpec::new(1, 8, 8.0).unwrap();
    let ham = NBodyHamiltonian::from_split(&soft_split(g, 2, Sign::Repulsive), PotentialMode::Full);
    let mut values = vec![num_complex::Complex64::new(0.0, 0.0); 64];
    values[1] = num_complex::Complex64::new(1.0, 0.0);
    let mut state = NBodyState::new(g, 2, values, MemoryGuard::default()).unwrap();
    state.normalize().unwrap();
    let mut prop = Propagator::new(&ham, 1e-2, MemoryGuard::default()).unwrap();
    assert!(matches!(prop.run(&mut state, 3, |_| false, |_, _| Ok(())), Err(Error::InvalidArgument(_))));
}

#[test]
fn hartree_conserves_mass_and_energy() {
    let g = GridSpec::new(1, 32, 16.0).unwrap();
    for sign in [Sign::Repulsive, Sign::Attractive] {
        let v = soft_split(g, 1, sign).v;
        let traj = evolve_hartree(&packet(g), &v, 1.0, 1e-3, 50).unwrap();
        assert_eq!(traj.times.len(), 21);
        assert!(traj.mass_drift() < 1e-12);
        assert!(traj.energy_drift() < 1e-5, "{:?} {}", sign, traj.energy_drift());
        assert!(traj.diagnostics.iter().all(|d| d.h1_norm.is_finite()));
    }
}

#[test]
fn one_particle_nbody_is_hartree_free_of_self_interaction() {
    let g = GridSpec::new(1, 16, 8.0).unwrap();
    let split = soft_split(g, 1, Sign::Repulsive);
    let ham = NBodyHamiltonian::from_split(&split, PotentialMode::Full);
    let psi = packet(g);
    let state = NBodyState::product_state(&psi, 1, MemoryGuard::default()).unwrap();
    let traj = evolve_nbody(&state, &ham, 0.1, 1e-2, 10, MemoryGuard::default()).unwrap();
    let free = psi.free_evolve(0.1);
    let last = traj.states.last().unwrap();
    let gap: f64 = last.values().iter().zip(free.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(gap < 1e-12);
    let kicked = hartree_step(&psi, 1e-2, &split.v).unwrap();
    assert!((kicked.norm() - 1.0).abs() < 1e-13);
}

#[test]
fn marginals_stay_close_to_hartree_for_weak_coupling() {
    let g = GridSpec::new(1, 16, 8.0).unwrap();
    let psi = packet(g);
    let n = 3;
    let split = soft_split(g, n, Sign::Repulsive);
    let ham = NBodyHamiltonian::from_split(&split, PotentialMode::Full);
    let hartree = evolve_hartree(&psi, &soft_split(g, 1, Sign::Repulsive).v, 0.2, 1e-3, 100).unwrap();
    let mut frame = 0;
    let state = NBodyState::product_state(&psi, n, MemoryGuard::default()).unwrap();
    let mut last = 0.0;
    evolve_nbody_with(&state, &ham, 0.2, 1e-3, 100, MemoryGuard::default(), |t, st| {
        assert!((hartree.times[frame] - t).abs() < 1e-12);
        let product = ReducedDensityMatrix::projector(&hartree.states[frame])?;
        let d = trace_distance(&reduce(st, 1)?, &product)?;
        assert!(d >= last - 1e-12 && d < 0.1, "t={t} d={d}");
        last = d;
        frame += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(frame, 3);
    assert!(last > 1e-4);
}

#[test]
fn memory_guard_rejects_oversized_states() {
    let g = GridSpec::new(1, 32, 16.0).unwrap();
    let r = NBodyState::product_state(&packet(g), 5, MemoryGuard::new(1 << 20));
    assert!(matches!(r, Err(Error::MemoryGuard { .. })));
}
