use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Real pair potential sampled on the displacement lattice (origin at index 0).
#[derive(Clone, Debug, PartialEq)]
pub struct PairPotential {
    grid: GridSpec,
    values: Vec<f64>,
}

impl PairPotential {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::ShapeMismatch(format!(
                "pair potential has {} samples, grid has {} points",
                values.len(),
                grid.size()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pair potential"));
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self { grid, values: vec![0.0; grid.size()] }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self { grid, values: vec![c; grid.size()] }
    }

    /// Samples `f(r)` at the minimal-image distance of every displacement.
    pub fn radial<F: Fn(f64) -> f64>(grid: GridSpec, f: F) -> Result<Self> {
        Self::new(grid, grid.displacement_radii().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at the displacement `x_i - x_j` of two flattened position indices.
    pub fn between(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.difference_index(i, j)]
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v + c).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Largest deviation from `V(x) = V(-x)`.
    pub fn evenness_defect(&self) -> f64 {
        let g = &self.grid;
        let n = g.n();
        (0..g.size())
            .map(|idx| {
                let a = g.unflatten(idx);
                let neg = [(n - a[0]) % n, (n - a[1]) % n, (n - a[2]) % n];
                (self.values[idx] - self.values[g.flatten(&neg)]).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Repulsive,
    Attractive,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Repulsive => 1.0,
            Sign::Attractive => -1.0,
        }
    }
}

/// Treatment of the Coulomb singularity at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoreModel {
    /// `1 / sqrt(r^2 + a^2)`
    Soft { softening: f64 },
    /// `1 / r`, with the `r = 0` sample replaced by `1 / (h/2)`. Three dimensions only.
    Capped,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialParams {
    pub sign: Sign,
    pub coupling: f64,
    pub cutoff: f64,
    pub particles: usize,
    pub core: CoreModel,
}

/// Cubic smoothstep: 0 on `[0, 1]`, 1 on `[2, inf)`, C^1 in between.
pub fn cutoff_profile(r: f64) -> f64 {
    let s = (r - 1.0).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Coulomb-type pair potential split into a regular part `v1`, which vanishes
/// inside the ball of radius `eps / sqrt(N)`, and the singular remainder `v2`.
#[derive(Clone, Debug)]
pub struct PotentialSplit {
    pub params: PotentialParams,
    pub v: PairPotential,
    pub v1: PairPotential,
    pub v2: PairPotential,
}

impl PotentialSplit {
    pub fn build(grid: GridSpec, params: PotentialParams) -> Result<Self> {
        let PotentialParams { sign, coupling, cutoff, particles, core } = params;
        if !(coupling > 0.0 && coupling.is_finite()) {
            return Err(Error::InvalidArgument(format!("coupling must be positive, got {coupling}")));
        }
        if !(cutoff > 0.0) {
            return Err(Error::InvalidArgument(format!("cutoff must be positive, got {cutoff}")));
        }
        if particles == 0 {
            return Err(Error::InvalidArgument("particle count must be at least 1".into()));
        }
        let h = grid.spacing();
        let strength = sign.factor() * coupling;
        let radii = grid.displacement_radii();
        let v: Vec<f64> = match core {
            CoreModel::Soft { softening } => {
                if !(softening > 0.0 && softening.is_finite()) {
                    return Err(Error::InvalidArgument(
                        "soft-core potential needs a positive softening length; use the capped core for a = 0"
                            .into(),
                    ));
                }
                radii.iter().map(|r| strength / (r * r + softening * softening).sqrt()).collect()
            }
            CoreModel::Capped => {
                if grid.dim() != 3 {
                    return Err(Error::InvalidArgument(
                        "the capped Coulomb core is only available in three dimensions".into(),
                    ));
                }
                radii
                    .iter()
                    .map(|&r| if r == 0.0 { strength / (0.5 * h) } else { strength / r })
                    .collect()
            }
        };

        let scale = (particles as f64).sqrt() / cutoff;
        let mut v1 = Vec::with_capacity(v.len());
        let mut v2 = Vec::with_capacity(v.len());
        for (&vx, &r) in v.iter().zip(&radii) {
            let theta = cutoff_profile(scale * r);
            let mut a = theta * vx;
            let b = vx - a;
            // For theta < 1/2 the subtraction above may round; recomputing the
            // smaller part from b is exact (Sterbenz) and makes a + b == v exact.
            if theta < 0.5 {
                a = vx - b;
            }
            v1.push(a);
            v2.push(b);
        }
        Ok(Self {
            params,
            v: PairPotential::new(grid, v)?,
            v1: PairPotential::new(grid, v1)?,
            v2: PairPotential::new(grid, v2)?,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.v.grid()
    }

    /// Radius `eps / sqrt(N)` inside which the regular part vanishes.
    pub fn inner_radius(&self) -> f64 {
        self.params.cutoff / (self.params.particles as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(cutoff: f64, particles: usize, a: f64) -> PotentialParams {
        PotentialParams {
            sign: Sign::Repulsive,
            coupling: 1.0,
            cutoff,
            particles,
            core: CoreModel::Soft { softening: a },
        }
    }

    #[test]
    fn soft_coulomb_value() {
        let g = GridSpec::new(1, 16, 16.0).unwrap();
        let split = PotentialSplit::build(g, params(1.0, 1, 0.5)).unwrap();
        // displacement index 2 is r = 2
        assert!((split.v.values()[2] - 1.0 / 4.25f64.sqrt()).abs() < 1e-15);
        assert!((split.v.values()[2] - 0.485071).abs() < 1e-6);
        assert_eq!(split.v.evenness_defect(), 0.0);
    }

    #[test]
    fn large_cutoff_keeps_everything_singular() {
        let g = GridSpec::new(1, 16, 16.0).unwrap();
        // sqrt(N) r_max / eps = 2 * 8 / 100 < 1
        let split = PotentialSplit::build(g, params(100.0, 4, 1.0)).unwrap();
        assert!(split.v1.is_zero());
        assert_eq!(split.v2, split.v);
    }

    #[test]
    fn small_cutoff_confines_remainder_to_the_origin() {
        let g = GridSpec::new(1, 16, 16.0).unwrap();
        // sqrt(N) r / eps >= 2 * 1 / 0.5 > 2 for all r >= h = 1
        let split = PotentialSplit::build(g, params(0.5, 4, 1.0)).unwrap();
        let radii = g.displacement_radii();
        for (i, r) in radii.iter().enumerate() {
            if *r > 2.0 * split.inner_radius() {
                assert_eq!(split.v2.values()[i], 0.0);
            }
        }
        assert_eq!(split.v2.values()[0], split.v.values()[0]);
    }

    #[test]
    fn capped_core() {
        let g = GridSpec::new(3, 8, 8.0).unwrap();
        let p = PotentialParams { core: CoreModel::Capped, ..params(1.0, 2, 0.0) };
        let split = PotentialSplit::build(g, p).unwrap();
        assert_eq!(split.v.values()[0], 2.0);
        assert_eq!(split.v.values()[1], 1.0);
        let g1 = GridSpec::new(1, 8, 8.0).unwrap();
        assert!(PotentialSplit::build(g1, p).is_err());
        assert!(PotentialSplit::build(g, params(1.0, 2, 0.0)).is_err());
    }

    #[test]
    fn regular_part_bounded_by_inverse_inner_radius() {
        let g = GridSpec::new(3, 8, 4.0).unwrap();
        for eps in [0.3, 0.6, 1.2] {
            for n in [2, 5, 20] {
                let p = PotentialParams { core: CoreModel::Capped, ..params(eps, n, 0.0) };
                let split = PotentialSplit::build(g, p).unwrap();
                assert!(split.v1.sup_norm() <= (n as f64).sqrt() / eps + 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn split_reconstructs_bitwise(eps in 0.05f64..20.0, n in 1usize..8, a in 0.05f64..2.0, len in 2.0f64..30.0) {
            let g = GridSpec::new(1, 32, len).unwrap();
            let split = PotentialSplit::build(g, params(eps, n, a)).unwrap();
            let radii = g.displacement_radii();
            let scale = (n as f64).sqrt() / eps;
            for i in 0..g.size() {
                let (v, v1, v2) = (split.v.values()[i], split.v1.values()[i], split.v2.values()[i]);
                prop_assert_eq!(v1 + v2, v);
                prop_assert_eq!(v - v1, v2);
                if scale * radii[i] <= 1.0 { prop_assert_eq!(v1, 0.0); }
                if scale * radii[i] >= 2.0 { prop_assert_eq!(v1, v); }
            }
        }
    }
}
