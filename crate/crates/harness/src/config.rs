//! Experiment configuration: one TOML document with every default spelled out.

use std::path::{Path, PathBuf};

use mfl_core::{CoreModel, GridSpec, MemoryGuard, PotentialParams, PotentialSplit, Sign, WaveFn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    Hartree,
    Nbody,
    Convergence,
    CutoffStudy,
    SmoothingStudy,
    HierarchyResidual,
    Opcheck,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Hartree => "hartree",
            StudyKind::Nbody => "nbody",
            StudyKind::Convergence => "convergence",
            StudyKind::CutoffStudy => "cutoff-study",
            StudyKind::SmoothingStudy => "smoothing-study",
            StudyKind::HierarchyResidual => "hierarchy-residual",
            StudyKind::Opcheck => "opcheck",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignConfig {
    Repulsive,
    Attractive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoreConfig {
    Soft,
    Capped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub sign: SignConfig,
    /// strength mu
    pub coupling: f64,
    pub core: CoreConfig,
    /// soft-core length `a` in units of the grid spacing
    pub softening_spacings: f64,
    /// cutoff radii epsilon for the cutoff study; the first one is used elsewhere
    pub cutoffs: Vec<f64>,
    /// smoothing parameters delta for the smoothing study
    pub deltas: Vec<f64>,
    /// delta of the common initial data in the cutoff study
    pub cutoff_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub particles: Vec<usize>,
    /// reduced density matrix orders reported by the convergence study
    pub orders: Vec<usize>,
    pub t_final: f64,
    pub dt: f64,
    pub record_every: usize,
    /// steps between two-particle diagnostics (D_2 and F) in the convergence study
    pub pair_every: usize,
    /// particle number used by the cutoff, smoothing and finite-hierarchy studies
    pub study_particles: usize,
    pub memory_limit: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    Gaussian { center: [f64; 3], width: f64, momentum: [f64; 3] },
    PlaneWave { mode: [i64; 3] },
    /// whitespace separated `re im` pairs, one grid point per line
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyConfig {
    pub order: usize,
    pub quadrature: QuadratureConfig,
    /// also run with dt and node spacing halved and report the ratio
    pub refine: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureConfig {
    Trapezoid,
    Simpson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpcheckConfig {
    pub hardy_grid: GridConfig,
    pub hardy_softenings_spacings: Vec<f64>,
    pub hardy_coefficients: Vec<f64>,
    pub hardy_samples: usize,
    pub l1_grid: GridConfig,
    pub l1_kappa: f64,
    pub l1_lambdas: Vec<f64>,
    pub fuzz_pairs: usize,
    pub fuzz_min_dim: usize,
    pub fuzz_max_dim: usize,
    pub bipartite_dims: [usize; 2],
    pub bipartite_instances: usize,
    pub duality_tests: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: StudyKind,
    pub seed: u64,
    /// empty means: `--out`, then `MFL_OUT_DIR`, then `results`
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    pub potential: PotentialConfig,
    pub dynamics: DynamicsConfig,
    pub initial: InitialConfig,
    pub hierarchy: HierarchyConfig,
    pub opcheck: OpcheckConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            study: StudyKind::Convergence,
            seed: 0,
            output_dir: PathBuf::new(),
            grid: GridConfig { dim: 1, n: 32, length: 16.0 },
            potential: PotentialConfig {
                sign: SignConfig::Repulsive,
                coupling: 1.0,
                core: CoreConfig::Soft,
                softening_spacings: 1.0,
                cutoffs: vec![4.0, 2.0, 1.0, 0.5],
                deltas: vec![0.05, 0.1, 0.2],
                cutoff_delta: 0.1,
            },
            dynamics: DynamicsConfig {
                particles: vec![2, 3, 4, 5],
                orders: vec![1, 2],
                t_final: 0.5,
                dt: 1e-3,
                record_every: 10,
                pair_every: 100,
                study_particles: 3,
                memory_limit: mfl_core::grid::DEFAULT_MAX_ENTRIES,
            },
            initial: InitialConfig::Gaussian { center: [0.0; 3], width: 1.0, momentum: [0.0; 3] },
            hierarchy: HierarchyConfig { order: 1, quadrature: QuadratureConfig::Simpson, refine: true },
            opcheck: OpcheckConfig {
                hardy_grid: GridConfig { dim: 3, n: 8, length: 8.0 },
                hardy_softenings_spacings: vec![0.5, 1.0, 2.0, 4.0],
                hardy_coefficients: vec![0.25, 4.0],
                hardy_samples: 2,
                l1_grid: GridConfig { dim: 3, n: 8, length: 2.0 },
                l1_kappa: 2.0,
                l1_lambdas: vec![1.0, 0.5, 0.25, 0.125],
                fuzz_pairs: 1000,
                fuzz_min_dim: 2,
                fuzz_max_dim: 100,
                bipartite_dims: [6, 7],
                bipartite_instances: 100,
                duality_tests: 20,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn for_study(study: StudyKind) -> Self {
        Self { study, ..Self::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Applies `key=value`, where `key` is a dotted path and `value` a TOML
    /// value (bare words are taken as strings).
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = parse_value(raw);
        let mut doc = toml::Value::try_from(&*self).expect("configuration serializes");
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .as_table_mut()
                .and_then(|t| t.get_mut(part))
                .ok_or_else(|| HarnessError::Config(format!("unknown configuration key `{key}`")))?;
        }
        *slot = coerce(value, slot);
        let updated: Self = doc.try_into().map_err(|e: toml::de::Error| HarnessError::Config(format!("{key}: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        self.grid_spec()?;
        let p = &self.potential;
        if !(p.coupling > 0.0 && p.coupling.is_finite()) {
            return bad(format!("potential.coupling must be positive, got {}", p.coupling));
        }
        if p.core == CoreConfig::Soft && !(p.softening_spacings > 0.0) {
            return bad("potential.softening_spacings must be positive for a soft core".into());
        }
        if p.cutoffs.is_empty() || p.cutoffs.iter().any(|&e| !(e > 0.0)) {
            return bad("potential.cutoffs must be a nonempty list of positive radii".into());
        }
        if p.deltas.iter().any(|&d| !(d >= 0.0)) || !(p.cutoff_delta >= 0.0) {
            return bad("smoothing parameters must be nonnegative".into());
        }
        let d = &self.dynamics;
        if d.particles.is_empty() || d.particles.contains(&0) || d.study_particles == 0 {
            return bad("particle counts must be positive".into());
        }
        if d.orders.iter().any(|&k| !(1..=2).contains(&k)) {
            return bad("dynamics.orders must be drawn from {1, 2}".into());
        }
        if !(d.dt > 0.0) || !(d.t_final >= 0.0) || d.record_every == 0 || d.pair_every == 0 {
            return bad("dt, record_every and pair_every must be positive and t_final nonnegative".into());
        }
        mfl_core::hartree::step_count(d.t_final, d.dt).map_err(|e| HarnessError::Config(e.to_string()))?;
        if d.pair_every % d.record_every != 0 {
            return bad("dynamics.pair_every must be a multiple of record_every".into());
        }
        if !(1..=2).contains(&self.hierarchy.order) {
            return bad("hierarchy.order must be 1 or 2".into());
        }
        let o = &self.opcheck;
        if o.fuzz_min_dim == 0 || o.fuzz_min_dim > o.fuzz_max_dim {
            return bad("opcheck fuzz dimensions must satisfy 1 <= min <= max".into());
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        grid_from(&self.grid)
    }

    pub fn guard(&self) -> MemoryGuard {
        MemoryGuard::new(self.dynamics.memory_limit)
    }

    /// Potential split for `particles` particles with cutoff radius `cutoff`.
    pub fn split(&self, particles: usize, cutoff: f64) -> Result<PotentialSplit> {
        let grid = self.grid_spec()?;
        let p = &self.potential;
        let params = PotentialParams {
            sign: match p.sign {
                SignConfig::Repulsive => Sign::Repulsive,
                SignConfig::Attractive => Sign::Attractive,
            },
            coupling: p.coupling,
            cutoff,
            particles,
            core: match p.core {
                CoreConfig::Soft => CoreModel::Soft { softening: p.softening_spacings * grid.spacing() },
                CoreConfig::Capped => CoreModel::Capped,
            },
        };
        Ok(PotentialSplit::build(grid, params)?)
    }

    /// Normalized initial one-body state.
    pub fn initial_state(&self) -> Result<WaveFn> {
        let grid = self.grid_spec()?;
        let mut psi = match &self.initial {
            InitialConfig::Gaussian { center, width, momentum } => WaveFn::gaussian(grid, *center, *width, *momentum)?,
            InitialConfig::PlaneWave { mode } => WaveFn::plane_wave(grid, *mode),
            InitialConfig::File { path } => read_state(grid, path)?,
        };
        psi.normalize()?;
        Ok(psi)
    }
}

pub fn grid_from(g: &GridConfig) -> Result<GridSpec> {
    GridSpec::new(g.dim, g.n, g.length).map_err(|e| HarnessError::Config(e.to_string()))
}

fn read_state(grid: GridSpec, path: &Path) -> Result<WaveFn> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read initial state {}: {e}", path.display())))?;
    let mut values = Vec::with_capacity(grid.size());
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace().map(str::parse::<f64>);
        match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(re)), Some(Ok(im)), None) => values.push(num_complex::Complex64::new(re, im)),
            _ => {
                return Err(HarnessError::Config(format!(
                    "{}:{}: expected `re im`",
                    path.display(),
                    line_no + 1
                )))
            }
        }
    }
    WaveFn::new(grid, values).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Integers given for float fields become floats.
fn coerce(value: toml::Value, slot: &toml::Value) -> toml::Value {
    match (value, slot) {
        (toml::Value::Integer(i), toml::Value::Float(_)) => toml::Value::Float(i as f64),
        (toml::Value::Array(items), toml::Value::Array(old)) if old.first().is_some_and(|v| v.is_float()) => {
            toml::Value::Array(
                items
                    .into_iter()
                    .map(|v| match v {
                        toml::Value::Integer(i) => toml::Value::Float(i as f64),
                        other => other,
                    })
                    .collect(),
            )
        }
        (v, _) => v,
    }
}
