//! Reduced density matrices, trace norms and the partial-trace calculus.
//!
//! Operators on `k` particles are dense `M^k x M^k` matrices in the
//! orthonormal basis `delta_x / h^{d/2}`, so a kernel value is the matrix
//! entry divided by `h^{dk}` and traces need no grid weights.

use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fft::{particle_indices, Spectral};
use crate::grid::GridSpec;
use crate::linalg::{self, CMat};
use crate::nbody::NBodyState;
use crate::potential::PairPotential;
use crate::wavefn::WaveFn;

const PSD_TOL: f64 = 1e-9;
const SOBOLEV_CROSS_CHECK: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct ReducedDensityMatrix {
    grid: GridSpec,
    order: usize,
    matrix: CMat,
}

fn order_dim(grid: &GridSpec, order: usize) -> Result<usize> {
    if order == 0 {
        return Err(Error::InvalidArgument("marginal order must be at least 1".into()));
    }
    let dim = (grid.size() as u128).checked_pow(order as u32).unwrap_or(u128::MAX);
    if dim > linalg::DENSE_LIMIT as u128 {
        return Err(Error::SizeGuard { dim: dim.min(usize::MAX as u128) as usize, limit: linalg::DENSE_LIMIT });
    }
    Ok(dim as usize)
}

impl ReducedDensityMatrix {
    /// Wraps an operator given in the orthonormal basis. No positivity is required.
    pub fn from_matrix(grid: GridSpec, order: usize, matrix: CMat) -> Result<Self> {
        let dim = order_dim(&grid, order)?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} matrix for a {}-particle operator of dimension {}",
                matrix.nrows(),
                matrix.ncols(),
                order,
                dim
            )));
        }
        Ok(Self { grid, order, matrix })
    }

    /// `|psi><psi|` for a one-body state.
    pub fn projector(psi: &WaveFn) -> Result<Self> {
        let grid = *psi.grid();
        let dim = order_dim(&grid, 1)?;
        let w = grid.cell_volume();
        let v = psi.values();
        Self::from_matrix(grid, 1, Mat::from_fn(dim, dim, |i, j| v[i] * v[j].conj() * w))
    }

    /// `gamma (x) gamma (x) ...` with `copies` factors.
    pub fn tensor_power(&self, copies: usize) -> Result<Self> {
        if copies == 0 {
            return Err(Error::InvalidArgument("tensor power needs at least one factor".into()));
        }
        order_dim(&self.grid, self.order * copies)?;
        let mut out = self.matrix.clone();
        for _ in 1..copies {
            out = linalg::kron(out.as_ref(), self.matrix.as_ref());
        }
        Self::from_matrix(self.grid, self.order * copies, out)
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch("operators live on different grids".into()));
        }
        order_dim(&self.grid, self.order + other.order)?;
        Self::from_matrix(self.grid, self.order + other.order, linalg::kron(self.matrix.as_ref(), other.matrix.as_ref()))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, C64> {
        self.matrix.as_ref()
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    /// Kernel value `gamma(X; X')` for flattened multi-indices.
    pub fn kernel(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)] / self.grid.cell_volume().powi(self.order as i32)
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(self.matrix.as_ref())
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(self.matrix.as_ref())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(linalg::hermitian_eigenvalues(self.matrix.as_ref())?[0])
    }

    /// Checks hermiticity, positivity and unit trace within the density-matrix tolerances.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_defect();
        if herm > 1e-10 {
            return Err(Error::InvalidArgument(format!("not Hermitian (defect {herm:e})")));
        }
        let lo = self.min_eigenvalue()?;
        if lo < -PSD_TOL {
            return Err(Error::InvalidArgument(format!("not positive semidefinite (min eigenvalue {lo:e})")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("trace is {tr}, expected 1")));
        }
        Ok(())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.order != other.order {
            return Err(Error::ShapeMismatch("operators differ in grid or order".into()));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Self::from_matrix(self.grid, self.order, &self.matrix - &other.matrix)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Self::from_matrix(self.grid, self.order, &self.matrix + &other.matrix)
    }

    pub fn scale(&self, c: C64) -> Self {
        let matrix = Mat::from_fn(self.dim(), self.dim(), |i, j| self.matrix[(i, j)] * c);
        Self { grid: self.grid, order: self.order, matrix }
    }

    pub fn adjoint(&self) -> Self {
        Self { grid: self.grid, order: self.order, matrix: self.matrix.adjoint().to_owned() }
    }

    /// Largest entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(linalg::max_abs_diff(self.matrix.as_ref(), other.matrix.as_ref()))
    }

    /// `Tr_{k}`: traces out the last particle.
    pub fn trace_last(&self) -> Result<Self> {
        if self.order < 2 {
            return Err(Error::InvalidArgument("cannot trace out the only particle".into()));
        }
        let m = self.grid.size();
        let b = partial_trace(self.matrix.as_ref(), self.dim() / m, m)?;
        Self::from_matrix(self.grid, self.order - 1, b)
    }
}

/// `gamma^{(k)} = Tr_{k+1..N} |Psi><Psi|`.
pub fn reduce(state: &NBodyState, k: usize) -> Result<ReducedDensityMatrix> {
    let grid = *state.grid();
    let n = state.particles();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("marginal order {k} outside 1..={n}")));
    }
    let rows = order_dim(&grid, k)?;
    let cols = state.values().len() / rows;
    let a = MatRef::from_row_major_slice(state.values(), rows, cols);
    let w = state.weight();
    let g = a * a.adjoint();
    let matrix = Mat::from_fn(rows, rows, |i, j| {
        if i == j {
            C64::new(g[(i, i)].re * w, 0.0)
        } else {
            g[(i, j)] * w
        }
    });
    ReducedDensityMatrix::from_matrix(grid, k, matrix)
}

/// Sum of singular values.
pub fn trace_norm(a: MatRef<'_, C64>) -> Result<f64> {
    Ok(linalg::singular_values(a)?.iter().sum())
}

/// `Tr |gamma - gamma'|`
pub fn trace_distance(a: &ReducedDensityMatrix, b: &ReducedDensityMatrix) -> Result<f64> {
    trace_norm(a.sub(b)?.matrix())
}

/// Applies `prod_j m(p_j)` over the `order` particle variables to every column of `a`.
pub(crate) fn left_multiplier(grid: &GridSpec, order: usize, table: &[C64], a: MatRef<'_, C64>) -> CMat {
    let m = grid.size();
    let dim = a.nrows();
    let spec = Spectral::new(grid.n());
    let axes = grid.dim() * order;
    let mut weights = vec![C64::new(0.0, 0.0); dim];
    let mut digits = vec![0usize; order];
    for (idx, w) in weights.iter_mut().enumerate() {
        particle_indices(idx, m, order, &mut digits);
        *w = digits.iter().map(|&p| table[p]).product();
    }
    let mut out = linalg::zeros(dim, a.ncols());
    let mut col = vec![C64::new(0.0, 0.0); dim];
    let mut scratch = Vec::new();
    for j in 0..a.ncols() {
        for i in 0..dim {
            col[i] = a[(i, j)];
        }
        spec.forward(&mut col, &mut scratch, axes);
        col.iter_mut().zip(&weights).for_each(|(c, w)| *c *= w);
        spec.inverse(&mut col, &mut scratch, axes);
        for i in 0..dim {
            out[(i, j)] = col[i];
        }
    }
    out
}

/// `U A U*` where `U` is the Fourier multiplier `prod_j m(p_j)` on every variable.
pub fn conjugate_by_multiplier(grid: &GridSpec, order: usize, table: &[C64], a: MatRef<'_, C64>) -> CMat {
    let left = left_multiplier(grid, order, table, a);
    // A U* = (U A*)*
    left_multiplier(grid, order, table, left.adjoint().to_owned().as_ref()).adjoint().to_owned()
}

/// `S_1 ... S_k gamma S_k ... S_1` with `S = (1 - Delta)^{1/2}`.
pub fn sobolev_weighted(gamma: &ReducedDensityMatrix) -> CMat {
    let table: Vec<C64> = gamma.grid.momentum_sq().iter().map(|p2| C64::new((1.0 + p2).sqrt(), 0.0)).collect();
    conjugate_by_multiplier(&gamma.grid, gamma.order, &table, gamma.matrix())
}

/// `Tr prod_j (1 - Delta_j) gamma`
pub fn sobolev_trace(gamma: &ReducedDensityMatrix) -> f64 {
    let table: Vec<C64> = gamma.grid.momentum_sq().iter().map(|p2| C64::new(1.0 + p2, 0.0)).collect();
    linalg::trace(left_multiplier(&gamma.grid, gamma.order, &table, gamma.matrix()).as_ref()).re
}

/// `||gamma||_{H^{1,(k)}} = Tr |S_1...S_k gamma S_k...S_1|`.
///
/// For positive `gamma` the result is compared against `Tr prod (1 - Delta_j) gamma`.
pub fn sobolev_norm_k(gamma: &ReducedDensityMatrix) -> Result<f64> {
    let weighted = sobolev_weighted(gamma);
    let herm = linalg::hermiticity_defect(weighted.as_ref());
    let scale = linalg::frobenius(weighted.as_ref()).max(1.0);
    if herm > 1e-9 * scale {
        return trace_norm(weighted.as_ref());
    }
    let eig = linalg::hermitian_eigenvalues(weighted.as_ref())?;
    let norm: f64 = eig.iter().map(|v| v.abs()).sum();
    let top = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if eig[0] >= -PSD_TOL * top.max(1.0) {
        let tr = sobolev_trace(gamma);
        if (norm - tr).abs() > SOBOLEV_CROSS_CHECK * (1.0 + tr.abs()) {
            return Err(Error::LinearAlgebra(format!(
                "Sobolev trace norm {norm} disagrees with the trace identity {tr}"
            )));
        }
    }
    Ok(norm)
}

/// `B[i, i'] = sum_j A[(i, j), (i', j)]`, tracing out the second factor of `C^{d1} (x) C^{d2}`.
pub fn partial_trace(a: MatRef<'_, C64>, d1: usize, d2: usize) -> Result<CMat> {
    if a.nrows() != d1 * d2 || a.ncols() != d1 * d2 {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} operator is not on a {d1} x {d2} product space",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(Mat::from_fn(d1, d1, |i, ip| (0..d2).map(|j| a[(i * d2 + j, ip * d2 + j)]).sum()))
}

/// Traces out the first factor of `C^{d1} (x) C^{d2}`.
pub fn partial_trace_first(a: MatRef<'_, C64>, d1: usize, d2: usize) -> Result<CMat> {
    if a.nrows() != d1 * d2 || a.ncols() != d1 * d2 {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} operator is not on a {d1} x {d2} product space",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(Mat::from_fn(d2, d2, |j, jp| (0..d1).map(|i| a[(i * d2 + j, i * d2 + jp)]).sum()))
}

/// Diagonal of `V(x_l - x_{k+1})` on `k + 1` particles (`l` zero-based, `l < k`).
fn pair_diagonal(grid: &GridSpec, order: usize, l: usize, v: &PairPotential) -> Vec<f64> {
    let m = grid.size();
    let dim = m.pow(order as u32);
    let mut digits = vec![0usize; order];
    (0..dim)
        .map(|idx| {
            particle_indices(idx, m, order, &mut digits);
            v.between(digits[l], digits[order - 1])
        })
        .collect()
}

fn check_collision_args(gamma: &ReducedDensityMatrix, l: usize, v: &PairPotential) -> Result<()> {
    if gamma.order < 2 {
        return Err(Error::InvalidArgument("collision term needs an operator on at least two particles".into()));
    }
    if l + 1 >= gamma.order {
        return Err(Error::InvalidArgument(format!(
            "particle index {l} must be below {} (zero-based)",
            gamma.order - 1
        )));
    }
    if v.grid() != &gamma.grid {
        return Err(Error::ShapeMismatch("potential and operator live on different grids".into()));
    }
    Ok(())
}

/// `Tr_{k+1}[V(x_l - x_{k+1}) gamma^{(k+1)}]` with zero-based `l < k`.
pub fn collision_trace(gamma: &ReducedDensityMatrix, l: usize, v: &PairPotential) -> Result<ReducedDensityMatrix> {
    check_collision_args(gamma, l, v)?;
    let diag = pair_diagonal(&gamma.grid, gamma.order, l, v);
    let dim = gamma.dim();
    let vg = Mat::from_fn(dim, dim, |i, j| gamma.matrix[(i, j)] * diag[i]);
    let m = gamma.grid.size();
    ReducedDensityMatrix::from_matrix(gamma.grid, gamma.order - 1, partial_trace(vg.as_ref(), dim / m, m)?)
}

/// `Tr_{k+1}[V(x_l - x_{k+1}), gamma^{(k+1)}]` with zero-based `l < k`.
pub fn collision_commutator(
    gamma: &ReducedDensityMatrix,
    l: usize,
    v: &PairPotential,
) -> Result<ReducedDensityMatrix> {
    check_collision_args(gamma, l, v)?;
    let diag = pair_diagonal(&gamma.grid, gamma.order, l, v);
    let dim = gamma.dim();
    let comm = Mat::from_fn(dim, dim, |i, j| gamma.matrix[(i, j)] * (diag[i] - diag[j]));
    let m = gamma.grid.size();
    ReducedDensityMatrix::from_matrix(gamma.grid, gamma.order - 1, partial_trace(comm.as_ref(), dim / m, m)?)
}
