use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Default bound on the number of complex entries of any N-body tensor.
pub const DEFAULT_MAX_ENTRIES: usize = 1 << 27;

/// Uniform periodic lattice on the torus `[-L/2, L/2)^d`.
///
/// Position index `i` along an axis sits at `x_i = -L/2 + i h`. Pair potentials
/// live on the displacement lattice instead, where index `k` is the
/// displacement `k h` folded into `[-L/2, L/2)` (minimal image). Flattened
/// indices are row-major with axis 0 slowest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    length: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if dim != 1 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 3, got {dim}")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 4, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("box length must be positive, got {length}")));
        }
        Ok(Self { dim, n, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Quadrature weight `h^d` of one lattice cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// One-body dimension `M = n^d`.
    pub fn size(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Signed mode number of FFT bin `k`: `k` for `k < n/2`, `k - n` otherwise.
    pub fn mode(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Momenta along one axis in FFT bin order.
    pub fn axis_momenta(&self) -> Vec<f64> {
        (0..self.n)
            .map(|k| TAU * self.mode(k) as f64 / self.length)
            .collect()
    }

    /// Momenta along one axis sorted ascending: `2 pi j / L` for `j` in `-n/2..n/2`.
    pub fn momentum_lattice(&self) -> Vec<f64> {
        let half = (self.n / 2) as i64;
        (-half..half).map(|j| TAU * j as f64 / self.length).collect()
    }

    pub fn axis_positions(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n).map(|i| -0.5 * self.length + i as f64 * h).collect()
    }

    /// Minimal-image displacement of displacement-lattice index `k` along one axis.
    pub fn axis_displacement(&self, k: usize) -> f64 {
        self.mode(k) as f64 * self.spacing()
    }

    /// Splits a flattened one-body index into per-axis indices.
    pub fn unflatten(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn flatten(&self, axes: &[usize]) -> usize {
        axes.iter().take(self.dim).fold(0, |acc, &a| acc * self.n + a % self.n)
    }

    /// Momentum vector of every flattened FFT bin.
    pub fn momentum_vectors(&self) -> Vec<[f64; 3]> {
        let p = self.axis_momenta();
        (0..self.size())
            .map(|idx| {
                let a = self.unflatten(idx);
                let mut v = [0.0; 3];
                for axis in 0..self.dim {
                    v[axis] = p[a[axis]];
                }
                v
            })
            .collect()
    }

    /// `|p|^2` for every flattened FFT bin.
    pub fn momentum_sq(&self) -> Vec<f64> {
        self.momentum_vectors()
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum())
            .collect()
    }

    /// Position vector of every flattened grid point.
    pub fn position_vectors(&self) -> Vec<[f64; 3]> {
        let x = self.axis_positions();
        (0..self.size())
            .map(|idx| {
                let a = self.unflatten(idx);
                let mut v = [0.0; 3];
                for axis in 0..self.dim {
                    v[axis] = x[a[axis]];
                }
                v
            })
            .collect()
    }

    /// Minimal-image distance `|x|` of every displacement-lattice point.
    pub fn displacement_radii(&self) -> Vec<f64> {
        (0..self.size())
            .map(|idx| {
                let a = self.unflatten(idx);
                (0..self.dim)
                    .map(|axis| self.axis_displacement(a[axis]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Displacement-lattice index of `x_i - x_j` for flattened position indices.
    pub fn difference_index(&self, i: usize, j: usize) -> usize {
        if self.dim == 1 {
            return (i + self.n - j) % self.n;
        }
        let a = self.unflatten(i);
        let b = self.unflatten(j);
        let mut out = 0;
        for axis in 0..self.dim {
            out = out * self.n + (a[axis] + self.n - b[axis]) % self.n;
        }
        out
    }

    /// Table `t[i * M + j]` of displacement indices for all position pairs.
    pub fn difference_table(&self) -> Vec<u32> {
        let m = self.size();
        let mut out = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                out.push(self.difference_index(i, j) as u32);
            }
        }
        out
    }
}

/// Upper bound on the number of complex entries an N-body tensor may hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryGuard {
    pub max_entries: usize,
}

impl Default for MemoryGuard {
    fn default() -> Self {
        Self { max_entries: DEFAULT_MAX_ENTRIES }
    }
}

impl MemoryGuard {
    pub fn new(max_entries: usize) -> Self {
        Self { max_entries }
    }

    /// Returns `M^N` if it fits under the guard.
    pub fn check(&self, grid: &GridSpec, particles: usize) -> Result<usize> {
        let m = grid.size() as u128;
        let mut entries: u128 = 1;
        for _ in 0..particles {
            entries = entries.saturating_mul(m);
        }
        if entries > self.max_entries as u128 {
            return Err(Error::MemoryGuard { entries, limit: self.max_entries });
        }
        Ok(entries as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_lattice() {
        let g = GridSpec::new(1, 8, 8.0).unwrap();
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.spacing() * g.n() as f64, g.length());
        let lattice = g.momentum_lattice();
        let expected: Vec<f64> = (-4..4).map(|j| TAU * j as f64 / 8.0).collect();
        assert_eq!(lattice, expected);
        let mut fft_order = g.axis_momenta();
        fft_order.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(fft_order, expected);
    }

    #[test]
    fn three_dimensional_lattice() {
        let g = GridSpec::new(3, 4, 4.0).unwrap();
        assert_eq!(g.size(), 64);
        assert_eq!(g.spacing(), 1.0);
        for idx in 0..g.size() {
            assert_eq!(g.flatten(&g.unflatten(idx)), idx);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(GridSpec::new(1, 7, 8.0), Err(Error::InvalidGrid(_))));
        assert!(GridSpec::new(2, 8, 8.0).is_err());
        assert!(GridSpec::new(1, 2, 8.0).is_err());
        assert!(GridSpec::new(1, 8, 0.0).is_err());
    }

    #[test]
    fn minimal_image_is_even() {
        let g = GridSpec::new(3, 8, 5.0).unwrap();
        let r = g.displacement_radii();
        for i in 0..g.size() {
            let a = g.unflatten(i);
            let neg = g.flatten(&[(8 - a[0]) % 8, (8 - a[1]) % 8, (8 - a[2]) % 8]);
            assert_eq!(r[i], r[neg]);
        }
        assert_eq!(g.difference_index(5, 5), 0);
    }

    #[test]
    fn memory_guard() {
        let g = GridSpec::new(1, 32, 16.0).unwrap();
        assert_eq!(MemoryGuard::default().check(&g, 5).unwrap(), 1 << 25);
        assert!(matches!(
            MemoryGuard::default().check(&g, 6),
            Err(Error::MemoryGuard { .. })
        ));
        let g3 = GridSpec::new(3, 8, 8.0).unwrap();
        assert!(MemoryGuard::default().check(&g3, 2).is_ok());
        assert!(MemoryGuard::default().check(&g3, 3).is_ok());
        assert!(MemoryGuard::new(1000).check(&g3, 2).is_err());
    }
}
