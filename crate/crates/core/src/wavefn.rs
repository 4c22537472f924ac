use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fft::Spectral;
use crate::grid::GridSpec;

/// One-body complex field on the grid with `||psi||^2 = h^d sum |psi(x)|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFn {
    grid: GridSpec,
    values: Vec<C64>,
}

impl WaveFn {
    pub fn new(grid: GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::ShapeMismatch(format!(
                "wave function has {} values, grid has {} points",
                values.len(),
                grid.size()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("wave function"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![C64::new(0.0, 0.0); grid.size()] }
    }

    /// Normalized Gaussian with position spread `width`, centered at `center`
    /// and boosted by `momentum`.
    pub fn gaussian(grid: GridSpec, center: [f64; 3], width: f64, momentum: [f64; 3]) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidArgument(format!("gaussian width must be positive, got {width}")));
        }
        let d = grid.dim();
        let values = grid
            .position_vectors()
            .iter()
            .map(|x| {
                let mut r2 = 0.0;
                let mut phase = 0.0;
                for a in 0..d {
                    r2 += (x[a] - center[a]).powi(2);
                    phase += momentum[a] * x[a];
                }
                C64::from_polar((-r2 / (4.0 * width * width)).exp(), phase)
            })
            .collect();
        let mut psi = Self::new(grid, values)?;
        psi.normalize()?;
        Ok(psi)
    }

    /// Normalized plane wave `exp(i p x) / L^{d/2}` for the signed mode numbers `modes`.
    pub fn plane_wave(grid: GridSpec, modes: [i64; 3]) -> Self {
        let d = grid.dim();
        let amp = grid.length().powf(-(d as f64) / 2.0);
        let k: Vec<f64> = modes.iter().map(|&m| 2.0 * PI * m as f64 / grid.length()).collect();
        let values = grid
            .position_vectors()
            .iter()
            .map(|x| {
                let phase: f64 = (0..d).map(|a| k[a] * x[a]).sum();
                C64::from_polar(amp, phase)
            })
            .collect();
        Self { grid, values }
    }

    pub fn constant(grid: GridSpec) -> Self {
        let amp = grid.length().powf(-(grid.dim() as f64) / 2.0);
        Self { grid, values: vec![C64::new(amp, 0.0); grid.size()] }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
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

    pub fn norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let nrm = self.norm();
        if !(nrm > 0.0) {
            return Err(Error::InvalidArgument("cannot normalize a zero wave function".into()));
        }
        let s = 1.0 / nrm;
        self.values.iter_mut().for_each(|v| *v *= s);
        Ok(())
    }

    pub fn inner(&self, other: &WaveFn) -> C64 {
        let s: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        s * self.grid.cell_volume()
    }

    pub fn distance(&self, other: &WaveFn) -> f64 {
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    pub fn conj(&self) -> WaveFn {
        Self { grid: self.grid, values: self.values.iter().map(|v| v.conj()).collect() }
    }

    /// Unitary DFT of the sampled values, FFT bin order.
    pub fn fourier(&self) -> Vec<C64> {
        let spec = Spectral::new(self.grid.n());
        let mut data = self.values.clone();
        let mut scratch = Vec::new();
        spec.forward(&mut data, &mut scratch, self.grid.dim());
        data
    }

    pub fn from_fourier(grid: GridSpec, mut coeffs: Vec<C64>) -> Result<Self> {
        let spec = Spectral::new(grid.n());
        let mut scratch = Vec::new();
        spec.inverse(&mut coeffs, &mut scratch, grid.dim());
        Self::new(grid, coeffs)
    }

    /// `inverse-DFT(m(p) DFT(psi))` for a symbol given as a function of the momentum vector.
    pub fn apply_multiplier<F>(&self, symbol: F) -> Result<WaveFn>
    where
        F: Fn(&[f64; 3]) -> C64,
    {
        let table: Vec<C64> = self.grid.momentum_vectors().iter().map(symbol).collect();
        self.apply_symbol_table(&table)
    }

    /// Multiplier given by its values on the flattened momentum bins.
    pub fn apply_symbol_table(&self, table: &[C64]) -> Result<WaveFn> {
        if table.len() != self.grid.size() {
            return Err(Error::ShapeMismatch("symbol table length".into()));
        }
        if table.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("Fourier multiplier"));
        }
        let mut coeffs = self.fourier();
        coeffs.iter_mut().zip(table).for_each(|(c, m)| *c *= m);
        Self::from_fourier(self.grid, coeffs)
    }

    /// Free Schrödinger propagator `exp(-i t p^2 / 2)`.
    pub fn free_evolve(&self, t: f64) -> WaveFn {
        let table: Vec<C64> = self
            .grid
            .momentum_sq()
            .iter()
            .map(|p2| C64::from_polar(1.0, -0.5 * t * p2))
            .collect();
        self.apply_symbol_table(&table).expect("unimodular symbol is finite")
    }

    /// `h^d sum_p w(|p|^2) |psi_hat(p)|^2`.
    pub fn spectral_moment<F: Fn(f64) -> f64>(&self, weight: F) -> f64 {
        let coeffs = self.fourier();
        let p2 = self.grid.momentum_sq();
        self.grid.cell_volume()
            * coeffs.iter().zip(&p2).map(|(c, &q)| weight(q) * c.norm_sqr()).sum::<f64>()
    }

    /// `||psi||_{H^1} = ||(1 - Delta)^{1/2} psi||`.
    pub fn h1_norm(&self) -> f64 {
        self.spectral_moment(|p2| 1.0 + p2).sqrt()
    }

    /// `||(1 - Delta) psi||`.
    pub fn h2_norm(&self) -> f64 {
        self.spectral_moment(|p2| (1.0 + p2).powi(2)).sqrt()
    }

    /// `||Delta psi||`.
    pub fn laplacian_norm(&self) -> f64 {
        self.spectral_moment(|p2| p2 * p2).sqrt()
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_wave(grid: GridSpec, seed: u64) -> WaveFn {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.size())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut psi = WaveFn::new(grid, values).unwrap();
        psi.normalize().unwrap();
        psi
    }

    #[test]
    fn identity_multiplier() {
        let g = GridSpec::new(1, 16, 10.0).unwrap();
        let psi = random_wave(g, 1);
        let out = psi.apply_multiplier(|_| C64::new(1.0, 0.0)).unwrap();
        assert!(out.distance(&psi) < 1e-14);
    }

    #[test]
    fn bessel_potential_round_trip() {
        let g = GridSpec::new(3, 8, 6.0).unwrap();
        let psi = random_wave(g, 2);
        let s = |p: &[f64; 3]| C64::new((1.0 + p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt(), 0.0);
        let out = psi
            .apply_multiplier(s)
            .unwrap()
            .apply_multiplier(|p| 1.0 / s(p))
            .unwrap();
        assert!(out.distance(&psi) < 1e-12);
    }

    #[test]
    fn free_gaussian_matches_analytic_propagator() {
        // sigma = 1 on a box wide enough that the tails are below 1e-10
        let sigma: f64 = 1.0;
        let g = GridSpec::new(1, 256, 40.0).unwrap();
        let psi0 = WaveFn::gaussian(g, [0.0; 3], sigma, [0.0; 3]).unwrap();
        let t = 0.7;
        let out = psi0.free_evolve(t);
        let prefactor = (2.0 * PI * sigma * sigma).powf(-0.25);
        let s = C64::new(1.0, t / (2.0 * sigma * sigma));
        for (x, v) in g.axis_positions().iter().zip(out.values()) {
            if x.abs() > 8.0 {
                continue;
            }
            let exact = prefactor / s.sqrt() * (-(x * x) / (4.0 * sigma * sigma * s)).exp();
            assert!((v - exact).norm() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn h1_norm_special_cases() {
        let g = GridSpec::new(1, 16, 8.0).unwrap();
        assert!((WaveFn::constant(g).h1_norm() - 1.0).abs() < 1e-13);
        let pw = WaveFn::plane_wave(g, [3, 0, 0]);
        let p0 = 2.0 * PI * 3.0 / 8.0;
        assert!((pw.h1_norm() - (1.0 + p0 * p0).sqrt()).abs() < 1e-12);

        let g3 = GridSpec::new(3, 4, 4.0).unwrap();
        assert!((WaveFn::constant(g3).h1_norm() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn h1_norm_matches_direct_dft() {
        let g = GridSpec::new(1, 32, 12.0).unwrap();
        let psi = WaveFn::gaussian(g, [0.5, 0.0, 0.0], 1.1, [0.7, 0.0, 0.0]).unwrap();
        // dense direct DFT
        let n = g.n();
        let p = g.axis_momenta();
        let mut acc = 0.0;
        for k in 0..n {
            let mut c = C64::new(0.0, 0.0);
            for (j, v) in psi.values().iter().enumerate() {
                c += v * C64::from_polar(1.0, -2.0 * PI * (k * j) as f64 / n as f64);
            }
            acc += (1.0 + p[k] * p[k]) * c.norm_sqr() / n as f64;
        }
        let oracle = (g.cell_volume() * acc).sqrt();
        assert!((psi.h1_norm() - oracle).abs() < 1e-10);
        assert!(psi.h1_norm() >= psi.norm());
    }

    #[test]
    fn rejects_non_finite() {
        let g = GridSpec::new(1, 4, 1.0).unwrap();
        let v = vec![C64::new(f64::NAN, 0.0); 4];
        assert!(matches!(WaveFn::new(g, v), Err(Error::NonFinite(_))));
        let psi = WaveFn::constant(g);
        assert!(psi.apply_multiplier(|_| C64::new(f64::INFINITY, 0.0)).is_err());
    }
}
