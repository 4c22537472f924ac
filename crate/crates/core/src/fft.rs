//! Axis-sweep FFT kernels for row-major tensors whose axes all have length `n`.
//!
//! A sweep runs one pass per axis. Each pass transforms the contiguous
//! (fastest) axis tile by tile while the tile is hot in cache, then writes the
//! tile transposed so that this axis becomes the slowest one. After a pass
//! for every axis the original layout is restored. Separable Fourier
//! multipliers are applied inside the same pass, so a full kinetic propagator
//! costs one read and one write of the tensor per axis.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// Largest block of trailing axes transformed in cache during one pass.
const BLOCK_ELEMS: usize = 1 << 10;
/// Target number of elements per parallel tile.
const TILE_ELEMS: usize = 1 << 16;

/// Planned unitary transforms of length `n`.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pass {
    Forward,
    Inverse,
    /// forward, multiply by the axis symbol, inverse
    Multiplier,
}

struct SharedOut(*mut C64);
// SAFETY: every tile writes a disjoint set of output indices (see `sweep`).
unsafe impl Send for SharedOut {}
unsafe impl Sync for SharedOut {}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unitary forward DFT over `axes` axes.
    pub fn forward(&self, data: &mut Vec<C64>, scratch: &mut Vec<C64>, axes: usize) {
        self.sweep(data, scratch, axes, Pass::Forward, None, None);
    }

    /// Unitary inverse DFT over `axes` axes.
    pub fn inverse(&self, data: &mut Vec<C64>, scratch: &mut Vec<C64>, axes: usize) {
        self.sweep(data, scratch, axes, Pass::Inverse, None, None);
    }

    /// Applies the separable multiplier `prod_a symbol[k_a]` (FFT bin order) to
    /// every axis. When `pre` is given, the tensor is first multiplied
    /// pointwise by it in position space.
    pub fn separable(
        &self,
        data: &mut Vec<C64>,
        scratch: &mut Vec<C64>,
        axes: usize,
        symbol: &[C64],
        pre: Option<&[C64]>,
    ) {
        assert_eq!(symbol.len(), self.n);
        let scale = 1.0 / self.n as f64;
        let scaled: Vec<C64> = symbol.iter().map(|s| s * scale).collect();
        self.sweep(data, scratch, axes, Pass::Multiplier, Some(&scaled), pre);
    }

    fn sweep(
        &self,
        data: &mut Vec<C64>,
        scratch: &mut Vec<C64>,
        axes: usize,
        pass: Pass,
        symbol: Option<&[C64]>,
        pre: Option<&[C64]>,
    ) {
        let n = self.n;
        let total = data.len();
        debug_assert_eq!(total, n.pow(axes as u32));
        if let Some(p) = pre {
            assert_eq!(p.len(), total);
        }
        if scratch.len() != total {
            scratch.resize(total, C64::new(0.0, 0.0));
        }
        let fft_scratch_len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());

        for (pass_idx, group) in axis_groups(n, axes).into_iter().enumerate() {
            let block = n.pow(group as u32);
            let rest = total / block;
            let tile_rows = (TILE_ELEMS / block).clamp(1, rest);
            let norm = match pass {
                Pass::Multiplier => 1.0,
                _ => (n as f64).powf(-0.5 * group as f64),
            };
            let out = SharedOut(scratch.as_mut_ptr());
            let out = &out;
            let pre_here = if pass_idx == 0 { pre } else { None };
            data.par_chunks_mut(tile_rows * block).enumerate().for_each_init(
                || (vec![C64::new(0.0, 0.0); fft_scratch_len], vec![C64::new(0.0, 0.0); block]),
                |(buf, local), (t, tile)| {
                    let r0 = t * tile_rows;
                    if let Some(p) = pre_here {
                        let base = r0 * block;
                        let len = tile.len();
                        for (x, f) in tile.iter_mut().zip(&p[base..base + len]) {
                            *x *= f;
                        }
                    }
                    for blk in tile.chunks_exact_mut(block) {
                        for _ in 0..group {
                            self.transform_rows(blk, buf, pass, symbol);
                            // rotate the fastest axis of the block to the slowest
                            let lead = block / n;
                            for r in 0..lead {
                                for j in 0..n {
                                    local[j * lead + r] = blk[r * n + j];
                                }
                            }
                            blk.copy_from_slice(local);
                        }
                    }
                    let rows = tile.len() / block;
                    for b in 0..block {
                        let dst = b * rest + r0;
                        for r in 0..rows {
                            // SAFETY: indices b * rest + r0 + r for r < rows are owned
                            // by this tile alone, and dst + r < total.
                            unsafe {
                                *out.0.add(dst + r) = tile[r * block + b] * norm;
                            }
                        }
                    }
                },
            );
            std::mem::swap(data, scratch);
        }
    }

    /// Scratch length needed by [`Spectral::multiply_rows`].
    pub(crate) fn row_scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    /// Applies forward, `symbol` (already divided by `n`), inverse to each
    /// contiguous row of length `n`.
    pub(crate) fn multiply_rows(&self, rows: &mut [C64], buf: &mut [C64], symbol: &[C64]) {
        self.transform_rows(rows, buf, Pass::Multiplier, Some(symbol));
    }

    fn transform_rows(&self, rows: &mut [C64], buf: &mut [C64], pass: Pass, symbol: Option<&[C64]>) {
        match pass {
            Pass::Forward => self.forward.process_with_scratch(rows, buf),
            Pass::Inverse => self.inverse.process_with_scratch(rows, buf),
            Pass::Multiplier => {
                let sym = symbol.expect("multiplier pass needs a symbol");
                self.forward.process_with_scratch(rows, buf);
                for row in rows.chunks_exact_mut(self.n) {
                    for (x, s) in row.iter_mut().zip(sym) {
                        *x *= s;
                    }
                }
                self.inverse.process_with_scratch(rows, buf);
            }
        }
    }
}

/// Splits `axes` into as few passes as possible, each covering at most
/// `BLOCK_ELEMS` trailing elements, with group sizes as even as possible.
fn axis_groups(n: usize, axes: usize) -> Vec<usize> {
    let mut widest = 1;
    while widest < axes && n.pow(widest as u32 + 1) <= BLOCK_ELEMS {
        widest += 1;
    }
    let passes = axes.div_ceil(widest);
    (0..passes).map(|i| axes / passes + usize::from(i < axes % passes)).collect()
}

/// Flattened index decomposition helper for tensors of `particles` one-body
/// factors of size `m`: returns the per-particle one-body indices of `idx`.
pub fn particle_indices(mut idx: usize, m: usize, particles: usize, out: &mut [usize]) {
    for slot in (0..particles).rev() {
        out[slot] = idx % m;
        idx /= m;
    }
}
