//! Compact storage and kinetic propagation for permutation-symmetric tensors.
//!
//! A bosonic tensor of `N` particles on `m = n^d` sites is determined by its
//! values on multi-indices whose particle tuples are sorted. The compact
//! vector holds those values in increasing full-index order.
//!
//! A separable kinetic multiplier is applied axis by axis. While axis `a` of
//! particle `c` is transformed, the tensor stays symmetric among particles
//! before `c` and among particles after `c`, so only fibers whose spectator
//! indices are sorted within both sets are stored and transformed. Moving from
//! one axis to the next is a gather driven by precomputed index tables.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::Spectral;
use crate::linalg::ordered_sum;

/// Fibers transformed per parallel task.
const ROW_CHUNK: usize = 512;

#[derive(Clone, Debug)]
pub struct BosonicPlan {
    n: usize,
    dim: usize,
    particles: usize,
    /// full index of every compact entry
    representatives: Vec<u32>,
    /// compact entry of every full index
    compact_of: Vec<u32>,
    /// compact entry feeding each element of the first pass
    gather_in: Vec<u32>,
    /// element of pass `p` feeding each element of pass `p + 1`
    gathers: Vec<Vec<u32>>,
    /// element of the last pass feeding each compact entry
    gather_out: Vec<u32>,
}

/// Sorts the particle tuples of `digits` (original axis order) in `lo..hi`.
fn sort_particles(digits: &mut [usize], dim: usize, lo: usize, hi: usize) {
    if hi - lo < 2 {
        return;
    }
    if dim == 1 {
        digits[lo..hi].sort_unstable();
        return;
    }
    // insertion sort on tuples; hi - lo is the particle count
    for q in (lo + 1)..hi {
        let mut j = q;
        while j > lo && digits[(j - 1) * dim..j * dim] > digits[j * dim..(j + 1) * dim] {
            for e in 0..dim {
                digits.swap((j - 1) * dim + e, j * dim + e);
            }
            j -= 1;
        }
    }
}

fn decode(mut idx: usize, n: usize, order: &[usize], digits: &mut [usize]) {
    for &ax in order.iter().rev() {
        digits[ax] = idx % n;
        idx /= n;
    }
}

fn encode(n: usize, order: &[usize], digits: &[usize]) -> usize {
    order.iter().fold(0, |acc, &ax| acc * n + digits[ax])
}

/// Axis order (slowest first) of the rows of pass `p`; the fiber axis is
/// `axes - 1 - p` and is the fastest.
fn pass_layout(axes: usize, p: usize) -> Vec<usize> {
    ((axes - p)..axes).chain(0..(axes - 1 - p)).collect()
}

/// Compact row index of every row of pass `p`, plus the number of stored rows.
fn pass_rows(n: usize, dim: usize, particles: usize, p: usize) -> (Vec<u32>, usize) {
    let axes = dim * particles;
    let rest = n.pow(axes as u32 - 1);
    let layout = pass_layout(axes, p);
    let current = (axes - 1 - p) / dim;
    let canon: Vec<u32> = (0..rest)
        .into_par_iter()
        .map_init(
            || vec![0usize; axes],
            |digits, r| {
                decode(r, n, &layout, digits);
                sort_particles(digits, dim, 0, current);
                sort_particles(digits, dim, current + 1, particles);
                encode(n, &layout, digits) as u32
            },
        )
        .collect();
    let mut slot = vec![u32::MAX; rest];
    let mut count = 0u32;
    for r in 0..rest {
        if canon[r] as usize == r {
            slot[r] = count;
            count += 1;
        }
    }
    let rows = canon.into_par_iter().map(|c| slot[c as usize]).collect();
    (rows, count as usize)
}

impl BosonicPlan {
    pub fn new(n: usize, dim: usize, particles: usize) -> Result<Self> {
        if particles < 2 || dim == 0 || n == 0 {
            return Err(Error::InvalidArgument("bosonic plan needs at least two particles".into()));
        }
        let axes = dim * particles;
        let total = n
            .checked_pow(axes as u32)
            .filter(|&t| t <= u32::MAX as usize)
            .ok_or_else(|| Error::InvalidArgument("tensor too large for a bosonic plan".into()))?;

        let full_canon: Vec<u32> = (0..total)
            .into_par_iter()
            .map_init(
                || vec![0usize; axes],
                |digits, x| {
                    let order: Vec<usize> = (0..axes).collect();
                    decode(x, n, &order, digits);
                    sort_particles(digits, dim, 0, particles);
                    encode(n, &order, digits) as u32
                },
            )
            .collect();
        let representatives: Vec<u32> = (0..total as u32).filter(|&x| full_canon[x as usize] == x).collect();
        let mut slot = vec![0u32; total];
        for (j, &x) in representatives.iter().enumerate() {
            slot[x as usize] = j as u32;
        }
        let compact_of: Vec<u32> = full_canon.par_iter().map(|&c| slot[c as usize]).collect();
        drop(full_canon);
        drop(slot);

        let natural: Vec<usize> = (0..axes).collect();
        let mut rows_prev = pass_rows(n, dim, particles, 0);
        let layout0 = pass_layout(axes, 0);
        let gather_in = stored_rows(&rows_prev.0)
            .into_par_iter()
            .flat_map_iter(|r| {
                let base = r * n;
                let compact_of = &compact_of;
                (0..n).map(move |k| compact_of[base + k])
            })
            .collect();
        debug_assert_eq!(layout0, (0..axes - 1).collect::<Vec<_>>());

        let mut gathers = Vec::with_capacity(axes - 1);
        for p in 0..axes - 1 {
            let rows_next = pass_rows(n, dim, particles, p + 1);
            let from = pass_layout(axes, p);
            let to = pass_layout(axes, p + 1);
            let from_axis = axes - 1 - p;
            let to_axis = axes - 2 - p;
            let prev = &rows_prev.0;
            let g: Vec<u32> = stored_rows(&rows_next.0)
                .into_par_iter()
                .flat_map_iter(|r| {
                    let mut digits = vec![0usize; axes];
                    decode(r, n, &to, &mut digits);
                    let (from, prev) = (&from, prev);
                    (0..n).map(move |k| {
                        digits[to_axis] = k;
                        let row = encode(n, from, &digits);
                        prev[row] * n as u32 + digits[from_axis] as u32
                    })
                })
                .collect();
            gathers.push(g);
            rows_prev = rows_next;
        }

        let last = pass_layout(axes, axes - 1);
        let prev = &rows_prev.0;
        let gather_out = representatives
            .par_iter()
            .map_init(
                || vec![0usize; axes],
                |digits, &x| {
                    decode(x as usize, n, &natural, digits);
                    prev[encode(n, &last, digits)] * n as u32 + digits[0] as u32
                },
            )
            .collect();

        Ok(Self { n, dim, particles, representatives, compact_of, gather_in, gathers, gather_out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    /// Number of stored values.
    pub fn compact_len(&self) -> usize {
        self.representatives.len()
    }

    /// Full length of the tensor.
    pub fn full_len(&self) -> usize {
        self.compact_of.len()
    }

    /// Values of `full` at the sorted multi-indices.
    pub fn compress<T: Copy + Send + Sync>(&self, full: &[T]) -> Vec<T> {
        assert_eq!(full.len(), self.full_len());
        self.representatives.par_iter().map(|&x| full[x as usize]).collect()
    }

    /// `||full - expand(compress(full))||` without weights; zero exactly when
    /// `full` is symmetric.
    pub fn asymmetry(&self, full: &[C64]) -> f64 {
        assert_eq!(full.len(), self.full_len());
        ordered_sum(full.len(), |x| {
            let rep = self.representatives[self.compact_of[x] as usize] as usize;
            (full[x] - full[rep]).norm_sqr()
        })
        .sqrt()
    }

    /// Writes the symmetric tensor with compact values `compact` into `full`.
    pub fn expand_into(&self, compact: &[C64], full: &mut [C64]) {
        assert_eq!(compact.len(), self.compact_len());
        assert_eq!(full.len(), self.full_len());
        full.par_iter_mut()
            .zip(self.compact_of.par_iter())
            .for_each(|(v, &j)| *v = compact[j as usize]);
    }

    /// Applies `prod_a symbol[k_a]` in Fourier space to the compact tensor.
    /// `symbol` is indexed in FFT bin order; `bufs` is reused storage.
    pub fn apply_separable(&self, spec: &Spectral, compact: &mut [C64], symbol: &[C64], bufs: &mut [Vec<C64>; 2]) {
        assert_eq!(spec.n(), self.n);
        assert_eq!(symbol.len(), self.n);
        assert_eq!(compact.len(), self.compact_len());
        let n = self.n;
        let scale = 1.0 / n as f64;
        let sym: Vec<C64> = symbol.iter().map(|s| s * scale).collect();
        let scratch_len = spec.row_scratch_len();
        let transform = |buf: &mut Vec<C64>| {
            buf.par_chunks_mut(ROW_CHUNK * n).for_each_init(
                || vec![C64::new(0.0, 0.0); scratch_len],
                |scratch, rows| spec.multiply_rows(rows, scratch, &sym),
            );
        };
        let [a, b] = bufs;
        gather(a, compact, &self.gather_in);
        transform(a);
        for g in &self.gathers {
            gather(b, a, g);
            transform(b);
            std::mem::swap(a, b);
        }
        compact
            .par_iter_mut()
            .zip(self.gather_out.par_iter())
            .for_each(|(v, &i)| *v = a[i as usize]);
    }
}

fn stored_rows(rows: &[u32]) -> Vec<usize> {
    let mut seen = 0u32;
    let mut out = Vec::new();
    for (r, &slot) in rows.iter().enumerate() {
        if slot == seen {
            out.push(r);
            seen += 1;
        }
    }
    out
}

fn gather(dst: &mut Vec<C64>, src: &[C64], index: &[u32]) {
    dst.resize(index.len(), C64::new(0.0, 0.0));
    dst.par_iter_mut()
        .zip(index.par_iter())
        .for_each(|(d, &i)| *d = src[i as usize]);
}
