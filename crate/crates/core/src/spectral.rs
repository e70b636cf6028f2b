//! FFT plumbing on the uniform `n × n` torus grid.
//!
//! Grids are stored row-major, `values[j * n + i]` at `(x₁, x₂) = (i/n, j/n)`.
//! Two-dimensional spectra use the layout `spec[k1 * n + k2]`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{AdlabError, Result};

const ROWS_PER_TASK: usize = 16;
const TILE: usize = 32;

pub struct Spectral {
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

pub fn check_grid(n: usize) -> Result<()> {
    if n < 8 || !n.is_power_of_two() {
        return Err(AdlabError::GridSize(n));
    }
    Ok(())
}

impl Spectral {
    /// Shared plans for size `n`.
    pub fn for_size(n: usize) -> Result<Arc<Spectral>> {
        check_grid(n)?;
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Spectral>>>> = OnceLock::new();
        let mut cache = CACHE.get_or_init(Default::default).lock().unwrap();
        Ok(Arc::clone(cache.entry(n).or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Spectral {
                n,
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            })
        })))
    }

    /// Signed integer frequency of index `k`; the Nyquist index maps to `+n/2`.
    pub fn frequency(&self, k: usize) -> f64 {
        signed_frequency(k, self.n)
    }

    pub fn rows_forward(&self, buf: &mut [Complex64]) {
        rows_apply(&self.fwd, self.n, buf);
    }

    pub fn scratch_len(&self) -> usize {
        self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())
    }

    /// Single-row transforms for callers that manage their own parallelism.
    pub fn row_forward(&self, row: &mut [Complex64], scratch: &mut [Complex64]) {
        self.fwd.process_with_scratch(row, scratch);
    }

    pub fn row_inverse(&self, row: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inv.process_with_scratch(row, scratch);
    }

    /// Unnormalized inverse along rows.
    pub fn rows_inverse(&self, buf: &mut [Complex64]) {
        rows_apply(&self.inv, self.n, buf);
    }

    /// Unnormalized 2D DFT of a real grid, layout `[k1][k2]`.
    pub fn fft2(&self, values: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let mut a: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.rows_forward(&mut a);
        let mut b = vec![Complex64::default(); n * n];
        transpose(&a, &mut b, n);
        self.rows_forward(&mut b);
        b
    }

    /// Inverse of [`Spectral::fft2`], real part, normalized.
    pub fn ifft2_real(&self, spec: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let mut a = spec.to_vec();
        self.rows_inverse(&mut a);
        let mut b = vec![Complex64::default(); n * n];
        transpose(&a, &mut b, n);
        self.rows_inverse(&mut b);
        let s = 1.0 / (n * n) as f64;
        b.iter().map(|c| c.re * s).collect()
    }
}

pub fn signed_frequency(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

fn rows_apply(fft: &Arc<dyn Fft<f64>>, n: usize, buf: &mut [Complex64]) {
    let len = fft.get_inplace_scratch_len();
    buf.par_chunks_mut(n * ROWS_PER_TASK).for_each_init(
        || vec![Complex64::default(); len],
        |scratch, rows| fft.process_with_scratch(rows, scratch),
    );
}

/// `dst[c * n + r] = src[r * n + c]`.
pub fn transpose<T: Copy + Send + Sync>(src: &[T], dst: &mut [T], n: usize) {
    debug_assert_eq!(src.len(), n * n);
    debug_assert_eq!(dst.len(), n * n);
    let block = TILE.min(n);
    dst.par_chunks_mut(n * block).enumerate().for_each(|(b, out)| {
        let c0 = b * block;
        for r0 in (0..n).step_by(block) {
            for dc in 0..block {
                let row = &mut out[dc * n..(dc + 1) * n];
                for r in r0..r0 + block {
                    row[r] = src[r * n + c0 + dc];
                }
            }
        }
    });
}

pub fn transpose_real(values: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    transpose(values, &mut out, n);
    out
}

/// `2π κ` for each index, Nyquist kept at `+π n`.
pub fn angular_wavenumbers(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * signed_frequency(k, n)).collect()
}
