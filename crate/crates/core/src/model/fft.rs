use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// Complex 3-D FFT on an `n^3` grid stored row-major with x slowest.
#[derive(Clone)]
pub struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unnormalised forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.fwd);
    }

    /// Inverse transform in place, normalised by `1/n^3`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inv);
        let s = 1.0 / (self.n * self.n * self.n) as f64;
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    pub fn forward_real(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Inverse transform keeping the real part.
    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut data);
        data.into_iter().map(|v| v.re).collect()
    }

    fn apply(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n);
        // z lines are contiguous
        data.par_chunks_mut(n).for_each(|line| plan.process(line));
        // y lines: stride n inside each x slab
        data.par_chunks_mut(n * n).for_each(|slab| {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for k in 0..n {
                for j in 0..n {
                    line[j] = slab[j * n + k];
                }
                plan.process(&mut line);
                for j in 0..n {
                    slab[j * n + k] = line[j];
                }
            }
        });
        // x lines: stride n^2; transpose-free gather per (j, k) column block
        let nn = n * n;
        let cols: Vec<Vec<Complex64>> = (0..nn)
            .into_par_iter()
            .map(|jk| {
                let mut line: Vec<Complex64> = (0..n).map(|i| data[i * nn + jk]).collect();
                plan.process(&mut line);
                line
            })
            .collect();
        for (jk, line) in cols.into_iter().enumerate() {
            for (i, v) in line.into_iter().enumerate() {
                data[i * nn + jk] = v;
            }
        }
    }
}

/// Signed integer wavenumber of FFT index `m` on an `n`-point axis.
///
/// The Nyquist index maps to zero so that odd-order derivative symbols stay
/// real-valued fields and every second derivative is a product of first ones.
pub fn signed_index(m: usize, n: usize) -> i64 {
    let m = m as i64;
    let n = n as i64;
    if 2 * m == n {
        0
    } else if 2 * m < n {
        m
    } else {
        m - n
    }
}
