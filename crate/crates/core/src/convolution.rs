//! Causal discrete convolution `y_i = Σ_{j<i} w_{i-j} x_j`.
//!
//! Every moving-average sum in the crate has this form once the kernel is
//! replaced by its [`CellWeights`](crate::kernels::CellWeights). Long inputs go
//! through a zero-padded FFT whose plan and weight spectrum are computed
//! once and shared between threads.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

const DIRECT_LIMIT: usize = 64;

struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex<f64>>,
    scratch_len: usize,
}

enum Method {
    Direct,
    /// All weights equal: a scaled running sum.
    Constant(f64),
    Spectral(Spectral),
}

pub struct CausalConvolution {
    n_cells: usize,
    weights: Vec<f64>,
    method: Method,
}

/// Per-thread work buffers for [`CausalConvolution::apply_with`].
#[derive(Default)]
pub struct ConvScratch {
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl CausalConvolution {
    /// `weights[k]` is the weight at lag `k`; `weights[0]` is ignored.
    /// Inputs have `n_cells` entries and outputs `n_cells + 1`.
    pub fn new(weights: &[f64], n_cells: usize) -> Self {
        assert!(weights.len() > n_cells, "need weights up to lag n_cells");
        let mut weights = weights[..=n_cells].to_vec();
        weights[0] = 0.0;
        if n_cells > 1 && weights[2..].iter().all(|&w| w == weights[1]) {
            return Self {
                n_cells,
                method: Method::Constant(weights[1]),
                weights,
            };
        }
        if n_cells <= DIRECT_LIMIT {
            return Self {
                n_cells,
                weights,
                method: Method::Direct,
            };
        }
        let spectral = {
            let len = (2 * (n_cells + 1)).next_power_of_two();
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(len);
            let inverse = planner.plan_fft_inverse(len);
            let scratch_len = forward
                .get_inplace_scratch_len()
                .max(inverse.get_inplace_scratch_len());
            let mut spectrum = vec![Complex::new(0.0, 0.0); len];
            for (s, w) in spectrum.iter_mut().zip(&weights) {
                s.re = *w;
            }
            let mut scratch = vec![Complex::new(0.0, 0.0); scratch_len];
            forward.process_with_scratch(&mut spectrum, &mut scratch);
            let scale = 1.0 / len as f64;
            for s in &mut spectrum {
                *s *= scale;
            }
            Spectral {
                forward,
                inverse,
                spectrum,
                scratch_len,
            }
        };
        Self {
            n_cells,
            weights,
            method: Method::Spectral(spectral),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cells + 1];
        self.apply_with(x, &mut out, &mut ConvScratch::default());
        out
    }

    pub fn apply_with(&self, x: &[f64], out: &mut [f64], scratch: &mut ConvScratch) {
        assert_eq!(x.len(), self.n_cells);
        assert_eq!(out.len(), self.n_cells + 1);
        match &self.method {
            Method::Direct => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..i).map(|j| self.weights[i - j] * x[j]).sum();
                }
            }
            Method::Constant(w) => {
                let mut acc = 0.0;
                out[0] = 0.0;
                for (o, v) in out[1..].iter_mut().zip(x) {
                    acc += v;
                    *o = w * acc;
                }
            }
            Method::Spectral(sp) => {
                let len = sp.spectrum.len();
                scratch.buffer.clear();
                scratch.buffer.resize(len, Complex::new(0.0, 0.0));
                for (b, v) in scratch.buffer.iter_mut().zip(x) {
                    b.re = *v;
                }
                scratch.scratch.resize(sp.scratch_len, Complex::new(0.0, 0.0));
                sp.forward
                    .process_with_scratch(&mut scratch.buffer, &mut scratch.scratch);
                for (b, s) in scratch.buffer.iter_mut().zip(&sp.spectrum) {
                    *b *= *s;
                }
                sp.inverse
                    .process_with_scratch(&mut scratch.buffer, &mut scratch.scratch);
                out[0] = 0.0;
                for (o, b) in out.iter_mut().zip(&scratch.buffer).skip(1) {
                    *o = b.re;
                }
            }
        }
    }
}
