//! Cucker-Smale communication weight and its Toeplitz convolution on a
//! uniform grid.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Weight `(1 + r^2 / R^2)^(-beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentKernel {
    pub beta: f64,
    pub radius: f64,
}

impl AlignmentKernel {
    pub fn new(beta: f64, radius: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must be positive, got {beta}"),
            });
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "kernel_radius",
                reason: format!("must be positive, got {radius}"),
            });
        }
        Ok(Self { beta, radius })
    }

    /// Unit kernel radius.
    pub fn with_beta(beta: f64) -> Result<Self> {
        Self::new(beta, 1.0)
    }

    pub fn weight(&self, separation: f64) -> f64 {
        cs_weight(self, separation)
    }
}

pub fn cs_weight(kernel: &AlignmentKernel, separation: f64) -> f64 {
    let s = separation / kernel.radius;
    (1.0 + s * s).powf(-kernel.beta)
}

/// Grids at or below this size convolve directly.
const DIRECT_LIMIT: usize = 512;

/// The kernel sampled at node offsets `0..n`, used for the non-periodic
/// sums `y_i = sum_m K(x_i - x_m) f_m` over a uniform grid.
#[derive(Clone)]
pub struct KernelTable {
    weights: Vec<f64>,
    fft: Option<FftConvolver>,
}

#[derive(Clone)]
struct FftConvolver {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex<f64>>,
}

impl std::fmt::Debug for KernelTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelTable")
            .field("len", &self.weights.len())
            .field("fft", &self.fft.is_some())
            .finish()
    }
}

impl KernelTable {
    pub fn new(kernel: &AlignmentKernel, n: usize, dx: f64) -> Self {
        let weights: Vec<f64> = (0..n).map(|k| cs_weight(kernel, k as f64 * dx)).collect();
        let fft = (n > DIRECT_LIMIT).then(|| FftConvolver::new(&weights));
        Self { weights, fft }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `K` at node offset `k`.
    pub fn at(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn convolve(&self, f: &[f64]) -> Vec<f64> {
        match &self.fft {
            Some(fft) => fft.convolve(f),
            None => self.convolve_direct(f),
        }
    }

    pub fn convolve_direct(&self, f: &[f64]) -> Vec<f64> {
        let n = self.weights.len();
        assert_eq!(f.len(), n, "kernel table and field lengths differ");
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for (m, fm) in f.iter().enumerate() {
                    s += self.weights[i.abs_diff(m)] * fm;
                }
                s
            })
            .collect()
    }
}

impl FftConvolver {
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let size = (2 * n - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        // Circulant embedding of the symmetric Toeplitz matrix.
        let mut spectrum = vec![Complex::new(0.0, 0.0); size];
        spectrum[0].re = weights[0];
        for k in 1..n {
            spectrum[k].re = weights[k];
            spectrum[size - k].re = weights[k];
        }
        forward.process(&mut spectrum);
        Self {
            forward,
            inverse,
            spectrum,
        }
    }

    fn convolve(&self, f: &[f64]) -> Vec<f64> {
        let size = self.spectrum.len();
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (b, &v) in buf.iter_mut().zip(f) {
            b.re = v;
        }
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / size as f64;
        buf[..f.len()].iter().map(|c| c.re * scale).collect()
    }
}
