use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::LagKernel;

/// Zero-padded FFT convolution for lag kernels on `nx` cells.
///
/// Kernel taps occupy `0..2nx-1` and data `0..nx` of a length `L = 2nx`
/// buffer; the wanted outputs `nx-1..2nx-1` are clear of wrap-around. Spectra
/// are stored as the `L/2 + 1` non-redundant bins of a real signal, so
/// accumulating products of many pairs is cheap.
#[derive(Clone)]
pub(crate) struct Spectral {
    nx: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Spectral {
    pub(crate) fn new(nx: usize) -> Self {
        let mut planner = FftPlanner::new();
        let len = 2 * nx;
        Spectral {
            nx,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub(crate) fn bins(&self) -> usize {
        self.nx + 1
    }

    fn transform(&self, real: impl Iterator<Item = f64>) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * self.nx];
        for (slot, v) in buf.iter_mut().zip(real) {
            slot.re = v;
        }
        self.forward.process(&mut buf);
        buf.truncate(self.bins());
        buf
    }

    pub(crate) fn kernel(&self, k: &LagKernel) -> Vec<Complex64> {
        debug_assert_eq!(k.nx(), self.nx);
        self.transform(k.taps().iter().copied())
    }

    pub(crate) fn data(&self, values: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.nx);
        self.transform(values.iter().copied())
    }

    /// Back to the `nx` convolution outputs.
    pub(crate) fn invert(&self, half: &[Complex64]) -> Vec<f64> {
        let len = 2 * self.nx;
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        buf[..half.len()].copy_from_slice(half);
        for b in half.len()..len {
            buf[b] = half[len - b].conj();
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / len as f64;
        buf[self.nx - 1..len - 1]
            .iter()
            .map(|c| c.re * scale)
            .collect()
    }

    pub(crate) fn convolve(&self, k: &LagKernel, values: &[f64]) -> Vec<f64> {
        let kh = self.kernel(k);
        let mut dh = self.data(values);
        for (d, k) in dh.iter_mut().zip(&kh) {
            *d *= k;
        }
        self.invert(&dh)
    }
}

/// `acc += a ⊙ b` over the stored bins.
pub(crate) fn accumulate(acc: &mut [Complex64], a: &[Complex64], b: &[Complex64]) {
    for ((s, x), y) in acc.iter_mut().zip(a).zip(b) {
        *s += x * y;
    }
}
