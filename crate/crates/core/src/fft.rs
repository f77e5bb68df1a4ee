//! Thin wrapper around `rustfft` with cached plans and a normalized inverse.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Forward/inverse FFT pair of a fixed length.
///
/// `rustfft` leaves transforms unnormalized; [`Fft64::inverse`] divides by
/// the length so that `inverse(forward(x)) == x`.
#[derive(Clone)]
pub struct Fft64 {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    len: usize,
}

impl Fft64 {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fwd: planner.plan_fft_forward(len),
            inv: planner.plan_fft_inverse(len),
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place forward DFT, `X[k] = sum_n x[n] exp(-j 2 pi k n / N)`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len);
        self.fwd.process(buf);
    }

    /// In-place inverse DFT including the `1/N` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len);
        self.inv.process(buf);
        let scale = 1.0 / self.len as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward_copy(&self, src: &[Complex64]) -> Vec<Complex64> {
        let mut buf = src.to_vec();
        self.forward(&mut buf);
        buf
    }

    pub fn inverse_copy(&self, src: &[Complex64]) -> Vec<Complex64> {
        let mut buf = src.to_vec();
        self.inverse(&mut buf);
        buf
    }
}

impl std::fmt::Debug for Fft64 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft64").field("len", &self.len).finish()
    }
}

/// Angular frequency of each DFT bin for sample period `dt`, in rad/s.
///
/// Standard fftfreq layout: non-negative frequencies first, then negative.
pub fn angular_freqs(n: usize, dt: f64) -> Vec<f64> {
    let df = 1.0 / (n as f64 * dt);
    (0..n)
        .map(|k| {
            let f = if k <= (n - 1) / 2 {
                k as f64 * df
            } else {
                (k as f64 - n as f64) * df
            };
            2.0 * std::f64::consts::PI * f
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let fft = Fft64::new(16);
        let x: Vec<Complex64> = (0..16)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let spec = fft.forward_copy(&x);
        let back = fft.inverse_copy(&spec);
        for (a, b) in x.iter().zip(back.iter()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn freq_grid_layout() {
        let w = angular_freqs(8, 0.5);
        let df = 2.0 * std::f64::consts::PI / (8.0 * 0.5);
        assert!((w[0]).abs() < 1e-15);
        assert!((w[1] - df).abs() < 1e-12);
        assert!((w[7] + df).abs() < 1e-12);
        assert!((w[4] + 4.0 * df).abs() < 1e-12);
    }
}
