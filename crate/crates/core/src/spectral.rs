//! FFT helpers for periodic position fields.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

/// Signed integer frequency of DFT bin `j` of an `n`-point transform.
pub fn signed_frequency(j: usize, n: usize) -> f64 {
    if j <= n / 2 {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

/// In-place unnormalized DFT over a `d`-dimensional periodic cube of side `n`
/// stored row-major.
pub struct CubeFft {
    n: usize,
    d: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl CubeFft {
    pub fn new(n: usize, d: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            d,
            forward: planner.plan_fft(n, FftDirection::Forward),
            inverse: planner.plan_fft(n, FftDirection::Inverse),
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        // last axis is contiguous
        fft.process(data);
        if self.d == 2 {
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for c in 0..n {
                for r in 0..n {
                    col[r] = data[r * n + c];
                }
                fft.process(&mut col);
                for r in 0..n {
                    data[r * n + c] = col[r];
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform including the `1/n^d` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// Integer wave vector of flat bin `idx`.
    pub fn frequency(&self, idx: usize) -> [f64; 2] {
        match self.d {
            1 => [signed_frequency(idx, self.n), 0.0],
            _ => [
                signed_frequency(idx / self.n, self.n),
                signed_frequency(idx % self.n, self.n),
            ],
        }
    }
}

/// Unnormalized DFT of a 1-D real sequence.
pub fn dft_real(values: &[f64]) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(values.len());
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_2d() {
        let fft = CubeFft::new(8, 2);
        let orig: Vec<Complex64> = (0..64)
            .map(|i| Complex64::new((i as f64).sin(), 0.0))
            .collect();
        let mut data = orig.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn frequencies_are_signed() {
        assert_eq!(signed_frequency(0, 8), 0.0);
        assert_eq!(signed_frequency(3, 8), 3.0);
        assert_eq!(signed_frequency(4, 8), 4.0);
        assert_eq!(signed_frequency(7, 8), -1.0);
    }
}
