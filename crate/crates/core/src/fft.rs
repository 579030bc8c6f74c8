//! Zero-padded linear convolution on square grids.
//!
//! An `n × n` input is convolved with a kernel given on integer offsets. The
//! padded period `2n` is large enough that outputs up to `(n + 1) × (n + 1)`
//! are free of wrap-around.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct PaddedConv {
    n: usize,
    period: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Fourier transform of a padded input or kernel.
#[derive(Clone)]
pub struct Spectrum(Vec<Complex64>);

impl PaddedConv {
    pub fn new(n: usize) -> Self {
        let period = 2 * n;
        let mut planner = FftPlanner::new();
        PaddedConv {
            n,
            period,
            forward: planner.plan_fft_forward(period),
            inverse: planner.plan_fft_inverse(period),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Transform of an `n × n` row-major input (`values[j * n + i]`).
    pub fn input_spectrum(&self, values: &[f64]) -> Spectrum {
        let (n, p) = (self.n, self.period);
        assert_eq!(values.len(), n * n);
        let mut buf = vec![Complex64::new(0.0, 0.0); p * p];
        for j in 0..n {
            for i in 0..n {
                buf[j * p + i] = Complex64::new(values[j * n + i], 0.0);
            }
        }
        self.transform(&mut buf, &self.forward);
        Spectrum(buf)
    }

    /// Transform of a real kernel for an output of `out_x × out_y` points,
    /// where output `(a, b)` gathers `Σ input(k, l) · kernel(a − k, b − l)`.
    pub fn kernel_spectrum<F>(&self, out_x: usize, out_y: usize, kernel: F) -> Spectrum
    where
        F: Fn(i64, i64) -> f64 + Sync,
    {
        let p = self.period;
        let lo = -(self.n as i64 - 1);
        assert!(out_x <= self.n + 1 && out_y <= self.n + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); p * p];
        buf.par_chunks_mut(p).enumerate().for_each(|(row, chunk)| {
            let oy = wrap_offset(row, p);
            if oy < lo || oy > out_y as i64 - 1 {
                return;
            }
            for (col, c) in chunk.iter_mut().enumerate() {
                let ox = wrap_offset(col, p);
                if ox >= lo && ox <= out_x as i64 - 1 {
                    *c = Complex64::new(kernel(ox, oy), 0.0);
                }
            }
        });
        self.transform(&mut buf, &self.forward);
        Spectrum(buf)
    }

    /// Real convolution of an input with one kernel.
    pub fn apply(&self, input: &Spectrum, kernel: &Spectrum, out_x: usize, out_y: usize) -> Vec<f64> {
        let mut buf: Vec<Complex64> = input.0.iter().zip(&kernel.0).map(|(a, b)| a * b).collect();
        self.transform(&mut buf, &self.inverse);
        self.extract(&buf, out_x, out_y, |c| c.re)
    }

    /// Two real convolutions of the same input, packed into one inverse
    /// transform as real and imaginary parts.
    pub fn apply_pair(
        &self,
        input: &Spectrum,
        kernel_a: &Spectrum,
        kernel_b: &Spectrum,
        out_x: usize,
        out_y: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut buf: Vec<Complex64> = input
            .0
            .iter()
            .zip(kernel_a.0.iter().zip(&kernel_b.0))
            .map(|(f, (a, b))| f * (a + i * b))
            .collect();
        self.transform(&mut buf, &self.inverse);
        (
            self.extract(&buf, out_x, out_y, |c| c.re),
            self.extract(&buf, out_x, out_y, |c| c.im),
        )
    }

    fn extract(&self, buf: &[Complex64], out_x: usize, out_y: usize, part: impl Fn(&Complex64) -> f64) -> Vec<f64> {
        let p = self.period;
        let scale = 1.0 / (p * p) as f64;
        let mut out = Vec::with_capacity(out_x * out_y);
        for b in 0..out_y {
            for a in 0..out_x {
                out.push(part(&buf[b * p + a]) * scale);
            }
        }
        out
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let p = self.period;
        buf.par_chunks_mut(p).for_each(|row| plan.process(row));
        transpose_square(buf, p);
        buf.par_chunks_mut(p).for_each(|row| plan.process(row));
        transpose_square(buf, p);
    }
}

#[inline]
fn wrap_offset(index: usize, period: usize) -> i64 {
    if index < period / 2 + 1 {
        index as i64
    } else {
        index as i64 - period as i64
    }
}

fn transpose_square(buf: &mut [Complex64], p: usize) {
    for r in 0..p {
        for c in (r + 1)..p {
            buf.swap(r * p + c, c * p + r);
        }
    }
}
