//! Separable 2D transforms with execution counters.
//!
//! Each call to a 2D transform (one full forward or inverse pass over the
//! grid) increments the owning engine's counter by one. Engines are created
//! per solver call, so counts are local to that call.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustdct::{DctPlanner, TransformType2And3};
use rustfft::{Fft, FftPlanner};

#[derive(Debug, Default)]
pub struct TransformCounter(AtomicUsize);

impl TransformCounter {
    #[inline]
    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> usize {
        self.0.load(Ordering::Relaxed)
    }
}

/// Angular frequencies (rad/m) in periodic FFT ordering.
pub fn fft_frequencies(n: usize, pitch: f64) -> Vec<f64> {
    let scale = 2.0 * std::f64::consts::PI / (n as f64 * pitch);
    (0..n)
        .map(|i| {
            let signed = if i <= (n - 1) / 2 {
                i as isize
            } else {
                i as isize - n as isize
            };
            signed as f64 * scale
        })
        .collect()
}

/// FFT frequencies with the even-length Nyquist bin set to zero, for odd-order
/// derivative multipliers that must map real fields to real fields.
pub fn derivative_frequencies(n: usize, pitch: f64) -> Vec<f64> {
    let mut k = fft_frequencies(n, pitch);
    if n % 2 == 0 {
        k[n / 2] = 0.0;
    }
    k
}

/// Cosine-basis angular frequencies πm/L for m = 0..n.
pub fn cosine_frequencies(n: usize, pitch: f64) -> Vec<f64> {
    let scale = std::f64::consts::PI / (n as f64 * pitch);
    (0..n).map(|m| m as f64 * scale).collect()
}

fn transpose<T: Copy + Default>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::default(); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

/// Real-input 2D FFT producing the half spectrum of shape `h × (w/2 + 1)`.
pub struct RealFft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn RealToComplex<f64>>,
    row_inv: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    counter: TransformCounter,
}

impl RealFft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        RealFft2 {
            height,
            width,
            row_fwd: rp.plan_fft_forward(width),
            row_inv: rp.plan_fft_inverse(width),
            col_fwd: cp.plan_fft_forward(height),
            col_inv: cp.plan_fft_inverse(height),
            counter: TransformCounter::default(),
        }
    }

    pub fn half_width(&self) -> usize {
        self.width / 2 + 1
    }

    pub fn count(&self) -> usize {
        self.counter.get()
    }

    pub fn forward(&self, input: &[f64]) -> Vec<Complex64> {
        assert_eq!(input.len(), self.height * self.width);
        self.counter.bump();
        let hw = self.half_width();
        let mut half = vec![Complex64::default(); self.height * hw];
        let mut row = vec![0.0; self.width];
        for r in 0..self.height {
            row.copy_from_slice(&input[r * self.width..(r + 1) * self.width]);
            self.row_fwd
                .process(&mut row, &mut half[r * hw..(r + 1) * hw])
                .expect("row buffer sizes are fixed by the plan");
        }
        let mut cols = transpose(&half, self.height, hw);
        self.col_fwd.process(&mut cols);
        transpose(&cols, hw, self.height)
    }

    /// Normalized inverse; consumes the spectrum buffer.
    pub fn inverse(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        let hw = self.half_width();
        assert_eq!(spectrum.len(), self.height * hw);
        self.counter.bump();
        let mut cols = transpose(&spectrum, self.height, hw);
        self.col_inv.process(&mut cols);
        spectrum = transpose(&cols, hw, self.height);
        let norm = 1.0 / (self.height * self.width) as f64;
        let mut out = vec![0.0; self.height * self.width];
        for r in 0..self.height {
            let row = &mut spectrum[r * hw..(r + 1) * hw];
            // c2r ignores these imaginary parts; zero them so the plan does not
            // report a non-Hermitian input.
            row[0].im = 0.0;
            if self.width % 2 == 0 {
                row[hw - 1].im = 0.0;
            }
            let dst = &mut out[r * self.width..(r + 1) * self.width];
            self.row_inv
                .process(row, dst)
                .expect("row buffer sizes are fixed by the plan");
        }
        for v in &mut out {
            *v *= norm;
        }
        out
    }
}

/// Complex 2D FFT operating in place.
pub struct ComplexFft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    counter: TransformCounter,
}

impl ComplexFft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut cp = FftPlanner::<f64>::new();
        ComplexFft2 {
            height,
            width,
            row_fwd: cp.plan_fft_forward(width),
            row_inv: cp.plan_fft_inverse(width),
            col_fwd: cp.plan_fft_forward(height),
            col_inv: cp.plan_fft_inverse(height),
            counter: TransformCounter::default(),
        }
    }

    pub fn count(&self) -> usize {
        self.counter.get()
    }

    pub fn forward(&self, data: &mut Vec<Complex64>) {
        self.counter.bump();
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Normalized inverse.
    pub fn inverse(&self, data: &mut Vec<Complex64>) {
        self.counter.bump();
        self.run(data, &self.row_inv, &self.col_inv);
        let norm = 1.0 / (self.height * self.width) as f64;
        for v in data.iter_mut() {
            *v *= norm;
        }
    }

    fn run(&self, data: &mut Vec<Complex64>, row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.height * self.width);
        row.process(data);
        let mut t = transpose(data, self.height, self.width);
        col.process(&mut t);
        *data = transpose(&t, self.width, self.height);
    }
}

/// Basis along one axis for the half-sample cosine/sine transforms.
///
/// `Cos` coefficient `m` (0..n) multiplies `cos(πm(j+½)/n)`; `Sin`
/// coefficient `k` (0..n) multiplies `sin(π(k+1)(j+½)/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Cos,
    Sin,
}

struct AxisPlans {
    n: usize,
    plan: Arc<dyn TransformType2And3<f64>>,
    sine: Arc<dyn TransformType2And3<f64>>,
}

impl AxisPlans {
    fn new(planner: &mut DctPlanner<f64>, n: usize) -> Self {
        AxisPlans {
            n,
            plan: planner.plan_dct2(n),
            sine: planner.plan_dst2(n),
        }
    }

    fn analyze(&self, line: &mut [f64], basis: Basis) {
        let n = self.n as f64;
        match basis {
            Basis::Cos => {
                self.plan.process_dct2(line);
                line[0] /= n;
                for v in &mut line[1..] {
                    *v *= 2.0 / n;
                }
            }
            Basis::Sin => {
                self.sine.process_dst2(line);
                let last = line.len() - 1;
                for v in &mut line[..last] {
                    *v *= 2.0 / n;
                }
                line[last] /= n;
            }
        }
    }

    fn synthesize(&self, line: &mut [f64], basis: Basis) {
        match basis {
            Basis::Cos => {
                line[0] *= 2.0;
                self.plan.process_dct3(line);
            }
            Basis::Sin => {
                let last = line.len() - 1;
                line[last] *= 2.0;
                self.sine.process_dst3(line);
            }
        }
    }
}

/// Separable half-sample cosine/sine transforms (Neumann-boundary spectra).
pub struct CosineTransform2 {
    height: usize,
    width: usize,
    x: AxisPlans,
    y: AxisPlans,
    counter: TransformCounter,
}

impl CosineTransform2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = DctPlanner::new();
        CosineTransform2 {
            height,
            width,
            x: AxisPlans::new(&mut planner, width),
            y: AxisPlans::new(&mut planner, height),
            counter: TransformCounter::default(),
        }
    }

    pub fn count(&self) -> usize {
        self.counter.get()
    }

    /// Sample values to synthesis coefficients.
    pub fn forward(&self, data: &mut Vec<f64>, along_x: Basis, along_y: Basis) {
        self.counter.bump();
        self.apply(data, along_x, along_y, true);
    }

    /// Synthesis coefficients to sample values.
    pub fn inverse(&self, data: &mut Vec<f64>, along_x: Basis, along_y: Basis) {
        self.counter.bump();
        self.apply(data, along_x, along_y, false);
    }

    fn apply(&self, data: &mut Vec<f64>, bx: Basis, by: Basis, analyze: bool) {
        assert_eq!(data.len(), self.height * self.width);
        for row in data.chunks_exact_mut(self.width) {
            if analyze {
                self.x.analyze(row, bx);
            } else {
                self.x.synthesize(row, bx);
            }
        }
        let mut t = transpose(data, self.height, self.width);
        for col in t.chunks_exact_mut(self.height) {
            if analyze {
                self.y.analyze(col, by);
            } else {
                self.y.synthesize(col, by);
            }
        }
        *data = transpose(&t, self.width, self.height);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn fft_frequency_ordering() {
        let k = fft_frequencies(4, 1.0);
        let s = 2.0 * PI / 4.0;
        assert_eq!(k, vec![0.0, s, -2.0 * s, -s]);
        let kd = derivative_frequencies(4, 1.0);
        assert_eq!(kd, vec![0.0, s, 0.0, -s]);
        let k5 = fft_frequencies(5, 1.0);
        let s5 = 2.0 * PI / 5.0;
        assert_eq!(k5, vec![0.0, s5, 2.0 * s5, -2.0 * s5, -s5]);
    }

    #[test]
    fn real_fft_round_trip_and_count() {
        let (h, w) = (6, 10);
        let data: Vec<f64> = (0..h * w).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let fft = RealFft2::new(h, w);
        let spec = fft.forward(&data);
        // DC bin holds the plain sum.
        assert_abs_diff_eq!(spec[0].re, data.iter().sum::<f64>(), epsilon = 1e-10);
        let back = fft.inverse(spec);
        for (a, b) in data.iter().zip(&back) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_eq!(fft.count(), 2);
    }

    #[test]
    fn complex_fft_matches_direct_dft() {
        let (h, w) = (3, 4);
        let data: Vec<Complex64> = (0..h * w)
            .map(|i| Complex64::new(i as f64, (i * i % 5) as f64))
            .collect();
        let mut spec = data.clone();
        let fft = ComplexFft2::new(h, w);
        fft.forward(&mut spec);
        for ky in 0..h {
            for kx in 0..w {
                let mut acc = Complex64::default();
                for r in 0..h {
                    for c in 0..w {
                        let ang = -2.0 * PI * (ky * r) as f64 / h as f64
                            - 2.0 * PI * (kx * c) as f64 / w as f64;
                        acc += data[r * w + c] * Complex64::from_polar(1.0, ang);
                    }
                }
                let got = spec[ky * w + kx];
                assert_abs_diff_eq!(got.re, acc.re, epsilon = 1e-10);
                assert_abs_diff_eq!(got.im, acc.im, epsilon = 1e-10);
            }
        }
        fft.inverse(&mut spec);
        for (a, b) in data.iter().zip(&spec) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-12);
        }
    }

    fn basis_value(basis: Basis, idx: usize, j: usize, n: usize) -> f64 {
        let x = (j as f64 + 0.5) / n as f64;
        match basis {
            Basis::Cos => (PI * idx as f64 * x).cos(),
            Basis::Sin => (PI * (idx + 1) as f64 * x).sin(),
        }
    }

    #[test]
    fn cosine_sine_conventions_match_direct_sums() {
        let (h, w) = (5, 6);
        for (bx, by) in [
            (Basis::Cos, Basis::Cos),
            (Basis::Sin, Basis::Cos),
            (Basis::Cos, Basis::Sin),
            (Basis::Sin, Basis::Sin),
        ] {
            let coeffs: Vec<f64> = (0..h * w).map(|i| ((i * 31) % 11) as f64 - 5.0).collect();
            // Direct synthesis.
            let mut direct = vec![0.0; h * w];
            for r in 0..h {
                for c in 0..w {
                    let mut acc = 0.0;
                    for my in 0..h {
                        for mx in 0..w {
                            acc += coeffs[my * w + mx]
                                * basis_value(bx, mx, c, w)
                                * basis_value(by, my, r, h);
                        }
                    }
                    direct[r * w + c] = acc;
                }
            }
            let t = CosineTransform2::new(h, w);
            let mut synth = coeffs.clone();
            t.inverse(&mut synth, bx, by);
            for (a, b) in direct.iter().zip(&synth) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
            t.forward(&mut synth, bx, by);
            for (a, b) in coeffs.iter().zip(&synth) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
            assert_eq!(t.count(), 2);
        }
    }
}
