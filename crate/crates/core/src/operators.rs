//! Differential operators on [`RealGrid`]s.
//!
//! Spectral operators assume periodic boundaries and use the exact
//! `−(kx² + ky²)` Laplacian multiplier. First-derivative multipliers drop the
//! Nyquist bin of even-length axes so that real fields stay real; the
//! Laplacian keeps it. Cosine-transform operators assume homogeneous Neumann
//! boundaries on a half-sample grid. Every inverse Laplacian zeroes the
//! zero-frequency bin: solutions are defined up to an additive constant.

use num_complex::Complex64;

use crate::error::{Result, TieError};
use crate::grid::RealGrid;
use crate::transform::{
    cosine_frequencies, derivative_frequencies, fft_frequencies, Basis, CosineTransform2, RealFft2,
};

/// Discretization used for gradient, divergence, and flux operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Fourier multipliers `i·kx`, `i·ky` on a periodic grid.
    Spectral,
    /// Second-order central differences `(f[i+1] − f[i−1]) / 2h`, with the
    /// edge value replicated past the border.
    CentralDifference,
    /// Staggered two-point differences on a periodic grid: forward-difference
    /// gradient, backward-difference divergence, and face-averaged intensity
    /// in the flux. Its constant-coefficient form is the 5-point Laplacian.
    #[default]
    Compact,
}

impl Scheme {
    /// Eigenvalue of `−∇²` for this scheme's constant-coefficient flux
    /// operator at angular frequency `(kx, ky)`; `kx`, `ky` are the unaltered
    /// FFT frequencies.
    pub(crate) fn negative_laplacian_symbol(self, kx: f64, ky: f64, kx_d: f64, ky_d: f64, pitch: f64) -> f64 {
        match self {
            Scheme::Spectral => kx_d * kx_d + ky_d * ky_d,
            Scheme::Compact => {
                let sx = (0.5 * kx * pitch).sin();
                let sy = (0.5 * ky * pitch).sin();
                4.0 * (sx * sx + sy * sy) / (pitch * pitch)
            }
            Scheme::CentralDifference => {
                let sx = (kx * pitch).sin();
                let sy = (ky * pitch).sin();
                (sx * sx + sy * sy) / (pitch * pitch)
            }
        }
    }
}

/// Angular spatial frequencies matching a grid.
#[derive(Debug, Clone)]
pub struct FreqGrid {
    kx: RealGrid,
    ky: RealGrid,
    k_squared: RealGrid,
}

impl FreqGrid {
    /// Periodic (FFT) ordering.
    pub fn fft(height: usize, width: usize, pitch: f64) -> Result<Self> {
        Self::build(
            height,
            width,
            pitch,
            fft_frequencies(width, pitch),
            fft_frequencies(height, pitch),
        )
    }

    /// Half-sample cosine ordering, `πm / L` for `m = 0..n`.
    pub fn dct(height: usize, width: usize, pitch: f64) -> Result<Self> {
        Self::build(
            height,
            width,
            pitch,
            cosine_frequencies(width, pitch),
            cosine_frequencies(height, pitch),
        )
    }

    fn build(height: usize, width: usize, pitch: f64, fx: Vec<f64>, fy: Vec<f64>) -> Result<Self> {
        let kx = RealGrid::from_fn(height, width, pitch, |_, c| fx[c])?;
        let ky = RealGrid::from_fn(height, width, pitch, |r, _| fy[r])?;
        let k_squared = kx.zip_map(&ky, |a, b| a * a + b * b)?;
        Ok(FreqGrid { kx, ky, k_squared })
    }

    pub fn kx(&self) -> &RealGrid {
        &self.kx
    }

    pub fn ky(&self) -> &RealGrid {
        &self.ky
    }

    pub fn k_squared(&self) -> &RealGrid {
        &self.k_squared
    }
}

/// Periodic Poisson solver `∇⁻²` with a scheme-dependent Laplacian symbol.
///
/// One forward and one inverse FFT per solve. Bins where the symbol vanishes
/// are set to zero (pseudo-inverse).
pub(crate) struct PeriodicPoisson {
    fft: RealFft2,
    inv_symbol: Vec<f64>,
}

impl PeriodicPoisson {
    /// Inverse of the exact spectral Laplacian.
    pub(crate) fn exact(height: usize, width: usize, pitch: f64) -> Self {
        Self::with_symbol(height, width, pitch, |kx, ky, _, _| kx * kx + ky * ky)
    }

    /// Inverse of the constant-coefficient flux operator of `scheme`.
    pub(crate) fn for_scheme(height: usize, width: usize, pitch: f64, scheme: Scheme) -> Self {
        Self::with_symbol(height, width, pitch, |kx, ky, kxd, kyd| {
            scheme.negative_laplacian_symbol(kx, ky, kxd, kyd, pitch)
        })
    }

    fn with_symbol(
        height: usize,
        width: usize,
        pitch: f64,
        symbol: impl Fn(f64, f64, f64, f64) -> f64,
    ) -> Self {
        let fft = RealFft2::new(height, width);
        let hw = fft.half_width();
        let kx = fft_frequencies(width, pitch);
        let ky = fft_frequencies(height, pitch);
        let kxd = derivative_frequencies(width, pitch);
        let kyd = derivative_frequencies(height, pitch);
        // Zero-symbol bins are those annihilated exactly; compare against a
        // scale-aware threshold rather than 0.0 because sin(π) ≠ 0 in floats.
        let floor = 1e-12 / (pitch * pitch);
        let mut inv_symbol = Vec::with_capacity(height * hw);
        for r in 0..height {
            for c in 0..hw {
                let s = symbol(kx[c], ky[r], kxd[c], kyd[r]);
                inv_symbol.push(if s > floor { -1.0 / s } else { 0.0 });
            }
        }
        PeriodicPoisson { fft, inv_symbol }
    }

    pub(crate) fn solve(&self, f: &[f64]) -> Vec<f64> {
        let mut spec = self.fft.forward(f);
        for (v, &g) in spec.iter_mut().zip(&self.inv_symbol) {
            *v *= g;
        }
        self.fft.inverse(spec)
    }

    pub(crate) fn transforms(&self) -> usize {
        self.fft.count()
    }
}

/// Forward spectral Laplacian `−(kx² + ky²)·f̂`.
pub fn laplacian_spectral(f: &RealGrid) -> Result<RealGrid> {
    f.ensure_finite("laplacian input")?;
    let (h, w) = f.shape();
    let fft = RealFft2::new(h, w);
    let kx = fft_frequencies(w, f.pitch());
    let ky = fft_frequencies(h, f.pitch());
    let hw = fft.half_width();
    let mut spec = fft.forward(f.data());
    for r in 0..h {
        for c in 0..hw {
            spec[r * hw + c] *= -(kx[c] * kx[c] + ky[r] * ky[r]);
        }
    }
    Ok(f.with_data(fft.inverse(spec)))
}

/// Solves `∇²ψ = f` on a periodic grid; the mean of `ψ` is zero.
pub fn inverse_laplacian_fft(f: &RealGrid) -> Result<RealGrid> {
    f.ensure_finite("inverse laplacian input")?;
    let (h, w) = f.shape();
    let poisson = PeriodicPoisson::exact(h, w, f.pitch());
    Ok(f.with_data(poisson.solve(f.data())))
}

/// Solves `∇²ψ = f` with homogeneous Neumann boundaries via the cosine
/// transform; the mean of `ψ` is zero.
pub fn inverse_laplacian_dct(f: &RealGrid) -> Result<RealGrid> {
    f.ensure_finite("inverse laplacian input")?;
    let ops = NeumannOps::new(f.height(), f.width(), f.pitch());
    Ok(f.with_data(ops.inverse_laplacian(f.data())))
}

/// `(∂f/∂x, ∂f/∂y)` under `scheme`.
pub fn gradient(f: &RealGrid, scheme: Scheme) -> Result<(RealGrid, RealGrid)> {
    f.ensure_finite("gradient input")?;
    let (gx, gy) = match scheme {
        Scheme::Spectral => SpectralOps::new(f.height(), f.width(), f.pitch()).gradient(f.data()),
        Scheme::CentralDifference => central_gradient(f),
        Scheme::Compact => compact_gradient(f),
    };
    Ok((f.with_data(gx), f.with_data(gy)))
}

/// `∂fx/∂x + ∂fy/∂y` under `scheme`.
pub fn divergence(fx: &RealGrid, fy: &RealGrid, scheme: Scheme) -> Result<RealGrid> {
    fx.ensure_same_geometry(fy)?;
    fx.ensure_finite("divergence input")?;
    fy.ensure_finite("divergence input")?;
    let out = match scheme {
        Scheme::Spectral => {
            SpectralOps::new(fx.height(), fx.width(), fx.pitch()).divergence(fx.data(), fy.data())
        }
        Scheme::CentralDifference => {
            let (dx, _) = central_gradient(fx);
            let (_, dy) = central_gradient(fy);
            dx.iter().zip(&dy).map(|(a, b)| a + b).collect()
        }
        Scheme::Compact => compact_divergence(fx, fy),
    };
    Ok(fx.with_data(out))
}

/// `∇·(I∇φ)`.
pub fn flux_divergence(intensity: &RealGrid, phase: &RealGrid, scheme: Scheme) -> Result<RealGrid> {
    intensity.ensure_same_geometry(phase)?;
    intensity.ensure_finite("intensity")?;
    phase.ensure_finite("phase")?;
    if intensity.data().iter().any(|&v| v < 0.0) {
        return Err(TieError::invalid("flux divergence requires intensity >= 0"));
    }
    let out = match scheme {
        Scheme::Compact => compact_flux(intensity, phase, Boundary::Periodic),
        Scheme::Spectral | Scheme::CentralDifference => {
            let (gx, gy) = gradient(phase, scheme)?;
            let fx = gx.zip_map(intensity, |g, i| g * i)?;
            let fy = gy.zip_map(intensity, |g, i| g * i)?;
            return divergence(&fx, &fy, scheme);
        }
    };
    Ok(phase.with_data(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Boundary {
    Periodic,
    /// Zero flux through the grid border.
    Replicate,
}

/// Staggered flux divergence `Σ_nb ½(I_p + I_nb)(φ_nb − φ_p) / h²`.
pub(crate) fn compact_flux(intensity: &RealGrid, phase: &RealGrid, boundary: Boundary) -> Vec<f64> {
    let (h, w) = phase.shape();
    let i = intensity.data();
    let p = phase.data();
    let inv_h2 = 1.0 / (phase.pitch() * phase.pitch());
    let mut out = vec![0.0; h * w];
    let wrap = boundary == Boundary::Periodic;
    for r in 0..h {
        let up = if r > 0 { Some(r - 1) } else { wrap.then(|| h - 1) };
        let down = if r + 1 < h { Some(r + 1) } else { wrap.then_some(0) };
        for c in 0..w {
            let left = if c > 0 { Some(c - 1) } else { wrap.then(|| w - 1) };
            let right = if c + 1 < w { Some(c + 1) } else { wrap.then_some(0) };
            let idx = r * w + c;
            let (ic, pc) = (i[idx], p[idx]);
            let mut acc = 0.0;
            for nb in [
                up.map(|rr| rr * w + c),
                down.map(|rr| rr * w + c),
                left.map(|cc| r * w + cc),
                right.map(|cc| r * w + cc),
            ]
            .into_iter()
            .flatten()
            {
                acc += 0.5 * (ic + i[nb]) * (p[nb] - pc);
            }
            out[idx] = acc * inv_h2;
        }
    }
    out
}

fn central_gradient(f: &RealGrid) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = f.shape();
    let d = f.data();
    let s = 0.5 / f.pitch();
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for r in 0..h {
        let up = r.saturating_sub(1);
        let down = (r + 1).min(h - 1);
        for c in 0..w {
            let left = c.saturating_sub(1);
            let right = (c + 1).min(w - 1);
            gx[r * w + c] = (d[r * w + right] - d[r * w + left]) * s;
            gy[r * w + c] = (d[down * w + c] - d[up * w + c]) * s;
        }
    }
    (gx, gy)
}

fn compact_gradient(f: &RealGrid) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = f.shape();
    let d = f.data();
    let s = 1.0 / f.pitch();
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for r in 0..h {
        let down = (r + 1) % h;
        for c in 0..w {
            let right = (c + 1) % w;
            gx[r * w + c] = (d[r * w + right] - d[r * w + c]) * s;
            gy[r * w + c] = (d[down * w + c] - d[r * w + c]) * s;
        }
    }
    (gx, gy)
}

fn compact_divergence(fx: &RealGrid, fy: &RealGrid) -> Vec<f64> {
    let (h, w) = fx.shape();
    let (a, b) = (fx.data(), fy.data());
    let s = 1.0 / fx.pitch();
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        let up = (r + h - 1) % h;
        for c in 0..w {
            let left = (c + w - 1) % w;
            out[r * w + c] = (a[r * w + c] - a[r * w + left] + b[r * w + c] - b[up * w + c]) * s;
        }
    }
    out
}

/// Spectral first-derivative operators on a periodic grid.
pub(crate) struct SpectralOps {
    fft: RealFft2,
    height: usize,
    kx: Vec<f64>,
    ky: Vec<f64>,
}

impl SpectralOps {
    pub(crate) fn new(height: usize, width: usize, pitch: f64) -> Self {
        let fft = RealFft2::new(height, width);
        let hw = fft.half_width();
        let mut kx = derivative_frequencies(width, pitch);
        kx.truncate(hw);
        SpectralOps {
            fft,
            height,
            kx,
            ky: derivative_frequencies(height, pitch),
        }
    }

    /// Multiplies a half spectrum by `i·kx` (axis 0) or `i·ky` (axis 1).
    fn apply_derivative(&self, spec: &mut [Complex64], along_x: bool) {
        let hw = self.kx.len();
        for r in 0..self.height {
            for c in 0..hw {
                let k = if along_x { self.kx[c] } else { self.ky[r] };
                spec[r * hw + c] *= Complex64::new(0.0, k);
            }
        }
    }

    pub(crate) fn gradient(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let spec = self.fft.forward(f);
        let mut sx = spec.clone();
        let mut sy = spec;
        self.apply_derivative(&mut sx, true);
        self.apply_derivative(&mut sy, false);
        (self.fft.inverse(sx), self.fft.inverse(sy))
    }

    pub(crate) fn divergence(&self, fx: &[f64], fy: &[f64]) -> Vec<f64> {
        let mut sx = self.fft.forward(fx);
        let mut sy = self.fft.forward(fy);
        self.apply_derivative(&mut sx, true);
        self.apply_derivative(&mut sy, false);
        for (a, b) in sx.iter_mut().zip(&sy) {
            *a += b;
        }
        self.fft.inverse(sx)
    }
}

/// Neumann-boundary spectral operators on the half-sample cosine basis.
///
/// A field expanded in `cos(ωx)` has an x-derivative expanded in
/// `sin(ωx)`; these helpers move coefficient arrays between the two bases.
pub(crate) struct NeumannOps {
    pub(crate) transform: CosineTransform2,
    height: usize,
    width: usize,
    wx: Vec<f64>,
    wy: Vec<f64>,
}

impl NeumannOps {
    pub(crate) fn new(height: usize, width: usize, pitch: f64) -> Self {
        NeumannOps {
            transform: CosineTransform2::new(height, width),
            height,
            width,
            wx: cosine_frequencies(width, pitch),
            wy: cosine_frequencies(height, pitch),
        }
    }

    pub(crate) fn transforms(&self) -> usize {
        self.transform.count()
    }

    /// `∇⁻²` on cosine coefficients in place (zero-mean gauge).
    pub(crate) fn inverse_laplacian_coeffs(&self, coeffs: &mut [f64]) {
        for r in 0..self.height {
            for c in 0..self.width {
                let s = self.wx[c] * self.wx[c] + self.wy[r] * self.wy[r];
                let v = &mut coeffs[r * self.width + c];
                *v = if r == 0 && c == 0 { 0.0 } else { -*v / s };
            }
        }
    }

    pub(crate) fn inverse_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut a = f.to_vec();
        self.transform.forward(&mut a, Basis::Cos, Basis::Cos);
        self.inverse_laplacian_coeffs(&mut a);
        self.transform.inverse(&mut a, Basis::Cos, Basis::Cos);
        a
    }

    /// Cosine coefficients → coefficients of the derivative along one axis
    /// (sine basis on that axis).
    fn cos_to_sin_derivative(&self, coeffs: &[f64], along_x: bool) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let mut out = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                let (src_r, src_c, omega) = if along_x {
                    (r, c + 1, self.wx.get(c + 1))
                } else {
                    (r + 1, c, self.wy.get(r + 1))
                };
                if let Some(&om) = omega {
                    out[r * w + c] = -om * coeffs[src_r * w + src_c];
                }
            }
        }
        out
    }

    /// Sine-basis coefficients along one axis → cosine coefficients of the
    /// derivative along that axis.
    fn sin_to_cos_derivative(&self, coeffs: &[f64], along_x: bool, out: &mut [f64]) {
        let (h, w) = (self.height, self.width);
        for r in 0..h {
            for c in 0..w {
                let (dst_r, dst_c, omega) = if along_x {
                    (r, c + 1, self.wx.get(c + 1))
                } else {
                    (r + 1, c, self.wy.get(r + 1))
                };
                if let Some(&om) = omega {
                    out[dst_r * w + dst_c] += om * coeffs[r * w + c];
                }
            }
        }
    }

    /// Given cosine coefficients of a potential, returns the x- and
    /// y-derivative sample fields. Two transforms.
    pub(crate) fn gradient_from_coeffs(&self, coeffs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut gx = self.cos_to_sin_derivative(coeffs, true);
        let mut gy = self.cos_to_sin_derivative(coeffs, false);
        self.transform.inverse(&mut gx, Basis::Sin, Basis::Cos);
        self.transform.inverse(&mut gy, Basis::Cos, Basis::Sin);
        (gx, gy)
    }

    /// Cosine coefficients of `∂fx/∂x + ∂fy/∂y` for sample fields whose
    /// normal components vanish at the border. Two transforms.
    pub(crate) fn divergence_coeffs(&self, mut fx: Vec<f64>, mut fy: Vec<f64>) -> Vec<f64> {
        self.transform.forward(&mut fx, Basis::Sin, Basis::Cos);
        self.transform.forward(&mut fy, Basis::Cos, Basis::Sin);
        let mut out = vec![0.0; self.height * self.width];
        self.sin_to_cos_derivative(&fx, true, &mut out);
        self.sin_to_cos_derivative(&fy, false, &mut out);
        out
    }

    /// `∇⁻²` applied to cosine coefficients, then synthesized. One transform.
    pub(crate) fn solve_coeffs(&self, mut coeffs: Vec<f64>) -> Vec<f64> {
        self.inverse_laplacian_coeffs(&mut coeffs);
        self.transform.inverse(&mut coeffs, Basis::Cos, Basis::Cos);
        coeffs
    }

    /// Neumann-spectral `∇·(I∇φ)`. Six transforms.
    pub(crate) fn flux_divergence(&self, intensity: &[f64], phase: &[f64]) -> Vec<f64> {
        let mut a = phase.to_vec();
        self.transform.forward(&mut a, Basis::Cos, Basis::Cos);
        let (mut gx, mut gy) = self.gradient_from_coeffs(&a);
        for ((x, y), &i) in gx.iter_mut().zip(gy.iter_mut()).zip(intensity) {
            *x *= i;
            *y *= i;
        }
        let mut d = self.divergence_coeffs(gx, gy);
        self.transform.inverse(&mut d, Basis::Cos, Basis::Cos);
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn freq_grid_invariants() {
        let g = FreqGrid::fft(6, 8, 0.5).unwrap();
        for r in 0..6 {
            assert_eq!(g.kx().get(r, 0), 0.0);
        }
        let zeros = g.k_squared().data().iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 1);
        assert_eq!(g.k_squared().get(0, 0), 0.0);
        assert!(g.k_squared().data().iter().all(|&v| v >= 0.0));
        let d = FreqGrid::dct(5, 7, 1.0).unwrap();
        assert_abs_diff_eq!(d.kx().get(0, 1), PI / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_input_gives_zero() {
        let z = RealGrid::zeros(8, 8, 1e-6).unwrap();
        assert_eq!(inverse_laplacian_fft(&z).unwrap().max_abs(), 0.0);
        assert_eq!(inverse_laplacian_dct(&z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn constant_field_has_no_gradient() {
        let f = RealGrid::filled(9, 10, 1e-6, 3.5).unwrap();
        for scheme in [Scheme::Spectral, Scheme::CentralDifference, Scheme::Compact] {
            let (gx, gy) = gradient(&f, scheme).unwrap();
            assert!(gx.max_abs() < 1e-6, "{scheme:?}");
            assert!(gy.max_abs() < 1e-6, "{scheme:?}");
            let d = divergence(&f, &f, scheme).unwrap();
            assert!(d.max_abs() < 1e-6, "{scheme:?}");
        }
    }

    #[test]
    fn central_difference_is_exact_on_ramps() {
        let pitch = 0.25;
        let ramp_x = RealGrid::from_fn(7, 9, pitch, |_, c| c as f64 * pitch).unwrap();
        let ramp_y = RealGrid::from_fn(7, 9, pitch, |r, _| r as f64 * pitch).unwrap();
        let (gx, gy) = gradient(&ramp_x, Scheme::CentralDifference).unwrap();
        let d = divergence(&ramp_x, &ramp_y, Scheme::CentralDifference).unwrap();
        for r in 1..6 {
            for c in 1..8 {
                assert_abs_diff_eq!(gx.get(r, c), 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(gy.get(r, c), 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(d.get(r, c), 2.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn spectral_gradient_of_sine() {
        let (n, pitch) = (32, 1e-6);
        let l = n as f64 * pitch;
        let f = RealGrid::from_fn(n, n, pitch, |_, c| (2.0 * PI * c as f64 * pitch / l).sin()).unwrap();
        let (gx, gy) = gradient(&f, Scheme::Spectral).unwrap();
        let expected = RealGrid::from_fn(n, n, pitch, |_, c| {
            2.0 * PI / l * (2.0 * PI * c as f64 * pitch / l).cos()
        })
        .unwrap();
        let scale = 2.0 * PI / l;
        assert!(gx.max_abs_diff(&expected).unwrap() / scale < 1e-10);
        assert!(gy.max_abs() / scale < 1e-10);
    }

    #[test]
    fn uniform_intensity_pulls_out_of_flux() {
        let (n, pitch) = (16, 1e-6);
        let phase = RealGrid::from_fn(n, n, pitch, |r, c| {
            (2.0 * PI * c as f64 / n as f64).sin() + 0.3 * (4.0 * PI * r as f64 / n as f64).cos()
        })
        .unwrap();
        let c = 0.7;
        let i = RealGrid::filled(n, n, pitch, c).unwrap();
        let flux = flux_divergence(&i, &phase, Scheme::Spectral).unwrap();
        let lap = laplacian_spectral(&phase).unwrap().scale(c);
        let scale = lap.max_abs();
        assert!(flux.max_abs_diff(&lap).unwrap() / scale < 1e-10);
        let flat = RealGrid::filled(n, n, pitch, 2.0).unwrap();
        for s in [Scheme::Spectral, Scheme::CentralDifference, Scheme::Compact] {
            assert!(flux_divergence(&i, &flat, s).unwrap().max_abs() < 1e-3);
        }
    }

    #[test]
    fn compact_flux_is_backward_div_of_forward_grad_for_uniform_intensity() {
        let pitch = 0.5;
        let phase = RealGrid::from_fn(6, 7, pitch, |r, c| ((r * 5 + c * 3) % 7) as f64).unwrap();
        let ones = RealGrid::filled(6, 7, pitch, 1.0).unwrap();
        let (gx, gy) = gradient(&phase, Scheme::Compact).unwrap();
        let composed = divergence(&gx, &gy, Scheme::Compact).unwrap();
        let flux = flux_divergence(&ones, &phase, Scheme::Compact).unwrap();
        assert!(composed.max_abs_diff(&flux).unwrap() < 1e-12);
    }

    #[test]
    fn divergence_rejects_mismatched_shapes() {
        let a = RealGrid::zeros(4, 4, 1.0).unwrap();
        let b = RealGrid::zeros(4, 5, 1.0).unwrap();
        assert!(matches!(
            divergence(&a, &b, Scheme::Compact),
            Err(TieError::ShapeMismatch { .. })
        ));
        assert!(flux_divergence(&a, &b, Scheme::Compact).is_err());
    }

    #[test]
    fn scheme_symbols_vanish_only_where_expected() {
        let pitch = 1.0;
        let n = 8;
        let k = fft_frequencies(n, pitch);
        let kd = derivative_frequencies(n, pitch);
        // Compact: zero only at DC.
        for (i, &kx) in k.iter().enumerate() {
            for (j, &ky) in k.iter().enumerate() {
                let s = Scheme::Compact.negative_laplacian_symbol(kx, ky, kd[i], kd[j], pitch);
                assert_eq!(s < 1e-12, i == 0 && j == 0);
            }
        }
    }
}
