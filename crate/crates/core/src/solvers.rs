//! Phase solvers: FFT-TIE, DCT-TIE, iterative DCT and US-TIE.
//!
//! Every solver maps an axial derivative `∂I/∂z` and an in-focus intensity
//! to a phase map satisfying `−k ∂I/∂z = ∇·(I∇φ)`.
//!
//! Residual norms exclude the mean of the derivative mismatch. A constant
//! derivative offset is not in the range of `∇·(I∇·)` on a closed domain, so
//! no phase can remove it.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TieError};
use crate::grid::{rmse, ApertureMask, Grid2D, OpticalConfig, RealGrid};
use crate::operators::{compact_flux, Boundary, NeumannOps, PeriodicPoisson, Scheme};
use crate::transform::{derivative_frequencies, fft_frequencies, Basis, ComplexFft2, RealFft2};

/// Pixels within this distance of a zero-intensity pixel are excluded from
/// phase error metrics.
pub const DEFAULT_EXCLUSION_RADIUS: f64 = 3.0;

/// Iterative-DCT intensity floor as a fraction of the peak intensity.
pub const DEFAULT_FLOOR_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    FftTie,
    DctTie,
    IterDct,
    UsTie,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::FftTie,
        SolverKind::DctTie,
        SolverKind::IterDct,
        SolverKind::UsTie,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::FftTie => "fft-tie",
            SolverKind::DctTie => "dct-tie",
            SolverKind::IterDct => "iter-dct",
            SolverKind::UsTie => "us-tie",
        }
    }

    pub fn is_iterative(self) -> bool {
        matches!(self, SolverKind::IterDct | SolverKind::UsTie)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = TieError;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TieError::invalid(format!("unknown solver '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IMaxMode {
    #[default]
    GlobalMax,
    Manual(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsTieParams {
    pub max_iterations: usize,
    /// Relative residual threshold. Zero disables early stopping.
    pub tolerance: f64,
    pub i_max_mode: IMaxMode,
    /// Discretization of `∇·(I∇φ)` in the residual.
    pub scheme: Scheme,
}

impl Default for UsTieParams {
    fn default() -> Self {
        UsTieParams {
            max_iterations: 100,
            tolerance: 1e-4,
            i_max_mode: IMaxMode::GlobalMax,
            scheme: Scheme::Compact,
        }
    }
}

impl UsTieParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(TieError::invalid("max_iterations must be positive"));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(TieError::invalid("tolerance must be finite and non-negative"));
        }
        if let IMaxMode::Manual(v) = self.i_max_mode {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TieError::invalid("manual I_max must be positive"));
            }
        }
        Ok(())
    }

    fn i_max(&self, intensity: &RealGrid) -> Result<f64> {
        let peak = intensity.max();
        match self.i_max_mode {
            IMaxMode::GlobalMax => Ok(peak),
            IMaxMode::Manual(v) if v >= peak => Ok(v),
            IMaxMode::Manual(v) => Err(TieError::invalid(format!(
                "manual I_max {v} is below the intensity maximum {peak}"
            ))),
        }
    }
}

/// Reference phase for error traces.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub phase: RealGrid,
    pub region: ApertureMask,
}

impl GroundTruth {
    fn rmse(&self, phase: &RealGrid) -> Result<f64> {
        rmse(phase, &self.phase, &self.region)
    }
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub solver: SolverKind,
    pub phase: RealGrid,
    pub iterations_run: usize,
    /// `‖r‖/‖∂I/∂z‖` for the zero initial phase followed by one entry per
    /// iteration.
    pub residual_trace: Vec<f64>,
    /// Aligned with `residual_trace` when a ground truth was supplied.
    pub rmse_trace: Option<Vec<f64>>,
    pub converged: bool,
    pub per_iteration_seconds: Vec<f64>,
    /// Transform executions inside each iteration.
    pub transforms_per_iteration: Vec<usize>,
    /// All transform executions, including setup and finalization but
    /// excluding diagnostics.
    pub transforms_total: usize,
}

impl SolverReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_trace.last().unwrap_or(&f64::NAN)
    }

    pub fn final_rmse(&self) -> Option<f64> {
        self.rmse_trace.as_ref().and_then(|t| t.last().copied())
    }
}

/// Removes pixels within `radius` of a zero-intensity pixel of `region`
/// from `region`. Zeros outside the region (a hard aperture's dark
/// surround) are not singularities.
pub fn exclude_singularities(region: &ApertureMask, intensity: &RealGrid, radius: f64) -> Result<ApertureMask> {
    intensity.ensure_same_geometry(region.grid())?;
    let (h, w) = intensity.shape();
    let reach = radius.max(0.0).floor() as usize;
    let r2 = radius * radius;
    let mut mask = region.grid().clone();
    for r in 0..h {
        for c in 0..w {
            if !(region.contains(r, c) && intensity.get(r, c) <= 0.0) {
                continue;
            }
            for rr in r.saturating_sub(reach)..(r + reach + 1).min(h) {
                for cc in c.saturating_sub(reach)..(c + reach + 1).min(w) {
                    let (dr, dc) = (rr as f64 - r as f64, cc as f64 - c as f64);
                    if dr * dr + dc * dc <= r2 {
                        mask.set(rr, cc, false);
                    }
                }
            }
        }
    }
    Ok(ApertureMask::new(mask))
}

/// `floor_fraction × max(I)`, the conventional floor for `1/I`.
pub fn default_floor(intensity: &RealGrid) -> f64 {
    DEFAULT_FLOOR_FRACTION * intensity.max()
}

fn check_inputs(didz: &RealGrid, intensity: &RealGrid, config: &OpticalConfig) -> Result<()> {
    didz.ensure_same_geometry(intensity)?;
    didz.ensure_finite("axial derivative")?;
    intensity.ensure_finite("intensity")?;
    let (a, b) = (didz.pitch(), config.pitch());
    if (a - b).abs() > 1e-9 * a.max(b) {
        return Err(TieError::PitchMismatch(a, b));
    }
    let w = intensity.width();
    if let Some(i) = intensity.data().iter().position(|&v| v < 0.0) {
        return Err(TieError::NegativeIntensity {
            row: i / w,
            col: i % w,
            value: intensity.data()[i],
        });
    }
    Ok(())
}

fn check_floor(floor: f64) -> Result<()> {
    if floor > 0.0 && floor.is_finite() {
        Ok(())
    } else {
        Err(TieError::invalid("intensity floor must be positive"))
    }
}

fn centered_norm(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>().sqrt()
}

/// Stopping test. When the budget is exhausted a residual that ties the
/// tolerance to within rounding does not count as converged.
fn meets_tolerance(relative: f64, tol: f64, budget_exhausted: bool) -> bool {
    if budget_exhausted {
        relative < tol * (1.0 - 1e-12)
    } else {
        relative <= tol
    }
}

/// Mismatch of a single-pass phase against the measured derivative, for
/// reporting only.
fn diagnostic_residual(didz: &RealGrid, intensity: &RealGrid, phase: &RealGrid, k: f64, boundary: Boundary) -> f64 {
    let flux = compact_flux(intensity, phase, boundary);
    let r: Vec<f64> = didz.data().iter().zip(&flux).map(|(d, f)| d + f / k).collect();
    let base = centered_norm(didz.data());
    if base == 0.0 {
        0.0
    } else {
        centered_norm(&r) / base
    }
}

fn single_pass_report(
    solver: SolverKind,
    phase: RealGrid,
    residual: f64,
    seconds: f64,
    transforms: usize,
    truth: Option<&GroundTruth>,
) -> Result<SolverReport> {
    let rmse_trace = match truth {
        Some(t) => Some(vec![t.rmse(&RealGrid::zeros_like(&phase))?, t.rmse(&phase)?]),
        None => None,
    };
    Ok(SolverReport {
        solver,
        phase,
        iterations_run: 1,
        residual_trace: vec![1.0, residual],
        rmse_trace,
        converged: true,
        per_iteration_seconds: vec![seconds],
        transforms_per_iteration: vec![transforms],
        transforms_total: transforms,
    })
}

/// Teague's two-Poisson solution on a periodic grid.
///
/// Each axis runs its own chain `F⁻¹{(k_a/k²)·F{(1/I)·F⁻¹{(k_a/k²)·F{∂I/∂z}}}}`,
/// eight real-to-complex or complex-to-real transforms in total.
pub fn fft_tie_solve(
    didz: &RealGrid,
    intensity: &RealGrid,
    config: &OpticalConfig,
    intensity_floor: f64,
    truth: Option<&GroundTruth>,
) -> Result<SolverReport> {
    check_inputs(didz, intensity, config)?;
    check_floor(intensity_floor)?;
    let start = Instant::now();
    let (h, w) = didz.shape();
    let pitch = didz.pitch();
    let k = config.wave_number();
    let fft = RealFft2::new(h, w);
    let hw = fft.half_width();
    let kx = fft_frequencies(w, pitch);
    let ky = fft_frequencies(h, pitch);
    let kxd = derivative_frequencies(w, pitch);
    let kyd = derivative_frequencies(h, pitch);
    // i·k_a / (−|k|²) on the half spectrum, DC zeroed.
    let kernel = |along_x: bool| -> Vec<Complex64> {
        let mut out = Vec::with_capacity(h * hw);
        for r in 0..h {
            for c in 0..hw {
                let k2 = kx[c] * kx[c] + ky[r] * ky[r];
                let ka = if along_x { kxd[c] } else { kyd[r] };
                out.push(if k2 == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, -ka / k2)
                });
            }
        }
        out
    };
    let inv_i: Vec<f64> = intensity.data().iter().map(|&v| 1.0 / v.max(intensity_floor)).collect();
    let mut phase = vec![0.0; h * w];
    for along_x in [true, false] {
        let g = kernel(along_x);
        let mut spec = fft.forward(didz.data());
        spec.iter_mut().zip(&g).for_each(|(s, g)| *s *= g);
        let mut flux = fft.inverse(spec);
        flux.iter_mut().zip(&inv_i).for_each(|(f, i)| *f *= i);
        let mut spec = fft.forward(&flux);
        spec.iter_mut().zip(&g).for_each(|(s, g)| *s *= g);
        let part = fft.inverse(spec);
        phase.iter_mut().zip(&part).for_each(|(p, v)| *p -= k * v);
    }
    let seconds = start.elapsed().as_secs_f64();
    let phase = didz.with_data(phase);
    phase.ensure_finite("fft-tie phase")?;
    let residual = diagnostic_residual(didz, intensity, &phase, k, Boundary::Periodic);
    single_pass_report(SolverKind::FftTie, phase, residual, seconds, fft.count(), truth)
}

fn dct_tie_pass(ops: &NeumannOps, didz: &[f64], inv_i: &[f64], k: f64) -> Vec<f64> {
    let mut a = didz.to_vec();
    ops.transform.forward(&mut a, Basis::Cos, Basis::Cos);
    let n = a.len();
    ops.inverse_laplacian_coeffs(&mut a);
    let (mut gx, mut gy) = ops.gradient_from_coeffs(&a);
    for i in 0..n {
        gx[i] *= inv_i[i];
        gy[i] *= inv_i[i];
    }
    let div = ops.divergence_coeffs(gx, gy);
    let mut phase = ops.solve_coeffs(div);
    phase.iter_mut().for_each(|p| *p *= -k);
    phase
}

/// Teague's two-Poisson solution with homogeneous Neumann boundaries on the
/// full grid rectangle.
pub fn dct_tie_solve(
    didz: &RealGrid,
    intensity: &RealGrid,
    config: &OpticalConfig,
    intensity_floor: f64,
    truth: Option<&GroundTruth>,
) -> Result<SolverReport> {
    check_inputs(didz, intensity, config)?;
    check_floor(intensity_floor)?;
    let start = Instant::now();
    let (h, w) = didz.shape();
    let ops = NeumannOps::new(h, w, didz.pitch());
    let inv_i: Vec<f64> = intensity.data().iter().map(|&v| 1.0 / v.max(intensity_floor)).collect();
    let phase = didz.with_data(dct_tie_pass(&ops, didz.data(), &inv_i, config.wave_number()));
    let seconds = start.elapsed().as_secs_f64();
    phase.ensure_finite("dct-tie phase")?;
    let residual = diagnostic_residual(didz, intensity, &phase, config.wave_number(), Boundary::Replicate);
    single_pass_report(SolverKind::DctTie, phase, residual, seconds, ops.transforms(), truth)
}

/// Iterative DCT baseline on the aperture's bounding rectangle.
///
/// Each iteration solves DCT-TIE with the compensated derivative, computes
/// the derivative the estimate implies, and adds the in-aperture mismatch
/// back. `1/I` uses the floored intensity; the implied derivative uses the
/// raw intensity. Nothing limits divergence: the loop stops early only when
/// an iteration would produce non-finite values, and that iteration is not
/// counted.
pub fn iter_dct_solve(
    didz: &RealGrid,
    intensity: &RealGrid,
    aperture: &ApertureMask,
    config: &OpticalConfig,
    params: &UsTieParams,
    intensity_floor: f64,
    truth: Option<&GroundTruth>,
) -> Result<SolverReport> {
    check_inputs(didz, intensity, config)?;
    check_floor(intensity_floor)?;
    params.validate()?;
    didz.ensure_same_geometry(aperture.grid())?;
    aperture.require_nonempty("iter-dct aperture")?;
    let (rows, cols) = aperture
        .bounding_box()
        .ok_or(TieError::EmptyRegion("iter-dct aperture"))?;
    let (h, w) = didz.shape();
    let sub_d = didz.crop(rows.clone(), cols.clone())?;
    let sub_i = intensity.crop(rows.clone(), cols.clone())?;
    let sub_m: Vec<bool> = aperture.grid().crop(rows.clone(), cols.clone())?.into_data();
    let k = config.wave_number();
    let ops = NeumannOps::new(sub_d.height(), sub_d.width(), sub_d.pitch());
    let inv_i: Vec<f64> = sub_i.data().iter().map(|&v| 1.0 / v.max(intensity_floor)).collect();
    let target: Vec<f64> = sub_d
        .data()
        .iter()
        .zip(&sub_m)
        .map(|(&d, &m)| if m { d } else { 0.0 })
        .collect();
    let base = centered_norm(&target);

    let embed = |sub: &[f64]| -> RealGrid {
        let sw = cols.len();
        Grid2D::from_fn(h, w, didz.pitch(), |r, c| {
            if rows.contains(&r) && cols.contains(&c) {
                sub[(r - rows.start) * sw + (c - cols.start)]
            } else {
                0.0
            }
        })
        .expect("grid shape already validated")
    };

    let mut compensated = target.clone();
    let mut phase_sub = vec![0.0; target.len()];
    let mut residual_trace = vec![if base == 0.0 { 0.0 } else { 1.0 }];
    let mut rmse_trace = truth.map(|t| t.rmse(&RealGrid::zeros_like(didz))).transpose()?.map(|v| vec![v]);
    let mut seconds = Vec::new();
    let mut per_iter = Vec::new();
    let mut converged = base == 0.0;
    let mut iterations = 0;

    while !converged && iterations < params.max_iterations {
        let before = ops.transforms();
        let start = Instant::now();
        let candidate = dct_tie_pass(&ops, &compensated, &inv_i, k);
        let flux = ops.flux_divergence(sub_i.data(), &candidate);
        let mismatch: Vec<f64> = target
            .iter()
            .zip(&flux)
            .zip(&sub_m)
            .map(|((&d, &f), &m)| if m { d + f / k } else { 0.0 })
            .collect();
        if !candidate.iter().all(|v| v.is_finite()) || !mismatch.iter().all(|v| v.is_finite()) {
            break;
        }
        seconds.push(start.elapsed().as_secs_f64());
        per_iter.push(ops.transforms() - before);
        iterations += 1;
        compensated.iter_mut().zip(&mismatch).for_each(|(c, m)| *c += m);
        phase_sub = candidate;
        let rel = centered_norm(&mismatch) / base;
        residual_trace.push(rel);
        if let (Some(t), Some(gt)) = (rmse_trace.as_mut(), truth) {
            t.push(gt.rmse(&embed(&phase_sub))?);
        }
        converged = meets_tolerance(rel, params.tolerance, iterations == params.max_iterations);
    }

    Ok(SolverReport {
        solver: SolverKind::IterDct,
        phase: embed(&phase_sub),
        iterations_run: iterations,
        residual_trace,
        rmse_trace,
        converged,
        per_iteration_seconds: seconds,
        transforms_total: ops.transforms(),
        transforms_per_iteration: per_iter,
    })
}

/// Universal solver: replaces `I` by `I_max` in a Poisson step and feeds the
/// derivative mismatch back as a correction.
///
/// The Poisson step inverts the constant-intensity form of the chosen flux
/// scheme, so uniform intensity converges in one iteration. There is no
/// division by `I`; the phase at zero-intensity pixels is whatever the
/// iteration produces there and carries no physical meaning.
pub fn us_tie_solve(
    didz: &RealGrid,
    intensity: &RealGrid,
    config: &OpticalConfig,
    params: &UsTieParams,
    truth: Option<&GroundTruth>,
) -> Result<SolverReport> {
    check_inputs(didz, intensity, config)?;
    params.validate()?;
    if intensity.max() <= 0.0 {
        return Err(TieError::DegenerateImage("intensity is zero everywhere"));
    }
    let i_max = params.i_max(intensity)?;
    match params.scheme {
        Scheme::Spectral => us_tie_spectral(didz, intensity, config, params, i_max, truth),
        scheme => us_tie_real(didz, intensity, config, params, i_max, scheme, truth),
    }
}

struct Trace<'a> {
    residual: Vec<f64>,
    rmse: Option<Vec<f64>>,
    seconds: Vec<f64>,
    per_iter: Vec<usize>,
    truth: Option<&'a GroundTruth>,
}

impl<'a> Trace<'a> {
    fn new(zero_phase: &RealGrid, base: f64, truth: Option<&'a GroundTruth>) -> Result<Self> {
        Ok(Trace {
            residual: vec![if base == 0.0 { 0.0 } else { 1.0 }],
            rmse: truth.map(|t| t.rmse(zero_phase)).transpose()?.map(|v| vec![v]),
            seconds: Vec::new(),
            per_iter: Vec::new(),
            truth,
        })
    }

    fn record_rmse(&mut self, phase: impl FnOnce() -> RealGrid) -> Result<()> {
        if let (Some(t), Some(gt)) = (self.rmse.as_mut(), self.truth) {
            t.push(gt.rmse(&phase())?);
        }
        Ok(())
    }
}

fn us_tie_real(
    didz: &RealGrid,
    intensity: &RealGrid,
    config: &OpticalConfig,
    params: &UsTieParams,
    i_max: f64,
    scheme: Scheme,
    truth: Option<&GroundTruth>,
) -> Result<SolverReport> {
    let (h, w) = didz.shape();
    let k = config.wave_number();
    let poisson = PeriodicPoisson::for_scheme(h, w, didz.pitch(), scheme);
    let gain = -k / i_max;
    let d = didz.data();
    let base = centered_norm(d);
    let mut phase = RealGrid::zeros_like(didz);
    let mut residual = d.to_vec();
    let mut trace = Trace::new(&phase, base, truth)?;
    let mut converged = base == 0.0;
    let mut iterations = 0;

    while !converged && iterations < params.max_iterations {
        let before = poisson.transforms();
        let start = Instant::now();
        let correction = poisson.solve(&residual);
        phase
            .data_mut()
            .iter_mut()
            .zip(&correction)
            .for_each(|(p, c)| *p += gain * c);
        let flux = match scheme {
            Scheme::CentralDifference => {
                crate::operators::flux_divergence(intensity, &phase, Scheme::CentralDifference)?.into_data()
            }
            _ => compact_flux(intensity, &phase, Boundary::Periodic),
        };
        residual.iter_mut().zip(d).zip(&flux).for_each(|((r, &d), &f)| *r = d + f / k);
        trace.seconds.push(start.elapsed().as_secs_f64());
        trace.per_iter.push(poisson.transforms() - before);
        iterations += 1;
        let rel = centered_norm(&residual) / base;
        trace.residual.push(rel);
        trace.record_rmse(|| phase.clone())?;
        phase.ensure_finite("us-tie phase")?;
        converged = meets_tolerance(rel, params.tolerance, iterations == params.max_iterations);
    }

    Ok(SolverReport {
        solver: SolverKind::UsTie,
        phase,
        iterations_run: iterations,
        residual_trace: trace.residual,
        rmse_trace: trace.rmse,
        converged,
        per_iteration_seconds: trace.seconds,
        transforms_per_iteration: trace.per_iter,
        transforms_total: poisson.transforms(),
    })
}

/// Spectral-scheme US-TIE with the phase kept in Fourier space.
///
/// Both gradient components come out of one inverse complex FFT as
/// `gx + i·gy`; both flux components go back through one forward FFT and
/// are separated by Hermitian symmetry. Two transforms per iteration.
fn us_tie_spectral(
    didz: &RealGrid,
    intensity: &RealGrid,
    config: &OpticalConfig,
    params: &UsTieParams,
    i_max: f64,
    truth: Option<&GroundTruth>,
) -> Result<SolverReport> {
    let (h, w) = didz.shape();
    let n = h * w;
    let pitch = didz.pitch();
    let k = config.wave_number();
    let kx = derivative_frequencies(w, pitch);
    let ky = derivative_frequencies(h, pitch);
    let fft = ComplexFft2::new(h, w);
    let diagnostics = ComplexFft2::new(h, w);
    let gain = -k / i_max;
    let floor = 1e-12 / (pitch * pitch);
    let inv_sym: Vec<f64> = (0..n)
        .map(|i| {
            let s = kx[i % w].powi(2) + ky[i / w].powi(2);
            if s > floor {
                -1.0 / s
            } else {
                0.0
            }
        })
        .collect();
    let mirror = |i: usize| ((h - i / w) % h) * w + (w - i % w) % w;
    // Parseval: Σ|x|² = Σ|X|²/N; the DC bin carries the excluded mean.
    let spectral_norm = |s: &[Complex64]| (s.iter().skip(1).map(|v| v.norm_sqr()).sum::<f64>() / n as f64).sqrt();

    let mut d_hat: Vec<Complex64> = didz.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut d_hat);
    let base = spectral_norm(&d_hat);
    let mut p_hat = vec![Complex64::new(0.0, 0.0); n];
    let mut r_hat = d_hat.clone();
    let to_real = |p: &[Complex64]| -> RealGrid {
        let mut buf = p.to_vec();
        diagnostics.inverse(&mut buf);
        didz.with_data(buf.iter().map(|v| v.re).collect())
    };
    let mut trace = Trace::new(&RealGrid::zeros_like(didz), base, truth)?;
    let mut converged = base == 0.0;
    let mut iterations = 0;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];

    while !converged && iterations < params.max_iterations {
        let before = fft.count();
        let start = Instant::now();
        for i in 0..n {
            p_hat[i] += gain * inv_sym[i] * r_hat[i];
            let (a, b) = (kx[i % w], ky[i / w]);
            // i·kx·P + i·(i·ky·P)
            buf[i] = Complex64::new(-b, a) * p_hat[i];
        }
        fft.inverse(&mut buf);
        for (v, &i) in buf.iter_mut().zip(intensity.data()) {
            *v *= i;
        }
        fft.forward(&mut buf);
        for i in 0..n {
            let c = buf[i];
            let cm = buf[mirror(i)].conj();
            let fx = 0.5 * (c + cm);
            let fy = Complex64::new(0.0, -0.5) * (c - cm);
            let div = Complex64::new(0.0, kx[i % w]) * fx + Complex64::new(0.0, ky[i / w]) * fy;
            r_hat[i] = d_hat[i] + div / k;
        }
        trace.seconds.push(start.elapsed().as_secs_f64());
        trace.per_iter.push(fft.count() - before);
        iterations += 1;
        let rel = spectral_norm(&r_hat) / base;
        trace.residual.push(rel);
        trace.record_rmse(|| to_real(&p_hat))?;
        converged = meets_tolerance(rel, params.tolerance, iterations == params.max_iterations);
    }

    let mut out = p_hat;
    fft.inverse(&mut out);
    let phase = didz.with_data(out.iter().map(|v| v.re).collect());
    phase.ensure_finite("us-tie phase")?;
    Ok(SolverReport {
        solver: SolverKind::UsTie,
        phase,
        iterations_run: iterations,
        residual_trace: trace.residual,
        rmse_trace: trace.rmse,
        converged,
        per_iteration_seconds: trace.seconds,
        transforms_per_iteration: trace.per_iter,
        transforms_total: fft.count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{inverse_laplacian_dct, inverse_laplacian_fft};

    fn cfg(pitch: f64) -> OpticalConfig {
        OpticalConfig::new(550e-9, pitch, 1e-6).unwrap()
    }

    fn smooth(n: usize, pitch: f64) -> RealGrid {
        RealGrid::from_fn(n, n, pitch, |r, c| {
            let (x, y) = (c as f64 / n as f64, r as f64 / n as f64);
            (2.0 * std::f64::consts::PI * (x + 2.0 * y)).sin() + 0.5 * (2.0 * std::f64::consts::PI * 3.0 * x).cos()
        })
        .unwrap()
    }

    #[test]
    fn solver_names_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("teague".parse::<SolverKind>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(UsTieParams::default().validate().is_ok());
        let bad = UsTieParams {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let low = UsTieParams {
            i_max_mode: IMaxMode::Manual(0.5),
            ..Default::default()
        };
        let i = RealGrid::filled(4, 4, 1.0, 1.0).unwrap();
        assert!(low.i_max(&i).is_err());
    }

    #[test]
    fn tolerance_tie_at_budget_is_not_converged() {
        assert!(meets_tolerance(1e-4, 1e-4, false));
        assert!(!meets_tolerance(1e-4, 1e-4, true));
        assert!(meets_tolerance(0.5e-4, 1e-4, true));
    }

    #[test]
    fn uniform_intensity_reductions() {
        let pitch = 2.2e-6;
        let c = 0.8;
        let config = cfg(pitch);
        let k = config.wave_number();
        let d = smooth(32, pitch).scale(1e4);
        let i = RealGrid::filled(32, 32, pitch, c).unwrap();
        let expected_fft = inverse_laplacian_fft(&d).unwrap().scale(-k / c);
        let fft = fft_tie_solve(&d, &i, &config, 1e-3, None).unwrap();
        let scale = expected_fft.max_abs();
        assert!(fft.phase.max_abs_diff(&expected_fft).unwrap() / scale < 1e-10);
        assert_eq!(fft.transforms_total, 8);
        assert_eq!(fft.iterations_run, 1);

        let expected_dct = inverse_laplacian_dct(&d).unwrap().scale(-k / c);
        let dct = dct_tie_solve(&d, &i, &config, 1e-3, None).unwrap();
        assert!(dct.phase.max_abs_diff(&expected_dct).unwrap() / expected_dct.max_abs() < 1e-10);

        for scheme in [Scheme::Compact, Scheme::Spectral] {
            let params = UsTieParams {
                scheme,
                ..Default::default()
            };
            let us = us_tie_solve(&d, &i, &config, &params, None).unwrap();
            assert!(us.converged, "{scheme:?}");
            assert_eq!(us.iterations_run, 1, "{scheme:?}");
            assert_eq!(us.residual_trace.len(), 2);
            assert_eq!(us.transforms_per_iteration, vec![2], "{scheme:?}");
        }
    }

    #[test]
    fn zero_derivative_gives_zero_phase() {
        let pitch = 1e-6;
        let config = cfg(pitch);
        let d = RealGrid::zeros(8, 8, pitch).unwrap();
        let i = RealGrid::filled(8, 8, pitch, 1.0).unwrap();
        assert_eq!(dct_tie_solve(&d, &i, &config, 1e-3, None).unwrap().phase.max_abs(), 0.0);
        let us = us_tie_solve(&d, &i, &config, &UsTieParams::default(), None).unwrap();
        assert_eq!(us.phase.max_abs(), 0.0);
        assert!(us.converged);
        assert_eq!(us.iterations_run, 0);
    }

    #[test]
    fn us_tie_rejects_bad_intensity() {
        let pitch = 1e-6;
        let config = cfg(pitch);
        let d = RealGrid::zeros(8, 8, pitch).unwrap();
        let zero = RealGrid::zeros(8, 8, pitch).unwrap();
        assert!(matches!(
            us_tie_solve(&d, &zero, &config, &UsTieParams::default(), None),
            Err(TieError::DegenerateImage(_))
        ));
        let mut nan = RealGrid::filled(8, 8, pitch, 1.0).unwrap();
        nan.set(0, 0, f64::NAN);
        assert!(matches!(
            us_tie_solve(&d, &nan, &config, &UsTieParams::default(), None),
            Err(TieError::NonFinite(_))
        ));
    }

    #[test]
    fn single_pass_solvers_need_positive_floor() {
        let pitch = 1e-6;
        let config = cfg(pitch);
        let g = RealGrid::filled(8, 8, pitch, 1.0).unwrap();
        assert!(fft_tie_solve(&g, &g, &config, 0.0, None).is_err());
        assert!(dct_tie_solve(&g, &g, &config, -1.0, None).is_err());
    }

    #[test]
    fn iter_dct_uniform_full_aperture_matches_dct_tie() {
        let pitch = 2.2e-6;
        let config = cfg(pitch);
        let d = smooth(24, pitch).scale(1e4).demeaned();
        let i = RealGrid::filled(24, 24, pitch, 1.0).unwrap();
        let full = ApertureMask::full(24, 24, pitch).unwrap();
        let it = iter_dct_solve(&d, &i, &full, &config, &UsTieParams::default(), 1e-3, None).unwrap();
        let once = dct_tie_solve(&d, &i, &config, 1e-3, None).unwrap();
        assert!(it.converged);
        assert!(it.iterations_run <= 2);
        assert!(it.phase.max_abs_diff(&once.phase).unwrap() / once.phase.max_abs() < 1e-10);
    }

    #[test]
    fn singularity_exclusion() {
        let mut i = RealGrid::filled(11, 11, 1.0, 1.0).unwrap();
        i.set(5, 5, 0.0);
        let full = ApertureMask::full(11, 11, 1.0).unwrap();
        let kept = exclude_singularities(&full, &i, 3.0).unwrap();
        assert!(!kept.contains(5, 5));
        assert!(!kept.contains(5, 8));
        assert!(kept.contains(5, 9));
        assert_eq!(kept.area(), 121 - 29);
    }
}
