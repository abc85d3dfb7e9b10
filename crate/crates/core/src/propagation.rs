//! Angular-spectrum forward model and axial-derivative estimation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TieError};
use crate::grid::{make_field, ComplexField, Grid2D, OpticalConfig, RealGrid};
use crate::transform::{fft_frequencies, ComplexFft2};

/// Boundary treatment used while propagating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    /// Propagate on the grid itself; the field wraps around.
    Periodic,
    /// Embed in a zero field of twice the size, propagate, crop the center.
    #[default]
    Double,
}

/// Intensities at `−Δz`, `0` and `+Δz`.
#[derive(Debug, Clone)]
pub struct FocalStack {
    pub under: RealGrid,
    pub focus: RealGrid,
    pub over: RealGrid,
    pub config: OpticalConfig,
}

impl FocalStack {
    pub fn new(under: RealGrid, focus: RealGrid, over: RealGrid, config: OpticalConfig) -> Result<Self> {
        focus.ensure_same_geometry(&under)?;
        focus.ensure_same_geometry(&over)?;
        for (plane, name) in [(&under, "under-focus plane"), (&focus, "in-focus plane"), (&over, "over-focus plane")] {
            plane.ensure_finite(name)?;
            if let Some(i) = plane.data().iter().position(|&v| v < 0.0) {
                return Err(TieError::NegativeIntensity {
                    row: i / plane.width(),
                    col: i % plane.width(),
                    value: plane.data()[i],
                });
            }
        }
        Ok(FocalStack {
            under,
            focus,
            over,
            config,
        })
    }
}

/// Free-space propagation by `distance` meters on a periodic grid.
///
/// Evanescent components are removed.
pub fn angular_spectrum_propagate(
    field: &ComplexField,
    distance: f64,
    config: &OpticalConfig,
) -> Result<ComplexField> {
    if !distance.is_finite() {
        return Err(TieError::invalid("propagation distance must be finite"));
    }
    let grid = field.grid();
    let (h, w) = grid.shape();
    let k = config.wave_number();
    let kx = fft_frequencies(w, grid.pitch());
    let ky = fft_frequencies(h, grid.pitch());
    let fft = ComplexFft2::new(h, w);
    let mut data = grid.data().to_vec();
    fft.forward(&mut data);
    for r in 0..h {
        for c in 0..w {
            let kz2 = k * k - kx[c] * kx[c] - ky[r] * ky[r];
            let v = &mut data[r * w + c];
            if kz2 >= 0.0 {
                *v *= Complex64::from_polar(1.0, distance * kz2.sqrt());
            } else {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }
    fft.inverse(&mut data);
    Ok(ComplexField::from_grid(Grid2D::new(h, w, grid.pitch(), data)?))
}

fn propagate_padded(field: &ComplexField, distance: f64, config: &OpticalConfig) -> Result<ComplexField> {
    let grid = field.grid();
    let (h, w) = grid.shape();
    let (r0, c0) = (h / 2, w / 2);
    let padded = Grid2D::from_fn(2 * h, 2 * w, grid.pitch(), |r, c| {
        if (r0..r0 + h).contains(&r) && (c0..c0 + w).contains(&c) {
            grid.get(r - r0, c - c0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })?;
    let out = angular_spectrum_propagate(&ComplexField::from_grid(padded), distance, config)?;
    Ok(ComplexField::from_grid(out.grid().crop(r0..r0 + h, c0..c0 + w)?))
}

/// Builds `√I·exp(iφ)` and propagates it to `±Δz`.
pub fn synthesize_stack(
    intensity: &RealGrid,
    phase: &RealGrid,
    config: &OpticalConfig,
    padding: Padding,
) -> Result<FocalStack> {
    check_pitch(intensity, config)?;
    let field = make_field(intensity, phase)?;
    let dz = config.defocus();
    let prop = |d: f64| match padding {
        Padding::Periodic => angular_spectrum_propagate(&field, d, config),
        Padding::Double => propagate_padded(&field, d, config),
    };
    let under = prop(-dz)?.intensity();
    let over = prop(dz)?.intensity();
    FocalStack::new(under, intensity.clone(), over, *config)
}

fn check_pitch(grid: &RealGrid, config: &OpticalConfig) -> Result<()> {
    let (a, b) = (grid.pitch(), config.pitch());
    if (a - b).abs() > 1e-9 * a.max(b) {
        return Err(TieError::PitchMismatch(a, b));
    }
    Ok(())
}

/// `(over − under) / 2Δz`.
pub fn axial_derivative(stack: &FocalStack) -> Result<RealGrid> {
    let two_dz = 2.0 * stack.config.defocus();
    stack.over.zip_map(&stack.under, |o, u| (o - u) / two_dz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn plane_wave_picks_up_global_phase() {
        let cfg = OpticalConfig::standard();
        let ones = RealGrid::filled(8, 8, cfg.pitch(), 1.0).unwrap();
        let zeros = RealGrid::zeros(8, 8, cfg.pitch()).unwrap();
        let field = make_field(&ones, &zeros).unwrap();
        let d = 3.3e-6;
        let out = angular_spectrum_propagate(&field, d, &cfg).unwrap();
        let expected = Complex64::from_polar(1.0, cfg.wave_number() * d);
        for v in out.grid().data() {
            assert!((v - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn flat_phase_uniform_intensity_has_no_contrast() {
        let cfg = OpticalConfig::standard();
        let ones = RealGrid::filled(16, 16, cfg.pitch(), 0.5).unwrap();
        let zeros = RealGrid::zeros(16, 16, cfg.pitch()).unwrap();
        let stack = synthesize_stack(&ones, &zeros, &cfg, Padding::Periodic).unwrap();
        assert!(stack.under.max_abs_diff(&stack.focus).unwrap() < 1e-12);
        assert!(stack.over.max_abs_diff(&stack.focus).unwrap() < 1e-12);
        assert!(axial_derivative(&stack).unwrap().max_abs() < 1e-3);
    }

    #[test]
    fn axial_derivative_is_algebraic() {
        let cfg = OpticalConfig::standard();
        let focus = RealGrid::from_fn(4, 5, cfg.pitch(), |r, c| 1.0 + (r + c) as f64).unwrap();
        let eps = 0.01;
        let stack = FocalStack::new(focus.scale(1.0 - eps), focus.clone(), focus.scale(1.0 + eps), cfg).unwrap();
        let d = axial_derivative(&stack).unwrap();
        for (a, f) in d.data().iter().zip(focus.data()) {
            assert_relative_eq!(*a, f * eps / cfg.defocus(), max_relative = 1e-12);
        }
        let same = FocalStack::new(focus.clone(), focus.clone(), focus.clone(), cfg).unwrap();
        assert_eq!(axial_derivative(&same).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn stack_rejects_negative_planes() {
        let cfg = OpticalConfig::standard();
        let ok = RealGrid::filled(3, 3, cfg.pitch(), 1.0).unwrap();
        let mut bad = ok.clone();
        bad.set(1, 2, -0.5);
        assert!(matches!(
            FocalStack::new(bad, ok.clone(), ok, cfg),
            Err(TieError::NegativeIntensity { row: 1, col: 2, .. })
        ));
    }

    #[test]
    fn pitch_must_match_config() {
        let cfg = OpticalConfig::standard();
        let g = RealGrid::filled(4, 4, 1e-6, 1.0).unwrap();
        assert!(matches!(
            synthesize_stack(&g, &g, &cfg, Padding::Periodic),
            Err(TieError::PitchMismatch(..))
        ));
    }
}
