//! Sampled 2D fields, optical configuration, and aperture masks.
//!
//! Every field is stored row-major with `(row, col) = (y, x)` indexing and a
//! physical pixel pitch in meters. Phases are in radians.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TieError};

/// Uniformly sampled 2D field.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D<S> {
    height: usize,
    width: usize,
    pitch: f64,
    data: Vec<S>,
}

pub type RealGrid = Grid2D<f64>;

fn check_dims(height: usize, width: usize, pitch: f64) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(TieError::invalid(format!(
            "grid dimensions must be positive, got {height}x{width}"
        )));
    }
    if !(pitch.is_finite() && pitch > 0.0) {
        return Err(TieError::invalid(format!("pitch must be > 0, got {pitch}")));
    }
    Ok(())
}

impl<S: Copy> Grid2D<S> {
    pub fn new(height: usize, width: usize, pitch: f64, data: Vec<S>) -> Result<Self> {
        check_dims(height, width, pitch)?;
        if data.len() != height * width {
            return Err(TieError::invalid(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(Grid2D {
            height,
            width,
            pitch,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, pitch: f64, value: S) -> Result<Self> {
        check_dims(height, width, pitch)?;
        Ok(Grid2D {
            height,
            width,
            pitch,
            data: vec![value; height * width],
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        pitch: f64,
        mut f: impl FnMut(usize, usize) -> S,
    ) -> Result<Self> {
        check_dims(height, width, pitch)?;
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Ok(Grid2D {
            height,
            width,
            pitch,
            data,
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// `(height, width)`.
    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> S {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: S) {
        self.data[row * self.width + col] = value;
    }

    pub fn map<T: Copy>(&self, f: impl FnMut(S) -> T) -> Grid2D<T> {
        Grid2D {
            height: self.height,
            width: self.width,
            pitch: self.pitch,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Same data with a new backing vector of the same length.
    pub(crate) fn with_data<T: Copy>(&self, data: Vec<T>) -> Grid2D<T> {
        debug_assert_eq!(data.len(), self.data.len());
        Grid2D {
            height: self.height,
            width: self.width,
            pitch: self.pitch,
            data,
        }
    }

    /// Errors unless `other` has identical shape and pitch.
    pub fn ensure_same_geometry<T>(&self, other: &Grid2D<T>) -> Result<()> {
        if self.shape() != (other.height, other.width) {
            return Err(TieError::ShapeMismatch {
                expected: self.shape(),
                actual: (other.height, other.width),
            });
        }
        let tol = 1e-9 * self.pitch.abs().max(other.pitch.abs());
        if (self.pitch - other.pitch).abs() > tol {
            return Err(TieError::PitchMismatch(self.pitch, other.pitch));
        }
        Ok(())
    }

    pub fn zip_map<T: Copy, U: Copy>(
        &self,
        other: &Grid2D<T>,
        mut f: impl FnMut(S, T) -> U,
    ) -> Result<Grid2D<U>> {
        self.ensure_same_geometry(other)?;
        Ok(self.with_data(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// Copy of the rectangle `rows × cols` (half-open ranges).
    pub fn crop(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<Self> {
        if rows.end > self.height || cols.end > self.width || rows.is_empty() || cols.is_empty() {
            return Err(TieError::invalid(format!(
                "crop {rows:?}x{cols:?} outside {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for r in rows.clone() {
            data.extend_from_slice(&self.data[r * self.width + cols.start..r * self.width + cols.end]);
        }
        Ok(Grid2D {
            height: rows.len(),
            width: cols.len(),
            pitch: self.pitch,
            data,
        })
    }
}

impl Grid2D<f64> {
    pub fn zeros(height: usize, width: usize, pitch: f64) -> Result<Self> {
        Self::filled(height, width, pitch, 0.0)
    }

    pub fn zeros_like<T>(other: &Grid2D<T>) -> Self {
        Grid2D {
            height: other.height,
            width: other.width,
            pitch: other.pitch,
            data: vec![0.0; other.height * other.width],
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(TieError::NonFinite(what))
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Largest absolute pointwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.ensure_same_geometry(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Field minus its mean value.
    pub fn demeaned(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }
}

/// Physical scaling shared by propagation and solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OpticalConfigFields", into = "OpticalConfigFields")]
pub struct OpticalConfig {
    wavelength: f64,
    pitch: f64,
    defocus: f64,
    wave_number: f64,
}

impl OpticalConfig {
    pub fn new(wavelength: f64, pitch: f64, defocus: f64) -> Result<Self> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(TieError::invalid(format!(
                "wavelength must be > 0, got {wavelength}"
            )));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(TieError::invalid(format!("pitch must be > 0, got {pitch}")));
        }
        if !defocus.is_finite() || defocus == 0.0 {
            return Err(TieError::invalid(format!(
                "defocus must be finite and non-zero, got {defocus}"
            )));
        }
        Ok(OpticalConfig {
            wavelength,
            pitch,
            defocus,
            wave_number: 2.0 * PI / wavelength,
        })
    }

    /// 550 nm illumination, 2.2 µm pixels, 1 µm defocus.
    pub fn standard() -> Self {
        Self::new(550e-9, 2.2e-6, 1e-6).expect("valid constants")
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn defocus(&self) -> f64 {
        self.defocus
    }

    /// k = 2π / λ in rad/m.
    pub fn wave_number(&self) -> f64 {
        self.wave_number
    }

    pub fn with_defocus(&self, defocus: f64) -> Result<Self> {
        Self::new(self.wavelength, self.pitch, defocus)
    }
}

/// Serialized form of [`OpticalConfig`]; the wave number is derived.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpticalConfigFields {
    wavelength: f64,
    pitch: f64,
    defocus: f64,
}

impl TryFrom<OpticalConfigFields> for OpticalConfig {
    type Error = TieError;

    fn try_from(f: OpticalConfigFields) -> Result<Self> {
        OpticalConfig::new(f.wavelength, f.pitch, f.defocus)
    }
}

impl From<OpticalConfig> for OpticalConfigFields {
    fn from(c: OpticalConfig) -> Self {
        OpticalConfigFields {
            wavelength: c.wavelength,
            pitch: c.pitch,
            defocus: c.defocus,
        }
    }
}

/// Binary region of interest with its cached pixel count.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureMask {
    mask: Grid2D<bool>,
    area: usize,
}

impl ApertureMask {
    pub fn new(mask: Grid2D<bool>) -> Self {
        let area = mask.data().iter().filter(|&&b| b).count();
        ApertureMask { mask, area }
    }

    pub fn full(height: usize, width: usize, pitch: f64) -> Result<Self> {
        Ok(Self::new(Grid2D::filled(height, width, pitch, true)?))
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        pitch: f64,
        f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        Ok(Self::new(Grid2D::from_fn(height, width, pitch, f)?))
    }

    pub fn grid(&self) -> &Grid2D<bool> {
        &self.mask
    }

    pub fn area(&self) -> usize {
        self.area
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.mask.get(row, col)
    }

    pub fn require_nonempty(&self, what: &'static str) -> Result<()> {
        if self.area == 0 {
            Err(TieError::EmptyRegion(what))
        } else {
            Ok(())
        }
    }

    /// Half-open `(rows, cols)` ranges of the smallest rectangle holding every
    /// true pixel, or `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let (h, w) = self.shape();
        let (mut r0, mut r1, mut c0, mut c1) = (h, 0, w, 0);
        for r in 0..h {
            for c in 0..w {
                if self.contains(r, c) {
                    r0 = r0.min(r);
                    r1 = r1.max(r + 1);
                    c0 = c0.min(c);
                    c1 = c1.max(c + 1);
                }
            }
        }
        (self.area > 0).then_some((r0..r1, c0..c1))
    }

    /// Mask with every pixel within `radius` pixels of `(row, col)` removed.
    pub fn exclude_disc(&self, row: usize, col: usize, radius: f64) -> Self {
        let r2 = radius * radius;
        let mut grid = self.mask.clone();
        let (h, w) = self.shape();
        for r in 0..h {
            for c in 0..w {
                let dr = r as f64 - row as f64;
                let dc = c as f64 - col as f64;
                if dr * dr + dc * dc <= r2 {
                    grid.set(r, c, false);
                }
            }
        }
        Self::new(grid)
    }

    /// Mask as a 0/1 real field.
    pub fn to_real(&self) -> RealGrid {
        self.mask.map(|b| if b { 1.0 } else { 0.0 })
    }
}

/// Complex amplitude u = √I · exp(iφ).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    field: Grid2D<Complex64>,
}

impl ComplexField {
    pub fn from_grid(field: Grid2D<Complex64>) -> Self {
        ComplexField { field }
    }

    pub fn grid(&self) -> &Grid2D<Complex64> {
        &self.field
    }

    pub fn into_grid(self) -> Grid2D<Complex64> {
        self.field
    }

    pub fn intensity(&self) -> RealGrid {
        self.field.map(|u| u.norm_sqr())
    }

    /// arg(u), in (−π, π]. Meaningless where the amplitude vanishes.
    pub fn phase(&self) -> RealGrid {
        self.field.map(|u| u.arg())
    }
}

/// Builds the complex field √I·exp(iφ).
pub fn make_field(intensity: &RealGrid, phase: &RealGrid) -> Result<ComplexField> {
    intensity.ensure_same_geometry(phase)?;
    intensity.ensure_finite("intensity")?;
    phase.ensure_finite("phase")?;
    if let Some(idx) = intensity.data().iter().position(|&v| v < 0.0) {
        return Err(TieError::NegativeIntensity {
            row: idx / intensity.width(),
            col: idx % intensity.width(),
            value: intensity.data()[idx],
        });
    }
    let field = intensity.zip_map(phase, |i, p| Complex64::from_polar(i.sqrt(), p))?;
    Ok(ComplexField { field })
}

/// Root-mean-square difference over `region` after removing the mean offset
/// of `a − b` inside the region.
pub fn rmse(a: &RealGrid, b: &RealGrid, region: &ApertureMask) -> Result<f64> {
    a.ensure_same_geometry(b)?;
    if region.shape() != a.shape() {
        return Err(TieError::ShapeMismatch {
            expected: a.shape(),
            actual: region.shape(),
        });
    }
    region.require_nonempty("rmse region")?;
    let diffs = || {
        a.data()
            .iter()
            .zip(b.data())
            .zip(region.grid().data())
            .filter(|(_, &m)| m)
            .map(|((x, y), _)| x - y)
    };
    let n = region.area() as f64;
    let offset = diffs().sum::<f64>() / n;
    let sq = diffs().map(|d| (d - offset) * (d - offset)).sum::<f64>();
    Ok((sq / n).sqrt())
}
