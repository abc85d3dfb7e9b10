//! Deterministic test scenes.
//!
//! Normalized coordinates put the grid center at the origin:
//! `rx = (col − N/2) / (N/2)`, `ry = (row − N/2) / (N/2)`, so both run over
//! `[−1, 1)` and the center pixel sits exactly at zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TieError};
use crate::grid::{ApertureMask, RealGrid};
use crate::propagation::Padding;

/// Seed of the pseudo-random phase in [`inverse_gaussian_phantom`].
pub const INVERSE_GAUSSIAN_SEED: u64 = 7;

/// Width of the intensity dip in [`inverse_gaussian_phantom`], in
/// normalized coordinates.
pub const INVERSE_GAUSSIAN_SIGMA: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct Phantom {
    pub name: String,
    /// In-focus intensity, peak 1.
    pub intensity: RealGrid,
    /// Radians.
    pub phase: RealGrid,
    pub aperture: ApertureMask,
    /// Boundary treatment for synthesizing defocused planes. Full-field
    /// phantoms are built periodic and propagate without padding.
    pub padding: Padding,
}

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 5] = ["astigmatism", "gaussian-beam", "inverse-gaussian", "defocus", "modulated"];

/// Builds a phantom with its default parameters.
pub fn by_name(name: &str, size: usize, pitch: f64) -> Result<Phantom> {
    match name {
        "astigmatism" => astigmatism_phantom(size, pitch),
        "gaussian-beam" => gaussian_beam_phantom(size, pitch, 1.0 / 3.0),
        "inverse-gaussian" => inverse_gaussian_phantom(size, pitch, 1.0),
        "defocus" => defocus_phantom(size, pitch, 10.0),
        "modulated" => modulated_phantom(size, pitch),
        _ => Err(TieError::invalid(format!(
            "unknown phantom '{name}' (expected one of {})",
            NAMES.join(", ")
        ))),
    }
}

fn normalized(n: usize, i: usize) -> f64 {
    let half = (n / 2) as f64;
    (i as f64 - half) / half
}

fn require_size(size: usize, min: usize) -> Result<()> {
    if size < min {
        Err(TieError::invalid(format!("phantom size {size} is below the minimum {min}")))
    } else {
        Ok(())
    }
}

/// Vertices `(rx, ry)` of the irregular aperture, counter-clockwise.
const POLYGON: [(f64, f64); 10] = [
    (-0.75, -0.55),
    (-0.2, -0.8),
    (0.45, -0.7),
    (0.8, -0.15),
    (0.55, 0.2),
    (0.75, 0.7),
    (0.1, 0.8),
    (-0.05, 0.35),
    (-0.55, 0.65),
    (-0.85, 0.1),
];

fn in_polygon(x: f64, y: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn hard_aperture(size: usize, pitch: f64, inside: impl Fn(f64, f64) -> bool) -> Result<ApertureMask> {
    ApertureMask::from_fn(size, size, pitch, |r, c| inside(normalized(size, c), normalized(size, r)))
}

/// `φ = 10rx² − 10ry² − 0.7rx + 2ry + 0.82` under a uniform beam cut by a
/// non-convex polygon.
pub fn astigmatism_phantom(size: usize, pitch: f64) -> Result<Phantom> {
    require_size(size, 64)?;
    let aperture = hard_aperture(size, pitch, |x, y| in_polygon(x, y, &POLYGON))?;
    let intensity = aperture.to_real();
    let phase = RealGrid::from_fn(size, size, pitch, |r, c| {
        let (x, y) = (normalized(size, c), normalized(size, r));
        10.0 * x * x - 10.0 * y * y - 0.7 * x + 2.0 * y + 0.82
    })?;
    Ok(Phantom {
        name: "astigmatism".into(),
        intensity,
        phase,
        aperture,
        padding: Padding::Double,
    })
}

/// Gaussian beam cut by a circle of radius 0.9; `sigma` is relative to that
/// radius. The phase is two opposite-signed Gaussian bumps.
pub fn gaussian_beam_phantom(size: usize, pitch: f64, sigma: f64) -> Result<Phantom> {
    require_size(size, 16)?;
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(TieError::invalid("gaussian beam sigma must be in (0, 1]"));
    }
    const RADIUS: f64 = 0.9;
    let rho2 = |x: f64, y: f64| (x * x + y * y) / (RADIUS * RADIUS);
    let aperture = hard_aperture(size, pitch, |x, y| rho2(x, y) <= 1.0)?;
    let intensity = RealGrid::from_fn(size, size, pitch, |r, c| {
        if aperture.contains(r, c) {
            let p = rho2(normalized(size, c), normalized(size, r));
            (-p / (2.0 * sigma * sigma)).exp()
        } else {
            0.0
        }
    })?;
    let bump = |x: f64, y: f64, x0: f64, y0: f64, s: f64| {
        (-((x - x0).powi(2) + (y - y0).powi(2)) / (2.0 * s * s)).exp()
    };
    let phase = RealGrid::from_fn(size, size, pitch, |r, c| {
        let (x, y) = (normalized(size, c), normalized(size, r));
        2.0 * bump(x, y, 0.3, 0.2, 0.2) - 1.5 * bump(x, y, -0.3, -0.25, 0.25)
    })?;
    Ok(Phantom {
        name: "gaussian-beam".into(),
        intensity,
        phase,
        aperture,
        padding: Padding::Double,
    })
}

/// `I = 1 − depth·exp(−ρ²/2σ²)` over the whole periodic grid, with a
/// band-limited pseudo-random phase.
///
/// The phase sums `cos(2π(a·x + b·y) + θ)` over integer wavevectors with
/// `0 < a² + b² ≤ 25` (one of each ± pair), amplitude `g/√(1 + a² + b²)`
/// with `g` standard normal and `θ` uniform, drawn from ChaCha8 seeded with
/// [`INVERSE_GAUSSIAN_SEED`], then scaled to 3 rad peak-to-valley. With
/// `depth = 1` the center pixel is exactly zero.
pub fn inverse_gaussian_phantom(size: usize, pitch: f64, depth: f64) -> Result<Phantom> {
    require_size(size, 16)?;
    if !(0.0..=1.0).contains(&depth) {
        return Err(TieError::invalid("inverse gaussian depth must be in [0, 1]"));
    }
    let s2 = 2.0 * INVERSE_GAUSSIAN_SIGMA * INVERSE_GAUSSIAN_SIGMA;
    let intensity = RealGrid::from_fn(size, size, pitch, |r, c| {
        let (x, y) = (normalized(size, c), normalized(size, r));
        1.0 - depth * (-(x * x + y * y) / s2).exp()
    })?;
    let phase = periodic_random_phase(size, pitch, 5, 3.0, INVERSE_GAUSSIAN_SEED)?;
    Ok(Phantom {
        name: "inverse-gaussian".into(),
        intensity,
        phase,
        aperture: ApertureMask::full(size, size, pitch)?,
        padding: Padding::Periodic,
    })
}

fn periodic_random_phase(size: usize, pitch: f64, band: i32, peak_to_valley: f64, seed: u64) -> Result<RealGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::new();
    for a in -band..=band {
        for b in 0..=band {
            if (b == 0 && a <= 0) || a * a + b * b > band * band {
                continue;
            }
            let g: f64 = rng.sample(StandardNormal);
            let amp = g / (1.0 + (a * a + b * b) as f64).sqrt();
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            modes.push((a as f64, b as f64, amp, theta));
        }
    }
    let n = size as f64;
    let raw = RealGrid::from_fn(size, size, pitch, |r, c| {
        let (x, y) = (c as f64 / n, r as f64 / n);
        modes
            .iter()
            .map(|&(a, b, amp, th)| amp * (std::f64::consts::TAU * (a * x + b * y) + th).cos())
            .sum()
    })?;
    let span = raw.max() - raw.min();
    Ok(raw.scale(peak_to_valley / span))
}

/// `φ = coefficient·ρ²` under a uniform beam in a circle of radius 0.8,
/// with `ρ` measured in aperture radii.
pub fn defocus_phantom(size: usize, pitch: f64, coefficient: f64) -> Result<Phantom> {
    require_size(size, 64)?;
    if !coefficient.is_finite() {
        return Err(TieError::invalid("defocus coefficient must be finite"));
    }
    const RADIUS: f64 = 0.8;
    let rho2 = |x: f64, y: f64| (x * x + y * y) / (RADIUS * RADIUS);
    let aperture = hard_aperture(size, pitch, |x, y| rho2(x, y) <= 1.0)?;
    let phase = RealGrid::from_fn(size, size, pitch, |r, c| {
        coefficient * rho2(normalized(size, c), normalized(size, r))
    })?;
    Ok(Phantom {
        name: "defocus".into(),
        intensity: aperture.to_real(),
        phase,
        aperture,
        padding: Padding::Double,
    })
}

/// Full-field periodic scene with `I ∈ [0.5, 1]`:
/// `I = 0.75 + 0.25·cos(2πx)·cos(4πy)`,
/// `φ = 1.5·sin(2π(2x + y)) + cos(6πy)` with `x, y ∈ [0, 1)`.
pub fn modulated_phantom(size: usize, pitch: f64) -> Result<Phantom> {
    require_size(size, 8)?;
    let n = size as f64;
    let tau = std::f64::consts::TAU;
    let intensity = RealGrid::from_fn(size, size, pitch, |r, c| {
        let (x, y) = (c as f64 / n, r as f64 / n);
        0.75 + 0.25 * (tau * x).cos() * (2.0 * tau * y).cos()
    })?;
    let phase = RealGrid::from_fn(size, size, pitch, |r, c| {
        let (x, y) = (c as f64 / n, r as f64 / n);
        1.5 * (tau * (2.0 * x + y)).sin() + (3.0 * tau * y).cos()
    })?;
    Ok(Phantom {
        name: "modulated".into(),
        intensity,
        phase,
        aperture: ApertureMask::full(size, size, pitch)?,
        padding: Padding::Periodic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const PITCH: f64 = 2.2e-6;

    #[test]
    fn astigmatism_center_and_area() {
        let p = astigmatism_phantom(256, PITCH).unwrap();
        assert_abs_diff_eq!(p.phase.get(128, 128), 0.82, epsilon = 1e-15);
        let frac = p.aperture.area() as f64 / (256.0 * 256.0);
        assert!((0.3..=0.9).contains(&frac), "{frac}");
        assert!(astigmatism_phantom(32, PITCH).is_err());
    }

    #[test]
    fn polygon_is_non_convex() {
        assert!(in_polygon(0.0, 0.0, &POLYGON));
        // Notch between the two upper lobes.
        assert!(!in_polygon(-0.05, 0.6, &POLYGON));
        assert!(in_polygon(-0.5, 0.5, &POLYGON));
        assert!(in_polygon(0.5, 0.5, &POLYGON));
    }

    #[test]
    fn gaussian_beam_profile() {
        let p = gaussian_beam_phantom(256, PITCH, 1.0 / 3.0).unwrap();
        assert_eq!(p.intensity.get(128, 128), 1.0);
        assert_eq!(p.intensity.get(0, 0), 0.0);
        let q = gaussian_beam_phantom(160, PITCH, 1.0 / 3.0).unwrap();
        // rx = −0.9 at column 8.
        assert_abs_diff_eq!(q.intensity.get(80, 8), (-4.5f64).exp(), epsilon = 1e-12);
        assert_eq!(q.intensity.get(80, 7), 0.0);
        assert!(gaussian_beam_phantom(64, PITCH, 0.0).is_err());
        assert!(gaussian_beam_phantom(64, PITCH, 1.5).is_err());
    }

    #[test]
    fn inverse_gaussian_singularity() {
        let p = inverse_gaussian_phantom(128, PITCH, 1.0).unwrap();
        assert_eq!(p.intensity.get(64, 64), 0.0);
        assert_eq!(p.intensity.data().iter().filter(|&&v| v == 0.0).count(), 1);
        let span = p.phase.max() - p.phase.min();
        assert_abs_diff_eq!(span, 3.0, epsilon = 1e-12);
        let flat = inverse_gaussian_phantom(64, PITCH, 0.0).unwrap();
        assert!(flat.intensity.data().iter().all(|&v| v == 1.0));
        assert!(inverse_gaussian_phantom(64, PITCH, 1.5).is_err());
    }

    #[test]
    fn defocus_edge_value() {
        // 0.8 × 80 = 64: the edge falls exactly on a pixel.
        let p = defocus_phantom(160, PITCH, 10.0).unwrap();
        assert_abs_diff_eq!(p.phase.get(80, 16), 10.0, epsilon = 1e-12);
        assert!(p.aperture.contains(80, 16));
        assert!(!p.aperture.contains(80, 15));
        let flat = defocus_phantom(64, PITCH, 0.0).unwrap();
        assert_eq!(flat.phase.max_abs(), 0.0);
    }

    #[test]
    fn modulated_range() {
        let p = modulated_phantom(64, PITCH).unwrap();
        assert_abs_diff_eq!(p.intensity.max(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.intensity.min(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn unknown_name() {
        assert!(by_name("microlens", 64, PITCH).is_err());
        for n in NAMES {
            assert_eq!(by_name(n, 64, PITCH).unwrap().name, n);
        }
    }
}
