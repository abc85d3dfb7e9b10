//! Aperture extraction and conditioning of measured intensities.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TieError};
use crate::grid::{ApertureMask, Grid2D, RealGrid};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMethod {
    Manual(f64),
    #[default]
    Otsu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub method: ThresholdMethod,
    /// Radius in pixels of the disc used for morphological closing.
    pub morphology_radius: usize,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        ThresholdParams {
            method: ThresholdMethod::Otsu,
            morphology_radius: 2,
        }
    }
}

const OTSU_BINS: usize = 256;

/// Otsu's threshold on a 256-bin histogram spanning `[min, max]`.
///
/// Returns the upper edge of the first bin maximizing the between-class
/// variance, so the result lies strictly inside `(min, max)`.
pub fn otsu_threshold(intensity: &RealGrid) -> Result<f64> {
    let (lo, hi) = (intensity.min(), intensity.max());
    if !(hi > lo) {
        return Err(TieError::DegenerateImage("constant image has no threshold"));
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut hist = [0usize; OTSU_BINS];
    for &v in intensity.data() {
        let b = (((v - lo) / width) as usize).min(OTSU_BINS - 1);
        hist[b] += 1;
    }
    let total = intensity.len() as f64;
    let centers: Vec<f64> = (0..OTSU_BINS).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let sum_all: f64 = hist.iter().zip(&centers).map(|(&n, &c)| n as f64 * c).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_var) = (0, -1.0);
    for b in 0..OTSU_BINS - 1 {
        w0 += hist[b] as f64;
        sum0 += hist[b] as f64 * centers[b];
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best = b;
        }
    }
    Ok(lo + (best + 1) as f64 * width)
}

/// `intensity > threshold`, closed with a disc and reduced to its largest
/// 8-connected component.
pub fn threshold_aperture(intensity: &RealGrid, params: &ThresholdParams) -> Result<ApertureMask> {
    intensity.ensure_finite("intensity")?;
    if intensity.data().iter().any(|&v| v < 0.0) {
        return Err(TieError::invalid("intensity must be non-negative"));
    }
    if !(intensity.max() > intensity.min()) {
        return Err(TieError::DegenerateImage("constant image has no threshold"));
    }
    let t = match params.method {
        ThresholdMethod::Otsu => otsu_threshold(intensity)?,
        ThresholdMethod::Manual(v) => {
            if !(0.0..=intensity.max()).contains(&v) {
                return Err(TieError::invalid(format!(
                    "manual threshold {v} outside [0, {}]",
                    intensity.max()
                )));
            }
            v
        }
    };
    let raw = intensity.map(|v| v > t);
    let closed = close(&raw, params.morphology_radius);
    let mask = ApertureMask::new(largest_component(&closed));
    mask.require_nonempty("thresholded aperture")?;
    Ok(mask)
}

fn disc_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r * r {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Pixels beyond the border count as `outside` for the purpose of the
/// structuring element.
fn morph(mask: &Grid2D<bool>, offsets: &[(isize, isize)], dilate: bool) -> Grid2D<bool> {
    let (h, w) = mask.shape();
    let mut out = mask.clone();
    for r in 0..h {
        for c in 0..w {
            let hit = |&(dr, dc): &(isize, isize)| {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                    !dilate
                } else {
                    mask.get(rr as usize, cc as usize)
                }
            };
            let v = if dilate {
                offsets.iter().any(hit)
            } else {
                offsets.iter().all(hit)
            };
            out.set(r, c, v);
        }
    }
    out
}

fn close(mask: &Grid2D<bool>, radius: usize) -> Grid2D<bool> {
    if radius == 0 {
        return mask.clone();
    }
    let offsets = disc_offsets(radius);
    morph(&morph(mask, &offsets, true), &offsets, false)
}

fn largest_component(mask: &Grid2D<bool>) -> Grid2D<bool> {
    let (h, w) = mask.shape();
    let mut label = vec![0u32; h * w];
    let mut sizes = vec![0usize];
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !mask.data()[start] || label[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0;
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    let j = rr as usize * w + cc as usize;
                    if mask.data()[j] && label[j] == 0 {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    // First component wins ties.
    let best = (1..sizes.len()).fold(0, |b, i| if sizes[i] > sizes[b] { i } else { b }) as u32;
    mask.with_data(label.iter().map(|&l| l != 0 && l == best).collect())
}

/// Sets every pixel outside `mask` to `fill`.
pub fn fill_dark_region(intensity: &RealGrid, mask: &ApertureMask, fill: f64) -> Result<RealGrid> {
    if !(fill > 0.0 && fill.is_finite()) {
        return Err(TieError::invalid("fill value must be positive"));
    }
    intensity.zip_map(mask.grid(), |v, inside| if inside { v } else { fill })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level(lo: f64, hi: f64) -> (RealGrid, Grid2D<bool>) {
        let fg = Grid2D::from_fn(20, 24, 1.0, |r, c| (4..15).contains(&r) && (6..20).contains(&c) && !(r == 8 && c == 10))
            .unwrap();
        // A pinhole that closing should fill.
        let img = fg.map(|b| if b { hi } else { lo });
        let mut expected = fg.clone();
        expected.set(8, 10, true);
        (img, expected)
    }

    #[test]
    fn otsu_lies_between_levels() {
        let (img, _) = two_level(0.01, 0.8);
        let t = otsu_threshold(&img).unwrap();
        assert!(t > 0.01 && t < 0.8);
    }

    #[test]
    fn otsu_recovers_foreground() {
        let (img, expected) = two_level(0.01, 0.8);
        let m = threshold_aperture(&img, &ThresholdParams::default()).unwrap();
        assert_eq!(m.grid().data(), expected.data());
    }

    #[test]
    fn manual_threshold() {
        let (img, expected) = two_level(0.2, 0.9);
        let p = ThresholdParams {
            method: ThresholdMethod::Manual(0.5),
            morphology_radius: 2,
        };
        let m = threshold_aperture(&img, &p).unwrap();
        assert_eq!(m.grid().data(), expected.data());
        let bad = ThresholdParams {
            method: ThresholdMethod::Manual(2.0),
            morphology_radius: 2,
        };
        assert!(threshold_aperture(&img, &bad).is_err());
    }

    #[test]
    fn constant_image_is_degenerate() {
        let img = RealGrid::filled(8, 8, 1.0, 0.3).unwrap();
        assert!(matches!(
            threshold_aperture(&img, &ThresholdParams::default()),
            Err(TieError::DegenerateImage(_))
        ));
    }

    #[test]
    fn dust_outside_is_dropped() {
        let (mut img, expected) = two_level(0.0, 1.0);
        img.set(18, 1, 1.0);
        let m = threshold_aperture(&img, &ThresholdParams::default()).unwrap();
        assert_eq!(m.grid().data(), expected.data());
    }

    #[test]
    fn fill_outside_mask() {
        let (img, _) = two_level(0.0, 1.0);
        let mask = ApertureMask::new(img.map(|v| v > 0.5));
        let out = fill_dark_region(&img, &mask, 0.01).unwrap();
        assert_eq!(out.min(), 0.01);
        let full = ApertureMask::full(20, 24, 1.0).unwrap();
        assert_eq!(fill_dark_region(&img, &full, 0.01).unwrap().data(), img.data());
        assert!(fill_dark_region(&img, &mask, 0.0).is_err());
    }
}
