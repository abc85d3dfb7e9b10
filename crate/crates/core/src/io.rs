//! File formats.
//!
//! Field files are a 22-byte header followed by a row-major little-endian
//! payload:
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 5    | ASCII `TIEF1`                             |
//! | 5      | 4    | height, `u32` LE                          |
//! | 9      | 4    | width, `u32` LE                           |
//! | 13     | 8    | pitch in meters, `f64` LE                 |
//! | 21     | 1    | dtype tag: 0 = `f32`, 1 = `f64`, 2 = mask `u8` |
//!
//! With numpy: `np.fromfile(p, dtype="<f8", offset=22).reshape(h, w)`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TieError};
use crate::grid::{ApertureMask, Grid2D, OpticalConfig, RealGrid};
use crate::operators::Scheme;
use crate::solvers::{IMaxMode, SolverKind, SolverReport, UsTieParams};

pub const MAGIC: &[u8; 5] = b"TIEF1";
pub const HEADER_LEN: usize = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    MaskU8,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
            Dtype::MaskU8 => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            2 => Some(Dtype::MaskU8),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::MaskU8 => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
            Dtype::MaskU8 => "mask-u8",
        }
    }
}

fn header(height: usize, width: usize, pitch: f64, dtype: Dtype) -> Result<Vec<u8>> {
    let h = u32::try_from(height).map_err(|_| TieError::invalid("height exceeds u32"))?;
    let w = u32::try_from(width).map_err(|_| TieError::invalid("width exceeds u32"))?;
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&pitch.to_le_bytes());
    out.push(dtype.tag());
    Ok(out)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| TieError::io(path, e))
}

/// Writes a real grid with the given sample type. `F32` rounds each sample.
pub fn write_field_as(path: impl AsRef<Path>, grid: &RealGrid, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = header(grid.height(), grid.width(), grid.pitch(), dtype)?;
    bytes.reserve(grid.len() * dtype.size());
    match dtype {
        Dtype::F64 => grid.data().iter().for_each(|v| bytes.extend_from_slice(&v.to_le_bytes())),
        Dtype::F32 => grid
            .data()
            .iter()
            .for_each(|&v| bytes.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::MaskU8 => {
            return Err(TieError::invalid("real fields cannot be written as masks"));
        }
    }
    write_bytes(path, &bytes)
}

/// Writes a real grid as `f64`; reading it back is bit-exact.
pub fn write_field(path: impl AsRef<Path>, grid: &RealGrid) -> Result<()> {
    write_field_as(path, grid, Dtype::F64)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &ApertureMask) -> Result<()> {
    let g = mask.grid();
    let mut bytes = header(g.height(), g.width(), g.pitch(), Dtype::MaskU8)?;
    bytes.extend(g.data().iter().map(|&b| b as u8));
    write_bytes(path.as_ref(), &bytes)
}

struct RawField {
    height: usize,
    width: usize,
    pitch: f64,
    dtype: Dtype,
    payload: Vec<u8>,
}

fn read_raw(path: &Path) -> Result<RawField> {
    let bytes = fs::read(path).map_err(|e| TieError::io(path, e))?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(TieError::BadMagic { path: path.into() });
    }
    if bytes.len() < HEADER_LEN {
        return Err(TieError::Truncated {
            path: path.into(),
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let height = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let width = u32::from_le_bytes(bytes[9..13].try_into().expect("4 bytes")) as usize;
    let pitch = f64::from_le_bytes(bytes[13..21].try_into().expect("8 bytes"));
    let dtype = Dtype::from_tag(bytes[21]).ok_or_else(|| TieError::DtypeMismatch {
        path: path.into(),
        expected: "f32, f64 or mask-u8",
        found: format!("tag {}", bytes[21]),
    })?;
    if height == 0 || width == 0 || !(pitch > 0.0 && pitch.is_finite()) {
        return Err(TieError::Malformed {
            path: path.into(),
            message: format!("invalid geometry {height}x{width}, pitch {pitch}"),
        });
    }
    let expected = HEADER_LEN as u64 + (height as u64) * (width as u64) * dtype.size() as u64;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(TieError::Truncated {
            path: path.into(),
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(TieError::TrailingData {
            path: path.into(),
            expected,
            actual,
        });
    }
    Ok(RawField {
        height,
        width,
        pitch,
        dtype,
        payload: bytes[HEADER_LEN..].to_vec(),
    })
}

/// Reads an `f32` or `f64` field.
pub fn read_field(path: impl AsRef<Path>) -> Result<RealGrid> {
    let path = path.as_ref();
    let raw = read_raw(path)?;
    let data: Vec<f64> = match raw.dtype {
        Dtype::F64 => raw
            .payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        Dtype::F32 => raw
            .payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::MaskU8 => {
            return Err(TieError::DtypeMismatch {
                path: path.into(),
                expected: "f32 or f64",
                found: Dtype::MaskU8.name().into(),
            })
        }
    };
    if !data.iter().all(|v| v.is_finite()) {
        return Err(TieError::Malformed {
            path: path.into(),
            message: "payload contains non-finite samples".into(),
        });
    }
    Grid2D::new(raw.height, raw.width, raw.pitch, data)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<ApertureMask> {
    let path = path.as_ref();
    let raw = read_raw(path)?;
    if raw.dtype != Dtype::MaskU8 {
        return Err(TieError::DtypeMismatch {
            path: path.into(),
            expected: "mask-u8",
            found: raw.dtype.name().into(),
        });
    }
    if raw.payload.iter().any(|&b| b > 1) {
        return Err(TieError::Malformed {
            path: path.into(),
            message: "mask samples must be 0 or 1".into(),
        });
    }
    let data = raw.payload.iter().map(|&b| b == 1).collect();
    Ok(ApertureMask::new(Grid2D::new(raw.height, raw.width, raw.pitch, data)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Colormap {
    /// Linear from the minimum (0) to the maximum (255).
    Gray,
    /// Symmetric about zero: `v ↦ round((v/m + 1)/2 · 255)` with `m = max|v|`,
    /// so `−m → 0`, `0 → 128`, `+m → 255`.
    Signed,
}

/// Path of the text file holding the normalization bounds of a render.
pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("txt")
}

fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes an 8-bit grayscale PNG and a sidecar with the exact bounds.
///
/// A grid with no spread renders as uniform 128.
pub fn export_png(grid: &RealGrid, path: impl AsRef<Path>, colormap: Colormap) -> Result<()> {
    let path = path.as_ref();
    grid.ensure_finite("rendered field")?;
    let (lo, hi) = (grid.min(), grid.max());
    let pixels: Vec<u8> = match colormap {
        Colormap::Gray => {
            let span = hi - lo;
            grid.data()
                .iter()
                .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 128 })
                .collect()
        }
        Colormap::Signed => {
            let m = grid.max_abs();
            grid.data()
                .iter()
                .map(|&v| if m > 0.0 { ((v / m + 1.0) / 2.0 * 255.0).round() as u8 } else { 128 })
                .collect()
        }
    };
    write_png_u8(path, grid.width(), grid.height(), &pixels)?;
    let mut text = format!(
        "colormap {}\nmin {}\nmax {}\n",
        match colormap {
            Colormap::Gray => "gray",
            Colormap::Signed => "signed",
        },
        sig17(lo),
        sig17(hi)
    );
    if colormap == Colormap::Signed {
        text.push_str(&format!("scale {}\n", sig17(grid.max_abs())));
    }
    write_bytes(&sidecar_path(path), text.as_bytes())
}

/// Writes raw 8-bit grayscale pixels, row-major.
pub fn write_png_u8(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(TieError::invalid("pixel buffer does not match image size"));
    }
    let file = fs::File::create(path).map_err(|e| TieError::io(path, e))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| TieError::io(path, std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(pixels).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

/// Solver settings as stored in run configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub i_max_mode: IMaxMode,
    pub scheme: Scheme,
    /// Floor applied before dividing by intensity; `None` means
    /// `1e-3 × max(I)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_floor: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings::from_params(&UsTieParams::default(), None)
    }
}

impl SolverSettings {
    pub fn from_params(p: &UsTieParams, intensity_floor: Option<f64>) -> Self {
        SolverSettings {
            max_iterations: p.max_iterations,
            tolerance: p.tolerance,
            i_max_mode: p.i_max_mode,
            scheme: p.scheme,
            intensity_floor,
        }
    }

    pub fn params(&self) -> UsTieParams {
        UsTieParams {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            i_max_mode: self.i_max_mode,
            scheme: self.scheme,
        }
    }
}

/// Where a run's data comes from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivative: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<PathBuf>,
    /// `auto`, `none`, or a mask file path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aperture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub solvers: Vec<SolverKind>,
    pub optical: OpticalConfig,
    pub solver: SolverSettings,
    pub input: InputSpec,
    /// Standard deviation of additive noise relative to mean intensity.
    pub noise: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.params().validate()?;
        if let Some(f) = self.solver.intensity_floor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(TieError::invalid("intensity_floor must be positive"));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(TieError::invalid("noise must be non-negative"));
        }
        if self.input.size == Some(0) {
            return Err(TieError::invalid("size must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| TieError::invalid(format!("cannot serialize config: {e}")))
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| TieError::Malformed {
            path: path.into(),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn write_config(path: impl AsRef<Path>, config: &RunConfig) -> Result<()> {
    write_bytes(path.as_ref(), config.to_toml()?.as_bytes())
}

pub fn read_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| TieError::io(path, e))?;
    RunConfig::from_toml(&text, path)
}

/// Serialized solver report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    pub solver: SolverKind,
    pub converged: bool,
    pub iterations_run: usize,
    pub final_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_rmse: Option<f64>,
    pub residual_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmse_trace: Option<Vec<f64>>,
    pub per_iteration_seconds: Vec<f64>,
    pub transforms_per_iteration: Vec<usize>,
    pub transforms_total: usize,
    pub config: RunConfig,
}

impl ReportDocument {
    pub fn new(report: &SolverReport, config: &RunConfig) -> Self {
        let rmse_trace = report.rmse_trace.clone().filter(|t| !t.is_empty());
        ReportDocument {
            solver: report.solver,
            converged: report.converged,
            iterations_run: report.iterations_run,
            final_residual: report.final_residual(),
            final_rmse: rmse_trace.as_ref().and_then(|t| t.last().copied()),
            residual_trace: report.residual_trace.clone(),
            rmse_trace,
            per_iteration_seconds: report.per_iteration_seconds.clone(),
            transforms_per_iteration: report.transforms_per_iteration.clone(),
            transforms_total: report.transforms_total,
            config: config.clone(),
        }
    }
}

/// Pretty JSON with every float written as `{:.16e}` (17 significant
/// digits).
struct SigFigFormatter(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{}", sig17(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn report_to_json(doc: &ReportDocument) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter(Default::default()));
    doc.serialize(&mut ser)
        .map_err(|e| TieError::invalid(format!("cannot serialize report: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_report(path: impl AsRef<Path>, report: &SolverReport, config: &RunConfig) -> Result<()> {
    let doc = ReportDocument::new(report, config);
    write_bytes(path.as_ref(), report_to_json(&doc)?.as_bytes())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportDocument> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| TieError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| TieError::Malformed {
        path: path.into(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = header(3, 513, 2.2e-6, Dtype::F64).unwrap();
        assert_eq!(h.len(), HEADER_LEN);
        assert_eq!(&h[..5], b"TIEF1");
        assert_eq!(&h[5..9], &[3, 0, 0, 0]);
        assert_eq!(&h[9..13], &[1, 2, 0, 0]);
        assert_eq!(h[21], 1);
    }

    #[test]
    fn sig17_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(sig17(v).parse::<f64>().unwrap(), v);
        }
    }
}
