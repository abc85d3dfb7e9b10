//! Subcommands of the `tie` binary.
//!
//! Exit codes: 0 success, 2 usage, 3 input format or data, 4 a solver did
//! not converge. Errors print one line, `error: <category>: <message>`, on
//! standard error.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use tie_core::io::{self as tio, Colormap, InputSpec, RunConfig, SolverSettings};
use tie_core::phantoms::{self, Phantom};
use tie_core::preprocess::{threshold_aperture, ThresholdParams};
use tie_core::propagation::{axial_derivative, synthesize_stack, FocalStack};
use tie_core::solvers::{
    default_floor, dct_tie_solve, exclude_singularities, fft_tie_solve, iter_dct_solve, us_tie_solve,
    DEFAULT_EXCLUSION_RADIUS,
};
use tie_core::{ApertureMask, GroundTruth, IMaxMode, OpticalConfig, RealGrid, Scheme, SolverKind, SolverReport, TieError, UsTieParams};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

/// File names written by `simulate` and read by `solve --from`.
pub mod files {
    pub const INTENSITY: &str = "intensity.tief";
    pub const PHASE_TRUE: &str = "phase_true.tief";
    pub const UNDER: &str = "under.tief";
    pub const FOCUS: &str = "focus.tief";
    pub const OVER: &str = "over.tief";
    pub const DIDZ: &str = "didz.tief";
    pub const APERTURE: &str = "aperture.tief";
    pub const CONFIG: &str = "run.toml";
    pub const PHASE: &str = "phase.tief";
    pub const REPORT: &str = "report.json";
    pub const SUMMARY: &str = "summary.txt";
    pub const TRACE_PNG: &str = "trace.png";
    pub const TRACES: &str = "traces.txt";
    pub const BENCH: &str = "bench.json";
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(TieError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(TieError::InvalidParameter(_)) => EXIT_USAGE,
            CliError::Core(_) => EXIT_INPUT,
        }
    }

    fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.category(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        };
        // Keep the report on one line.
        let msg = msg.replace('\n', " ");
        write!(f, "{}: {}", self.category(), msg)
    }
}

impl From<TieError> for CliError {
    fn from(e: TieError) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "tie", version, about = "Transport-of-intensity phase retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a focal stack and derivative from a phantom.
    Simulate(SimulateArgs),
    /// Recover phase from a derivative and an in-focus intensity.
    Solve(SolveArgs),
    /// Run several solvers on one phantom and tabulate the results.
    Compare(CompareArgs),
    /// Time fixed-length US-TIE and Iter-DCT runs.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OpticsArgs {
    /// Defocus distance Δz in meters [default: 1e-6].
    #[arg(long)]
    pub dz: Option<f64>,
    /// Wavelength in meters [default: 550e-9].
    #[arg(long)]
    pub wavelength: Option<f64>,
    /// Pixel pitch in meters [default: 2.2e-6, or the input files' pitch].
    #[arg(long)]
    pub pitch: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 100)]
    pub max_iter: usize,
    /// Override of I_max; must not be below the intensity maximum.
    #[arg(long = "i-max")]
    pub i_max: Option<f64>,
    /// Intensity floor before division [default: 1e-3 × max intensity].
    #[arg(long)]
    pub floor: Option<f64>,
    /// Flux discretization for US-TIE: compact, central-difference, spectral.
    #[arg(long, default_value = "compact", value_parser = parse_scheme)]
    pub scheme: Scheme,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "compact" => Ok(Scheme::Compact),
        "central-difference" => Ok(Scheme::CentralDifference),
        "spectral" => Ok(Scheme::Spectral),
        _ => Err(format!("unknown scheme '{s}'")),
    }
}

impl SolverArgs {
    pub fn params(&self) -> UsTieParams {
        UsTieParams {
            max_iterations: self.max_iter,
            tolerance: self.tol,
            i_max_mode: self.i_max.map_or(IMaxMode::GlobalMax, IMaxMode::Manual),
            scheme: self.scheme,
        }
    }

    fn settings(&self) -> SolverSettings {
        SolverSettings::from_params(&self.params(), self.floor)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// astigmatism, gaussian-beam, inverse-gaussian, defocus or modulated.
    pub phantom: String,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[command(flatten)]
    pub optics: OpticsArgs,
    /// Additive Gaussian noise σ relative to the mean in-focus intensity.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Directory written by `simulate`; supplies derivative, intensity,
    /// aperture, ground truth and optics unless overridden.
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[arg(long)]
    pub derivative: Option<PathBuf>,
    #[arg(long)]
    pub intensity: Option<PathBuf>,
    /// Ground-truth phase for RMSE traces.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value = "us-tie")]
    pub solver: SolverKind,
    /// auto (Otsu threshold), none (full grid) or a mask file.
    #[arg(long)]
    pub aperture: Option<String>,
    #[command(flatten)]
    pub optics: OpticsArgs,
    #[command(flatten)]
    pub solver_args: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    pub phantom: String,
    /// At least two of fft-tie, dct-tie, iter-dct, us-tie.
    #[arg(required = true, num_args = 2..)]
    pub solvers: Vec<SolverKind>,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[command(flatten)]
    pub optics: OpticsArgs,
    #[command(flatten)]
    pub solver_args: SolverArgs,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run the solvers on separate threads.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(default_value = "astigmatism")]
    pub phantom: String,
    /// Iterations per solver, run without early stopping.
    #[arg(long, default_value_t = 50)]
    pub iterations: usize,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[command(flatten)]
    pub optics: OpticsArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// What a successful command reports back to `main`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub converged: bool,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        if self.converged {
            0
        } else {
            EXIT_NOT_CONVERGED
        }
    }
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code. Errors are written to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error: {}", usage(first));
            return EXIT_USAGE;
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> CliResult<Outcome> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn resolve_optics(args: &OpticsArgs, base: Option<&OpticalConfig>, pitch: Option<f64>) -> CliResult<OpticalConfig> {
    let std = OpticalConfig::standard();
    let base = base.unwrap_or(&std);
    let file_pitch = pitch.unwrap_or(base.pitch());
    if let (Some(flag), Some(file)) = (args.pitch, pitch) {
        if (flag - file).abs() > 1e-9 * flag.abs().max(file.abs()) {
            return Err(TieError::PitchMismatch(flag, file).into());
        }
    }
    Ok(OpticalConfig::new(
        args.wavelength.unwrap_or(base.wavelength()),
        args.pitch.unwrap_or(file_pitch),
        args.dz.unwrap_or(base.defocus()),
    )?)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| TieError::Io {
        path: dir.into(),
        source: e,
    })?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| TieError::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(())
}

/// A phantom with its synthesized measurements.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub phantom: Phantom,
    pub stack: FocalStack,
    pub didz: RealGrid,
}

/// Builds the phantom, propagates it and, when `noise > 0`, adds Gaussian
/// noise with σ = `noise × mean(focus)` to each plane (clamped at zero).
pub fn simulate_phantom(name: &str, size: usize, config: &OpticalConfig, noise: f64, seed: u64) -> CliResult<Simulation> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(usage("--noise must be non-negative"));
    }
    let phantom = phantoms::by_name(name, size, config.pitch())?;
    let mut stack = synthesize_stack(&phantom.intensity, &phantom.phase, config, phantom.padding)?;
    if noise > 0.0 {
        let sigma = noise * stack.focus.mean();
        let dist = Normal::new(0.0, sigma).map_err(|e| usage(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for plane in [&mut stack.under, &mut stack.focus, &mut stack.over] {
            for v in plane.data_mut() {
                *v = (*v + dist.sample(&mut rng)).max(0.0);
            }
        }
    }
    let didz = axial_derivative(&stack)?;
    Ok(Simulation { phantom, stack, didz })
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<Outcome> {
    let config = resolve_optics(&a.optics, None, None)?;
    let sim = simulate_phantom(&a.phantom, a.size, &config, a.noise, a.seed)?;
    ensure_dir(&a.out)?;
    let out = |n: &str| a.out.join(n);
    let p = &sim.phantom;
    tio::write_field(out(files::INTENSITY), &p.intensity)?;
    tio::write_field(out(files::PHASE_TRUE), &p.phase)?;
    tio::write_field(out(files::UNDER), &sim.stack.under)?;
    tio::write_field(out(files::FOCUS), &sim.stack.focus)?;
    tio::write_field(out(files::OVER), &sim.stack.over)?;
    tio::write_field(out(files::DIDZ), &sim.didz)?;
    tio::write_mask(out(files::APERTURE), &p.aperture)?;
    tio::export_png(&p.intensity, out("intensity.png"), Colormap::Gray)?;
    tio::export_png(&p.phase, out("phase_true.png"), Colormap::Gray)?;
    tio::export_png(&sim.stack.under, out("under.png"), Colormap::Gray)?;
    tio::export_png(&sim.stack.over, out("over.png"), Colormap::Gray)?;
    tio::export_png(&sim.didz, out("didz.png"), Colormap::Signed)?;
    let run = RunConfig {
        command: "simulate".into(),
        solvers: Vec::new(),
        optical: config,
        solver: SolverSettings::default(),
        input: InputSpec {
            phantom: Some(a.phantom.clone()),
            size: Some(a.size),
            ..Default::default()
        },
        noise: a.noise,
        seed: a.seed,
        output_dir: a.out.clone(),
    };
    tio::write_config(out(files::CONFIG), &run)?;
    println!(
        "simulated {} ({}x{}) into {}",
        a.phantom,
        a.size,
        a.size,
        a.out.display()
    );
    Ok(Outcome { converged: true })
}

/// Dispatches to a solver. `floor` defaults to `1e-3 × max(I)`.
#[allow(clippy::too_many_arguments)]
pub fn run_solver(
    kind: SolverKind,
    didz: &RealGrid,
    intensity: &RealGrid,
    aperture: &ApertureMask,
    config: &OpticalConfig,
    params: &UsTieParams,
    floor: Option<f64>,
    truth: Option<&GroundTruth>,
) -> CliResult<SolverReport> {
    let floor = floor.unwrap_or_else(|| default_floor(intensity));
    let report = match kind {
        SolverKind::FftTie => fft_tie_solve(didz, intensity, config, floor, truth)?,
        SolverKind::DctTie => dct_tie_solve(didz, intensity, config, floor, truth)?,
        SolverKind::IterDct => iter_dct_solve(didz, intensity, aperture, config, params, floor, truth)?,
        SolverKind::UsTie => us_tie_solve(didz, intensity, config, params, truth)?,
    };
    Ok(report)
}

/// Ground truth scored inside `aperture` away from zero-intensity pixels.
pub fn ground_truth(phase: RealGrid, aperture: &ApertureMask, intensity: &RealGrid) -> CliResult<GroundTruth> {
    let region = exclude_singularities(aperture, intensity, DEFAULT_EXCLUSION_RADIUS)?;
    region.require_nonempty("scoring region")?;
    Ok(GroundTruth { phase, region })
}

fn resolve_aperture(spec: &str, intensity: &RealGrid) -> CliResult<ApertureMask> {
    let mask = match spec {
        "auto" => threshold_aperture(intensity, &ThresholdParams::default())?,
        "none" => ApertureMask::full(intensity.height(), intensity.width(), intensity.pitch())?,
        path => tio::read_mask(path)?,
    };
    intensity.ensure_same_geometry(mask.grid())?;
    Ok(mask)
}

pub fn cmd_solve(a: &SolveArgs) -> CliResult<Outcome> {
    let from = |n: &str| a.from.as_ref().map(|d| d.join(n));
    let derivative = a
        .derivative
        .clone()
        .or_else(|| from(files::DIDZ))
        .ok_or_else(|| usage("--derivative or --from is required"))?;
    let intensity_path = a
        .intensity
        .clone()
        .or_else(|| from(files::FOCUS))
        .ok_or_else(|| usage("--intensity or --from is required"))?;
    let truth_path = a
        .truth
        .clone()
        .or_else(|| from(files::PHASE_TRUE).filter(|p| p.exists()));
    let aperture_spec = match (&a.aperture, from(files::APERTURE)) {
        (Some(s), _) => s.clone(),
        (None, Some(p)) if p.exists() => p.to_string_lossy().into_owned(),
        _ => "none".to_string(),
    };
    let base = match from(files::CONFIG).filter(|p| p.exists()) {
        Some(p) => Some(tio::read_config(p)?.optical),
        None => None,
    };

    let didz = tio::read_field(&derivative)?;
    let intensity = tio::read_field(&intensity_path)?;
    didz.ensure_same_geometry(&intensity)?;
    let config = resolve_optics(&a.optics, base.as_ref(), Some(didz.pitch()))?;
    let aperture = resolve_aperture(&aperture_spec, &intensity)?;
    let truth = match &truth_path {
        Some(p) => {
            let phase = tio::read_field(p)?;
            phase.ensure_same_geometry(&didz)?;
            Some(ground_truth(phase, &aperture, &intensity)?)
        }
        None => None,
    };
    let params = a.solver_args.params();
    let report = run_solver(
        a.solver,
        &didz,
        &intensity,
        &aperture,
        &config,
        &params,
        a.solver_args.floor,
        truth.as_ref(),
    )?;

    ensure_dir(&a.out)?;
    let run = RunConfig {
        command: "solve".into(),
        solvers: vec![a.solver],
        optical: config,
        solver: a.solver_args.settings(),
        input: InputSpec {
            derivative: Some(derivative),
            intensity: Some(intensity_path),
            aperture: Some(aperture_spec),
            truth: truth_path,
            ..Default::default()
        },
        noise: 0.0,
        seed: 0,
        output_dir: a.out.clone(),
    };
    tio::write_field(a.out.join(files::PHASE), &report.phase)?;
    tio::export_png(&report.phase, a.out.join("phase.png"), Colormap::Gray)?;
    tio::write_report(a.out.join(files::REPORT), &report, &run)?;
    tio::write_config(a.out.join(files::CONFIG), &run)?;
    println!("{}", summary_line(&report));
    Ok(Outcome {
        converged: report.converged,
    })
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn summary_line(r: &SolverReport) -> String {
    let rmse = r.final_rmse().map_or("-".to_string(), |v| format!("{v:.6}"));
    format!(
        "{} converged={} iterations={} residual={:.3e} rmse={} sec/iter={:.3e}",
        r.solver,
        r.converged,
        r.iterations_run,
        r.final_residual(),
        rmse,
        median(&r.per_iteration_seconds)
    )
}

fn summary_table(phantom: &str, reports: &[SolverReport]) -> String {
    let mut s = format!("phantom: {phantom}\n");
    s.push_str(&format!(
        "{:<4} {:<9} {:>10} {:>9} {:>14} {:>14} {:>14}\n",
        "#", "solver", "iterations", "converged", "final_rmse", "final_resid", "sec_per_iter"
    ));
    for (i, r) in reports.iter().enumerate() {
        let rmse = r.final_rmse().map_or("-".to_string(), |v| format!("{v:.6e}"));
        s.push_str(&format!(
            "{:<4} {:<9} {:>10} {:>9} {:>14} {:>14.6e} {:>14.6e}\n",
            i + 1,
            r.solver.name(),
            r.iterations_run,
            r.converged,
            rmse,
            r.final_residual(),
            median(&r.per_iteration_seconds)
        ));
    }
    s
}

pub fn cmd_compare(a: &CompareArgs) -> CliResult<Outcome> {
    if a.solvers.len() < 2 {
        return Err(usage("compare needs at least two solvers"));
    }
    let config = resolve_optics(&a.optics, None, None)?;
    let sim = simulate_phantom(&a.phantom, a.size, &config, a.noise, a.seed)?;
    let p = &sim.phantom;
    let truth = ground_truth(p.phase.clone(), &p.aperture, &p.intensity)?;
    let params = a.solver_args.params();
    let solve = |kind: SolverKind| {
        run_solver(
            kind,
            &sim.didz,
            &sim.stack.focus,
            &p.aperture,
            &config,
            &params,
            a.solver_args.floor,
            Some(&truth),
        )
    };
    let reports: Vec<SolverReport> = if a.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = a.solvers.iter().map(|&k| s.spawn(move || solve(k))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("solver thread panicked"))
                .collect::<CliResult<Vec<_>>>()
        })?
    } else {
        a.solvers.iter().map(|&k| solve(k)).collect::<CliResult<Vec<_>>>()?
    };

    ensure_dir(&a.out)?;
    let run = RunConfig {
        command: "compare".into(),
        solvers: a.solvers.clone(),
        optical: config,
        solver: a.solver_args.settings(),
        input: InputSpec {
            phantom: Some(a.phantom.clone()),
            size: Some(a.size),
            ..Default::default()
        },
        noise: a.noise,
        seed: a.seed,
        output_dir: a.out.clone(),
    };
    let mut traces = String::new();
    for (i, r) in reports.iter().enumerate() {
        let stem = format!("{}-{}", i + 1, r.solver.name());
        tio::write_report(a.out.join(format!("{stem}.json")), r, &run)?;
        tio::write_field(a.out.join(format!("{stem}.tief")), &r.phase)?;
        tio::export_png(&r.phase, a.out.join(format!("{stem}.png")), Colormap::Gray)?;
        let join = |t: &[f64]| t.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(" ");
        traces.push_str(&format!("{stem} residual {}\n", join(&r.residual_trace)));
        if let Some(t) = &r.rmse_trace {
            traces.push_str(&format!("{stem} rmse {}\n", join(t)));
        }
    }
    write_text(&a.out.join(files::TRACES), &traces)?;
    let table = summary_table(&a.phantom, &reports);
    write_text(&a.out.join(files::SUMMARY), &table)?;
    let series: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| r.rmse_trace.clone().unwrap_or_else(|| r.residual_trace.clone()))
        .collect();
    let (w, h, px) = render_trace_chart(&series, 640, 400);
    tio::write_png_u8(&a.out.join(files::TRACE_PNG), w, h, &px)?;
    tio::write_config(a.out.join(files::CONFIG), &run)?;
    print!("{table}");
    Ok(Outcome { converged: true })
}

/// Rasterizes `log10` of each series against its index. Background is
/// white, axes black, and each series a different gray.
pub fn render_trace_chart(series: &[Vec<f64>], width: usize, height: usize) -> (usize, usize, Vec<u8>) {
    let mut px = vec![255u8; width * height];
    let (left, right, top, bottom) = (40usize, width - 10, 10usize, height - 30);
    let logs: Vec<Vec<f64>> = series
        .iter()
        .map(|s| s.iter().map(|&v| if v > 0.0 && v.is_finite() { v.log10() } else { f64::NAN }).collect())
        .collect();
    let finite = logs.iter().flatten().copied().filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let n_max = series.iter().map(|s| s.len()).max().unwrap_or(1).max(2) - 1;
    let mut put = |x: i64, y: i64, v: u8| {
        if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
            px[y as usize * width + x as usize] = v;
        }
    };
    for x in left..=right {
        put(x as i64, bottom as i64, 0);
    }
    for y in top..=bottom {
        put(left as i64, y as i64, 0);
    }
    // One tick per decade on the y axis.
    let decades = (hi - lo) as usize;
    for d in 0..=decades {
        let y = bottom as f64 - d as f64 / decades as f64 * (bottom - top) as f64;
        for x in left - 5..left {
            put(x as i64, y.round() as i64, 0);
        }
    }
    let to_xy = |i: usize, v: f64| {
        let x = left as f64 + i as f64 / n_max as f64 * (right - left) as f64;
        let y = bottom as f64 - (v - lo) / (hi - lo) * (bottom - top) as f64;
        (x.round() as i64, y.round() as i64)
    };
    for (k, s) in logs.iter().enumerate() {
        let shade = [0u8, 110, 170, 60, 200][k % 5];
        for i in 1..s.len() {
            if !(s[i - 1].is_finite() && s[i].is_finite()) {
                continue;
            }
            let (x0, y0) = to_xy(i - 1, s[i - 1]);
            let (x1, y1) = to_xy(i, s[i]);
            // Bresenham.
            let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
            let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
            let (mut x, mut y, mut err) = (x0, y0, dx + dy);
            loop {
                put(x, y, shade);
                put(x, y + 1, shade);
                if x == x1 && y == y1 {
                    break;
                }
                let e2 = 2 * err;
                if e2 >= dy {
                    err += dy;
                    x += sx;
                }
                if e2 <= dx {
                    err += dx;
                    y += sy;
                }
            }
        }
    }
    (width, height, px)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTiming {
    pub iterations_run: usize,
    pub median_seconds_per_iteration: f64,
    pub transforms_per_iteration: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub phantom: String,
    pub size: usize,
    pub iterations: usize,
    pub us_tie: SolverTiming,
    pub iter_dct: SolverTiming,
    pub fft_tie_transforms: usize,
    /// Iter-DCT median time per iteration over US-TIE's.
    pub speedup: f64,
}

pub fn bench(phantom: &str, size: usize, iterations: usize, config: &OpticalConfig) -> CliResult<BenchResult> {
    if iterations < 10 {
        return Err(usage("--iterations must be at least 10"));
    }
    let sim = simulate_phantom(phantom, size, config, 0.0, 0)?;
    let p = &sim.phantom;
    let params = UsTieParams {
        max_iterations: iterations,
        tolerance: 0.0,
        ..Default::default()
    };
    let focus = &sim.stack.focus;
    let us = us_tie_solve(&sim.didz, focus, config, &params, None)?;
    let it = iter_dct_solve(&sim.didz, focus, &p.aperture, config, &params, default_floor(focus), None)?;
    let fft = fft_tie_solve(&sim.didz, focus, config, default_floor(focus), None)?;
    let timing = |r: &SolverReport| SolverTiming {
        iterations_run: r.iterations_run,
        median_seconds_per_iteration: median(&r.per_iteration_seconds),
        transforms_per_iteration: r.transforms_per_iteration.clone(),
    };
    let (us_t, it_t) = (timing(&us), timing(&it));
    Ok(BenchResult {
        phantom: phantom.into(),
        size,
        iterations,
        speedup: it_t.median_seconds_per_iteration / us_t.median_seconds_per_iteration,
        us_tie: us_t,
        iter_dct: it_t,
        fft_tie_transforms: fft.transforms_total,
    })
}

pub fn cmd_bench(a: &BenchArgs) -> CliResult<Outcome> {
    let config = resolve_optics(&a.optics, None, None)?;
    let result = bench(&a.phantom, a.size, a.iterations, &config)?;
    ensure_dir(&a.out)?;
    let json = serde_json::to_string_pretty(&result).map_err(|e| usage(e.to_string()))?;
    write_text(&a.out.join(files::BENCH), &(json + "\n"))?;
    let per = |t: &SolverTiming| t.transforms_per_iteration.first().copied().unwrap_or(0);
    println!(
        "{} {}x{} iterations={}: us-tie {:.3e} s/iter ({} transforms/iter), iter-dct {:.3e} s/iter ({} transforms/iter), speedup {:.1}x, fft-tie {} transforms",
        result.phantom,
        a.size,
        a.size,
        a.iterations,
        result.us_tie.median_seconds_per_iteration,
        per(&result.us_tie),
        result.iter_dct.median_seconds_per_iteration,
        per(&result.iter_dct),
        result.speedup,
        result.fft_tie_transforms
    );
    Ok(Outcome { converged: true })
}
