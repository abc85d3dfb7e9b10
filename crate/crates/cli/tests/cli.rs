use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tie_core::io as tio;

fn tie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tie")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr_line(o: &Output) -> String {
    let text = String::from_utf8_lossy(&o.stderr).into_owned();
    assert_eq!(text.lines().count(), 1, "{text}");
    assert!(text.starts_with("error: "), "{text}");
    text
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, phantom: &str, size: &str) {
    let o = tie(&["simulate", phantom, "--size", size, "--out", p(dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    for args in [
        vec![],
        vec!["frobnicate"],
        vec!["simulate", "nope", "--out", p(&out)],
        vec!["simulate", "defocus", "--noise", "-1", "--out", p(&out)],
        vec!["solve", "--out", p(&out)],
        vec!["solve", "--from", p(&out), "--tol", "-1", "--out", p(&out)],
        vec!["solve", "--from", p(&out), "--solver", "magic", "--out", p(&out)],
        vec!["compare", "modulated", "us-tie", "--out", p(&out)],
        vec!["bench", "--iterations", "5", "--size", "64", "--out", p(&out)],
    ] {
        let o = tie(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        stderr_line(&o);
    }
}

#[test]
fn help_exits_zero() {
    let o = tie(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("simulate"));
}

#[test]
fn bad_input_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tief");
    fs::write(&bad, b"not a field").unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "modulated", "64");
    let out = dir.path().join("o");

    let o = tie(&["solve", "--derivative", p(&bad), "--intensity", p(&sim.join("focus.tief")), "--out", p(&out)]);
    assert_eq!(code(&o), 3);
    assert!(stderr_line(&o).starts_with("error: bad-magic: "));

    let o = tie(&["solve", "--from", p(&sim), "--aperture", p(&bad), "--out", p(&out)]);
    assert_eq!(code(&o), 3);

    let small = dir.path().join("small");
    simulate(&small, "modulated", "32");
    let o = tie(&[
        "solve",
        "--derivative",
        p(&small.join("didz.tief")),
        "--intensity",
        p(&sim.join("focus.tief")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr_line(&o).starts_with("error: shape-mismatch: "));

    let o = tie(&["solve", "--from", p(&dir.path().join("missing")), "--out", p(&out)]);
    assert_eq!(code(&o), 3);
    stderr_line(&o);
}

#[test]
fn non_convergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "modulated", "64");
    let out = dir.path().join("o");
    let o = tie(&["solve", "--from", p(&sim), "--max-iter", "2", "--out", p(&out)]);
    assert_eq!(code(&o), 4);
    let doc = tio::read_report(out.join("report.json")).unwrap();
    assert!(!doc.converged);
    assert_eq!(doc.iterations_run, 2);
    // Outputs are still written.
    assert!(out.join("phase.tief").exists());
}

#[test]
fn simulate_and_solve_write_their_inventories() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "gaussian-beam", "64");
    for f in [
        "intensity.tief",
        "phase_true.tief",
        "under.tief",
        "focus.tief",
        "over.tief",
        "didz.tief",
        "aperture.tief",
        "run.toml",
        "intensity.png",
        "intensity.txt",
        "didz.png",
        "didz.txt",
    ] {
        assert!(sim.join(f).exists(), "{f}");
    }
    let cfg = tio::read_config(sim.join("run.toml")).unwrap();
    assert_eq!(cfg.command, "simulate");
    assert_eq!(cfg.input.phantom.as_deref(), Some("gaussian-beam"));

    let out = dir.path().join("sol");
    let o = tie(&["solve", "--from", p(&sim), "--solver", "dct-tie", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    for f in ["phase.tief", "phase.png", "report.json", "run.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let doc = tio::read_report(out.join("report.json")).unwrap();
    assert_eq!(doc.solver.name(), "dct-tie");
    assert!(doc.final_rmse.is_some());
    let phase = tio::read_field(out.join("phase.tief")).unwrap();
    assert_eq!(phase.shape(), (64, 64));
}

#[test]
fn explicit_optics_override_the_stored_config() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let o = tie(&["simulate", "defocus", "--size", "64", "--dz", "2e-6", "--wavelength", "633e-9", "--out", p(&sim)]);
    assert_eq!(code(&o), 0);
    let cfg = tio::read_config(sim.join("run.toml")).unwrap();
    assert_eq!(cfg.optical.defocus(), 2e-6);
    assert_eq!(cfg.optical.wavelength(), 633e-9);
    let out = dir.path().join("sol");
    tie(&["solve", "--from", p(&sim), "--out", p(&out)]);
    let solved = tio::read_config(out.join("run.toml")).unwrap();
    assert_eq!(solved.optical, cfg.optical);
}

#[test]
fn compare_with_a_repeated_solver_gives_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = tie(&["compare", "modulated", "us-tie", "us-tie", "--size", "64", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = tio::read_report(out.join("1-us-tie.json")).unwrap();
    let b = tio::read_report(out.join("2-us-tie.json")).unwrap();
    assert_eq!(a.residual_trace, b.residual_trace);
    assert_eq!(a.rmse_trace, b.rmse_trace);
    assert_eq!(fs::read(out.join("1-us-tie.tief")).unwrap(), fs::read(out.join("2-us-tie.tief")).unwrap());
    for f in ["summary.txt", "traces.txt", "trace.png", "run.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("us-tie"));
}

#[test]
fn compare_records_stalled_solvers_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = tie(&["compare", "inverse-gaussian", "us-tie", "fft-tie", "--size", "64", "--max-iter", "3", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    assert!(!tio::read_report(out.join("1-us-tie.json")).unwrap().converged);
}

#[test]
fn iter_dct_on_the_singular_phantom_fails() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, "inverse-gaussian", "128");
    let out = dir.path().join("sol");
    let o = tie(&["solve", "--from", p(&sim), "--solver", "iter-dct", "--out", p(&out)]);
    assert_eq!(code(&o), 4);
    let doc = tio::read_report(out.join("report.json")).unwrap();
    assert!(doc.final_rmse.unwrap() > 1.0);
}

#[test]
fn bench_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let o = tie(&["bench", "modulated", "--iterations", "10", "--size", "64", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("bench.json")).unwrap()).unwrap();
    assert_eq!(v["iterations"], 10);
    assert_eq!(v["fft_tie_transforms"], 8);
    assert!(v["us_tie"]["transforms_per_iteration"].as_array().unwrap().iter().all(|n| n == 2));
    assert_eq!(v["us_tie"]["iterations_run"], 10);
    assert!(v["speedup"].as_f64().unwrap() > 0.0);
}

#[test]
fn noisy_simulation_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let d = dir.path().join(name);
        let o = tie(&["simulate", "modulated", "--size", "32", "--noise", "0.02", "--seed", seed, "--out", p(&d)]);
        assert_eq!(code(&o), 0);
        fs::read(d.join("didz.tief")).unwrap()
    };
    assert_eq!(run("a", "3"), run("b", "3"));
    assert_ne!(run("a", "3"), run("c", "4"));
}
