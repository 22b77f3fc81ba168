//! End-to-end tests of the `hyperfoil` binary: run archives, re-verification,
//! determinism, error reporting with exit codes, the identity ladder, and a
//! small amplitude sweep.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hyperfoil")
}

static DIR_SEQ: AtomicUsize = AtomicUsize::new(0);

fn fresh_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!(
        "hyperfoil_cli_{}_{}_{}",
        tag,
        std::process::id(),
        DIR_SEQ.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary launches")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code (signal?)")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small cone-respecting archive run: ~45 steps on a 61² grid with three
/// hyperboloid slices and fit windows matched to the short span.
fn tiny_kgz_config() -> String {
    "\
grid.n = 61
grid.h = 0.25
time.dt = 0.1
time.t0 = 2.0
time.t_final = 6.4
time.series_every = 10
ic.eps = 0.01
slices.s = 3.0, 3.2, 3.4
slices.gamma = 0.125
slices.words_e = full
slices.words_n = full
slices.with_density = true
verify.fit_lo = 3.0
verify.fit_hi = 6.4
verify.s_fit_lo = 2.9
verify.s_fit_hi = 3.5
"
    .to_string()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

// ---------------------------------------------------------------------------

#[test]
fn run_writes_a_replayable_archive() {
    let dir = fresh_dir("archive");
    let cfg = write_config(&dir, &tiny_kgz_config());
    let out_dir = dir.join("out");
    let out = run_cli(&[
        "run",
        "kgz",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    // Transient-window checks may fail at this tiny scale; anything other
    // than pass/check-fail is a hard error.
    assert!(matches!(code(&out), 0 | 2), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("checks:"), "stdout: {}", stdout(&out));

    for name in
        ["config.txt", "manifest.json", "series.csv", "ledger.json", "fits.csv", "energies.csv", "aux.csv", "words.csv"]
    {
        assert!(out_dir.join(name).is_file(), "missing artifact {name}");
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["system"], "kgz");
    assert_eq!(manifest["grid_nx"], 61);
    assert_eq!(manifest["dt"], 0.1);
    assert_eq!(manifest["t_final"], 6.4);
    assert_eq!(manifest["threads"], 1);
    assert!(manifest["config_hash"].as_str().unwrap().starts_with("sha256:"));
    assert!(manifest["steps"].as_u64().unwrap() >= 44);
    let outputs: Vec<String> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert!(outputs.contains(&"series.csv".to_string()));
    assert!(outputs.contains(&"aux.csv".to_string()));

    // The series file carries the documented headline columns.
    let series = std::fs::read_to_string(out_dir.join("series.csv")).unwrap();
    let header = series.lines().next().unwrap();
    assert_eq!(header, "t,sup_e,sup_n,sup_density,wsup_density");
    assert!(series.lines().count() > 4);

    // The stored config is byte-identical to the input.
    assert_eq!(std::fs::read_to_string(out_dir.join("config.txt")).unwrap(), tiny_kgz_config());
}

#[test]
fn reruns_and_reverification_are_reproducible() {
    let dir = fresh_dir("repro");
    let cfg = write_config(&dir, &tiny_kgz_config());
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    let status_a = code(&run_cli(&[
        "run",
        "kgz",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]));
    let status_b = code(&run_cli(&[
        "run",
        "kgz",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]));
    assert_eq!(status_a, status_b);

    // Full-precision data artifacts agree byte for byte across reruns (the
    // manifest differs only in its wall-clock entry).
    for name in ["series.csv", "energies.csv", "aux.csv", "words.csv", "fits.csv", "ledger.json"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }

    // Recomputing the checks from the archived CSVs reproduces the ledger
    // exactly and reaches the same verdict.
    let ledger_before = std::fs::read(out_a.join("ledger.json")).unwrap();
    let verify = run_cli(&["verify", out_a.to_str().unwrap()]);
    assert_eq!(code(&verify), status_a, "stderr: {}", stderr(&verify));
    let ledger_after = std::fs::read(out_a.join("ledger.json")).unwrap();
    assert_eq!(ledger_before, ledger_after, "re-verification changed the ledger");

    // A filtered family reruns only its own checks.
    let filtered = run_cli(&["verify", out_a.to_str().unwrap(), "--checks", "spread"]);
    assert!(matches!(code(&filtered), 0 | 2));
    let text = stdout(&filtered);
    assert!(text.contains("spread"), "stdout: {text}");
    assert!(!text.contains("sobolev"), "unexpected families in: {text}");

    // Unknown families are rejected with the valid list.
    let bogus = run_cli(&["verify", out_a.to_str().unwrap(), "--checks", "bogus"]);
    assert_eq!(code(&bogus), 4);
    assert!(stderr(&bogus).contains("decay"), "stderr: {}", stderr(&bogus));
}

#[test]
fn config_errors_are_line_numbered_and_exit_four() {
    let dir = fresh_dir("cfgerr");

    // Unknown key, pointing at its line.
    let cfg = write_config(&dir, "grid.n = 61\ngrid.h = 0.25\ngrid.bogus = 1\n");
    let out = run_cli(&["run", "kgz", "--config", cfg.to_str().unwrap(), "--out", dir.join("o1").to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    let err = stderr(&out);
    assert!(err.contains("line 3") && err.contains("grid.bogus"), "stderr: {err}");

    // Duplicate key.
    let cfg = write_config(&dir, "time.dt = 0.1\ntime.dt = 0.2\n");
    let out = run_cli(&["run", "kgz", "--config", cfg.to_str().unwrap(), "--out", dir.join("o2").to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("duplicate key"), "stderr: {}", stderr(&out));

    // Type error.
    let cfg = write_config(&dir, "grid.n = banana\n");
    let out = run_cli(&["run", "kgz", "--config", cfg.to_str().unwrap(), "--out", dir.join("o3").to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("nonnegative integer"), "stderr: {}", stderr(&out));

    // A kgz-only key inside a quasilinear run is caught by the allowlist.
    let cfg = write_config(&dir, "evolve.coupling = false\n");
    let out = run_cli(&["run", "qwkg", "--config", cfg.to_str().unwrap(), "--out", dir.join("o4").to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("unknown key"), "stderr: {}", stderr(&out));

    // Missing required arguments are a usage error, same exit class.
    let out = run_cli(&["verify"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn runaway_amplitude_exits_three() {
    let dir = fresh_dir("nan");
    let cfg = write_config(
        &dir,
        "\
grid.n = 49
grid.h = 0.25
time.dt = 0.1
time.t_final = 4.0
ic.eps = 1e8
evolve.mask = false
",
    );
    let out = run_cli(&[
        "run",
        "kgz",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("non-finite"), "stderr: {}", stderr(&out));
}

#[test]
fn identities_ladder_converges_on_a_coarse_pair() {
    let dir = fresh_dir("ident");
    let out = run_cli(&[
        "identities",
        "--resolution-ladder",
        "0.2,0.1",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stdout: {}\nstderr: {}", stdout(&out), stderr(&out));
    let csv = std::fs::read_to_string(dir.join("identities.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("h,"), "header: {header}");
    assert_eq!(csv.lines().count(), 3, "one row per rung plus header");
}

#[test]
fn amplitude_sweep_confirms_linear_response() {
    let dir = fresh_dir("sweep");
    // No slices: the sweep compares series-level summaries across runs.
    let cfg = write_config(
        &dir,
        "\
grid.n = 61
grid.h = 0.25
time.dt = 0.1
time.t_final = 5.0
ic.eps = 0.01
verify.fit_lo = 3.0
verify.fit_hi = 5.0
",
    );
    let out_dir = dir.join("out");
    let out = run_cli(&[
        "sweep",
        "eps",
        "--values",
        "0.01,0.005",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stdout: {}\nstderr: {}", stdout(&out), stderr(&out));
    let table = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "header plus one row per value:\n{table}");
    assert!(out_dir.join("sweep_series.csv").is_file());
    // Halving the amplitude halves the headline sup within a tight band.
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let header: Vec<&str> = table.lines().next().unwrap().split(',').collect();
    let sup_col = header.iter().position(|c| c.contains("sup")).expect("a sup column");
    let a: f64 = rows[0][sup_col].parse().unwrap();
    let b: f64 = rows[1][sup_col].parse().unwrap();
    let ratio = a / b;
    assert!((ratio - 2.0).abs() < 0.1, "amplitude response ratio {ratio}");
}

#[test]
fn help_succeeds_and_names_the_subcommands() {
    let out = run_cli(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for sub in ["run", "verify", "identities", "sweep"] {
        assert!(text.contains(sub), "help misses {sub}: {text}");
    }
}
