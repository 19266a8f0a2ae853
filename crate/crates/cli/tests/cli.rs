use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use biped_core::model::DEFAULT_MODEL_TOML;
use biped_core::trace::verify_metrics;
use biped_core::{ImpactMetrics, SimTrace};
use tempfile::TempDir;

fn biped() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_biped"));
    c.env_remove("BIPED_MODEL");
    c
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    biped().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn flat_walk_writes_full_trace_and_consistent_metrics() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let cfg = scenarios().join("flat.toml");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let trace = SimTrace::read_csv(tmp.path().join("trace.csv")).unwrap();
    // 6 steps: 1 s initial + 7 × (0.8 + 0.2) s + 1 s final = 8.8 s → 1760 ticks
    assert_eq!(trace.records.len(), 1760 + 1);
    // the file keeps nine significant digits, so spacing is exact to print precision
    for (i, r) in trace.records.iter().enumerate() {
        assert_eq!(r.tick, i);
        assert!((r.t - i as f64 * 0.005).abs() <= 1e-8 * r.t.max(1e-3));
    }

    let metrics =
        ImpactMetrics::from_json(&fs::read_to_string(tmp.path().join("metrics.json")).unwrap())
            .unwrap();
    assert!(metrics.success);
    assert_eq!(metrics.guard_triggers, 0);
    verify_metrics(&trace, &metrics).unwrap();
}

#[test]
fn unreachable_step_length_exits_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "long.toml",
        "seed = 1\n[gait]\nstep_length = 2.0\n",
    );
    let o = run(&[
        "run",
        "--config",
        &cfg,
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let unknown = write(
        tmp.path(),
        "unknown.toml",
        "seed = 1\n[gait]\nstride = 0.3\n",
    );
    let o = run(&["run", "--config", &unknown, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let no_seed = write(tmp.path(), "noseed.toml", "[gait]\nn_steps = 2\n");
    assert_eq!(
        run(&["run", "--config", &no_seed, "--out", out])
            .status
            .code(),
        Some(2)
    );

    let missing = tmp.path().join("missing.toml");
    assert_eq!(
        run(&["run", "--config", missing.to_str().unwrap(), "--out", out])
            .status
            .code(),
        Some(2)
    );

    let cfg = scenarios().join("flat.toml");
    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--deflection",
        "-0.1",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn obstacle_without_adaptation_under_deflection_exits_4() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenarios().join("obstacle.toml");
    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--adaptation",
        "off",
        "--deflection",
        "0.07",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("touched down"), "{}", stderr(&o));
    // outputs are still written for diagnosis
    assert!(tmp.path().join("trace.csv").exists());
}

#[test]
fn seed_flag_overrides_and_runs_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "noisy.toml",
        "seed = 1\n[controller]\nnoise_amplitude = 0.0002\n",
    );
    let go = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let o = run(&[
            "run",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            o.status.code() == Some(0) || o.status.code() == Some(4),
            "{}",
            stderr(&o)
        );
        fs::read(out.join("trace.csv")).unwrap()
    };
    let a = go("5", "a");
    let b = go("5", "b");
    let c = go("6", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sweep_emits_one_row_per_cell() {
    let tmp = TempDir::new().unwrap();
    let spec = write(
        tmp.path(),
        "grid.toml",
        "[grid]\ndeflection = [0.0, 0.07]\nadaptation = [true, false]\n",
    );
    let cfg = scenarios().join("flat.toml");
    let o = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--sweep",
        &spec,
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    // the 7 cm cell without adaptation fails by design
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("0,off,"));
    assert!(rows[3].starts_with("0.07,on,"));
    assert!(rows[3].contains(",true,"));
}

#[test]
fn obstacle_and_slope_sweeps_succeed() {
    let cfg = scenarios().join("flat.toml");
    for spec in ["sweep_obstacle.toml", "sweep_slope.toml"] {
        let tmp = TempDir::new().unwrap();
        let spec = scenarios().join(spec);
        let o = run(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--sweep",
            spec.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
}

#[test]
fn validate_accepts_shipped_model() {
    let o = run(&["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("round trip"));
}

#[test]
fn validate_rejects_broken_models() {
    let tmp = TempDir::new().unwrap();
    let negative = write(
        tmp.path(),
        "negative.toml",
        &DEFAULT_MODEL_TOML.replace("shank_length = \"35 cm\"", "shank_length = \"-35 cm\""),
    );
    assert_eq!(
        run(&["validate", "--model", &negative]).status.code(),
        Some(2)
    );

    let bent = write(
        tmp.path(),
        "bent.toml",
        &DEFAULT_MODEL_TOML.replace("range = \"0..135 deg\"", "range = \"5..135 deg\""),
    );
    let o = run(&["validate", "--model", &bent]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("knee"), "{}", stderr(&o));

    // the environment variable stands in for --model
    let o = biped()
        .arg("validate")
        .env("BIPED_MODEL", &negative)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plot_writes_two_column_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenarios().join("obstacle.toml");
    let out = tmp.path().join("run");
    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let plots = tmp.path().join("plots");
    let o = run(&[
        "plot",
        "--trace",
        out.join("trace.csv").to_str().unwrap(),
        "--out",
        plots.to_str().unwrap(),
        "--columns",
        "true_z,phi_ce",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let z = fs::read_to_string(plots.join("true_z.dat")).unwrap();
    assert_eq!(z.lines().count(), 1761);
    for line in z.lines() {
        let cols: Vec<f64> = line.split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols.len(), 2);
    }
    assert!(plots.join("phi_ce.dat").exists());

    let o = run(&[
        "plot",
        "--trace",
        out.join("trace.csv").to_str().unwrap(),
        "--out",
        plots.to_str().unwrap(),
        "--columns",
        "nope",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
