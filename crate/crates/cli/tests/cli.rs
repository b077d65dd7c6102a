use std::path::Path;

use clap::Parser;
use formation_cli::{execute, Cli};

fn run(args: &[&str]) -> anyhow::Result<i32> {
    let mut argv = vec!["formation"];
    argv.extend_from_slice(args);
    execute(&Cli::try_parse_from(argv).expect("argument parsing"))
}

const ARTIFACTS: [&str; 6] = [
    "trace.csv",
    "summary.toml",
    "report.toml",
    "trajectories.svg",
    "errors.svg",
    "velocities.svg",
];

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn run_sim1_emits_all_artifacts_and_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let code = run(&["run", "sim1", "--assert-convergence", "--out", out.to_str().unwrap()])
        .unwrap();
    assert_eq!(code, 0);
    for name in ARTIFACTS {
        assert!(out.join(name).exists(), "missing {name}");
    }
    // t_end = 30, h = 1e-3, decimation = 10: 3001 samples plus the header.
    let trace = read(&out, "trace.csv");
    assert_eq!(trace.lines().count(), 3002);
    let header = trace.lines().next().unwrap();
    assert!(header.starts_with("t,p1_x,p1_y,"));
    assert!(header.ends_with(",snorm"));
    let summary = read(&out, "summary.toml");
    assert!(summary.contains("status = \"PASS\""));
    assert!(summary.contains("rank = 7"));
    let report = read(&out, "report.toml");
    assert!(report.contains("status = \"PASS\""));
    for name in ["trajectories.svg", "errors.svg", "velocities.svg"] {
        let svg = read(&out, name);
        assert!(svg.starts_with("<svg "), "{name} is not an SVG");
        assert!(svg.contains("<polyline"), "{name} has no curves");
    }
}

#[test]
fn decimation_override_controls_trace_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let code = run(&["run", "sim1", "--decimation", "100", "--out", out.to_str().unwrap()])
        .unwrap();
    assert_eq!(code, 0);
    // floor(30 / (1e-3 * 100)) + 1 = 301 samples plus the header.
    assert_eq!(read(&out, "trace.csv").lines().count(), 302);
}

#[test]
fn same_seed_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let code = run(&["run", "sim1", "--seed", "42", "--out", dir.to_str().unwrap()]).unwrap();
        assert_eq!(code, 0);
    }
    for name in ARTIFACTS {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn different_seeds_give_different_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&["run", "sim1", "--seed", "1", "--out", a.to_str().unwrap()]).unwrap();
    run(&["run", "sim1", "--seed", "2", "--out", b.to_str().unwrap()]).unwrap();
    assert_ne!(read(&a, "trace.csv"), read(&b, "trace.csv"));
}

#[test]
fn literal_estimator_run_exits_nonzero_with_divergence_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let code = run(&[
        "run",
        "sim2",
        "--law-flag",
        "paper-literal-estimator",
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();
    assert_eq!(code, 3, "divergent run must exit nonzero");
    let report = read(&out, "report.toml");
    assert!(report.contains("status = \"FAIL\""));
    assert!(report.contains("estimator_growth"));
}

#[test]
fn check_accepts_both_bundled_scenarios() {
    assert_eq!(run(&["check", "sim1"]).unwrap(), 0);
    assert_eq!(run(&["check", "sim2"]).unwrap(), 0);
}

#[test]
fn check_rejects_invalid_gains_from_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    let text = formation_core::scenario::builtin_toml("sim1")
        .unwrap()
        .replace("k2 = 2.0", "k2 = 1.5");
    std::fs::write(&path, text).unwrap();
    let err = run(&["check", path.to_str().unwrap()]).unwrap_err();
    assert!(err.to_string().contains("gain inequality"), "{err}");
}

#[test]
fn unknown_scenario_is_an_error() {
    let err = run(&["check", "no-such-scenario"]).unwrap_err();
    assert!(err.to_string().contains("no bundled scenario"), "{err}");
}

#[test]
fn rigidity_reports_a_nonrigid_formation_and_exits_nonzero() {
    // Drop one leader edge from the bundled formation: six directed
    // constraints cannot reach rank 7, so the formation is not rigid.
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("sixedge.toml");
    let text: String = formation_core::scenario::builtin_toml("sim1")
        .unwrap()
        .lines()
        .filter(|l| !(l.contains("from = 4") && l.contains("to = 1")))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&path, text).unwrap();
    // run refuses it outright
    let err = run(&["check", path.to_str().unwrap()]).unwrap_err();
    assert!(err.to_string().contains("not infinitesimally bearing rigid"), "{err}");
    // rigidity analyzes it anyway and flags the deficiency
    let code = run(&["rigidity", path.to_str().unwrap()]).unwrap();
    assert_eq!(code, 3);
}

#[test]
fn sweep_runs_all_seeds_and_aggregates() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let code = run(&[
        "sweep",
        "sim1",
        "--seeds",
        "3",
        "--seed-start",
        "5",
        "--assert-convergence",
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();
    assert_eq!(code, 0);
    for seed in 5..8 {
        let dir = out.join(format!("seed-{seed}"));
        for name in ARTIFACTS {
            assert!(dir.join(name).exists(), "seed {seed} missing {name}");
        }
    }
    let aggregate = read(&out, "aggregate.toml");
    assert!(aggregate.contains("runs = 3"));
    assert!(aggregate.contains("passed = 3"));
    assert!(aggregate.contains("seed = 7"));
}

#[test]
fn law_override_switches_controller() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    // Raise k2 so the estimator scenario's gains also satisfy the direct
    // law's reaching inequality, then force that law.
    let path = tmp.path().join("both-laws.toml");
    let text = formation_core::scenario::builtin_toml("sim2")
        .unwrap()
        .replace("k2 = 1.0", "k2 = 3.0");
    std::fs::write(&path, text).unwrap();
    let code = run(&[
        "run",
        path.to_str().unwrap(),
        "--law",
        "a",
        "--assert-convergence",
        "--out",
        out.to_str().unwrap(),
    ])
    .unwrap();
    assert_eq!(code, 0);
    let summary = read(&out, "summary.toml");
    assert!(summary.contains("law = \"A\""));
    // law A traces carry no estimator columns
    assert!(!read(&out, "trace.csv").lines().next().unwrap().contains("phat"));
}
