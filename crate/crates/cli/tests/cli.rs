use std::path::{Path, PathBuf};
use std::process::Command as Process;

use otng_cli::commands::{mean_std, run_compare, run_geodesic, run_metric};
use otng_cli::config::{Command, ExperimentConfig};
use otng_cli::table::read_artifact;
use otng_cli::{execute, CliError};

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn otng(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_otng")).args(args).output().unwrap()
}

const COMPARE: &str = r#"{"family": {"kind": "gaussian-mixture-logit"}, "grid": {"radius": 40, "points": 2000},
    "trials": 5, "samples": 100, "seed": 3}"#;

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", COMPARE);
    let a = execute(Command::Compare, &cfg, None, Some(&dir.path().join("a"))).unwrap();
    let b = execute(Command::Compare, &cfg, None, Some(&dir.path().join("b"))).unwrap();
    assert_eq!(a.len(), 3);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn seed_override_changes_the_trials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", COMPARE);
    let a = execute(Command::Compare, &cfg, None, Some(&dir.path().join("a"))).unwrap();
    let b = execute(Command::Compare, &cfg, Some(4), Some(&dir.path().join("b"))).unwrap();
    let (sa, _, ra) = read_artifact(&std::fs::read_to_string(&a[0]).unwrap()).unwrap();
    let (sb, _, rb) = read_artifact(&std::fs::read_to_string(&b[0]).unwrap()).unwrap();
    assert!(sa.ends_with("seed=3") && sb.ends_with("seed=4"));
    assert_ne!(ra, rb);
}

#[test]
fn artifacts_carry_a_stamp_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.json", r#"{"family": {"kind": "gaussian"}, "theta0": [0, 1]}"#);
    let files = execute(Command::Metric, &cfg, None, Some(dir.path())).unwrap();
    let text = std::fs::read_to_string(&files[0]).unwrap();
    let first = text.lines().next().unwrap();
    let hash = first.strip_prefix("# config_hash=").unwrap().split(' ').next().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    assert!(first.ends_with("seed=none"));
    assert_eq!(text.lines().nth(1).unwrap(), "tensor,row,mu,sigma");
}

#[test]
fn metric_values_round_trip_through_csv() {
    let cfg = ExperimentConfig::parse(
        r#"{"family": {"kind": "gaussian-mixture"}, "theta0": [0.3, -3, 0.25, -5, 0.16], "theta1": [0.4, -2, 0.5, -4, 0.3]}"#,
    )
    .unwrap();
    let report = run_metric(&cfg).unwrap();
    assert_eq!(report.tensors.len(), 4);
    let dir = tempfile::tempdir().unwrap();
    let stamp = otng_cli::table::Stamp::new(&cfg.canonical(), None);
    let path = report.artifacts[0].write(dir.path(), &stamp).unwrap();
    let (_, header, rows) = read_artifact(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(header.len(), 7);
    for (name, t) in &report.tensors {
        let mine: Vec<&Vec<String>> = rows.iter().filter(|r| &r[0] == name).collect();
        assert_eq!(mine.len(), 5);
        for (r, row) in mine.iter().enumerate() {
            for c in 0..5 {
                let v: f64 = row[c + 2].parse().unwrap();
                let e = t.matrix()[(r, c)];
                assert!((v - e).abs() <= 1e-12 * e.abs().max(1e-300), "{name}[{r},{c}]: {v} vs {e}");
            }
        }
    }
}

#[test]
fn compare_summary_is_recomputable_from_trials() {
    let cfg = ExperimentConfig::parse(COMPARE).unwrap();
    let report = run_compare(&cfg).unwrap();
    assert_eq!(report.outcomes.len(), 5 * 3);
    for s in &report.summaries {
        let objs: Vec<f64> = report.outcomes.iter().filter(|o| o.scheme == s.scheme && o.completed()).map(|o| o.final_objective).collect();
        let (mean, std) = mean_std(&objs);
        assert_eq!(mean, s.objective_mean);
        assert_eq!(std, s.objective_std);
        assert_eq!(s.converged + s.line_search_failed + s.max_iterations + s.rejected, s.trials);
    }
    for counts in &report.bin_counts {
        assert_eq!(counts.len(), 20);
    }
    let total: usize = report.bin_counts.iter().flatten().sum();
    assert_eq!(total, report.outcomes.iter().filter(|o| o.final_objective.is_finite()).count());
}

#[test]
fn mean_std_uses_the_sample_convention() {
    let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - f64::sqrt(5.0 / 3.0)).abs() < 1e-15);
    assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    assert!(mean_std(&[]).0.is_nan());
}

#[test]
fn degenerate_ranges_start_at_the_truth() {
    // the data is a sample, so the start is optimal only up to sampling noise in the gradient
    let cfg = ExperimentConfig::parse(
        r#"{"family": {"kind": "gaussian"}, "grid": {"radius": 15, "points": 2000}, "trials": 3, "samples": 5000, "seed": 1,
            "ranges": {"model": [[1, 1], [2, 2]], "truth": [[1, 1], [2, 2]]}}"#,
    )
    .unwrap();
    let report = run_compare(&cfg).unwrap();
    for o in &report.outcomes {
        assert!(o.iterations <= 1, "{o:?}");
        assert_eq!(o.termination, "converged");
    }
}

#[test]
fn geodesic_between_equal_endpoints_is_trivial() {
    let cfg = ExperimentConfig::parse(
        r#"{"family": {"kind": "gamma"}, "grid": {"radius": 30, "points": 2000}, "theta0": [3, 2], "theta1": [3, 2]}"#,
    )
    .unwrap();
    let report = run_geodesic(&cfg).unwrap();
    assert_eq!(report.path.energy, 0.0);
    assert!(report.w2_squared.abs() < 1e-12);
    assert!(report.sup_gaps.iter().all(|&g| g < 1e-12));
}

#[test]
fn gaussian_geodesic_matches_displacement_interpolation() {
    let cfg = ExperimentConfig::parse(r#"{"family": {"kind": "gaussian"}, "theta0": [-2, 0.5], "theta1": [3, 2]}"#).unwrap();
    let report = run_geodesic(&cfg).unwrap();
    assert_eq!(report.times.len(), 11);
    assert!(report.sup_gaps.iter().all(|&g| g < 1e-2), "{:?}", report.sup_gaps);
}

#[test]
fn unknown_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"family": {"kind": "gaussian"}, "theta0": [0, 1], "thetta1": [1, 1]}"#);
    let err = execute(Command::Metric, &cfg, None, Some(dir.path())).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    let out = otng(&["metric", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(otng(&["metric", "--config", missing.to_str().unwrap(), "--out", d]).status.code(), Some(1));

    let wrong = write_config(dir.path(), "w.json", r#"{"command": "fit", "family": {"kind": "gaussian"}, "theta0": [0, 1]}"#);
    assert_eq!(otng(&["metric", "--config", wrong.to_str().unwrap(), "--out", d]).status.code(), Some(2));

    let no_seed =
        write_config(dir.path(), "s.json", r#"{"family": {"kind": "gaussian"}, "theta0": [0, 1], "theta1": [1, 1], "samples": 10}"#);
    assert_eq!(otng(&["fit", "--config", no_seed.to_str().unwrap(), "--out", d]).status.code(), Some(2));

    let outside = write_config(dir.path(), "o.json", r#"{"family": {"kind": "gaussian"}, "theta0": [0, -1]}"#);
    assert_eq!(otng(&["metric", "--config", outside.to_str().unwrap(), "--out", d]).status.code(), Some(2));

    let ok = write_config(dir.path(), "ok.json", r#"{"family": {"kind": "gaussian"}, "theta0": [0, 1]}"#);
    let out = otng(&["metric", "--config", ok.to_str().unwrap(), "--out", d]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
}

#[test]
fn fixed_slots_shrink_the_parameter_vector() {
    let cfg = ExperimentConfig::parse(r#"{"family": {"kind": "gaussian", "fixed": {"sigma": 2}}, "theta0": [1]}"#).unwrap();
    let report = run_metric(&cfg).unwrap();
    let g = report.tensors[0].1.matrix();
    assert_eq!(g.nrows(), 1);
    assert!((g[(0, 0)] - 1.0).abs() < 1e-6);
    assert!(ExperimentConfig::parse(r#"{"family": {"kind": "gaussian", "fixed": {"nu": 2}}, "theta0": [1]}"#)
        .and_then(|c| run_metric(&c))
        .is_err());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert!(cfg.command.is_some(), "{}", path.display());
        cfg.family.spec().unwrap();
        seen += 1;
    }
    assert!(seen >= 4);
}

#[test]
fn canonical_form_is_stable_under_reformatting() {
    let a = ExperimentConfig::parse(r#"{"family":{"kind":"gaussian"},"theta0":[0,1]}"#).unwrap();
    let b = ExperimentConfig::parse("{\n  \"theta0\": [0.0, 1.0],\n  \"family\": {\"kind\": \"gaussian\"}\n}").unwrap();
    assert_eq!(a.canonical(), b.canonical());
}
