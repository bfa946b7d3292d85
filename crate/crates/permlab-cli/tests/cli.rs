//! End-to-end tests of the `permlab` binary: documented invocations, output
//! formats, determinism guarantees, and exit codes.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::{Command, Output};

fn permlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permlab"))
        .args(args)
        .env_remove("PERMLAB_SEED")
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

/// Parse a `key,value` CSV body into a map.
fn kv(out: &Output) -> HashMap<String, String> {
    let text = stdout_of(out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("key,value"), "kv header in {text:?}");
    lines
        .map(|l| {
            let (k, v) = l.split_once(',').expect("two columns");
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn num(map: &HashMap<String, String>, key: &str) -> f64 {
    map[key].parse().unwrap_or_else(|_| panic!("numeric {key}, got {:?}", map[key]))
}

fn tmp_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

#[test]
fn tsigma_exact_prints_the_block_closed_form() {
    let out = permlab(&[
        "tsigma", "--mu", "builtin:mu_ell", "--ell", "0.5", "--sigma", "21", "--exact",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout_of(&out), "0.375\n");
}

#[test]
fn solve_at_zero_tilt_returns_the_base_in_one_iteration() {
    let out = permlab(&[
        "solve", "--mu", "builtin:lebesgue", "--sigma", "21", "--theta", "0", "--m", "64",
    ]);
    assert!(out.status.success());
    let map = kv(&out);
    assert_eq!(map["free_energy"], "0");
    assert_eq!(map["t_sigma"], "0.5");
    assert_eq!(map["iterations"], "1");
    assert_eq!(map["converged"], "true");
}

#[test]
fn xi_reports_magnetization_and_both_weight_pairs() {
    let out = permlab(&["xi", "--theta", "2"]);
    assert!(out.status.success());
    let map = kv(&out);
    assert!((num(&map, "m2") - 0.9575040240772688).abs() < 1e-12);
    assert_eq!(map["optimizers"], "2");
    let w1: Vec<f64> = map["optimizer_1_weights"]
        .split(' ')
        .map(|v| v.parse().unwrap())
        .collect();
    let w2: Vec<f64> = map["optimizer_2_weights"]
        .split(' ')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((w1[0] - (1.0 + 0.9575040240772688) / 2.0).abs() < 1e-12);
    assert!((w1[0] - w2[1]).abs() < 1e-15);
    assert!((w1[1] - w2[0]).abs() < 1e-15);
}

#[test]
fn xi_below_threshold_has_a_single_symmetric_optimizer() {
    let out = permlab(&["xi", "--theta", "0.5"]);
    assert!(out.status.success());
    let map = kv(&out);
    assert_eq!(map["m2"], "0");
    assert_eq!(map["optimizers"], "1");
    assert_eq!(map["optimizer_1_weights"], "0.5 0.5");
}

#[test]
fn json_envelope_carries_version_hash_and_data() {
    let out = permlab(&[
        "tsigma", "--mu", "builtin:mu_ell", "--ell", "0.5", "--sigma", "21", "--exact",
        "--format", "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout_of(&out)).expect("valid json");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    let hash = v["spec_hash"].as_str().expect("hash string");
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(v["data"]["value"], 0.375);
}

#[test]
fn identical_run_configs_are_byte_identical() {
    let args = [
        "gibbs", "--mu", "builtin:lebesgue", "--sigma", "21", "--theta", "1", "--n", "12",
        "--samples", "200", "--chains", "2", "--seed", "42",
    ];
    let a = permlab(&args);
    let b = permlab(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn job_count_does_not_change_results() {
    let base = [
        "phase-scan", "--ell", "0", "--delta", "0.55,0.6", "--m", "16",
    ];
    let one = permlab(&[&base[..], &["--jobs", "1"]].concat());
    let four = permlab(&[&base[..], &["--jobs", "4"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    let text = stdout_of(&one);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("ell,delta,clusters,G,separated,d11,d22,offdiag")
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn seed_env_var_is_the_default_seed() {
    let flagged = permlab(&[
        "sample", "--mu", "builtin:lebesgue", "--n", "8", "--count", "2", "--seed", "7",
    ]);
    let from_env = Command::new(env!("CARGO_BIN_EXE_permlab"))
        .args(["sample", "--mu", "builtin:lebesgue", "--n", "8", "--count", "2"])
        .env("PERMLAB_SEED", "7")
        .output()
        .expect("binary runs");
    assert!(flagged.status.success());
    assert_eq!(flagged.stdout, from_env.stdout);
}

#[test]
fn output_flag_writes_the_same_bytes_as_stdout() {
    let path = tmp_path("tsigma_out.csv");
    let to_stdout = permlab(&[
        "tsigma", "--mu", "builtin:xi", "--sigma", "21", "--exact",
    ]);
    let to_file = permlab(&[
        "tsigma", "--mu", "builtin:xi", "--sigma", "21", "--exact",
        "--output", path.to_str().unwrap(),
    ]);
    assert!(to_file.status.success());
    assert!(to_file.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), to_stdout.stdout);
    assert_eq!(stdout_of(&to_stdout), "0.5\n");
}

#[test]
fn spec_files_load_like_builtins() {
    let path = tmp_path("mu_half.json");
    std::fs::write(
        &path,
        r#"{"type":"builtin","name":"mu_ell","params":{"ell":0.5}}"#,
    )
    .unwrap();
    let out = permlab(&["tsigma", "--mu", path.to_str().unwrap(), "--sigma", "21", "--exact"]);
    assert!(out.status.success());
    assert_eq!(stdout_of(&out), "0.375\n");
}

#[test]
fn density_out_round_trips_as_an_input_spec() {
    let path = tmp_path("optimizer.json");
    let solved = permlab(&[
        "solve", "--mu", "builtin:lebesgue", "--sigma", "21", "--theta", "0.5",
        "--m", "16", "--density-out", path.to_str().unwrap(),
    ]);
    assert!(solved.status.success());
    let t_solve = num(&kv(&solved), "t_sigma");
    let reread = permlab(&["tsigma", "--mu", path.to_str().unwrap(), "--sigma", "21", "--exact"]);
    assert!(reread.status.success());
    let t_file: f64 = stdout_of(&reread).trim().parse().unwrap();
    assert!((t_solve - t_file).abs() < 1e-12, "{t_solve} vs {t_file}");
}

#[test]
fn pmf_table_is_a_probability_distribution() {
    let out = permlab(&["pmf", "--sigma", "21", "--theta", "0.5", "--n", "4"]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("perm,prob"));
    let probs: Vec<f64> = lines
        .map(|l| l.split_once(',').unwrap().1.parse().unwrap())
        .collect();
    assert_eq!(probs.len(), 24);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn cc_check_classifies_rect_and_lebesgue() {
    let rect = kv(&permlab(&["cc-check", "--mu", "builtin:rect_z", "--z", "0.3"]));
    assert_eq!(rect["verdict"], "cc");
    assert!((num(&rect, "constant") - 0.3).abs() < 1e-9);
    let unif = kv(&permlab(&["cc-check", "--mu", "builtin:lebesgue"]));
    assert_eq!(unif["verdict"], "cnc");
}

#[test]
fn support_diag_recovers_the_xi_frontier() {
    let map = kv(&permlab(&["support-diag", "--mu", "builtin:xi"]));
    assert_eq!(map["has_interior_mass"], "false");
    assert!((num(&map, "frontier_intercept") - 0.5).abs() < 1e-9);
    assert_eq!(map["mass_below_frontier"], "0");
}

#[test]
fn mallows_summary_reports_a_small_residual() {
    let map = kv(&permlab(&["mallows", "--theta", "1", "--m", "32", "--h", "0.002"]));
    assert!(num(&map, "t_21") > 0.5);
    assert!(num(&map, "el_residual") < 1e-3);
}

#[test]
fn validation_failures_exit_2() {
    let bad_builtin = permlab(&["tsigma", "--mu", "builtin:nonsense", "--sigma", "21", "--exact"]);
    assert_eq!(bad_builtin.status.code(), Some(2));
    let missing_param = permlab(&["tsigma", "--mu", "builtin:mu_ell", "--sigma", "21", "--exact"]);
    assert_eq!(missing_param.status.code(), Some(2));
    let unknown = permlab(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));
    let stray_param = permlab(&[
        "tsigma", "--mu", "builtin:lebesgue", "--z", "0.5", "--sigma", "21", "--exact",
    ]);
    assert_eq!(stray_param.status.code(), Some(2));
}

#[test]
fn unattainable_targets_exit_3() {
    let out = permlab(&[
        "condition", "--mu", "builtin:lebesgue", "--sigma", "21",
        "--delta", "0.999", "--m", "8",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("unattainable"), "stderr: {err}");
}

#[test]
fn strict_escalates_soft_nonconvergence_to_exit_3() {
    let lax = permlab(&[
        "solve", "--mu", "builtin:lebesgue", "--sigma", "21", "--theta", "2",
        "--m", "16", "--max-iter", "5",
    ]);
    assert_eq!(lax.status.code(), Some(0));
    assert_eq!(kv(&lax)["converged"], "false");
    let strict = permlab(&[
        "solve", "--mu", "builtin:lebesgue", "--sigma", "21", "--theta", "2",
        "--m", "16", "--max-iter", "5", "--strict",
    ]);
    assert_eq!(strict.status.code(), Some(3));
    assert_eq!(kv(&strict)["converged"], "false");
}

#[test]
fn diagnostics_stay_off_the_data_stream() {
    let out = permlab(&[
        "solve", "--mu", "builtin:lebesgue", "--sigma", "21", "--theta", "2",
        "--m", "16", "--max-iter", "5",
    ]);
    let text = stdout_of(&out);
    assert!(text.starts_with("key,value"), "stdout is pure data: {text:?}");
    assert!(!text.contains("warning"));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("not converged"));
}
