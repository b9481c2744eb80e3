//! The `bayesdid` binary on synthetic panels.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bayesdid(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bayesdid"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Writes a synthetic spec and runs `simulate` into `sim/`.
fn simulate(dir: &Path, spec: &str) {
    fs::write(dir.join("synth.toml"), spec).unwrap();
    ok(&bayesdid(&["simulate", "--spec", "synth.toml", "-o", "sim"], dir));
}

const SMALL: &[&str] = &["--warmup", "400", "--draws", "400"];

#[test]
fn missing_data_file_exits_with_input_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = bayesdid(&["fit", "--data", "absent.csv", "--onset", "3", "--seed", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));
}

#[test]
fn missing_seed_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "seed = 1\n");
    let out = bayesdid(&["fit", "--data", "sim/panel.csv", "--onset", "6"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_recovers_generated_effect() {
    let dir = tempfile::tempdir().unwrap();
    simulate(
        dir.path(),
        "true_att = -0.5\ncell_noise_sd = 0.05\nexponentiate = true\nseed = 11\n",
    );
    let mut args = vec!["fit", "--data", "sim/panel.csv", "--onset", "6", "--seed", "3", "-o", "fit"];
    args.extend(SMALL);
    ok(&bayesdid(&args, dir.path()));
    let summary = json(dir.path().join("fit/posterior_summary.json"));
    let beta = summary["att"]["pooled"]["mean"].as_f64().unwrap();
    assert!((beta + 0.5).abs() < 0.05, "beta {beta}");
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["command"], "fit");
    assert!(summary["rhat"]["treated_post"].is_number());
    assert!(summary["config"]["sampler"]["draws"] == 400);

    let diag = json(dir.path().join("fit/diagnostics.json"));
    assert_eq!(diag["chains"].as_array().unwrap().len(), 4);
    let trends = fs::read_to_string(dir.path().join("fit/trends.csv")).unwrap();
    assert_eq!(trends.lines().count(), 11);
}

#[test]
fn null_panel_beta_near_zero() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "true_att = 0.0\nexponentiate = true\nseed = 12\n");
    let mut args = vec!["fit", "--data", "sim/panel.csv", "--onset", "6", "--seed", "4", "-o", "fit"];
    args.extend(SMALL);
    ok(&bayesdid(&args, dir.path()));
    let pooled = &json(dir.path().join("fit/posterior_summary.json"))["att"]["pooled"];
    let (lo, hi) = (pooled["lower95"].as_f64().unwrap(), pooled["upper95"].as_f64().unwrap());
    assert!(lo < 0.0 && 0.0 < hi, "[{lo}, {hi}]");
}

#[test]
fn sensitivity_orders_fixed_widths_and_flags_explosive_estimates() {
    let dir = tempfile::tempdir().unwrap();
    // Pre-period deviations growing geometrically drive rho_hat above 1.
    simulate(
        dir.path(),
        "num_periods = 12\nonset_period = 8\ncell_noise_sd = 0.01\nexponentiate = true\n\
         pre_deviations = [0.01, 0.02, 0.04, 0.08, 0.16, 0.32]\nseed = 13\n",
    );
    let eb_out = bayesdid(&["eb", "--data", "sim/panel.csv", "--onset", "8", "-o", "eb"], dir.path());
    ok(&eb_out);
    let eb = json(dir.path().join("eb/eb_estimate.json"));
    assert!(eb["estimate"]["rho_hat"].as_f64().unwrap() >= 1.0);

    let mut args = vec!["sensitivity", "--data", "sim/panel.csv", "--onset", "8", "--seed", "5", "-o", "sens"];
    args.extend(SMALL);
    ok(&bayesdid(&args, dir.path()));
    let report = json(dir.path().join("sens/sensitivity_summary.json"));
    let regimes = report["regimes"].as_array().unwrap();
    assert_eq!(regimes.len(), 9);
    let width = |name: &str| {
        let r = regimes.iter().find(|r| r["regime"] == name).unwrap();
        let t = &r["att"]["total_violation"];
        t["upper95"].as_f64().unwrap() - t["lower95"].as_f64().unwrap()
    };
    assert!(width("Fixed-1") < width("Fixed-2") && width("Fixed-2") < width("Fixed-3"));
    let eb1 = regimes.iter().find(|r| r["regime"] == "EB-1").unwrap();
    assert!(eb1["warning"].is_string(), "{eb1}");
    let fixed1 = regimes.iter().find(|r| r["regime"] == "Fixed-1").unwrap();
    assert!(fixed1["warning"].is_null());

    let csv = fs::read_to_string(dir.path().join("sens/att_by_regime.csv")).unwrap();
    assert!(csv.starts_with("regime,estimand,period,mean,sd,lower95,upper95,warning"));
    assert!(csv.lines().any(|l| l.starts_with("EB-1,violation,total,")));
}

#[test]
fn zero_deviation_regime_matches_parallel_trends() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "exponentiate = true\nseed = 14\n");
    fs::write(
        dir.path().join("run.toml"),
        r#"
data = "sim/panel.csv"
onset_period = 6
seed = 6
output_dir = "zero"

[sampler]
warmup = 400
draws = 400

[regime_inline]
name = "zero"
kind = "fixed"
eta = { dist = "fixed", value = 0.0 }
rho = { dist = "fixed", value = 0.5 }
sigma = { dist = "fixed", value = 0.0 }
"#,
    )
    .unwrap();
    ok(&bayesdid(&["sensitivity", "-c", "run.toml"], dir.path()));
    let report = json(dir.path().join("zero/sensitivity_summary.json"));
    let pt = &report["parallel_trends"]["total_pt"];
    let v = &report["regimes"][0]["att"]["total_violation"];
    assert_eq!(pt, v);
}

#[test]
fn tipping_writes_curve_and_crossing() {
    let dir = tempfile::tempdir().unwrap();
    simulate(
        dir.path(),
        "num_periods = 12\nonset_period = 6\ntrue_att = -0.5\ncell_noise_sd = 0.02\nexponentiate = true\nseed = 15\n",
    );
    let mut args = vec![
        "tipping", "--data", "sim/panel.csv", "--onset", "6", "--seed", "7", "--regime", "Fixed-1",
        "--eta-min", "-0.5", "--eta-max", "0", "--eta-points", "21", "--baseline-ounces", "4.85e6", "-o", "tip",
    ];
    args.extend(SMALL);
    ok(&bayesdid(&args, dir.path()));
    let t = json(dir.path().join("tip/tipping.json"));
    assert_eq!(t["monotone"], true);
    let star = t["eta_star"].as_f64().expect("crossing");
    assert!((-0.5..0.0).contains(&star));
    assert!(t["cans_at_star"].as_f64().unwrap() > 0.0);
    let curve = fs::read_to_string(dir.path().join("tip/tipping_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 22);
}

#[test]
fn tipping_rejects_regime_all() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "exponentiate = true\nseed = 16\n");
    let out = bayesdid(
        &["tipping", "--data", "sim/panel.csv", "--onset", "6", "--seed", "1", "--regime", "all", "--eta-grid", "-1,0"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn strict_convergence_exits_three_after_writing_reports() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "exponentiate = true\nseed = 17\n");
    // a handful of draws cannot meet the R-hat bar
    let out = bayesdid(
        &[
            "fit", "--data", "sim/panel.csv", "--onset", "6", "--seed", "1", "--warmup", "20", "--draws", "8",
            "--max-tree-depth", "1", "--strict-convergence", "-o", "strict",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("strict/posterior_summary.json").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "sead = 3\n").unwrap();
    let out = bayesdid(&["fit", "-c", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn regimes_lists_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = bayesdid(&["regimes"], dir.path());
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["Fixed-1", "Fully-3", "EB-3"] {
        assert!(text.contains(name));
    }
    let out = bayesdid(&["regimes", "--json"], dir.path());
    let list: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(list[0]["name"], "Fixed-1");
}

#[test]
fn thread_count_does_not_change_reports() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "exponentiate = true\nseed = 18\n");
    let run = |threads: &str| {
        let mut args = vec!["--threads", threads, "fit", "--data", "sim/panel.csv", "--onset", "6", "--seed", "8", "-o", "t"];
        args.extend(SMALL);
        ok(&bayesdid(&args, dir.path()));
        fs::read(dir.path().join("t/posterior_summary.json")).unwrap()
    };
    assert_eq!(run("1"), run("3"));
}
