//! End-to-end tests of the command-line surface: JSON in, CSV/JSON out,
//! stable exit codes, reproducible bytes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bandalloc"))
}

fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

/// Two bands, two users; availabilities (0.25, 0.875), non-outage columns
/// (0.7, 0.8) and (0.85, 0.9).
fn two_band_config(dir: &Path) -> PathBuf {
    write(
        dir,
        "two_band.json",
        r#"{
  "bands": [
    { "pi": 0.25, "pout_bar_primary": 0.8 },
    { "pi": 0.875, "pout_bar_primary": 0.8 }
  ],
  "sus": [
    { "lambda": 0.2, "pout_bar": [0.7, 0.8] },
    { "lambda": 0.3, "pout_bar": [0.85, 0.9] }
  ]
}"#,
    )
}

/// Three bands, three users (the heavier third user pins band 3).
fn three_band_config(dir: &Path) -> PathBuf {
    write(
        dir,
        "three_band.json",
        r#"{
  "bands": [ { "pi": 0.45 }, { "pi": 0.2 }, { "pi": 0.6 } ],
  "sus": [
    { "lambda": 0.2,  "pout_bar": [0.6, 0.8, 0.7] },
    { "lambda": 0.1,  "pout_bar": [0.7, 0.6, 0.8] },
    { "lambda": 0.35, "pout_bar": [0.6, 0.8, 0.7] }
  ]
}"#,
    )
}

fn four_band_config(dir: &Path) -> PathBuf {
    write(
        dir,
        "four_band.json",
        r#"{
  "bands": [
    { "pi": 0.45, "pout_bar_primary": 0.9 },
    { "pi": 0.2,  "pout_bar_primary": 0.9 },
    { "pi": 0.6,  "pout_bar_primary": 0.9 },
    { "pi": 0.4,  "pout_bar_primary": 0.9 }
  ],
  "sus": [
    { "lambda": 0.1, "pout_bar": [0.6, 0.8, 0.7, 0.85] },
    { "lambda": 0.1, "pout_bar": [0.7, 0.6, 0.8, 0.9] },
    { "lambda": 0.1, "pout_bar": [0.6, 0.8, 0.7, 0.5] },
    { "lambda": 0.1, "pout_bar": [0.7, 0.5, 0.6, 0.95] }
  ]
}"#,
    )
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn region_traces_the_reference_envelope() {
    let dir = TempDir::new().unwrap();
    let config = two_band_config(dir.path());
    let out_csv = dir.path().join("region.csv");

    let out = bin()
        .args(["region", "--config"])
        .arg(&config)
        .args(["--target", "s2", "--sweep", "s1", "--grid", "101", "--out"])
        .arg(&out_csv)
        .output()
        .unwrap();
    assert_success(&out);

    let text = std::fs::read_to_string(&out_csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lambda_sweep,lambda_target_max,feasible,epsilon");
    assert_eq!(lines.len(), 102);

    // Intercepts (0, 0.7875) and (0.7, 0.2125).
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0], "0");
    assert!((first[1].parse::<f64>().unwrap() - 0.7875).abs() < 1e-9);
    let last: Vec<&str> = lines[101].split(',').collect();
    assert!((last[0].parse::<f64>().unwrap() - 0.7).abs() < 1e-9);
    assert!((last[1].parse::<f64>().unwrap() - 0.2125).abs() < 1e-9);
    // 2x2 queries carry the closed-form epsilon.
    assert!((last[3].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);

    // Sibling manifest with the config digest.
    let manifest = std::fs::read_to_string(dir.path().join("region.csv.manifest.json")).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(manifest["generator"], "chacha12");
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);

    // Re-running produces identical bytes.
    let rerun = bin()
        .args(["region", "--config"])
        .arg(&config)
        .args(["--target", "s2", "--sweep", "s1", "--grid", "101", "--out"])
        .arg(&out_csv)
        .output()
        .unwrap();
    assert_success(&rerun);
    assert_eq!(text, std::fs::read_to_string(&out_csv).unwrap());
}

#[test]
fn region_cross_checks_the_swapped_two_user_query_too() {
    let dir = TempDir::new().unwrap();
    let config = two_band_config(dir.path());
    let out_csv = dir.path().join("swapped.csv");
    // Maximize user 1 while sweeping user 2: the closed form still applies
    // with the user columns swapped, so epsilon must be populated.
    let out = bin()
        .args(["region", "--config"])
        .arg(&config)
        .args(["--target", "s1", "--sweep", "s2", "--grid", "11", "--out"])
        .arg(&out_csv)
        .output()
        .unwrap();
    assert_success(&out);
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    // The sweep tops out at user 2's solo maximum 0.7875; serving that
    // pins user 2 to band 2, leaving user 1 with band 1's 0.175.
    assert!((last[0].parse::<f64>().unwrap() - 0.7875).abs() < 1e-9);
    assert!((last[1].parse::<f64>().unwrap() - 0.175).abs() < 1e-9);
    assert!(!last[3].is_empty(), "epsilon column filled on 2x2: {last:?}");
}

#[test]
fn region_grid_two_gives_only_the_intercepts() {
    let dir = TempDir::new().unwrap();
    let config = two_band_config(dir.path());
    let out_csv = dir.path().join("tiny.csv");
    let out = bin()
        .args(["region", "--config"])
        .arg(&config)
        .args(["--target", "s2", "--sweep", "s1", "--grid", "2", "--out"])
        .arg(&out_csv)
        .output()
        .unwrap();
    assert_success(&out);
    assert_eq!(std::fs::read_to_string(&out_csv).unwrap().lines().count(), 3);
}

#[test]
fn region_rejects_unsupportable_fixed_rates() {
    let dir = TempDir::new().unwrap();
    let config = four_band_config(dir.path());
    let out = bin()
        .args(["region", "--config"])
        .arg(&config)
        .args(["--target", "s2", "--sweep", "s1", "--fixed", "s3=0.9", "--out"])
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "infeasible fixed rates exit with 3");
}

#[test]
fn broken_config_reports_every_problem_at_once() {
    let dir = TempDir::new().unwrap();
    let config = write(
        dir.path(),
        "broken.json",
        r#"{
  "bands": [ { "pi": 1.5 }, {} ],
  "sus": [ { "lambda": -0.1, "pout_bar": [0.5, 0.5] }, { "lambda": 0.2 } ]
}"#,
    );
    let out = bin()
        .args(["region", "--config"])
        .arg(&config)
        .args(["--target", "s2", "--sweep", "s1", "--out"])
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("pi = 1.5"), "stderr: {stderr}");
    assert!(stderr.contains("band 2"), "stderr: {stderr}");
    assert!(stderr.contains("lambda = -0.1"), "stderr: {stderr}");
    assert!(stderr.contains("user 2"), "stderr: {stderr}");
}

#[test]
fn physical_and_direct_parameters_must_agree() {
    let dir = TempDir::new().unwrap();
    // mu_p = exp(-(2^(b/(T W)) - 1)/(gamma sigma2)) = exp(-0.1) ~ 0.9048,
    // so pi = 1 - 0.3/0.9048 ~ 0.6684; the stated pi = 0.5 disagrees.
    let config = write(
        dir.path(),
        "mixed.json",
        r#"{
  "slot": { "T": 1e-3, "tau": 1e-4, "b": 1000 },
  "bands": [
    { "W": 1e6, "lambda_p": 0.3, "gamma_p": 10.0, "sigma2_p": 1.0, "pi": 0.5 }
  ],
  "sus": [ { "lambda": 0.1, "gamma": 10.0, "sigma2": 1.0 } ]
}"#,
    );
    let out = bin()
        .args(["region", "--config"])
        .arg(&config)
        .args(["--target", "s1", "--sweep", "s1", "--out"])
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("disagrees"));
}

#[test]
fn physical_config_resolves_and_sweeps() {
    let dir = TempDir::new().unwrap();
    let config = write(
        dir.path(),
        "physical.json",
        r#"{
  "slot": { "T": 1e-3, "tau": 1e-4, "b": 1000 },
  "bands": [
    { "W": 1e6, "lambda_p": 0.3, "gamma_p": 10.0, "sigma2_p": 1.0 },
    { "W": 2e6, "lambda_p": 0.1, "gamma_p": 5.0, "sigma2_p": 1.0 }
  ],
  "sus": [
    { "lambda": 0.1, "gamma": 10.0, "sigma2": 1.0 },
    { "lambda": 0.1, "gamma": 8.0, "sigma2": [1.0, 2.0] }
  ]
}"#,
    );
    let out_csv = dir.path().join("phys.csv");
    let out = bin()
        .args(["region", "--config"])
        .arg(&config)
        .args(["--target", "s2", "--sweep", "s1", "--grid", "11", "--out"])
        .arg(&out_csv)
        .output()
        .unwrap();
    assert_success(&out);
    assert_eq!(std::fs::read_to_string(&out_csv).unwrap().lines().count(), 12);
}

#[test]
fn decompose_writes_a_valid_schedule_and_rejects_exterior_points() {
    let dir = TempDir::new().unwrap();
    let config = two_band_config(dir.path());
    let sched = dir.path().join("schedule.json");

    let out = bin()
        .args(["decompose", "--config"])
        .arg(&config)
        .args(["--rates", "s1=0.5,s2=0.43", "--out"])
        .arg(&sched)
        .output()
        .unwrap();
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("reconstruction error"), "stdout: {stdout}");

    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sched).unwrap()).unwrap();
    assert_eq!(doc["num_bands"], 2);
    assert_eq!(doc["num_sus"], 2);
    assert!(doc["reconstruction_error"].as_f64().unwrap() < 1e-9);
    let terms = doc["terms"].as_array().unwrap();
    let total: f64 = terms.iter().map(|t| t["q"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9, "weights sum to {total}");
    for term in terms {
        let assignment = term["assignment"].as_array().unwrap();
        assert_eq!(assignment.len(), 2, "one band per real user");
    }
    assert!(doc["manifest"]["config_digest"].is_string());

    // A point outside the region is an infeasibility, exit code 3.
    let out = bin()
        .args(["decompose", "--config"])
        .arg(&config)
        .args(["--rates", "s1=0.71,s2=0.1", "--out"])
        .arg(dir.path().join("no.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn decompose_shifts_mass_towards_the_contested_band() {
    let dir = TempDir::new().unwrap();
    let config = three_band_config(dir.path());

    // Band 3 has user 2's best success probability (0.6 * 0.8 = 0.48). As
    // user 2's rate grows towards the boundary, the schedule must hand it
    // band 3 increasingly often.
    let marginal_band3 = |rate: &str| -> f64 {
        let sched = dir.path().join(format!("sched_{rate}.json"));
        let out = bin()
            .args(["decompose", "--config"])
            .arg(&config)
            .args(["--rates", &format!("s2={rate}"), "--out"])
            .arg(&sched)
            .output()
            .unwrap();
        assert_success(&out);
        let doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&sched).unwrap()).unwrap();
        doc["terms"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|t| t["assignment"][1] == 3)
            .map(|t| t["q"].as_f64().unwrap())
            .sum()
    };

    let low = marginal_band3("0.1");
    let mid = marginal_band3("0.31");
    let high = marginal_band3("0.33");
    assert!(low <= mid + 1e-9 && mid <= high + 1e-9, "{low} <= {mid} <= {high}");
    assert!(high > low + 0.05, "mass must actually shift ({low} -> {high})");
}

#[test]
fn decompose_identity_dominant_instance_gives_one_term() {
    let dir = TempDir::new().unwrap();
    // Each user's own band dominates, so the margin-maximizing marginals
    // are the identity permutation: a single schedule term.
    let config = write(
        dir.path(),
        "diag.json",
        r#"{
  "bands": [ { "pi": 0.9 }, { "pi": 0.9 } ],
  "sus": [
    { "lambda": 0.3, "pout_bar": [1.0, 0.1] },
    { "lambda": 0.3, "pout_bar": [0.1, 1.0] }
  ]
}"#,
    );
    let sched = dir.path().join("diag_schedule.json");
    let out = bin()
        .args(["decompose", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(&sched)
        .output()
        .unwrap();
    assert_success(&out);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sched).unwrap()).unwrap();
    let terms = doc["terms"].as_array().unwrap();
    assert_eq!(terms.len(), 1, "terms: {terms:?}");
    assert_eq!(terms[0]["assignment"], serde_json::json!([1, 2]));
}

#[test]
fn simulate_schedule_round_trip_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let config = two_band_config(dir.path());
    let sched = dir.path().join("schedule.json");
    let out = bin()
        .args(["decompose", "--config"])
        .arg(&config)
        .args(["--rates", "s1=0.4,s2=0.35", "--out"])
        .arg(&sched)
        .output()
        .unwrap();
    assert_success(&out);

    let prefix = dir.path().join("run");
    let simulate = |prefix: &Path| {
        let out = bin()
            .args(["simulate", "--config"])
            .arg(&config)
            .args(["--variant", "s", "--schedule"])
            .arg(&sched)
            .args(["--horizon", "20000", "--seeds", "7,8", "--out"])
            .arg(prefix)
            .output()
            .unwrap();
        assert_success(&out);
    };
    simulate(&prefix);

    for seed in [7, 8] {
        let trace = dir.path().join(format!("run.seed{seed}.trace.csv"));
        let text = std::fs::read_to_string(&trace).unwrap();
        assert!(text.starts_with("slot,queue_id,kind,length\n"));
        let summary: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(format!("run.seed{seed}.summary.json")))
                .unwrap(),
        )
        .unwrap();
        assert_eq!(summary["seed"], seed);
        assert_eq!(summary["queues"].as_array().unwrap().len(), 4);
        // Arrivals are well below the served rates: stable across the board.
        for queue in summary["queues"].as_array().unwrap() {
            assert_eq!(queue["verdict"]["status"], "stable", "queue: {queue}");
        }
    }
    let merged: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run.merged.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(merged["majority_verdict"]["secondary"][0], "stable");
    assert_eq!(merged["seeds"], serde_json::json!([7, 8]));

    // Determinism: identical bytes for the same seed on a fresh prefix.
    let trace_bytes = std::fs::read(dir.path().join("run.seed7.trace.csv")).unwrap();
    let prefix2 = dir.path().join("rerun");
    simulate(&prefix2);
    assert_eq!(trace_bytes, std::fs::read(dir.path().join("rerun.seed7.trace.csv")).unwrap());
}

#[test]
fn simulate_supports_all_three_variants() {
    let dir = TempDir::new().unwrap();
    let config = two_band_config(dir.path());

    let gamma = write(
        dir.path(),
        "gamma.json",
        r#"{ "gamma": [[0.8, 0.0], [0.2, 1.0]] }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--variant", "shat", "--gamma"])
        .arg(&gamma)
        .args(["--horizon", "10000", "--out"])
        .arg(dir.path().join("shat"))
        .output()
        .unwrap();
    assert_success(&out);

    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args([
            "--variant", "fixed", "--map", "s1=2,s2=1", "--horizon", "10000", "--out",
        ])
        .arg(dir.path().join("fixed"))
        .output()
        .unwrap();
    assert_success(&out);

    // Missing variant input is a config error.
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--variant", "s", "--horizon", "10000", "--out"])
        .arg(dir.path().join("nope"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_rejects_invalid_schedules_and_policies() {
    let dir = TempDir::new().unwrap();
    let config = two_band_config(dir.path());

    // Weights that do not sum to one.
    let bad_weights = write(
        dir.path(),
        "bad_weights.json",
        r#"{ "num_bands": 2, "num_sus": 2,
             "terms": [ { "assignment": [1, 2], "q": 0.5 } ] }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--variant", "s", "--schedule"])
        .arg(&bad_weights)
        .args(["--horizon", "10000", "--out"])
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Two users on the same band within one term.
    let clash = write(
        dir.path(),
        "clash.json",
        r#"{ "num_bands": 2, "num_sus": 2,
             "terms": [ { "assignment": [1, 1], "q": 1.0 } ] }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--variant", "s", "--schedule"])
        .arg(&clash)
        .args(["--horizon", "10000", "--out"])
        .arg(dir.path().join("y"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Selection probabilities of one user exceeding one.
    let overfull = write(
        dir.path(),
        "overfull.json",
        r#"{ "gamma": [[0.8, 0.5], [0.4, 0.5]] }"#,
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--variant", "shat", "--gamma"])
        .arg(&overfull)
        .args(["--horizon", "10000", "--out"])
        .arg(dir.path().join("z"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_orders_the_three_systems() {
    let dir = TempDir::new().unwrap();
    let config = two_band_config(dir.path());
    let queries = write(
        dir.path(),
        "queries.json",
        r#"[
  { "target": "s2", "fixed": { "s1": 0.0 } },
  { "target": "s2", "fixed": { "s1": 0.4 } },
  { "target": 2,    "fixed": { "s1": 0.7 } }
]"#,
    );
    let out_csv = dir.path().join("compare.csv");
    let out = bin()
        .args(["compare", "--config"])
        .arg(&config)
        .args(["--queries"])
        .arg(&queries)
        .args(["--restarts", "16", "--out"])
        .arg(&out_csv)
        .output()
        .unwrap();
    assert_success(&out);

    let text = std::fs::read_to_string(&out_csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "query,target,fixed,lambda_fixed,lambda_shat,lambda_s");
    assert_eq!(lines.len(), 4);

    // lambda_1 = 0.4: fixed 0.2125 <= shat <= exclusive ~ 0.5411.
    let row: Vec<&str> = lines[2].split(',').collect();
    let fixed: f64 = row[3].parse().unwrap();
    let shat: f64 = row[4].parse().unwrap();
    let exclusive: f64 = row[5].parse().unwrap();
    assert!((fixed - 0.2125).abs() < 1e-9);
    assert!((exclusive - 0.541071428571428).abs() < 1e-6);
    assert!(fixed <= shat + 1e-9 && shat <= exclusive + 1e-9);
}
