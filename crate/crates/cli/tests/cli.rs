use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_microcash"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn within(actual: f64, expected: f64, rel: f64) -> bool {
    ((actual - expected) / expected).abs() <= rel
}

/// Equal once rounded to the number of decimals the reference was printed with.
fn same_printed(actual: f64, printed: &str) -> bool {
    let decimals = printed.split_once('.').map_or(0, |(_, f)| f.len());
    format!("{actual:.decimals$}") == printed
}

const EXAMPLE: [&str; 11] =
    ["bounds", "--p", "0.01", "--beta", "1", "--tkt-rate", "1000", "--lifetime", "200", "--merchants", "5"];

#[test]
fn bounds_worked_examples() {
    let out = run(&EXAMPLE);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["exact"]["payment_escrow_coins"].as_f64(), Some(2000.0));
    assert_eq!(v["exact"]["winners_per_draw"].as_u64(), Some(10));
    assert!((v["exact"]["penalty_lower_bound_coins"].as_f64().unwrap() - 477.6).abs() <= 0.05);
    assert_eq!(v["independent"]["payment_escrow_coins"].as_f64(), Some(2104.0));
    assert!((v["independent"]["penalty_lower_bound_coins"].as_f64().unwrap() - 480.0).abs() <= 0.1);
    assert_eq!(v["lifetime_rounds"].as_u64(), Some(200));
    assert_eq!(v["inputs"]["p"], "1/100");
    assert_eq!(v["seed"].as_u64(), Some(0));
}

#[test]
fn bounds_single_variant_and_csv() {
    let mut args = EXAMPLE.to_vec();
    args.extend(["--variant", "exact", "--format", "csv", "--seed", "77"]);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# seed=77\n"));
    assert!(text.contains("variant,quantity,value,unit\n"));
    assert!(text.contains("exact,payment_escrow,2000,coins\n"));
    assert!(!text.contains("independent,"));
}

#[test]
fn bounds_missing_flag_prints_usage() {
    let out = run(&["bounds", "--p", "0.01"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage:"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn bounds_invalid_parameters_exit_two_with_one_line() {
    for bad in [
        vec!["bounds", "--p", "0.0101", "--beta", "1", "--tkt-rate", "1000", "--lifetime", "200", "--merchants", "5"],
        vec!["bounds", "--p", "1.5", "--beta", "1", "--tkt-rate", "1000", "--lifetime", "200", "--merchants", "5"],
        vec!["bounds", "--p", "0.01", "--beta", "-1", "--tkt-rate", "1000", "--lifetime", "200", "--merchants", "5"],
        vec!["bounds", "--p", "0.01", "--beta", "1", "--tkt-rate", "1000", "--lifetime", "0", "--merchants", "5"],
    ] {
        let out = run(&bad);
        assert_eq!(out.status.code(), Some(2), "{bad:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    }
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn simulate_honest_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("m.json");
    let cfg = configs().join("honest.toml");
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(v["seed"].as_u64(), Some(42));
    let m = &v["metrics"];
    assert_eq!(m["redeemed"], m["winners_expected"]);
    assert_eq!(m["winners_expected"].as_u64(), Some(10 * 200));
    assert_eq!(m["final_status"], "closed");
    assert_eq!(m["violations"].as_array().map(Vec::len), Some(0));
}

#[test]
fn simulate_duplicate_config_burns() {
    let cfg = configs().join("duplicate.toml");
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let burned: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("burned,"))
        .expect("burned row")
        .parse()
        .unwrap();
    assert!(burned > 0.0);
    assert!(text.contains("final_status,broken\n"));
}

#[test]
fn simulate_other_bundled_configs_pass() {
    for name in ["out_of_range", "withhold", "early_refund"] {
        let cfg = configs().join(format!("{name}.toml"));
        let out = run(&["simulate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn simulate_seed_override_is_echoed_and_deterministic() {
    let cfg = configs().join("out_of_range.toml");
    let args = ["simulate", "--config", cfg.to_str().unwrap(), "--seed", "1234", "--front-running"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v = json_of(&a);
    assert_eq!(v["seed"].as_u64(), Some(1234));
    assert_eq!(v["metrics"]["seed"].as_u64(), Some(1234));
    assert_eq!(v["front_running"]["all_rejected"], true);
}

#[test]
fn simulate_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let corrupt = dir.path().join("corrupt.toml");
    std::fs::write(&corrupt, "seed = [\n").unwrap();
    assert_eq!(run(&["simulate", "--config", corrupt.to_str().unwrap()]).status.code(), Some(1));
    let missing = dir.path().join("missing.toml");
    assert_eq!(run(&["simulate", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
    let invalid = dir.path().join("invalid.toml");
    std::fs::write(&invalid, "seed = 1\ntickets_per_round = 10\n[escrow]\np = \"1/10\"\nbeta = 1\ntkt_rate = 10\nlifetime = 4\nmerchants = 0\n").unwrap();
    assert_eq!(run(&["simulate", "--config", invalid.to_str().unwrap()]).status.code(), Some(2));
}

const EVERY_TICKET_WINS: &str = r#"
name = "every ticket wins"
seed = 3
tickets_per_round = 5
[escrow]
p = "1"
beta = "0.001"
tkt_rate = 5
lifetime = 4
merchants = 2
[chain]
vdf_iterations = 10
d_draw = 2
d_redeem = 2
"#;

fn full_range_snapshot(dir: &Path) -> PathBuf {
    let cfg = dir.join("full.toml");
    std::fs::write(&cfg, EVERY_TICKET_WINS).unwrap();
    let snap = dir.join("snap.json");
    let blocks = dir.join("blocks.csv");
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--snapshot",
        snap.to_str().unwrap(),
        "--blocks-csv",
        blocks.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&blocks).unwrap().starts_with("height,tx_count,bytes,fees\n"));
    snap
}

#[test]
fn draw_lists_full_range_when_everything_wins() {
    let dir = tempfile::tempdir().unwrap();
    let snap = full_range_snapshot(dir.path());
    // Escrow in block 1, first issue round 8, draws two rounds after each issue round.
    let out = run(&["draw", "--snapshot", snap.to_str().unwrap(), "--round", "10"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["seed"].as_u64(), Some(3));
    let draws = v["draws"].as_array().unwrap();
    assert_eq!(draws.len(), 1);
    let d = &draws[0];
    let winners: Vec<u64> = d["winners"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    let (lo, hi) = (d["range_first"].as_u64().unwrap(), d["range_last"].as_u64().unwrap());
    assert_eq!(winners, (lo..=hi).collect::<Vec<_>>());
    assert_eq!(winners.len(), 5);

    let id = d["escrow_id"].as_str().unwrap();
    let csv = run(&["draw", "--snapshot", snap.to_str().unwrap(), "--round", "10", "--escrow", id, "--format", "csv"]);
    assert_eq!(csv.status.code(), Some(0));
    let text = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with(id)).count(), 5);
}

#[test]
fn draw_errors() {
    let dir = tempfile::tempdir().unwrap();
    let snap = full_range_snapshot(dir.path());
    let s = snap.to_str().unwrap();
    assert_eq!(run(&["draw", "--snapshot", s, "--round", "1"]).status.code(), Some(2));
    assert_eq!(run(&["draw", "--snapshot", s, "--round", "100000"]).status.code(), Some(2));
    assert_eq!(run(&["draw", "--snapshot", s, "--round", "10", "--escrow", "zz"]).status.code(), Some(2));

    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&snap).unwrap()).unwrap();
    let e = v["blocks"][3]["entropy"].as_u64().unwrap();
    v["blocks"][3]["entropy"] = Value::from(e ^ 1);
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, v.to_string()).unwrap();
    assert_eq!(run(&["draw", "--snapshot", tampered.to_str().unwrap(), "--round", "10"]).status.code(), Some(3));
}

#[test]
fn bench_reports_roles_and_counts() {
    let out = run(&["bench", "--iterations", "10000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    let r = &v["report"];
    for role in ["customer", "merchant", "miner"] {
        assert!(r[role]["tickets_per_sec"].as_f64().unwrap() > 0.0);
        assert_eq!(r[role]["tickets"].as_u64(), Some(10_000));
    }
    assert_eq!(r["customer"]["signs_per_ticket"].as_f64(), Some(1.0));
    assert_eq!(r["merchant"]["verifies_per_ticket"].as_f64(), Some(1.0));
    assert_eq!(r["miner"]["verifies_per_ticket"].as_f64(), Some(2.0));
    assert_eq!(run(&["bench", "--iterations", "10"]).status.code(), Some(2));
}

fn workload_rows(name: &str) -> std::collections::HashMap<String, f64> {
    let spec = configs().join(format!("{name}.toml"));
    let out = run(&["workload", "--spec", spec.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    v["table"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["metric"].as_str().unwrap().to_string(), r["concurrent"].as_f64().unwrap()))
        .collect()
}

#[test]
fn workload_minecraft_matches_published_column() {
    let r = workload_rows("minecraft");
    for (metric, expected) in [
        ("winning_tickets_per_sec", 0.000167),
        ("escrows_per_sec", 0.000386),
        ("transactions_per_sec", 0.000552),
        ("fees_per_round", 0.022541),
        ("customer_miner_bandwidth", 1.009),
        ("customer_merchant_bandwidth", 14667.0),
        ("merchant_miner_bandwidth", 0.523),
    ] {
        assert!(within(r[metric], expected, 0.02), "{metric}: {} vs {expected}", r[metric]);
    }
    // Published in MB with two significant digits.
    assert!(same_printed(r["chain_growth_per_round"] / 1e6, "0.00011"));
}

#[test]
fn workload_cdn_matches_published_column() {
    let r = workload_rows("cdn");
    for (metric, expected) in [
        ("winning_tickets_per_sec", 0.001964),
        ("transactions_per_sec", 0.001976),
        ("fees_per_round", 0.08062),
        ("customer_merchant_bandwidth", 112640.0),
        ("merchant_miner_bandwidth", 6.16),
    ] {
        assert!(within(r[metric], expected, 0.02), "{metric}: {} vs {expected}", r[metric]);
    }
    assert!(same_printed(r["escrows_per_sec"], "0.000012"));
}

#[test]
fn workload_bad_spec() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("w.toml");
    std::fs::write(&bad, "service_cost_per_sec = 1\ntickets_per_sec = 1\nclaim_fee = 0\nescrow_interval_sec = 1\n").unwrap();
    assert_eq!(run(&["workload", "--spec", bad.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&bad, "tickets_per_sec = \"many\"\n").unwrap();
    assert_eq!(run(&["workload", "--spec", bad.to_str().unwrap()]).status.code(), Some(1));
}
