use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CANONICAL: &str = r#"
schema = "trustrep-config/1"
variant = "trust-sequential"

[game]
b = 1.0
c = 1.0
thetas = [0.2, 0.5]
prior = [0.9, 0.1]
delta = 0.99
gamma = 0.6
"#;

fn trustrep(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trustrep"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn payoff_bounds_canonical_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CANONICAL);
    let out = trustrep(&["payoff-bounds", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    assert_eq!(report["schema_version"], "trustrep-report/1");
    let row = &report["payoff_table"][1];
    assert_eq!(row["v_commit"].as_f64().unwrap(), 0.75);
    assert!((row["v_star"].as_f64().unwrap() - 0.666667).abs() < 1e-6);
    assert!((row["v_gamma"].as_f64().unwrap() - 0.636364).abs() < 1e-6);

    let exact = stdout_json(&trustrep(&["payoff-bounds", "--exact"], &[]));
    assert_eq!(exact["payoff_table"][1]["exact"]["v_star"], "2/3");
    assert_eq!(exact["payoff_table"][1]["exact"]["v_gamma"], "7/11");
}

#[test]
fn low_delta_exits_with_error_object() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &CANONICAL.replace("delta = 0.99", "delta = 0.5"),
    );
    let out = trustrep(&["constants", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = &stdout_json(&out)["error"];
    assert_eq!(err["kind"], "delta_too_low");
    let failed: Vec<&str> = err["failed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["id"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"return_power"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (body, needle) in [
        (
            CANONICAL.replace("[0.9, 0.1]", "[0.9, 0.08]"),
            "prior must sum to 1",
        ),
        (
            CANONICAL.replace("gamma = 0.6", "gamma = 0.4"),
            "gamma = 0.4",
        ),
        (
            CANONICAL.replace("gamma = 0.6", "gamma = 0.6\nextra = 1"),
            "extra",
        ),
    ] {
        let cfg = write_config(dir.path(), &body);
        let out = trustrep(&["constants", "--config", &cfg], &[]);
        assert_eq!(out.status.code(), Some(2), "{needle}");
        let msg = stdout_json(&out)["error"]["message"]
            .as_str()
            .unwrap()
            .to_string();
        assert!(msg.contains(needle), "{msg}");
    }
    let out = trustrep(&["simulate", "--config", "/nonexistent/run.toml"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constants_dump() {
    let out = trustrep(&["constants", "--exact"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let c = &stdout_json(&out)["constants"];
    assert_eq!((c["n"].as_u64(), c["k"].as_u64()), (Some(16), Some(28)));
    assert_eq!((c["t"].as_u64(), c["s"].as_u64()), (Some(3), Some(159)));
    assert_eq!(c["exact"]["eta_star"], "27/40");
}

#[test]
fn audit_passes_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = trustrep(
        &[
            "audit",
            "--paths",
            "2000",
            "--depth",
            "10",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let audit: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("audit.json")).unwrap()).unwrap();
    let checks = audit["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["passed"] == true));
    assert!(checks.iter().any(|c| c["name"] == "indifference"));
}

#[test]
fn lemma_and_lp_check_pass() {
    let out = trustrep(&["lemma-a1"], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["lemma"]["violations"], 0);
    let out = trustrep(&["lp-check"], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["lp_check"][1]["lp_exact"], "2/3");
}

#[test]
fn capital_taxation_variant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "variant = \"capital-taxation\"\n[game]\nb = 1.0\nc = 1.0\nthetas = [0.2, 0.5]\n",
    );
    let out = trustrep(&["lp-check", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(0));
    let row = &stdout_json(&out)["lp_check"][1];
    assert_eq!(row["closed_form"], "25/22");
    assert_eq!(row["lp_exact"], "25/22");
    let out = trustrep(&["simulate", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_outputs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let files = [
        "report.json",
        "stats.csv",
        "traces/theta1/7_0.csv",
        "traces/theta2/7_1.csv",
    ];
    let run = |threads: &str| {
        let out = trustrep(
            &[
                "simulate",
                "--paths",
                "3000",
                "--seed",
                "7",
                "--traces",
                "2",
                "--format",
                "both",
                "--out",
                out_dir.to_str().unwrap(),
            ],
            &[("RAYON_NUM_THREADS", threads)],
        );
        assert_eq!(out.status.code(), Some(0));
        files.map(|f| fs::read(out_dir.join(f)).unwrap())
    };
    let a = run("1");
    let b = run("4");
    for (f, (x, y)) in files.iter().zip(a.iter().zip(&b)) {
        assert!(x == y, "{f} differs");
    }
    let trace = fs::read_to_string(out_dir.join("traces/theta2/7_0.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "period,outcome,eta,class,pN,pH,pL,h_theta1,h_theta2"
    );
    assert!(lines.next().unwrap().starts_with("0,"));
}

#[test]
fn json_and_csv_carry_the_same_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = trustrep(
        &[
            "simulate",
            "--paths",
            "500",
            "--format",
            "both",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let stats = fs::read_to_string(out_dir.join("stats.csv")).unwrap();
    let header: Vec<&str> = stats.lines().next().unwrap().split(',').collect();
    for (line, t) in stats
        .lines()
        .skip(1)
        .zip(report["stats"]["types"].as_array().unwrap())
    {
        let cells: Vec<&str> = line.split(',').collect();
        let col = |name: &str| {
            cells[header.iter().position(|h| *h == name).unwrap()]
                .parse::<f64>()
                .unwrap()
        };
        assert_eq!(col("payoff_mean"), t["payoff"]["mean"].as_f64().unwrap());
        assert_eq!(col("payoff_se"), t["payoff"]["se"].as_f64().unwrap());
        assert_eq!(col("kl_mean"), t["kl"]["mean"].as_f64().unwrap());
        assert_eq!(col("freq_h"), t["freq_h"]["mean"].as_f64().unwrap());
    }
    let mean = report["stats"]["types"][0]["payoff"]["mean"]
        .as_f64()
        .unwrap();
    assert!((mean - 0.8).abs() < 1e-9);
}
