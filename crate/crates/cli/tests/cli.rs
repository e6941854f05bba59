use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use abdux::explain::Snapshot;
use abdux_cli::commands::{cmd_explain, cmd_gen_fixtures, FixtureKind};
use abdux_cli::report::{ReportBody, RunStatus};
use abdux_cli::{Report, RunConfig};
use tempfile::TempDir;

fn abdux(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abdux"))
        .args(args)
        .env_remove("ABDUX_BUDGET_SECS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn fixture(dir: &TempDir, kind: &str) -> (String, String) {
    let kind = FixtureKind::parse(kind).unwrap();
    let (net, inst) = cmd_gen_fixtures(kind, 0, 1, dir.path()).unwrap().remove(0);
    (net.display().to_string(), inst.display().to_string())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn triangle_report_has_tight_bounds() {
    let dir = TempDir::new().unwrap();
    let (net, inst) = fixture(&dir, "triangle");
    let report_path = dir.path().join("report.json");
    let out = abdux(&[
        "explain",
        "--network",
        &net,
        "--instance",
        &inst,
        "--output",
        s(&report_path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = Report::load(&report_path).unwrap();
    assert_eq!((report.ub, report.lb), (2, 2));
    assert_eq!(report.status, RunStatus::Complete);
    assert!(!report.possibly_non_minimal);
    let ReportBody::Features(r) = &report.result else {
        panic!("feature report expected");
    };
    assert_eq!(r.ratio, 1.0);
    report.revalidate().unwrap();
}

#[test]
fn deterministic_flag_gives_reproducible_explanations() {
    let dir = TempDir::new().unwrap();
    let (net, inst) = fixture(&dir, "running-example");
    let run = || {
        let out = abdux(&[
            "explain",
            "--network",
            &net,
            "--instance",
            &inst,
            "--deterministic",
        ]);
        assert_eq!(code(&out), 0);
        Report::from_json_str(&String::from_utf8(out.stdout).unwrap()).unwrap()
    };
    let (a, b) = (run(), run());
    assert!(!a.config.parallel);
    assert_eq!(a.explanation, b.explanation);
    assert_eq!(a.result.run().stats.total(), b.result.run().stats.total());
}

fn medium_fixture(dir: &TempDir) -> (String, String) {
    let (net, inst) = cmd_gen_fixtures(FixtureKind::Medium, 2025, 1, dir.path())
        .unwrap()
        .remove(0);
    (net.display().to_string(), inst.display().to_string())
}

fn check_budget_report(out: &Output, m: usize) {
    assert_eq!(code(out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let report = Report::from_json_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(report.status, RunStatus::Budget);
    assert!(report.possibly_non_minimal);
    assert_eq!(report.ub, m);
    assert!(report.verifier.unknown > 0);
    report.revalidate().unwrap();
}

#[test]
fn tiny_budget_exits_with_budget_code_and_a_valid_report() {
    let dir = TempDir::new().unwrap();
    let (net, inst) = medium_fixture(&dir);
    let m = abdux::Network::load(&net).unwrap().input_dim();
    let out = abdux(&[
        "explain",
        "--network",
        &net,
        "--instance",
        &inst,
        "--deterministic",
        "--budget-secs",
        "0.001",
    ]);
    check_budget_report(&out, m);
}

#[test]
fn budget_defaults_from_environment() {
    let dir = TempDir::new().unwrap();
    let (net, inst) = medium_fixture(&dir);
    let m = abdux::Network::load(&net).unwrap().input_dim();
    let out = Command::new(env!("CARGO_BIN_EXE_abdux"))
        .args([
            "explain",
            "--network",
            &net,
            "--instance",
            &inst,
            "--deterministic",
        ])
        .env("ABDUX_BUDGET_SECS", "0.001")
        .output()
        .unwrap();
    check_budget_report(&out, m);
}

#[test]
fn malformed_network_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let (_, inst) = fixture(&dir, "triangle");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"input_domains\": [").unwrap();
    let out = abdux(&["explain", "--network", s(&bad), "--instance", &inst]);
    assert_eq!(code(&out), 3);
}

#[test]
fn class_mismatch_is_an_invariant_violation() {
    let dir = TempDir::new().unwrap();
    let (net, _) = fixture(&dir, "triangle");
    let inst = dir.path().join("wrong.json");
    std::fs::write(&inst, r#"{"input":[1,1,1],"class":1}"#).unwrap();
    let out = abdux(&["explain", "--network", &net, "--instance", s(&inst)]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("class mismatch"));
}

#[test]
fn overlapping_bundle_file_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (net, inst) = fixture(&dir, "triangle");
    let bundles = dir.path().join("bundles.json");
    std::fs::write(&bundles, "[[0,1],[1,2]]").unwrap();
    let out = abdux(&[
        "bundle-explain",
        "--network",
        &net,
        "--instance",
        &inst,
        "--bundles",
        s(&bundles),
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn bundle_explain_needs_bundles() {
    let dir = TempDir::new().unwrap();
    let (net, inst) = fixture(&dir, "triangle");
    let out = abdux(&["bundle-explain", "--network", &net, "--instance", &inst]);
    assert_eq!(code(&out), 1);
}

#[test]
fn bundle_report_on_triangle() {
    let dir = TempDir::new().unwrap();
    let (net, inst) = fixture(&dir, "triangle");
    let bundles = dir.path().join("bundles.json");
    std::fs::write(&bundles, "[[0,1],[2]]").unwrap();
    let out = abdux(&[
        "bundle-explain",
        "--network",
        &net,
        "--instance",
        &inst,
        "--bundles",
        s(&bundles),
        "--refined",
        "--ordering",
        "identity",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = Report::from_json_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    let ReportBody::Bundles(b) = &report.result else {
        panic!("bundle report expected");
    };
    // Fixing x1 = x2 = 1 already gives a sum of at least 2.
    assert_eq!(b.bundle_explanation, [0].into());
    assert_eq!(report.explanation, [0, 1].into());
    assert_eq!((b.ub_bundles, b.ub_features), (1, 2));
    assert!(b.lb_features <= 2);
    report.revalidate().unwrap();
}

#[test]
fn verify_prints_verdicts() {
    let dir = TempDir::new().unwrap();
    let (net, _) = fixture(&dir, "running-example");
    let query = dir.path().join("q.json");
    std::fs::write(
        &query,
        r#"{"constraints":[{"fixed":1.0},{"fixed":1.0},"free"],"excluded_class":0}"#,
    )
    .unwrap();
    let out = abdux(&["verify", "--network", &net, "--query", s(&query)]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "UNSAT");

    std::fs::write(
        &query,
        r#"{"constraints":[{"fixed":1.0},"free","free"],"excluded_class":0}"#,
    )
    .unwrap();
    let out = abdux(&["verify", "--network", &net, "--query", s(&query), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "sat");
    assert_eq!(v["winning_class"], 1);
}

#[test]
fn verify_with_nothing_free_is_unsat() {
    let dir = TempDir::new().unwrap();
    let (net, _) = fixture(&dir, "triangle");
    let query = dir.path().join("q.json");
    std::fs::write(
        &query,
        r#"{"constraints":[{"fixed":1.0},{"fixed":1.0},{"fixed":1.0}],"excluded_class":0}"#,
    )
    .unwrap();
    let out = abdux(&["verify", "--network", &net, "--query", s(&query)]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "UNSAT");
}

#[test]
fn lower_bound_on_triangle() {
    let dir = TempDir::new().unwrap();
    let (net, inst) = fixture(&dir, "triangle");
    let out = abdux(&["lower-bound", "--network", &net, "--instance", &inst]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["lb"], 2);
    assert_eq!(v["result"]["pairs"].as_array().unwrap().len(), 3);
}

#[test]
fn rendering_matches_golden_files() {
    let dir = TempDir::new().unwrap();
    let pgm = dir.path().join("mask.pgm");
    let out = abdux(&[
        "render",
        "--network",
        s(&golden("ramp_4x4.net.json")),
        "--instance",
        s(&golden("ramp_4x4.inst.json")),
        "--features",
        "[0,3,5,6,9,10,12,15]",
        "--shape",
        "4x4",
        "--pgm",
        s(&pgm),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read_to_string(&pgm).unwrap(),
        std::fs::read_to_string(golden("diagonals_4x4.pgm")).unwrap()
    );
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        std::fs::read_to_string(golden("diagonals_4x4.txt")).unwrap()
    );
}

#[test]
fn rendering_a_report() {
    let dir = TempDir::new().unwrap();
    let (net, inst) = fixture(&dir, "running-example");
    let report = dir.path().join("r.json");
    let out = abdux(&[
        "explain",
        "--network",
        &net,
        "--instance",
        &inst,
        "--ordering",
        "identity",
        "--output",
        s(&report),
    ]);
    assert_eq!(code(&out), 0);
    // Identity order frees x1 and x2, leaving {x3}.
    let out = abdux(&[
        "render",
        "--network",
        &net,
        "--instance",
        &inst,
        "--report",
        s(&report),
        "--shape",
        "3x1",
    ]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "..9\n");
}

#[test]
fn progress_stream_is_monotone() {
    let dir = TempDir::new().unwrap();
    let (net, inst) = medium_fixture(&dir);
    let progress = dir.path().join("progress.jsonl");
    let out = abdux(&[
        "explain",
        "--network",
        &net,
        "--instance",
        &inst,
        "--progress",
        s(&progress),
        "--output",
        s(&dir.path().join("r.json")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let snaps: Vec<Snapshot> = std::fs::read_to_string(&progress)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!snaps.is_empty());
    for w in snaps.windows(2) {
        assert!(w[1].ub <= w[0].ub && w[1].lb >= w[0].lb && w[1].t >= w[0].t);
    }
    let report = Report::load(&dir.path().join("r.json")).unwrap();
    let last = snaps.last().unwrap();
    assert_eq!((last.ub, last.lb), (report.ub, report.lb));
}

#[test]
fn corpus_reports_revalidate_on_reload() {
    let dir = TempDir::new().unwrap();
    let pairs = cmd_gen_fixtures(FixtureKind::Small, 31, 100, dir.path()).unwrap();
    assert_eq!(pairs.len(), 100);
    for (i, (net, inst)) in pairs.iter().enumerate() {
        let config = RunConfig {
            variant: abdux::UbVariant::ALL[i % 4],
            parallel: i % 2 == 0,
            ..RunConfig::default()
        };
        let report = cmd_explain(net, inst, &config, None).unwrap();
        let path = dir.path().join(format!("report_{i:03}.json"));
        report.save(&path).unwrap();
        let back = Report::load(&path).unwrap();
        assert_eq!(back, report);
        back.revalidate().unwrap();
    }
}

#[test]
fn tampered_report_fails_revalidation() {
    let dir = TempDir::new().unwrap();
    let (net, inst) = fixture(&dir, "triangle");
    let mut report = cmd_explain(
        Path::new(&net),
        Path::new(&inst),
        &RunConfig::default(),
        None,
    )
    .unwrap();
    let ReportBody::Features(r) = &mut report.result else {
        panic!("feature report expected");
    };
    r.explanation = [2].into();
    report.explanation = [2].into();
    let err = report.revalidate().unwrap_err();
    assert_eq!(err.status, abdux_cli::Status::Invariant);
}
