use std::fs;
use std::path::Path;
use std::process::Command;

use mipp::harness::{
    aggregate, emit_outputs, load_scenario, run_experiment, run_experiment_with_fields, run_trial,
    Format, HarnessError, ModeSelection, Scenario, Table1Row, Table2Row, TrialRecord,
    TABLE1_COLUMNS, TABLE2_COLUMNS, TRIAL_COLUMNS,
};

const SMALL: &str = r#"
n = 3
n_a = 1
f_total = 1
robustness = [1, 1]
trials = 4
master_seed = 11
initial_evidence_count = 3

[grid]
width = 9
height = 6
m_areas = 2
f_subareas = 2

[kernel]
fit_starts = 2

[comm]
model = "distance_decay"
range = 4.0

[resilience]
placements = 2
method = { method = "exact" }
retransmission_cap = 20

[output]
field_dumps = 2
"#;

fn small() -> Scenario {
    Scenario::from_toml(SMALL).unwrap()
}

fn repo_file(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn shipped_scenarios_load() {
    let s = load_scenario(&repo_file("scenarios/default.toml")).unwrap();
    assert_eq!((s.grid.width, s.grid.height, s.grid.m_areas, s.grid.f_subareas), (25, 25, 3, 10));
    assert_eq!((s.n, s.n_a, s.f_total), (4, 1, 1));
    assert_eq!(s.robustness(), (2, 2));
    assert!(s.warnings().is_empty());
    let six = load_scenario(&repo_file("scenarios/six_robots.toml")).unwrap();
    assert_eq!((six.n, six.n_a, six.f_total), (6, 2, 2));
}

#[test]
fn missing_team_size_is_named() {
    let text = SMALL.replacen("n = 3\n", "", 1);
    let err = Scenario::from_toml(&text).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("`n`"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let err = Scenario::from_toml(&format!("colour = 3\n{SMALL}")).unwrap_err();
    assert!(err.to_string().contains("colour"), "{err}");
    let err = Scenario::from_toml(&SMALL.replace("range = 4.0", "range = 4.0\nrnage = 1")).unwrap_err();
    assert!(err.to_string().contains("rnage"), "{err}");
}

#[test]
fn too_many_attackers_is_only_a_warning() {
    let s = Scenario::from_toml(&SMALL.replace("n_a = 1", "n_a = 2")).unwrap();
    assert!(s.warnings().iter().any(|w| w.contains("outside attack model")));
}

#[test]
fn bad_values_are_config_errors() {
    for (from, to, field) in [
        ("trials = 4", "trials = 0", "trials"),
        ("range = 4.0", "range = -1.0", "comm"),
        ("f_subareas = 2", "f_subareas = 7", "grid"),
        ("robustness = [1, 1]", "robustness = [1, 4]", "robustness"),
    ] {
        let err = Scenario::from_toml(&SMALL.replace(from, to)).unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)), "{to}: {err}");
        assert!(err.to_string().contains(field), "{to}: {err}");
    }
    // one-cell subareas cannot host a team of three
    let tiny = SMALL
        .replace("width = 9", "width = 2")
        .replace("height = 6", "height = 3")
        .replace("f_subareas = 2", "f_subareas = 3");
    let err = Scenario::from_toml(&tiny).unwrap_err();
    assert_eq!(err.exit_code(), 4, "{err}");
}

#[test]
fn trials_are_deterministic() {
    let s = small();
    assert_eq!(run_trial(&s, 2), run_trial(&s, 2));
    assert_ne!(run_trial(&s, 2).seed, run_trial(&s, 3).seed);
}

#[test]
fn single_trial_aggregate_is_the_trial() {
    let s = small();
    let rec = run_trial(&s, 0);
    assert!(rec.valid, "{:?}", rec.error);
    let report = aggregate(&s, vec![rec.clone()]);
    let w = rec.wmsr.unwrap();
    let row = &report.table1[0];
    assert_eq!((row.err_sk, row.err_lk, row.err_y, row.err_sk_se), (w.err_sk, w.err_lk, w.err_y, 0.0));
    assert_eq!(report.table2[0].p_r, rec.p_r_star);
    assert_eq!(report.table2[1].rounds, rec.rounds_rand);
}

#[test]
fn paired_runs_share_comm_metrics_across_modes() {
    let mut s = small();
    let both = run_trial(&s, 1);
    s.consensus.mode = ModeSelection::Wmsr;
    let wmsr = run_trial(&s, 1);
    assert_eq!(both.wmsr, wmsr.wmsr);
    assert_eq!(both.p_r_star, wmsr.p_r_star);
    assert!(wmsr.linear.is_none());
}

#[test]
fn outputs_round_trip_and_have_fixed_headers() {
    let s = small();
    let (report, fields) = run_experiment_with_fields(&s, 1).unwrap();
    assert_eq!(fields.len(), 2);
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&report, &fields, Format::Json, dir.path()).unwrap();
    let t1: Vec<Table1Row> = serde_json::from_str(&fs::read_to_string(dir.path().join("table1.json")).unwrap()).unwrap();
    let t2: Vec<Table2Row> = serde_json::from_str(&fs::read_to_string(dir.path().join("table2.json")).unwrap()).unwrap();
    let recs: Vec<TrialRecord> = serde_json::from_str(&fs::read_to_string(dir.path().join("trials.json")).unwrap()).unwrap();
    assert_eq!(t1, report.table1);
    assert_eq!(t2, report.table2);
    assert_eq!(recs, report.records);

    emit_outputs(&report, &fields, Format::Csv, dir.path()).unwrap();
    for (file, cols) in [
        ("table1.csv", &TABLE1_COLUMNS[..]),
        ("table2.csv", &TABLE2_COLUMNS[..]),
        ("trials.csv", &TRIAL_COLUMNS[..]),
    ] {
        let text = fs::read_to_string(dir.path().join(file)).unwrap();
        assert_eq!(text.lines().next().unwrap(), cols.join(","));
    }
    let t1 = fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    assert_eq!(t1.lines().count(), 3);

    for name in ["trial_0000_truth.csv", "trial_0001_wmsr.csv", "trial_0001_linear.csv"] {
        let grid = fs::read_to_string(dir.path().join("fields").join(name)).unwrap();
        let rows: Vec<&str> = grid.lines().collect();
        assert_eq!(rows.len(), s.grid.height, "{name}");
        for row in rows {
            assert_eq!(row.split(',').count(), s.grid.width);
            assert!(row.split(',').all(|v| v.parse::<f64>().is_ok()));
        }
    }
}

#[test]
fn standard_errors_shrink_with_trials() {
    let mut s = small();
    s.consensus.mode = ModeSelection::Wmsr;
    s.output.field_dumps = 0;
    let mut se = Vec::new();
    for trials in [25, 100, 400] {
        s.trials = trials;
        let report = run_experiment(&s, 1).unwrap();
        se.push(report.table2[1].p_r_se);
    }
    // 1/sqrt(trials): each fourfold increase halves the error
    for pair in se.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!((1.4..=2.9).contains(&ratio), "{se:?}");
    }
}

#[test]
fn cli_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_mipp");
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, SMALL).unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, SMALL.replacen("n = 3\n", "", 1)).unwrap();

    let out = Command::new(bin).args(["validate", "--scenario"]).arg(&good).output().unwrap();
    assert!(out.status.success());
    let out = Command::new(bin).args(["validate", "--scenario"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`n`"));

    let target = dir.path().join("results");
    let out = Command::new(bin)
        .args(["run", "--trials", "2", "--format", "json", "--mode", "wmsr", "--scenario"])
        .arg(&good)
        .arg("--out")
        .arg(&target)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("table1.json").exists() && target.join("summary.json").exists());

    // a regular file where the output directory should go
    let blocked = dir.path().join("blocked");
    fs::write(&blocked, "").unwrap();
    let out = Command::new(bin)
        .args(["run", "--trials", "1", "--scenario"])
        .arg(&good)
        .arg("--out")
        .arg(&blocked)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = Command::new(bin)
        .args(["presilience", "--exact", "--positions", "0,1,2", "--scenario"])
        .arg(&good)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let p = v["probability"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));

    let out = Command::new(bin)
        .env("MIPP_SEED", "5")
        .args(["trial", "--index", "0", "--scenario"])
        .arg(&good)
        .output()
        .unwrap();
    assert!(out.status.success());
    let rec: TrialRecord = serde_json::from_slice(&out.stdout).unwrap();
    let mut s = small();
    s.master_seed = 5;
    assert_eq!(rec, run_trial(&s, 0));
}
