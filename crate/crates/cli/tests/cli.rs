use std::path::Path;
use std::process::{Command, Output};

fn fanet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fanet")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

/// A 4-UAV square-area scenario in `dir/scenario.json`.
fn small_scenario(dir: &Path) {
    ok(&fanet(dir, &["gen", "--preset", "square-area", "--uavs", "4", "--slots", "12", "--out", "."]));
}

#[test]
fn simulate_twice_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path());
    for out in ["a", "b"] {
        ok(&fanet(dir.path(), &["simulate", "--scenario", "scenario.json", "--algo", "ctop", "--seed", "4", "--out", out]));
    }
    let a = std::fs::read(dir.path().join("a/report.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/report.json")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    for f in ["metrics.csv", "edges.csv", "powers.csv", "plan.json"] {
        assert!(dir.path().join("a").join(f).is_file(), "{f}");
    }
}

#[test]
fn simulate_all_writes_every_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path());
    ok(&fanet(dir.path(), &["simulate", "--scenario", "scenario.json", "--algo", "all", "--out", "cmp"]));
    for algo in ["ctop", "mtp", "lmst"] {
        assert!(dir.path().join("cmp").join(algo).join("report.json").is_file());
    }
    let summary = std::fs::read_to_string(dir.path().join("cmp/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4, "{summary}");
}

#[test]
fn plan_then_stages_then_report() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path());
    let d = dir.path();
    ok(&fanet(d, &["plan", "--scenario", "scenario.json", "--planner", "heuristic", "--out", "p"]));
    assert!(d.join("p/plan.json").is_file());
    ok(&fanet(d, &["topo", "--scenario", "scenario.json", "--plan", "p/plan.json", "--algo", "ctop", "--out", "t"]));
    assert!(d.join("t/edges.csv").is_file() && d.join("t/intervals.csv").is_file());
    ok(&fanet(d, &["power", "--scenario", "scenario.json", "--plan", "p/plan.json", "--out", "w"]));
    assert!(d.join("w/powers.csv").is_file());

    ok(&fanet(d, &["simulate", "--scenario", "scenario.json", "--plan", "p/plan.json", "--out", "s"]));
    let metrics = std::fs::read(d.join("s/metrics.csv")).unwrap();
    std::fs::remove_file(d.join("s/metrics.csv")).unwrap();
    ok(&fanet(d, &["report", "--report", "s/report.json", "--out", "s"]));
    assert_eq!(std::fs::read(d.join("s/metrics.csv")).unwrap(), metrics);
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = fanet(dir.path(), &["simulate"]);
    assert_eq!(missing.status.code(), Some(2));
    std::fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    assert_eq!(fanet(dir.path(), &["simulate", "--scenario", "broken.json"]).status.code(), Some(2));
    small_scenario(dir.path());
    assert_eq!(fanet(dir.path(), &["simulate", "--scenario", "scenario.json", "--algo", "nope"]).status.code(), Some(2));
}

#[test]
fn out_of_range_fleet_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    small_scenario(dir.path());
    let path = dir.path().join("scenario.json");
    // a milliwatt cannot bridge the 500 m between corners
    let weak: String = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| if l.contains("\"p_max_w\"") { "      \"p_max_w\": 0.001,".to_string() } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&path, weak).unwrap();
    let out = fanet(dir.path(), &["simulate", "--scenario", "scenario.json"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
