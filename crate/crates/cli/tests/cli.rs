use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridshare_core::report::parse_schedule_csv;
use gridshare_core::{fixtures, load_scenario};

const GOLDEN: &str = include_str!("golden/three_agent_schedule.csv");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn gridshare(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridshare")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .parse()
        .unwrap()
}

/// (agent, selfish, allocated, epsilon) rows of a cost table.
fn cost_table(path: &Path) -> Vec<(u32, f64, f64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect()
}

#[test]
fn centralized_schedule_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("three_agent.json");
    let o = gridshare(dir.path(), &["solve", "--centralized", "--scenario", scenario.to_str().unwrap(), "--out-dir", "out"]);
    assert!(o.status.success());
    assert!((value(&stdout(&o), "J") - 3.488).abs() < 1e-9);

    let written = fs::read_to_string(dir.path().join("out/schedule.csv")).unwrap();
    assert_eq!(written.lines().next(), GOLDEN.lines().next());
    let got = parse_schedule_csv(&written, 1.0).unwrap();
    let want = parse_schedule_csv(GOLDEN, 1.0).unwrap();
    let flat = |t: &gridshare_core::report::ScheduleTable| -> Vec<f64> {
        let s = &t.schedule;
        let mut v = [s.grid_buy.clone(), s.grid_sell.clone()].concat();
        v.extend(s.desd.iter().flat_map(|d| d.power_kw.clone()));
        v.extend(t.energy.iter().flat_map(|(_, e)| e.clone()));
        v
    };
    for (a, b) in flat(&got).iter().zip(flat(&want)) {
        assert!((a - b).abs() < 1e-9);
    }

    let check = gridshare(
        dir.path(),
        &["validate", "--scenario", scenario.to_str().unwrap(), "--schedule", "out/schedule.csv", "--balance-tol", "1e-8", "--energy-tol", "1e-9"],
    );
    assert!(check.status.success(), "{}", stdout(&check));
}

#[test]
fn codes_solution_is_close_and_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("three_agent.json");
    let o = gridshare(dir.path(), &["solve", "--codes", "--scenario", scenario.to_str().unwrap(), "--out-dir", "out"]);
    assert!(o.status.success());
    assert!((value(&stdout(&o), "J") - 3.488).abs() / 3.488 <= 5e-3);
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(trace.starts_with("iter,J_est,max_imbalance_kw,consensus_disagreement,primal_step_norm\n"));
    let check = gridshare(dir.path(), &["validate", "--scenario", scenario.to_str().unwrap(), "--schedule", "out/schedule.csv"]);
    assert!(check.status.success(), "{}", stdout(&check));
}

#[test]
fn missing_scenario_is_a_validation_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = gridshare(dir.path(), &["solve", "--codes", "--scenario", "absent.json", "--out-dir", "out"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
    assert_eq!(gridshare(dir.path(), &["solve", "--scenario", "absent.json"]).status.code(), Some(2));
}

#[test]
fn reruns_are_bit_identical() {
    let scenario = fixture("three_agent.json");
    let runs: Vec<tempfile::TempDir> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let o = gridshare(dir.path(), &["solve", "--codes", "--scenario", scenario.to_str().unwrap(), "--out-dir", "out"]);
            assert!(o.status.success());
            dir
        })
        .collect();
    for file in ["schedule.csv", "trace.csv"] {
        let a = fs::read(runs[0].path().join("out").join(file)).unwrap();
        let b = fs::read(runs[1].path().join("out").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
    let report = |d: &Path| {
        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(d.join("out/report.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    assert_eq!(report(runs[0].path()), report(runs[1].path()));
}

#[test]
fn allocation_table_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("three_agent.json");
    let s = scenario.to_str().unwrap();
    assert!(gridshare(dir.path(), &["allocate", "--scenario", s, "--out-dir", "central"]).status.success());
    assert!(gridshare(dir.path(), &["allocate", "--scenario", s, "--out-dir", "dist", "--distributed", "--graph-tol", "1e-9"]).status.success());
    let central = cost_table(&dir.path().join("central/costs.csv"));
    let dist = cost_table(&dir.path().join("dist/costs.csv"));
    let total: f64 = central.iter().map(|r| r.2).sum();
    assert!((total - 3.488).abs() < 1e-9);
    assert!(central.iter().all(|r| (r.3 - central[0].3).abs() < 1e-12 && r.2 <= r.1));
    for (a, b) in central.iter().zip(&dist) {
        assert_eq!(a.0, b.0);
        assert!((a.2 - b.2).abs() < 1e-6);
    }
}

#[test]
fn passive_users_keep_their_bills() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("all_passive.json");
    assert!(gridshare(dir.path(), &["allocate", "--scenario", scenario.to_str().unwrap(), "--out-dir", "out"]).status.success());
    for (_, selfish, allocated, eps) in cost_table(&dir.path().join("out/costs.csv")) {
        assert!(eps.abs() < 1e-12);
        assert!((selfish - allocated).abs() < 1e-12);
    }
}

#[test]
fn allocation_from_codes_and_selfish_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("three_agent.json");
    let s = scenario.to_str().unwrap();
    let o = gridshare(dir.path(), &["allocate", "--scenario", s, "--out-dir", "out", "--social-method", "codes", "--selfish-schedules", "alone"]);
    assert!(o.status.success());
    assert!(dir.path().join("out/trace.csv").exists());
    let total: f64 = cost_table(&dir.path().join("out/costs.csv")).iter().map(|r| r.2).sum();
    assert!((total - 3.488).abs() / 3.488 <= 5e-3);

    let sc = load_scenario(&scenario).unwrap();
    let d = gridshare_core::disagreement_point(&sc).unwrap();
    for (agent, bill) in sc.users().zip(d) {
        let text = fs::read_to_string(dir.path().join(format!("alone/selfish_{}.csv", agent.id))).unwrap();
        let own = parse_schedule_csv(&text, sc.dt()).unwrap().schedule;
        assert!((own.cost(sc.tariff()) - bill).abs() < 1e-9);
    }
}

#[test]
fn compare_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("three_agent.json");
    let s = scenario.to_str().unwrap();
    let ok = gridshare(dir.path(), &["compare", "--scenario", s, "--out-dir", "a"]);
    assert!(ok.status.success());
    assert!(value(&stdout(&ok), "relative_gap") <= 5e-3);
    assert_eq!(gridshare(dir.path(), &["compare", "--scenario", s, "--out-dir", "b", "--tol", "0"]).status.code(), Some(6));
    let wild = gridshare(dir.path(), &["compare", "--scenario", s, "--out-dir", "c", "--xi1", "10", "--max-iters", "2000"]);
    assert_eq!(wild.status.code(), Some(4));
    assert!(dir.path().join("c/trace.csv").exists());
    assert!(!dir.path().join("c/schedule_codes.csv").exists());
}

#[test]
fn weights_are_doubly_stochastic() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("three_agent.json");
    let o = gridshare(dir.path(), &["weights", "--scenario", scenario.to_str().unwrap(), "--out-dir", "out"]);
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("out/weights.csv")).unwrap();
    assert_eq!(text, stdout(&o));
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    for i in 0..rows.len() {
        assert!((rows[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((rows.iter().map(|r| r[i]).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn tampered_schedule_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("three_agent.json");
    let bad = GOLDEN.replacen("\n1,6.300000000000001,", "\n1,5.3,", 1);
    fs::write(dir.path().join("bad.csv"), bad).unwrap();
    let o = gridshare(dir.path(), &["validate", "--scenario", scenario.to_str().unwrap(), "--schedule", "bad.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("Balance"));
}

#[test]
fn generated_scenarios_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert!(gridshare(dir.path(), &["gen", "--seed", "7", "--count", "2", "--out-dir", "a"]).status.success());
    assert!(gridshare(dir.path(), &["gen", "--seed", "7", "--out-dir", "b"]).status.success());
    let a = fs::read(dir.path().join("a/gen_7.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/gen_7.json")).unwrap());
    load_scenario(dir.path().join("a/gen_8.json")).unwrap();
    let o = gridshare(dir.path(), &["solve", "--centralized", "--scenario", "a/gen_7.json", "--out-dir", "s"]);
    assert!(o.status.success());
}

#[test]
fn lp_dump_lists_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixture("arbitrage_t2.json");
    let o = gridshare(dir.path(), &["dump-lp", "--scenario", scenario.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lp = gridshare_core::oracle::build_social_lp(&fixtures::arbitrage_t2());
    assert_eq!(text.lines().filter(|l| l.starts_with("eq")).count(), lp.a_eq.len());
    assert_eq!(text.lines().filter(|l| l.starts_with("ub")).count(), lp.a_ub.len());
    assert_eq!(gridshare(dir.path(), &["dump-lp", "--scenario", scenario.to_str().unwrap(), "--agent", "99"]).status.code(), Some(2));
}
