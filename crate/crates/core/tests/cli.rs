use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfg-nash"))
        .args(args)
        .arg("--output")
        .arg(out)
        .arg("--quiet")
        .output()
        .unwrap()
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn read_sweep(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn solve_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--config", &config("quadratic.toml")], dir.path());
    assert_eq!(out.status.code(), Some(0));
    for f in ["trajectory.csv", "control.csv", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let traj = mfg_nash::Trajectory::read_csv(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.time.steps, 64);
    assert_eq!(traj.terminal(), &[-1.0, 1.0]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for key in ["condition", "action", "residuals", "hje", "value_gradient", "nash", "uniqueness", "picard", "pass", "config", "timing"] {
        assert!(report.get(key).is_some(), "{key}");
    }
}

#[test]
fn zero_potentials_report_zero_action() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--config", &config("zero.toml")], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["action"]["total"], 0.0);
}

#[test]
fn forced_non_convergence_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("quadratic.toml"))
        .unwrap()
        .replace("force = true", "force = true\nmax_iter = 1");
    let path = dir.path().join("one_step.toml");
    std::fs::write(&path, text).unwrap();
    let out = run(&["solve", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["check", "--config", &config("cosine.toml")], dir.path()).status.code(), Some(0));
    assert_eq!(run(&["check", "--config", &config("zero.toml")], dir.path()).status.code(), Some(0));
    assert_eq!(run(&["check", "--config", &config("cosine_t1.toml")], dir.path()).status.code(), Some(3));
    assert_eq!(run(&["solve", "--config", &config("cosine_t1.toml")], dir.path()).status.code(), Some(3));
    // Outside the regime the solve runs but independent starts disagree.
    assert_eq!(
        run(&["solve", "--force", "--config", &config("cosine_t1.toml")], dir.path()).status.code(),
        Some(4)
    );
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["solve"], dir.path()).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(2));
    let out = run(&["sweep", "--config", &config("cosine.toml"), "--param", "T", "--values"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let path = dir.path().join("typo.toml");
    let text = std::fs::read_to_string(configs().join("cosine.toml")).unwrap().replace("phi =", "phii =");
    std::fs::write(&path, text).unwrap();
    let out = run(&["check", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem.phii: unknown key"));
}

#[test]
fn horizon_sweep_margin_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["sweep", "--config", &config("cosine.toml"), "--param", "T", "--values", "0.05,0.1,0.2,0.4"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let rows = read_sweep(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 4);
    let margins: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(margins.windows(2).all(|w| w[1] < w[0]), "{margins:?}");
}

#[test]
fn steps_sweep_residual_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["sweep", "--config", &config("quadratic.toml"), "--param", "M", "--values", "16,32,64"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let rows = read_sweep(&dir.path().join("sweep.csv"));
    let el: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    for w in el.windows(2) {
        assert!((w[0] / w[1]).log2() >= 0.9, "{el:?}");
    }
}

#[test]
fn sweep_records_refusals_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["sweep", "--config", &config("cosine.toml"), "--param", "T", "--values", "0.1,1.0"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let rows = read_sweep(&dir.path().join("sweep.csv"));
    assert_eq!(&rows[0][3], "pass");
    assert_eq!(&rows[1][3], "refused");
}

#[test]
fn seed_flag_changes_only_randomized_checks() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&["solve", "--config", &config("cosine.toml"), "--seed", "1"], a.path());
    run(&["solve", "--config", &config("cosine.toml"), "--seed", "2"], b.path());
    let load = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap()
    };
    let (ra, rb) = (load(a.path()), load(b.path()));
    assert_eq!(ra["action"], rb["action"]);
    assert_ne!(ra["nash"]["min_gap"], rb["nash"]["min_gap"]);
    assert_eq!(ra["config"]["seed"], 1);
}
