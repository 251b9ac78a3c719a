use std::fs;
use std::process::Command;

use cellfree_cli::{verify_suite, ExperimentSpec, Level};
use cellfree_outage::moments::SubExpectations;

fn cellfree() -> Command {
    // a clean environment keeps CELLFREE_* overrides out of the runs
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cellfree"));
    cmd.env_clear();
    cmd
}

fn write_config(dir: &std::path::Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "num_aps = 4\nnum_user = 3\n");
    let out = cellfree().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key `num_user`"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn method_mode_mismatch_fails_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "num_aps = 4\nnum_users = 3\ntau_p = 2\npilot_mode = random_contaminated\n");
    let out_dir = dir.path().join("o");
    let out = cellfree().args(["sweep", "--methods", "mc,udr", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("orthogonal"));
    assert!(!out_dir.exists());

    let out = cellfree().args(["sweep", "--methods", "", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no methods"));
}

#[test]
fn compare_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "# small network\nnum_aps = 6\nantennas_per_ap = 2\nnum_users = 3\ntau_p = 3\nthresholds_db = -20:5:10\nsweep_axis = m\nsweep_values = 4, 8\n",
    );
    let out_dir = dir.path().join("o");
    let out = cellfree()
        .args(["compare", "--deployments", "2", "--iters", "200", "--seed", "4", "--threads", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("point_001.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "threshold_db,op_simulated,op_lognormal,op_udr,rate_simulated,rate_lognormal,rate_lb,rate_ub,rate_uatf,op_mmimo_closed,op_exact_small"
    );
    assert_eq!(lines.count(), 7);
    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("udr") && report.contains("M = 8"));
}

#[test]
fn environment_sits_between_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "num_aps = 4\nmc_iters = 10\n");
    std::env::set_var("CELLFREE_NUM_APS", "9");
    std::env::set_var("CELLFREE_MC_ITERS", "20");
    let spec = ExperimentSpec::load(Some(&cfg), &[("mc_iters", "30".into())]);
    std::env::remove_var("CELLFREE_NUM_APS");
    std::env::remove_var("CELLFREE_MC_ITERS");
    let spec = spec.unwrap();
    assert_eq!(spec.base.num_aps, 9);
    assert_eq!(spec.mc_iters, 30);
}

#[test]
fn verify_fast_passes() {
    let report = verify_suite(Level::Fast, None);
    assert!(report.passed(), "{}", report.table());
}

fn tamper(s: &mut SubExpectations) {
    s.a2b[1] *= 1.2;
}

#[test]
fn tampered_term_is_named() {
    let report = verify_suite(Level::Fast, Some(tamper));
    let failures: Vec<_> = report.failures().collect();
    assert!(!failures.is_empty(), "{}", report.table());
    assert!(failures.iter().all(|f| f.block == "moment-oracle"));
    assert!(failures.iter().any(|f| f.check.contains("E[A^2 B^i]")), "{}", report.table());
}
