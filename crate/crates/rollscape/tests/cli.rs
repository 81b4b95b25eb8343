use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rollscape::commands::snaking_diagram;
use rollscape::config::RunConfig;

fn rollscape(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rollscape"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("ROLLSCAPE_JOBS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_GRID: &str = "mu_range = [0.18, 0.21]\nh_range = [-0.02, 0.02]\ngrid = [5, 4]\n";

#[test]
fn malformed_toml_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "nu = 1.6\nmu_range = [0.15, \ngrid = [3, 3]\n");
    let o = rollscape(&["rolls", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn empty_mu_range_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mu_range = [0.2, 0.2]\n");
    let o = rollscape(&["svf", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mu_range"));
}

#[test]
fn bad_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["rolls", "--mesh", "-1"][..],
        &["pulse", "--phase", "half"],
        &["snake", "--eps", "-0.1"],
    ] {
        assert_eq!(
            rollscape(args, dir.path()).status.code(),
            Some(2),
            "{args:?}"
        );
    }
}

#[test]
fn maxwell_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_GRID);
    let o = rollscape(&["maxwell", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("maxwell/maxwell.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mu = v["mu_max"].as_f64().unwrap();
    assert!((0.199..=0.202).contains(&mu), "{mu}");
    let s_h = v["s_h_at_max"].as_f64().unwrap();
    assert!((-1.01..=-0.99).contains(&s_h));
    assert!(v["s_mu_at_max"].as_f64().unwrap() > 0.0);
    assert!(v["identity_max_residual"].as_f64().unwrap() <= 1e-8);
    let saved = fs::read_to_string(dir.path().join("maxwell/config.toml")).unwrap();
    let saved = RunConfig::from_toml(&saved).unwrap();
    assert_eq!(saved.grid, [5, 4]);
    assert_eq!(saved.out, dir.path());
}

#[test]
fn maxwell_without_sign_change_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{SMALL_GRID}[maxwell]\nbracket = [0.15, 0.19]\n"),
    );
    let o = rollscape(&["maxwell", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn rolls_beyond_the_fold_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mu_range = [0.3, 0.4]\ngrid = [3, 3]\n");
    let o = rollscape(&["rolls", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(dir.path().join("rolls/rolls.csv").exists());
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .filter(|(name, _)| name != "config.toml")
        .collect();
    files.sort();
    files
}

#[test]
fn rolls_and_svf_are_deterministic_and_idempotent() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = write_config(a.path(), SMALL_GRID);
    for cmd in ["rolls", "svf"] {
        assert!(rollscape(&[cmd, "--config", &cfg, "--jobs", "1"], a.path())
            .status
            .success());
        assert!(rollscape(&[cmd, "--config", &cfg, "--jobs", "3"], b.path())
            .status
            .success());
        let first = snapshot(&a.path().join(cmd));
        assert!(!first.is_empty());
        assert_eq!(first, snapshot(&b.path().join(cmd)), "{cmd}");
        assert!(rollscape(&[cmd, "--config", &cfg], a.path())
            .status
            .success());
        assert_eq!(first, snapshot(&a.path().join(cmd)), "{cmd} rerun");
    }
    let csv = fs::read_to_string(a.path().join("rolls/rolls.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 4);
    assert!(csv.starts_with("mu,h,p,alpha,a_0,"));
    assert!(a.path().join("svf/svf.svg").exists());
}

#[test]
fn snake_is_byte_identical_across_job_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = write_config(
        a.path(),
        &format!(
            "{SMALL_GRID}eps = [0.0, 0.1]\nphases = [\"zero\"]\n[snake]\nplateau_cap = 16.0\n"
        ),
    );
    let oa = rollscape(
        &["snake", "--config", &cfg, "--no-plot", "--jobs", "1"],
        a.path(),
    );
    assert!(oa.status.success(), "{}", stderr(&oa));
    let ob = Command::new(env!("CARGO_BIN_EXE_rollscape"))
        .args(["snake", "--config", &cfg, "--no-plot", "--out"])
        .arg(b.path())
        .env("ROLLSCAPE_JOBS", "2")
        .output()
        .unwrap();
    assert!(ob.status.success(), "{}", stderr(&ob));
    let snap = snapshot(&a.path().join("snake"));
    assert_eq!(snap, snapshot(&b.path().join("snake")));
    assert!(!a.path().join("snake/diagram.svg").exists());
    let index = fs::read_to_string(a.path().join("snake/branches.csv")).unwrap();
    assert_eq!(index.lines().count(), 3);
    let branch =
        rollscape::formats::read_branch(&a.path().join("snake/branch_zero_eps0.csv")).unwrap();
    assert!(branch.iter().any(|p| p.fold));
    assert!(branch.last().unwrap().plateau >= 16.0);
}

#[test]
fn empty_snaking_diagram() {
    let dir = tempfile::tempdir().unwrap();
    snaking_diagram(&[], dir.path(), Some(0.2004), true).unwrap();
    assert_eq!(
        fs::read_to_string(dir.path().join("branches.csv")).unwrap(),
        "label,phase,eps,points,folds,left_folds,file\n"
    );
    let svg = fs::read_to_string(dir.path().join("diagram.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn check_subset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = rollscape(&["check", "--only", "7,10"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(
        out.lines().filter(|l| l.contains("PASS")).count(),
        2,
        "{out}"
    );
}
