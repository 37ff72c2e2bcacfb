use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn feelsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feelsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.txt", "devices = 4\nrounds = 5\n");
    let o = feelsim(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "ok");
}

#[test]
fn validate_noniid_divisibility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.txt",
        "# seven devices\ndevices = 7\npartition = noniid\n",
    );
    let o = feelsim(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("divisible by 5"), "{err}");
}

#[test]
fn validate_step_size_warning() {
    let dir = tempfile::tempdir().unwrap();
    let text = "tau = 10\neta = 0.9\nmu = 0.2\nL = 10\nG2 = 100\nGamma = 50\nZ2 = 2e4\ninit_gap = 5e3\n";
    let cfg = write(dir.path(), "c.txt", text);
    let o = feelsim(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("warning"), "{out}");
    assert!(out.contains("convergence-bound precondition"), "{out}");
    assert!(out.trim_end().ends_with("ok"));
}

#[test]
fn validate_reports_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.txt",
        "devices = x\nfoo = 1\ntau = 2\ntau = 3\nnonsense\n",
    );
    let o = feelsim(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for needle in ["line 2", "line 4", "line 5"] {
        assert!(err.contains(needle), "{needle} missing from {err}");
    }
}

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.txt",
        "devices = 5\nrounds = 8\ntau = 2\nbatch = 10\nseed = 9\n",
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = feelsim(&["run", &cfg, "-o", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (ta, tb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.starts_with("t,train_loss,test_metric,"));
}

#[test]
fn run_overrides_and_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.txt", "devices = 4\nrounds = 20\n");
    let o = feelsim(&["run", &cfg, "--rounds", "3", "--uplink=errorfree"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 4);
    // error-free uplink has no gamma
    assert!(out.lines().skip(1).all(|l| l.split(',').nth(8) == Some("-")));
}

#[test]
fn run_digital_infeasible_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.txt",
        "downlink = digital\np_dl = 1e-3\ndevices = 4\nrounds = 4\n",
    );
    let out = dir.path().join("t.csv");
    let o = feelsim(&["run", &cfg, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out).unwrap();
    assert!(
        text.lines().skip(1).all(|l| l.split(',').nth(4) == Some("infeasible")),
        "{text}"
    );
}

#[test]
fn run_config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.txt", "rounds = 2\n");
    assert_eq!(feelsim(&["run", &cfg, "--bogus", "1"]).status.code(), Some(1));
    assert_eq!(feelsim(&["run", &cfg, "--tau"]).status.code(), Some(1));
    assert_eq!(feelsim(&["run", &cfg, "stray"]).status.code(), Some(1));
    assert_eq!(feelsim(&["run", "/nonexistent/c.txt"]).status.code(), Some(1));
}

#[test]
fn run_missing_dataset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.txt", "dataset = missing.bin\nrounds = 2\n");
    let o = feelsim(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn bound_tau_sweep_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = feelsim(&[
        "bound",
        "--vary",
        "tau",
        "--values",
        "1,3,4,5,7,10",
        "--Pdl",
        "10",
        "--T",
        "50",
        "--out-dir",
        d,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for tau in [1, 3, 4, 5, 7, 10] {
        let text = fs::read_to_string(dir.path().join(format!("bound_tau_{tau}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,tau,P_dl,bound"));
        assert_eq!(lines.clone().count(), 50);
        assert!(lines.all(|l| l.split(',').nth(1) == Some(&tau.to_string()) && l.split(',').nth(2) == Some("10")));
    }
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with("best")).count(), 1);
}

#[test]
fn bound_pdl_sweep_two_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = feelsim(&[
        "bound",
        "--vary",
        "Pdl",
        "--values",
        "10,100",
        "--T",
        "20",
        "--out-dir",
        d,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut names: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names, ["bound_Pdl_10.csv", "bound_Pdl_100.csv"]);
}

#[test]
fn bound_invalid_parameter() {
    let o = feelsim(&["bound", "--vary", "rho", "--values", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("rho") && (err.contains("Usage") || err.contains("--help")),
        "{err}"
    );
}

#[test]
fn bound_invalid_value() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = feelsim(&["bound", "--vary", "mu", "--values", "-1", "--out-dir", d]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn help_lists_keys() {
    let o = feelsim(&["run", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("lambda_thr") && out.contains("partition"));
}
