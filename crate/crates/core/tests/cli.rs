use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adsprop::io::read_json;

const BIN: &str = env!("CARGO_BIN_EXE_adsprop");

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL_SPECTRUM: &str = "[model]\ndimension = 4\nnu = 0.5\n[symbol]\ntype = \"robin\"\ntheta = 1.0\n[grid]\nintervals = 1500\n[truncation]\nl_max = 2\nk_max = 6\n";

fn run(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("ADSPROP_OUT");
    if let Some(d) = env_out {
        cmd.env("ADSPROP_OUT", d);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn spectrum_job_writes_headed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", SMALL_SPECTRUM);
    let out = dir.path().join("out");
    let o = run(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "11"], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS"));
    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("# schema_version=1 kind=spectrum seed=11"));
    let report = read_json(&out.join("spectrum_report.json")).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["seed"], 11);
    let spec = read_json(&out.join("spectrum.json")).unwrap();
    let sha = spec["body"]["checksums"]["spectrum.csv"].as_str().unwrap();
    assert_eq!(sha, adsprop::io::sha256_hex(csv.as_bytes()));
}

#[test]
fn repeated_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", SMALL_SPECTRUM);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let o = run(&["kernel", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap(), "--seed", "3"], None);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["kernel_slices.csv", "ccr_battery.csv", "kernel_report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn env_overrides_config_and_flag_overrides_env() {
    let dir = tempfile::tempdir().unwrap();
    let from_cfg = dir.path().join("cfg_out");
    let text = format!("{SMALL_SPECTRUM}[job]\nout = \"{}\"\n", from_cfg.display());
    let cfg = config(dir.path(), "c.toml", &text);
    let env = dir.path().join("env_out");
    assert!(run(&["spectrum", "--config", cfg.to_str().unwrap()], Some(&env)).status.success());
    assert!(env.join("spectrum.csv").exists());
    assert!(!from_cfg.exists());
    let flag = dir.path().join("flag_out");
    assert!(run(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", flag.to_str().unwrap()], Some(&env)).status.success());
    assert!(flag.join("spectrum.csv").exists());
}

#[test]
fn missing_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", "[model]\ndimension = 4\n[symbol]\ntype = \"dirichlet\"\n");
    let o = run(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.nu"));
}

#[test]
fn tightened_tolerances_fail_the_job() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", SMALL_SPECTRUM);
    let out = dir.path().join("out");
    let o = run(
        &["kernel", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--tolerance-scale", "1e-20"],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
    let report = read_json(&out.join("kernel_report.json")).unwrap();
    assert_eq!(report["body"]["tolerance_scale"], 1e-20);
}

#[test]
fn sweep_refuses_past_the_critical_value() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[model]\ndimension = 4\nnu = 0.5\n[symbol]\ntype = \"robin\"\ntheta = 0.0\n[grid]\nintervals = 1500\n[sweep]\ntheta_min = -1.0\ntheta_max = 1.0\ncount = 5\n";
    let cfg = config(dir.path(), "c.toml", text);
    let out = dir.path().join("out");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let s = read_json(&out.join("sweep.json")).unwrap();
    let star = s["body"]["theta_star"].as_f64().unwrap();
    assert!((star + 2.0 / std::f64::consts::PI).abs() < 1e-3, "{star}");
}
