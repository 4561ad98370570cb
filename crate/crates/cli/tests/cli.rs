use std::path::Path;
use std::process::{Command, Output};

fn klslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_klslab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_one_csv_per_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.cfg", "command = simulate\nd = 2\nn_atoms = 50\nT = 0.05\npaths = 100\n");
    let out = tmp.path().join("out");
    let o = klslab(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csvs: Vec<_> = std::fs::read_dir(out.join("paths")).unwrap().collect();
    assert_eq!(csvs.len(), 100);
    let first = std::fs::read_to_string(out.join("paths/path_0000.csv")).unwrap();
    assert!(first.starts_with("t,gamma,spec_Q,g_E,qv_rate,v_norm,delta"));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["paths"].as_array().unwrap().len(), 100);
    assert_eq!(summary["master_seed"], 0);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.cfg", "command = simulate\nd = 2\nn_atoms = 30\nT = 0.02\npaths = 3\nseed = 5\n");
    let a = klslab(&["simulate", "--config", &cfg]);
    let b = klslab(&["simulate", "--config", &cfg, "--seed", "5"]);
    let c = klslab(&["simulate", "--config", &cfg, "--seed", "6"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn verify_passes_and_injected_fault_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = write_config(tmp.path(), "ok.cfg", "command = verify\nsuite = trace\ncases = 300\n");
    let o = klslab(&["verify", "--config", &ok]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["checks"][0]["status"], "pass");
    assert_eq!(report["checks"][0]["gate"], "hard");
    assert_eq!(report["environment"]["log_base"], "natural");

    let bad = write_config(tmp.path(), "bad.cfg", "command = verify\nsuite = trace\ncases = 300\ninject_fault = trace\n");
    let o = klslab(&["verify", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["checks"][0]["status"], "fail");
    assert_eq!(report["checks"][0]["violations"], 300);
}

#[test]
fn config_errors_exit_two_with_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.cfg", "command = simulate\nbogus = 1\n", "line 2"),
        ("dup.cfg", "command = simulate\nd = 2\nd = 3\n", "line 3"),
        ("dt.cfg", "command = simulate\nT = 0.1\ndt = 0.5\n", "dt"),
        ("suite.cfg", "command = verify\nsuite = nothing\n", "suite"),
        ("mismatch.cfg", "command = bounds\n", "bounds"),
    ];
    for (name, text, needle) in cases {
        let cfg = write_config(tmp.path(), name, text);
        let o = klslab(&["simulate", "--config", &cfg]);
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(2), "{name}: {err}");
        assert!(err.contains(needle), "{name}: {err}");
    }
    let o = klslab(&["simulate", "--config", "/nonexistent/klslab.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bounds_defaults_to_standard_streams() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "b.cfg", "command = bounds\nd_list = 1e3, 1e6\n");
    let o = klslab(&["bounds", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let csv = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "d,kls_original,lee_vempala,main_thm,ell_star,exponent");
    assert_eq!(lines.len(), 3);
    let sidecar: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(sidecar["log_base"], "natural");
    assert_eq!(sidecar["rows"], 2);
    assert!(sidecar["first_row_beating_lee_vempala"].is_null());

    let empty = write_config(tmp.path(), "e.cfg", "command = bounds\nd_list =\n");
    assert_eq!(klslab(&["bounds", "--config", &empty]).status.code(), Some(2));
}

#[test]
fn report_writes_estimates_and_sandwich() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "r.cfg", "command = report\nd = 2\nn_atoms = 200\nT = 0.1\npaths = 8\n");
    let out = tmp.path().join("r");
    let o = klslab(&["report", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("estimates.csv")).unwrap();
    assert!(csv.starts_with("kind,value,u1,u2,threshold"));
    assert_eq!(csv.lines().count(), 4);
    let sandwich: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("sandwich.json")).unwrap()).unwrap();
    assert_eq!(sandwich["checks"].as_array().unwrap().len(), 2);
}
