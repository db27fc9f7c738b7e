use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mixhess_cli::output::read_solution_csv;

const BIN: &str = env!("CARGO_BIN_EXE_mixhess");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("mixhess-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn mixhess(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const DISK: &str = r#"
k = 2
alpha = [0.5, 0.25]
phi = "1"
h = 0.0625

[domain]
kind = "disk"
radius = 1.0
"#;

#[test]
fn quadratic_disk_runs_clean() {
    let out = scratch("quad");
    let cfg = configs().join("disk_quadratic.toml");
    let o = mixhess(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["solution.csv", "path.json", "audit.txt", "convergence.csv", "u.dat", "residual.dat", "margin.dat"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let audit = fs::read_to_string(out.join("audit.txt")).unwrap();
    assert!(audit.trim_end().ends_with("== overall PASS"));
    assert!(!audit.contains("FAIL"));
    let path: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("path.json")).unwrap()).unwrap();
    let c = path["limit"]["c"].as_f64().unwrap();
    assert!(c.abs() <= 5.0 * 0.0625f64.powi(2), "c = {c}");
    assert_eq!(path["records"].as_array().unwrap().len(), 11);
    let conv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    let row: Vec<f64> = conv.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(row[0], 0.0625);
    assert!(row[1] < 1e-9 && row[2] < 1e-9, "{conv}");
}

#[test]
fn sign_changing_alpha_is_rejected() {
    let dir = scratch("alpha-x");
    let cfg = write_config(&dir, &DISK.replace("[0.5, 0.25]", r#"["x", 0.25]"#));
    let o = mixhess(&["run", &cfg, "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha[0]"));
    assert!(!dir.join("out").exists());
}

#[test]
fn k_one_is_rejected() {
    let dir = scratch("k1");
    let cfg = write_config(&dir, &DISK.replace("k = 2", "k = 1").replace("[0.5, 0.25]", "[0.25]"));
    let o = mixhess(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("k = 1"));
}

#[test]
fn missing_config_and_bad_syntax_exit_one() {
    assert_eq!(mixhess(&["run", "/nonexistent/run.toml"]).status.code(), Some(1));
    let dir = scratch("syntax");
    let cfg = write_config(&dir, &DISK.replace("h = 0.0625", "h = "));
    assert_eq!(mixhess(&["run", &cfg]).status.code(), Some(1));
    let cfg = write_config(&dir, &DISK.replace(r#"phi = "1""#, r#"phi = "1 +""#));
    assert_eq!(mixhess(&["run", &cfg]).status.code(), Some(1));
}

#[test]
fn solver_failure_exits_two() {
    let dir = scratch("maxit");
    let cfg = write_config(&dir, &format!("{DISK}\n[schedule]\nmax_iter = 1\ntol_res = 1e-15\n").replace(r#""1""#, r#""1 + 0.5*x""#));
    let o = mixhess(&["run", &cfg, "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ε = "));
}

#[test]
fn solution_csv_reads_back_exactly() {
    let out = scratch("csv");
    let cfg = configs().join("ellipse.toml");
    let o = mixhess(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--no-audit"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("audit.txt").exists());
    let text = fs::read_to_string(out.join("solution.csv")).unwrap();
    let rows = read_solution_csv(&out.join("solution.csv")).unwrap();
    assert_eq!(rows.len(), text.lines().count() - 1);
    let rewritten = mixhess_cli::output::format_solution_csv(&rows);
    assert_eq!(rewritten, text);
    let interior = rows.iter().filter(|r| r.derivs.is_some()).count();
    assert!(interior > 0 && interior < rows.len());
}

#[test]
fn outputs_are_byte_deterministic() {
    let cfg = configs().join("ellipse.toml");
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    for d in [&a, &b] {
        assert!(mixhess(&["run", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]).status.success());
    }
    for f in ["solution.csv", "path.json", "audit.txt", "u.dat", "residual.dat", "margin.dat"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

fn sweep_rows(out: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(out.join("sweep.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn h_sweep_on_cubic_case_is_second_order() {
    let out = scratch("sweep-h");
    let cfg = configs().join("disk_cubic.toml");
    let o = mixhess(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--param",
        "h",
        "--values",
        "0.0625,0.03125,0.015625",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = sweep_rows(&out);
    assert_eq!(rows[0].join(","), "h,c,c_last,linf_error,order,c_error,c_order,audits");
    assert_eq!(rows.len(), 4);
    assert!(rows[1][4].is_empty());
    for r in &rows[2..] {
        let order: f64 = r[4].parse().unwrap();
        assert!(order >= 1.9, "order {order}");
        assert_eq!(r[7], "pass");
    }
    assert_eq!(fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count(), 3);
}

#[test]
fn single_value_sweep_gives_degenerate_table() {
    let out = scratch("sweep-one");
    let cfg = configs().join("disk_quadratic.toml");
    let o = mixhess(&["sweep", cfg.to_str().unwrap(), "--param", "h", "--values", "0.0625", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let rows = sweep_rows(&out);
    assert_eq!(rows.len(), 2);
    assert!(rows[1][4].is_empty() && rows[1][6].is_empty());
}

#[test]
fn eps_min_sweep_tabulates_cauchy_changes() {
    let out = scratch("sweep-eps");
    let cfg = configs().join("ellipse.toml");
    let o = mixhess(&[
        "sweep",
        cfg.to_str().unwrap(),
        "--param",
        "eps-min",
        "--values",
        "1e-2,1e-3,1e-4",
        "--out",
        out.to_str().unwrap(),
        "--no-audit",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = sweep_rows(&out);
    assert_eq!(rows[0].join(","), "eps_min,c_last,c,c_last_change,linf_error,audits");
    let change: Vec<f64> = rows[2..].iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(rows[1][3].is_empty());
    assert!(change[1] < change[0], "{change:?}");
    assert!(rows[1..].iter().all(|r| r[5] == "off"));
}

#[test]
fn check_command_passes_and_is_seeded() {
    let a = mixhess(&["check", "--seed", "11", "--samples", "300"]);
    let b = mixhess(&["check", "--seed", "11", "--samples", "300"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).matches("PASS").count(), 3);
}
