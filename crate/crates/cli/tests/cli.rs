//! End-to-end checks of the command-line contract: exit codes, schema
//! diagnostics, deterministic re-runs and the shape of emitted files.

use std::fs;
use std::path::Path;
use std::process::Command;

use assert_cmd::prelude::*;
use predicates::prelude::*;
use tempfile::TempDir;

fn qbarrier() -> Command {
    Command::cargo_bin("qbarrier").unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SINGLE_BARRIER: &str = r#"
[device]
widths_nm = [1.0]
u_ev = [0.48]
bounds_ev = [0.0, 2.0]

[sweep]
energy_ev = 0.7
v_max = 0.5
points = 6
u_ev = [0.48, 0.55]
"#;

const DESIGN: &str = r#"
[device]
widths_nm = [1.0, 1.0, 1.0, 1.0]
u_ev = [0.7, 0.7, 0.7, 0.7]
bounds_ev = [0.7, 1.7]

[target]
energy_ev = 0.026
slope = 2e-5
intercept = 9.9e-6
v_max = 0.25
points = 10
"#;

#[test]
fn missing_config_flag_is_a_config_error() {
    qbarrier()
        .arg("transmission")
        .assert()
        .code(2)
        .stderr(predicate::str::contains("--config"));
}

#[test]
fn unknown_key_rejected_with_location() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[device]\nnot_a_key = 1\n");
    qbarrier()
        .args(["transmission", "--config", &cfg])
        .assert()
        .code(2)
        .stderr(predicate::str::contains("line 2").and(predicate::str::contains("not_a_key")));
}

#[test]
fn evanescent_lead_is_a_numeric_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "ev.toml",
        "[device]\nwidths_nm = [1.0]\nu_ev = [0.5]\nouter_left_ev = 0.8\nbounds_ev = [0.0, 2.0]\n\n[sweep]\nenergy_ev = 0.7\nv_max = 0.1\npoints = 2\n",
    );
    qbarrier()
        .args(["transmission", "--config", &cfg])
        .arg("--out")
        .arg(tmp.path().join("out"))
        .assert()
        .code(3)
        .stderr(predicate::str::contains("no incident wave"));
}

#[test]
fn iteration_cap_is_a_non_convergence_error_but_still_writes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "cap.toml",
        &format!("{DESIGN}\n[optimizer]\nmax_iterations = 1\n"),
    );
    let out = tmp.path().join("out");
    qbarrier()
        .args(["design", "--config", &cfg, "--no-timestamp"])
        .arg("--out")
        .arg(&out)
        .assert()
        .code(4);
    assert!(out.join("design_table.csv").exists());
    assert!(out.join("design_trace.csv").exists());
}

#[test]
fn reruns_are_byte_identical_without_timestamp() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "sweep.toml", SINGLE_BARRIER);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        qbarrier()
            .args(["transmission", "--config", &cfg, "--no-timestamp"])
            .arg("--out")
            .arg(out)
            .assert()
            .success();
    }
    assert_eq!(
        fs::read(a.join("transmission.csv")).unwrap(),
        fs::read(b.join("transmission.csv")).unwrap()
    );
}

#[test]
fn timestamp_header_present_by_default() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "sweep.toml", SINGLE_BARRIER);
    let out = tmp.path().join("out");
    qbarrier()
        .args(["transmission", "--config", &cfg])
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    let text = fs::read_to_string(out.join("transmission.csv")).unwrap();
    assert!(text.starts_with("# generated at unix time "));
}

#[test]
fn zero_point_sweep_emits_header_only() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "empty.toml",
        &SINGLE_BARRIER.replace("points = 6", "points = 0"),
    );
    let out = tmp.path().join("out");
    qbarrier()
        .args(["transmission", "--config", &cfg, "--no-timestamp"])
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    let text = fs::read_to_string(out.join("transmission.csv")).unwrap();
    assert_eq!(text, "v_bias,t,method,validity_margin_ev\n");
}

#[test]
fn validity_margin_decreases_and_starts_at_the_offset() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "sweep.toml", SINGLE_BARRIER);
    let out = tmp.path().join("out");
    qbarrier()
        .args(["validate-wkb", "--config", &cfg, "--no-timestamp"])
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    let text = fs::read_to_string(out.join("validity.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    // F(0) = |E - U| exactly, per configured potential
    assert!((rows[0][1] - 0.22).abs() < 1e-12);
    assert!((rows[0][2] - 0.15).abs() < 1e-12);
    for w in rows.windows(2) {
        assert!(w[1][1] < w[0][1] && w[1][2] < w[0][2]);
    }
}

#[test]
fn oracle_compare_free_particle_is_unity() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "free.toml",
        "[device]\nwidths_nm = [1.0]\nu_ev = [0.0]\nbounds_ev = [-1.0, 1.0]\n\n[sweep]\nenergy_ev = 0.7\nv_max = 0.0\npoints = 1\n",
    );
    let out = tmp.path().join("out");
    qbarrier()
        .args(["oracle-compare", "--config", &cfg, "--no-timestamp"])
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    let text = fs::read_to_string(out.join("oracle_compare.csv")).unwrap();
    let row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    for t in &row[1..4] {
        assert!((t - 1.0).abs() < 1e-6, "free particle should transmit fully, got {t}");
    }
}

#[test]
fn design_deterministic_reaches_small_objective() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "design.toml", DESIGN);
    let out = tmp.path().join("out");
    qbarrier()
        .args(["design", "--config", &cfg, "--no-timestamp"])
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    let summary = fs::read_to_string(out.join("design_summary.txt")).unwrap();
    let objective: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("objective = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(objective < 1e-11, "objective {objective}");
    let table = fs::read_to_string(out.join("design_table.csv")).unwrap();
    assert!(table.starts_with("gradient,j,u_1,u_2,u_3,u_4\n"));
}

#[test]
fn design_robust_emits_moments_and_level() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "robust.toml",
        &format!("{DESIGN}\n[robust]\nhalf_width_ev = 0.2\nalpha = 0.0\nepsilon = 1e-2\nlevel_max = 6\n"),
    );
    let out = tmp.path().join("out");
    qbarrier()
        .args(["design", "--mode", "robust", "--config", &cfg, "--no-timestamp"])
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    let summary = fs::read_to_string(out.join("design_summary.txt")).unwrap();
    for key in ["mean = ", "std = ", "quadrature_level = ", "adaptive_converged = true"] {
        assert!(summary.contains(key), "missing {key} in summary:\n{summary}");
    }
    assert!(out.join("adaptive_trace.csv").exists());
    let table = fs::read_to_string(out.join("design_table.csv")).unwrap();
    assert!(table.starts_with("alpha,mean,std,u_1,u_2,u_3,u_4\n"));
}

#[test]
fn quadrature_export_weights_sum_to_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "quad.toml",
        &format!("{DESIGN}\n[quadrature]\nlevel = 3\n"),
    );
    let out = tmp.path().join("out");
    qbarrier()
        .args(["quadrature-export", "--config", &cfg, "--no-timestamp"])
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    let text = fs::read_to_string(out.join("quadrature.csv")).unwrap();
    let mut sum = 0.0;
    let mut count = 0;
    for line in text.lines().skip(1) {
        sum += line.split(',').last().unwrap().parse::<f64>().unwrap();
        count += 1;
    }
    assert_eq!(count, 137, "merged node count of the level-3 grid in dimension 4");
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn shipped_recipes_satisfy_the_schema() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().map(|e| e == "toml").unwrap_or(false) {
            let config = qbarrier_cli::config::load(&path)
                .unwrap_or_else(|e| panic!("{}: {}", path.display(), e.message()));
            let constants = config.constants.resolve();
            config
                .device
                .to_spec(&constants)
                .unwrap_or_else(|e| panic!("{}: {}", path.display(), e.message()));
            seen += 1;
        }
    }
    assert!(seen >= 6, "expected the shipped recipe set, found {seen}");
}
