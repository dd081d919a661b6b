//! End-to-end checks of the command-line interface through the real binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fourier-control"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run_ok(mut cmd: Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn near_zero_control_barely_moves() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        "sim.toml",
        &format!(
            r#"
[fourier]
a0 = 0.0
a = [1e-9]
b = [0.0]
omega = 1.0

[output]
dir = "{}"
"#,
            out_dir.display()
        ),
    );
    run_ok({
        let mut c = bin();
        c.arg("simulate").arg("--config").arg(&cfg);
        c
    });
    let summary = fs::read_to_string(out_dir.join("summary.toml")).unwrap();
    let table: toml::Value = toml::from_str(&summary).unwrap();
    let j = table["result"]["j"].as_float().unwrap();
    let z = table["result"]["z_final"].as_float().unwrap();
    assert!(j.abs() < 1e-9, "J = {j}");
    assert!(z.abs() < 1e-9, "z = {z}");
}

#[test]
fn strong_control_trajectory_has_both_phases() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        "sim.toml",
        &format!(
            r#"
[fourier]
a0 = 0.0
a = [0.0]
b = [4.0]
omega = 1.0

[output]
dir = "{}"
"#,
            out_dir.display()
        ),
    );
    run_ok({
        let mut c = bin();
        c.arg("simulate").arg("--config").arg(&cfg);
        c
    });
    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("tau,theta,theta_dot,z,z_dot,f_z,r_y,phase\n"));
    let has_stick = csv.lines().any(|l| l.ends_with(",stick"));
    let has_slip = csv
        .lines()
        .any(|l| l.ends_with(",slip+") || l.ends_with(",slip-"));
    assert!(has_stick && has_slip, "expected both phases in the output");

    let events = fs::read_to_string(out_dir.join("trajectory_events.csv")).unwrap();
    assert!(events.starts_with("tau,kind\n"));
    assert!(events.lines().count() > 10);
}

#[test]
fn malformed_config_exits_one_with_diagnostic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[plant]\nmu = \"not a number\"\n");
    let out = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mu"), "diagnostic should name the field: {stderr}");
}

#[test]
fn unknown_config_key_exits_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[plant]\nmju = 0.3\n");
    let out = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mju"));
}

#[test]
fn sub_epsilon_span_fraction_rejected_with_bounds_diagnostic() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        "spec.toml",
        &format!(
            r#"
[control_spec]
k = 1
phi = [1.5707963267948966]
p = 1e-12
q = 1.0
omega = 1.0
m = -4.0
M = 4.0

[output]
dir = "{}"
"#,
            out_dir.display()
        ),
    );
    let out = bin()
        .arg("export-control")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("span fractions") && stderr.contains("1"),
        "expected a bounds diagnostic, got: {stderr}"
    );
}

#[test]
fn exported_full_span_sine_matches_closed_form() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        "spec.toml",
        &format!(
            r#"
[control_spec]
k = 1
phi = [1.5707963267948966]
p = 1.0
q = 1.0
omega = 1.0
m = -4.0
M = 4.0

[output]
dir = "{}"
grid_points = 256
"#,
            out_dir.display()
        ),
    );
    run_ok({
        let mut c = bin();
        c.arg("export-control").arg("--config").arg(&cfg);
        c
    });
    let csv = fs::read_to_string(out_dir.join("control_samples.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("tau,u1"));
    let mut count = 0;
    for line in lines {
        let (tau, u) = line.split_once(',').unwrap();
        let tau: f64 = tau.parse().unwrap();
        let u: f64 = u.parse().unwrap();
        assert!(
            (u - 4.0 * tau.sin()).abs() <= 1e-4 * 8.0,
            "sample at tau = {tau} deviates: {u}"
        );
        count += 1;
    }
    assert_eq!(count, 256);
}

#[test]
fn single_point_grid_exports_one_row_at_zero() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        "spec.toml",
        &format!(
            r#"
[fourier]
a0 = 2.0
a = [1.0]
b = [0.0]
omega = 1.0

[output]
dir = "{}"
"#,
            out_dir.display()
        ),
    );
    run_ok({
        let mut c = bin();
        c.arg("export-control")
            .arg("--config")
            .arg(&cfg)
            .arg("--points")
            .arg("1");
        c
    });
    let csv = fs::read_to_string(out_dir.join("control_samples.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("0.0000000000000000e0,"));
}

#[test]
fn manifest_best_control_reimports_to_the_same_cost() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("opt");
    let cfg = write_config(
        tmp.path(),
        "opt.toml",
        &format!(
            r#"
[optimizer]
k_list = [1]
max_generations = 12
seed = 5

[output]
dir = "{}"
"#,
            out_dir.display()
        ),
    );
    run_ok({
        let mut c = bin();
        c.arg("optimize").arg("--config").arg(&cfg);
        c
    });

    let manifest: toml::Value =
        toml::from_str(&fs::read_to_string(out_dir.join("manifest_k1.toml")).unwrap()).unwrap();
    let cost = manifest["best"]["cost"].as_float().unwrap();
    let bc = &manifest["best_control"];
    let fmt_array = |key: &str| -> String {
        bc[key]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| format!("{:?}", v.as_float().unwrap()))
            .collect::<Vec<_>>()
            .join(", ")
    };

    // Re-import the best coefficients as an explicit [fourier] control.
    let sim_out = tmp.path().join("resim");
    let sim_cfg = write_config(
        tmp.path(),
        "resim.toml",
        &format!(
            r#"
[fourier]
a0 = {:?}
a = [{}]
b = [{}]
omega = {:?}

[output]
dir = "{}"
"#,
            bc["a0"].as_float().unwrap(),
            fmt_array("a"),
            fmt_array("b"),
            bc["omega"].as_float().unwrap(),
            sim_out.display()
        ),
    );
    run_ok({
        let mut c = bin();
        c.arg("simulate").arg("--config").arg(&sim_cfg);
        c
    });
    let summary: toml::Value =
        toml::from_str(&fs::read_to_string(sim_out.join("summary.toml")).unwrap()).unwrap();
    let j = summary["result"]["j"].as_float().unwrap();
    assert!(
        (j - cost).abs() < 1e-9,
        "round-trip cost mismatch: manifest {cost} vs resimulated {j}"
    );

    // The exported sample grid from the same manifest must exist and carry
    // the expected number of rows.
    let exp_out = tmp.path().join("exp");
    run_ok({
        let mut c = bin();
        c.arg("export-control")
            .arg("--config")
            .arg(&cfg)
            .arg("--manifest")
            .arg(out_dir.join("manifest_k1.toml"))
            .arg("--points")
            .arg("64")
            .arg("--out-dir")
            .arg(&exp_out);
        c
    });
    let csv = fs::read_to_string(exp_out.join("control_samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
}

#[test]
fn k_list_override_changes_the_run() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        "opt.toml",
        &format!(
            r#"
[optimizer]
k_list = [1]
max_generations = 3
population = 20
seed = 2

[output]
dir = "{}"
"#,
            out_dir.display()
        ),
    );
    run_ok({
        let mut c = bin();
        c.arg("optimize")
            .arg("--config")
            .arg(&cfg)
            .arg("--k-list")
            .arg("2");
        c
    });
    assert!(out_dir.join("manifest_k2.toml").exists());
    assert!(!out_dir.join("manifest_k1.toml").exists());
}
