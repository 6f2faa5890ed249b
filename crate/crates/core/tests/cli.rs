use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn solver(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solver"))
        .args(args)
        .env("LPSFLOW_OUTPUT_DIR", out)
        .output()
        .expect("solver binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_TGV2D: &str = r#"
[case]
kind = "tgv2d"
[mesh]
n = 4
p = 2
[physics]
nu = 0.01
[scheme]
dt = 0.01
t_end = 0.05
[output]
cadence = 1
"#;

#[test]
fn presets_are_listed_and_printable() {
    let tmp = tempfile::tempdir().unwrap();
    let o = solver(&["presets"], tmp.path());
    assert!(o.status.success());
    let names = String::from_utf8(o.stdout).unwrap();
    for n in ["tgv2d", "tgv3d", "shear_layer", "manufactured_poisson"] {
        assert!(names.lines().any(|l| l == n), "{names}");
    }
    let o = solver(&["presets", "tgv3d"], tmp.path());
    assert!(o.status.success());
    let table: toml::Table = toml::from_str(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert!(table.contains_key("mesh"));
    assert_eq!(solver(&["presets", "nope"], tmp.path()).status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write(tmp.path(), "good.toml", SMALL_TGV2D);
    assert_eq!(solver(&["check-config", &good], tmp.path()).status.code(), Some(0));

    let unknown = write(tmp.path(), "unknown.toml", &format!("{SMALL_TGV2D}\nbogus_key = 1\n"));
    assert_eq!(solver(&["check-config", &unknown], tmp.path()).status.code(), Some(2));
    assert_eq!(solver(&["run", &unknown], tmp.path()).status.code(), Some(2));

    assert_eq!(solver(&["check-config", &good, "--set", "mesh.p=0"], tmp.path()).status.code(), Some(2));
    assert_eq!(solver(&["check-config", &good, "--set", "novalue"], tmp.path()).status.code(), Some(2));
    assert_eq!(solver(&["check-config", "/definitely/missing.toml"], tmp.path()).status.code(), Some(2));
    assert_eq!(solver(&["frobnicate"], tmp.path()).status.code(), Some(2));
}

#[test]
fn run_writes_outputs_to_env_dir_and_manifest_reloads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "tgv.toml", SMALL_TGV2D);
    let out = tmp.path().join("first");
    let o = solver(&["run", &cfg], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("t,"));
    assert_eq!(lines.count(), 6);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"]["ok"], true);
    assert_eq!(manifest["derived"]["steps"], 5);

    let again = tmp.path().join("second");
    let manifest_path = out.join("run.json");
    let o = solver(&["run", manifest_path.to_str().unwrap()], &again);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(again.join("diagnostics.csv")).unwrap(), csv);
}

#[test]
fn set_overrides_apply() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "tgv.toml", SMALL_TGV2D);
    let o = solver(&["check-config", &cfg, "--set", "mesh.p=3", "--set", "scheme.t_end=0.5"], tmp.path());
    assert!(o.status.success());
    let table: toml::Table = toml::from_str(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(table["mesh"]["p"].as_integer(), Some(3));
    assert_eq!(table["scheme"]["t_end"].as_float(), Some(0.5));
}

#[test]
fn blow_up_exits_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.toml",
        r#"
[case]
kind = "tgv2d"
[mesh]
n = 4
p = 2
[physics]
nu = 0.0
[scheme]
dt = 3.0
t_end = 60.0
cfl_limit = 1000.0
convective_form = "conservative"
"#,
    );
    let out = tmp.path().join("out");
    let o = solver(&["run", &cfg], &out);
    assert_eq!(o.status.code(), Some(3));
    assert!(out.join("diagnostics.csv").exists());
}
