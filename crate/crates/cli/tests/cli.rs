use std::path::Path;
use std::process::{Command, Output};

use ncdyadic::generate::{generate_field, FieldSpec};
use ncdyadic::haar::HaarSystem;
use ncdyadic::io::{to_json, FieldFile, MeasureFile, ShiftFile, SystemFile};
use ncdyadic::lattice::{DyadicLattice, Measure};
use ncdyadic::opalgebra::{Mat, OperatorField};
use ncdyadic::shift::{preset_shift, ShiftParams};
use num_complex::Complex64;
use serde_json::{json, Value};

fn ncdyadic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncdyadic")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn measure() -> Measure {
    let lattice = DyadicLattice::new(1, 4).unwrap();
    Measure::new(lattice, (0..16).map(|i| 1.0 + (i % 3) as f64).collect()).unwrap()
}

#[test]
fn validate_accepts_good_files() {
    let dir = tempfile::tempdir().unwrap();
    let mu = measure();
    let measure_path = write(dir.path(), "m.json", &to_json(&MeasureFile::from_measure(&mu)));
    let out = ncdyadic(&["validate", "measure", &measure_path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["report"]["valid"], json!(true));

    let mut system = SystemFile::from_system(&HaarSystem::canonical(&mu));
    system.measure = Some(MeasureFile::from_measure(&mu));
    let system_path = write(dir.path(), "h.json", &to_json(&system));
    assert!(ncdyadic(&["validate", "system", &system_path]).status.success());

    let f = generate_field(&FieldSpec::psd(1, 2), &mu).unwrap();
    let field_path = write(dir.path(), "f.json", &to_json(&FieldFile::from_field(&f)));
    assert!(ncdyadic(&["validate", "field", &field_path]).status.success());

    let shift = preset_shift("dyadic_hilbert", &mu, &ShiftParams::default()).unwrap();
    let mut file = ShiftFile::from_shift(&shift);
    file.measure = Some(MeasureFile::from_measure(&mu));
    let shift_path = write(dir.path(), "s.json", &to_json(&file));
    let out = ncdyadic(&["validate", "shift", &shift_path]);
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["s"], json!(1));
}

#[test]
fn validate_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let negative = write(dir.path(), "m.json", r#"{"d":1,"K":1,"leaf_mass":[1.0,-1.0]}"#);
    let out = ncdyadic(&["validate", "measure", &negative]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["report"]["valid"], json!(false));

    let mu = measure();
    let mut system = SystemFile::from_system(&HaarSystem::canonical(&mu));
    system.functions[0].coeffs[0] *= 2.0;
    system.measure = Some(MeasureFile::from_measure(&mu));
    let bad_system = write(dir.path(), "h.json", &to_json(&system));
    assert_eq!(ncdyadic(&["validate", "system", &bad_system]).status.code(), Some(1));

    let lattice = *mu.lattice();
    let indefinite = OperatorField::constant(lattice, &Mat::from_diagonal_element(1, 1, Complex64::new(-1.0, 0.0)));
    let bad_field = write(dir.path(), "f.json", &to_json(&FieldFile::from_field(&indefinite)));
    assert_eq!(ncdyadic(&["validate", "field", &bad_field]).status.code(), Some(1));

    let garbage = write(dir.path(), "g.json", "{ not json");
    assert_eq!(ncdyadic(&["validate", "field", &garbage]).status.code(), Some(24));
    assert_eq!(ncdyadic(&["validate", "field", "/nonexistent/file.json"]).status.code(), Some(3));
}

#[test]
fn run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = json!({
        "suite": "czd",
        "seed": 7,
        "lattice": { "K": 5 },
        "measure": { "preset": "uniform" },
        "field": { "n": 2 },
        "lambda": { "sweep": [1.0, 3.0] },
        "instances": 2,
        "output": "out"
    });
    let path = write(dir.path(), "c.json", &config.to_string());
    let out = ncdyadic(&["run", &path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out_dir = dir.path().join("out");
    for name in ["report.csv", "report.json", "meta.json"] {
        assert!(out_dir.join(name).exists(), "{name}");
    }
    let csv = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(csv.lines().next().unwrap().contains("ratio_beta_off"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], json!(7));
    assert!(report["instances"][0]["digests"]["measure"].as_str().unwrap().len() == 64);
    assert!(report.get("started_unix").is_none());

    let out = ncdyadic(&["report", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed"));

    std::fs::write(out_dir.join("report.csv"), csv.replace("true", "false")).unwrap();
    let out = ncdyadic(&["report", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("MISMATCH"));
}

#[test]
fn run_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"suite":"czd"}"#);
    assert_eq!(ncdyadic(&["run", &bad]).status.code(), Some(2));

    let unknown = json!({
        "suite": "czd", "seed": 1, "lattice": { "K": 3 },
        "measure": { "preset": "no_such_measure" }, "field": { "n": 1 }, "output": "o"
    });
    let path = write(dir.path(), "u.json", &unknown.to_string());
    assert_eq!(ncdyadic(&["run", &path]).status.code(), Some(22));

    let below = json!({
        "suite": "czd", "seed": 1, "lattice": { "K": 3 },
        "measure": { "preset": "uniform" }, "field": { "n": 1 },
        "lambda": { "value": 1e-30 }, "output": "o"
    });
    let path = write(dir.path(), "l.json", &below.to_string());
    assert_eq!(ncdyadic(&["run", &path]).status.code(), Some(19));

    let threads = json!({
        "suite": "haar", "seed": 1, "lattice": { "K": 3 },
        "measure": { "preset": "uniform" }, "field": { "n": 1 }, "output": "o"
    });
    let path = write(dir.path(), "t.json", &threads.to_string());
    let out = Command::new(env!("CARGO_BIN_EXE_ncdyadic"))
        .args(["run", &path])
        .env("NCDYADIC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn checked_in_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ncdyadic_cli::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 5);
}
