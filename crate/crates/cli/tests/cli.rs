use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dissipative-ising"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn small_config(backend: &str) -> Value {
    serde_json::json!({
        "model": { "n": 3, "coupling": { "kind": "power_law", "J": 1.0, "zeta": 1.0 }, "geometry": { "kind": "chain" } },
        "rates": { "gamma_ud": 0.1, "gamma_du": 0.05, "gamma_el": 0.2 },
        "run": {
            "backend": backend,
            "observables": [
                "spin_length",
                "bloch",
                { "corr": { "j": 0, "k": 2, "kind": "+-" } },
                { "corr": { "j": 1, "k": 0, "kind": "-z" } },
                { "variance": { "psi": 0.3 } },
                { "squeezing": { "psi": "min" } },
                "fluct_x"
            ],
            "times": { "start": 0.0, "stop": 2.0, "count": 5, "spacing": "linear" },
            "n_traj": 4000,
            "seed": 11
        },
        "output": { "path": "result", "format": "csv" }
    })
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse::<f64>().expect("numeric cell")).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"));
    rows.iter().map(|r| r[i]).collect()
}

fn run_in(dir: &TempDir, config: &Path, extra: &[&str]) -> Output {
    let out_dir = dir.path().join("out");
    let mut args = vec!["run", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn every_preset_validates() {
    let listed = run(&["preset", "list"]);
    assert_eq!(code(&listed), 0);
    let names: Vec<String> = String::from_utf8(listed.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(names, ["fig3a", "fig3b_zeta0", "fig3b_zeta3", "fig3c", "oracle_triangle"]);
    let dir = TempDir::new().unwrap();
    for name in &names {
        let out = run(&["preset", name]);
        assert_eq!(code(&out), 0, "{name}");
        let path = dir.path().join(format!("{name}.json"));
        fs::write(&path, &out.stdout).unwrap();
        let v = run(&["validate", path.to_str().unwrap()]);
        assert_eq!(code(&v), 0, "{name}: {}", stderr(&v));
    }
}

#[test]
fn unknown_preset_is_a_config_error() {
    let out = run(&["preset", "fig9"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("oracle_triangle"));
}

#[test]
fn unknown_key_reports_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        "{\n  \"model\": { \"n\": 2, \"coupling\": { \"kind\": \"all_to_all\", \"J\": 1.0 } },\n  \"run\": {\n    \"backend\": \"closed_form\",\n    \"observabels\": []\n  }\n}\n",
    )
    .unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("bad.json:5:"), "{msg}");
    assert!(msg.contains("observabels"), "{msg}");
}

#[test]
fn closed_form_rejects_tilted_start_with_guidance() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_config("closed_form");
    cfg["initial"] = serde_json::json!({ "theta": 1.0, "phi": 0.0 });
    let path = write_config(dir.path(), "tilted.json", &cfg);
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("tilted.json:") && msg.contains("initial"), "{msg}");
    assert!(msg.contains("trajectories"), "{msg}");

    cfg["run"]["backend"] = "trajectories".into();
    let path = write_config(dir.path(), "tilted.json", &cfg);
    assert_eq!(code(&run(&["validate", path.to_str().unwrap()])), 0);
}

#[test]
fn semantic_errors_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let cases: Vec<(&str, Box<dyn Fn(&mut Value)>, &str)> = vec![
        ("negative rate", Box::new(|c| c["rates"]["gamma_el"] = (-1.0).into()), "gamma_el"),
        ("lindblad size", Box::new(|c| {
            c["model"] = serde_json::json!({ "n": 13, "coupling": { "kind": "all_to_all", "J": 1.0 } });
            c["run"]["backend"] = "lindblad".into();
            c["run"]["observables"] = serde_json::json!(["spin_length"]);
        }), "12"),
        ("site range", Box::new(|c| c["run"]["observables"] = serde_json::json!([{ "corr": { "j": 0, "k": 3, "kind": "++" } }])), "out of range"),
        ("phi curve backend", Box::new(|c| {
            c["run"]["backend"] = "lindblad".into();
            c["run"]["observables"] = serde_json::json!([{ "phi_curve": { "J": 1.0 } }]);
        }), "phi_curve"),
        ("angle count", Box::new(|c| c["initial"] = serde_json::json!({ "theta": [1.0, 1.0], "phi": 0.0 })), "2 values for 3 spins"),
        ("log grid", Box::new(|c| c["run"]["times"]["spacing"] = "log".into()), "times"),
        ("geometry size", Box::new(|c| c["model"]["geometry"] = serde_json::json!({ "kind": "square", "dims": [2, 2] })), "geometry has 4 sites"),
        ("psi keyword", Box::new(|c| c["run"]["observables"] = serde_json::json!([{ "squeezing": { "psi": "max" } }])), "min"),
    ];
    for (label, edit, needle) in cases {
        let mut cfg = small_config("closed_form");
        edit(&mut cfg);
        let path = write_config(dir.path(), "case.json", &cfg);
        let out = run(&["validate", path.to_str().unwrap()]);
        assert_eq!(code(&out), 2, "{label}");
        assert!(stderr(&out).contains(needle), "{label}: {}", stderr(&out));
    }
}

#[test]
fn csv_round_trips_with_declared_columns() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "cf.json", &small_config("closed_form"));
    let out = run_in(&dir, &path, &["--no-timestamp"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = read_csv(&dir.path().join("out/result.csv"));
    assert_eq!(header[0], "t");
    assert!(header.contains(&"corr_pm_0_2_re".to_string()));
    assert!(header.contains(&"corr_mz_1_0_im".to_string()));
    assert!(!header.iter().any(|h| h.ends_with("_stderr")));
    assert_eq!(rows.len(), 5);
    assert_eq!(column(&header, &rows, "t"), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    assert_eq!(column(&header, &rows, "spin_length")[0], 1.5);

    let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/result.csv.meta.json")).unwrap()).unwrap();
    let cols: Vec<String> = serde_json::from_value(meta["columns"].clone()).unwrap();
    assert_eq!(cols, header);
    assert_eq!(meta["derived_rates"]["gamma_r"], 0.15000000000000002);
    assert_eq!(meta["code"]["version"], env!("CARGO_PKG_VERSION"));
    assert!(meta.get("timestamp").is_none());
}

#[test]
fn trajectories_add_stderr_and_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "mc.json", &small_config("trajectories"));
    let data = dir.path().join("out/result.csv");
    let meta = dir.path().join("out/result.csv.meta.json");

    assert_eq!(code(&run_in(&dir, &path, &["--no-timestamp"])), 0);
    let (first_data, first_meta) = (fs::read(&data).unwrap(), fs::read(&meta).unwrap());
    assert_eq!(code(&run_in(&dir, &path, &["--no-timestamp", "--threads", "1"])), 0);
    assert_eq!(fs::read(&data).unwrap(), first_data);
    assert_eq!(fs::read(&meta).unwrap(), first_meta);

    let (header, rows) = read_csv(&data);
    for name in ["spin_length_stderr", "corr_pm_0_2_re_stderr", "corr_pm_0_2_im_stderr", "xi_min_stderr"] {
        assert!(header.contains(&name.to_string()), "{name}");
    }
    assert_eq!(column(&header, &rows, "spin_length_stderr")[0], 0.0);
    assert!(column(&header, &rows, "spin_length_stderr")[4] > 0.0);

    assert_eq!(code(&run_in(&dir, &path, &["--no-timestamp", "--seed", "12"])), 0);
    assert_ne!(fs::read(&data).unwrap(), first_data);
    let m: Value = serde_json::from_slice(&fs::read(&meta).unwrap()).unwrap();
    assert_eq!(m["resolved"]["seed"], 12);
}

#[test]
fn timestamp_is_the_only_difference() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "cf.json", &small_config("closed_form"));
    let meta = dir.path().join("out/result.csv.meta.json");
    assert_eq!(code(&run_in(&dir, &path, &[])), 0);
    let mut stamped: Value = serde_json::from_slice(&fs::read(&meta).unwrap()).unwrap();
    assert!(stamped["timestamp"].as_u64().unwrap() > 0);
    assert_eq!(code(&run_in(&dir, &path, &["--no-timestamp"])), 0);
    let plain: Value = serde_json::from_slice(&fs::read(&meta).unwrap()).unwrap();
    stamped.as_object_mut().unwrap().remove("timestamp");
    assert_eq!(stamped, plain);
}

#[test]
fn compare_backends_agree() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "cmp.json", &small_config("compare"));
    let out = run_in(&dir, &path, &["--no-timestamp"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = read_csv(&dir.path().join("out/result.csv"));
    let names = [("sx", ""), ("sz", ""), ("corr_pm_0_2", "_re"), ("corr_mz_1_0", "_im"), ("variance_psi_0.3", ""), ("fluct_x", "")];
    for (name, part) in names {
        let dev = column(&header, &rows, &format!("{name}_dev_lindblad{part}"));
        assert!(dev.iter().all(|d| d.abs() < 1e-6), "{name}: {dev:?}");
        let mc = column(&header, &rows, &format!("{name}_dev_trajectories{part}"));
        let err = column(&header, &rows, &format!("{name}_trajectories{part}_stderr"));
        for (d, e) in mc.iter().zip(&err) {
            assert!(d.abs() <= 5.0 * e + 1e-12, "{name}: deviation {d} vs stderr {e}");
        }
    }
}

#[test]
fn references_match_limits() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_config("closed_form");
    cfg["rates"] = serde_json::json!({ "gamma_ud": 0.0, "gamma_du": 0.0, "gamma_el": 0.3 });
    cfg["run"]["references"] = serde_json::json!(["single_particle", "decoherence_free"]);
    let path = write_config(dir.path(), "ref.json", &cfg);
    assert_eq!(code(&run_in(&dir, &path, &["--no-timestamp"])), 0);
    let (header, rows) = read_csv(&dir.path().join("out/result.csv"));
    for (name, part) in [("spin_length", ""), ("corr_pm_0_2", "_re"), ("variance_psi_0.3", "")] {
        let exact = column(&header, &rows, &format!("{name}{part}"));
        let single = column(&header, &rows, &format!("{name}_single{part}"));
        let free = column(&header, &rows, &format!("{name}_gamma0{part}"));
        for i in 0..rows.len() {
            assert!((exact[i] - single[i]).abs() < 1e-12, "{name} at row {i}");
        }
        assert!((exact[0] - free[0]).abs() < 1e-12);
    }
    let exact = column(&header, &rows, "spin_length");
    let free = column(&header, &rows, "spin_length_gamma0");
    assert!(exact[4] < free[4]);
}

#[test]
fn json_output_and_file_couplings() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("j.csv"), "0, 1, 0.5\n1, 0, 2\n0.5, 2, 0\n").unwrap();
    let mut cfg = small_config("lindblad");
    cfg["model"] = serde_json::json!({ "n": 3, "coupling": { "kind": "file", "path": "j.csv" } });
    cfg["output"] = serde_json::json!({ "path": "nested/table", "format": "json" });
    let path = write_config(dir.path(), "file.json", &cfg);
    let out = run_in(&dir, &path, &["--no-timestamp"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/nested/table.json")).unwrap()).unwrap();
    assert_eq!(doc["columns"][0], "t");
    assert_eq!(doc["rows"].as_array().unwrap().len(), 5);

    fs::write(dir.path().join("j.csv"), "0, 1, 0.5\n1, 0, 2\n0.4, 2, 0\n").unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("j.csv"), "{}", stderr(&out));
}

#[test]
fn integration_failure_exits_with_numerical_code() {
    let dir = TempDir::new().unwrap();
    let cfg = serde_json::json!({
        "model": { "n": 2, "coupling": { "kind": "all_to_all", "J": 1e9 } },
        "rates": { "gamma_ud": 0.1, "gamma_du": 0.1, "gamma_el": 0.0 },
        "run": {
            "backend": "lindblad",
            "observables": ["spin_length"],
            "times": { "start": 0.0, "stop": 100.0, "count": 2 }
        }
    });
    let path = write_config(dir.path(), "stiff.json", &cfg);
    let out = run_in(&dir, &path, &["--no-timestamp"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("numerical failure"));
}
