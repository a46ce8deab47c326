use std::path::{Path, PathBuf};

use serde_json::Value;
use spinlat::fixtures::{cartesian_surface, single_mode_system, synthetic_g2_system, toy_modeset};
use spinlat::ingest::write_mode_file;
use spinlat::physics::{Atom, Geometry};
use tempfile::TempDir;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["spinlat"];
    argv.extend_from_slice(args);
    spinlat_cli::run(argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn read_geometry(path: &Path, template: &Geometry) -> Geometry {
    let text = read(path);
    let atoms = text
        .lines()
        .skip(2)
        .zip(&template.atoms)
        .map(|(line, a)| {
            let t: Vec<&str> = line.split_whitespace().collect();
            assert_eq!(t[0], a.element);
            Atom {
                element: a.element.clone(),
                mass: a.mass,
                position: [t[1].parse().unwrap(), t[2].parse().unwrap(), t[3].parse().unwrap()],
            }
        })
        .collect();
    Geometry::new(atoms).unwrap()
}

fn gtensor_output(g: &nalgebra::Matrix3<f64>) -> String {
    let mut s = String::from("header\nELECTRONIC G-MATRIX\n-------------------\n");
    for r in 0..3 {
        s.push_str(&format!("  {:.15e} {:.15e} {:.15e}\n", g[(r, 0)], g[(r, 1)], g[(r, 2)]));
    }
    s
}

/// Run `displace` on a toy molecule and fill in every result file from a
/// smooth synthetic g-tensor surface.
fn completed_runs(dir: &Path, n_modes: usize, delta: f64, pairing: &str) -> PathBuf {
    let modes = toy_modeset(n_modes, 5);
    let modes_path = dir.join("modes.txt");
    std::fs::write(&modes_path, write_mode_file(&modes)).unwrap();
    let out = dir.join(format!("plan-{delta}"));
    let code = run(&[
        "displace",
        "--modes",
        s(&modes_path),
        "--delta",
        &delta.to_string(),
        "--pairing",
        pairing,
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let surface = cartesian_surface(&modes.geometry);
    let manifest: Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    let mut entries = vec![(manifest["baseline_geometry"].clone(), manifest["baseline"].clone())];
    for key in ["runs", "pairs"] {
        for r in manifest[key].as_array().unwrap() {
            entries.push((r["geometry"].clone(), r["path"].clone()));
        }
    }
    std::fs::create_dir_all(out.join("results")).unwrap();
    for (geom, result) in entries {
        let g = read_geometry(&out.join(geom.as_str().unwrap()), &modes.geometry);
        std::fs::write(out.join(result.as_str().unwrap()), gtensor_output(&surface(&g).0)).unwrap();
    }
    out.join("manifest.json")
}

fn write_couplings(dir: &Path, c: &spinlat::couplings::CouplingTensors) -> PathBuf {
    let p = dir.join("couplings.json");
    std::fs::write(&p, c.to_json().unwrap()).unwrap();
    p
}

/// Data rows of a CSV written under a `#` config header.
fn csv_rows(text: &str) -> Vec<csv::StringRecord> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes()).records().map(|r| r.unwrap()).collect()
}

fn csv_header(text: &str) -> Vec<String> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes()).headers().unwrap().iter().map(str::to_string).collect()
}

#[test]
fn displace_writes_geometries_and_manifest() {
    let dir = TempDir::new().unwrap();
    let modes_path = dir.path().join("modes.txt");
    std::fs::write(&modes_path, write_mode_file(&toy_modeset(3, 1))).unwrap();
    let out = dir.path().join("plan");
    assert_eq!(run(&["displace", "--modes", s(&modes_path), "--pairing", "diagonal_only", "--out", s(&out)]), 0);
    let geoms = std::fs::read_dir(out.join("geom")).unwrap().count();
    assert_eq!(geoms, 7);
    let manifest: Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 6);
    assert_eq!(manifest["config"]["physics"]["pairing"], "diagonal_only");
    let xyz = read(&out.join("geom/base.xyz"));
    assert!(xyz.lines().nth(1).unwrap().contains("config="));

    let out2 = dir.path().join("plan2");
    assert_eq!(run(&["displace", "--modes", s(&modes_path), "--pairing", "all_pairs", "--out", s(&out2)]), 0);
    assert_eq!(std::fs::read_dir(out2.join("geom")).unwrap().count(), 19);
}

#[test]
fn couplings_pipeline_from_result_files() {
    let dir = TempDir::new().unwrap();
    let fine = completed_runs(dir.path(), 3, 0.005, "all_pairs");
    let coarse = completed_runs(dir.path(), 3, 0.01, "all_pairs");
    let out = dir.path().join("c");
    let code = run(&["couplings", "--manifest", s(&fine), "--converge-with", s(&coarse), "--out", s(&out)]);
    assert_eq!(code, 0);
    let doc: Value = serde_json::from_str(&read(&out.join("couplings.json"))).unwrap();
    assert!(doc["config"].is_object());
    assert!(doc["baseline_g"].is_array());
    let conv: Value = serde_json::from_str(&read(&out.join("convergence.json"))).unwrap();
    assert!(!conv["entries"].as_array().unwrap().is_empty());

    // the written couplings feed the downstream commands
    let t = dir.path().join("t");
    let cp = out.join("couplings.json");
    assert_eq!(run(&["tensor", "--couplings", s(&cp), "--temp", "50", "--out", s(&t)]), 0);
    let rep: Value = serde_json::from_str(&read(&t.join("tensor.json"))).unwrap();
    assert!(rep["config"].is_object());
    assert_eq!(run(&["validate", "--couplings", s(&cp), "--manifest", s(&fine), "--converge-with", s(&coarse), "--temp", "20,80", "--out", s(&t)]), 0);
    let v: Value = serde_json::from_str(&read(&t.join("validate.json"))).unwrap();
    for c in v["checks"].as_array().unwrap() {
        assert_eq!(c["status"], "pass", "{c}");
    }
}

#[test]
fn sweep_rows_and_monotone_t1() {
    let dir = TempDir::new().unwrap();
    let cp = write_couplings(dir.path(), &single_mode_system(20.0, 1e-3));
    let out = dir.path().join("s");
    assert_eq!(run(&["sweep", "--couplings", s(&cp), "--temp", "5:300:60", "--out", s(&out)]), 0);
    let text = read(&out.join("sweep.csv"));
    assert!(text.starts_with("# {"));
    let header = csv_header(&text);
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 60);
    let t1_col = header.iter().position(|h| h.starts_with("t1")).expect("t1 column");
    let t: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(t[0], 5.0);
    assert_eq!(t[59], 300.0);
    let t1: Vec<f64> = rows.iter().map(|r| r[t1_col].parse().unwrap()).collect();
    assert!(t1.windows(2).all(|w| w[1] <= w[0]), "{t1:?}");

    for name in ["inv_t1.dat", "inv_t2.dat"] {
        let dat = read(&out.join(name));
        let data: Vec<&str> = dat.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).collect();
        assert_eq!(data.len(), 60);
        assert!(data.iter().all(|l| l.split_whitespace().count() == 2));
    }
    let json: Value = serde_json::from_str(&read(&out.join("sweep.json"))).unwrap();
    assert_eq!(json["config"]["physics"]["temperatures_k"].as_array().unwrap().len(), 60);
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let cp = write_couplings(dir.path(), &synthetic_g2_system());
    let cfg = dir.path().join("run.json");
    let doc = serde_json::json!({
        "schema": spinlat_cli::CONFIG_SCHEMA,
        "paths": {"couplings": cp, "output_dir": dir.path().join("from-file")},
        "physics": {"temperatures_k": [10.0, 20.0, 30.0], "fields_mt": [500.0]},
    });
    std::fs::write(&cfg, doc.to_string()).unwrap();
    let out = dir.path().join("from-flag");
    assert_eq!(run(&["--config", s(&cfg), "sweep", "--temp", "40", "--out", s(&out)]), 0);
    let json: Value = serde_json::from_str(&read(&out.join("sweep.json"))).unwrap();
    assert_eq!(json["config"]["physics"]["temperatures_k"], serde_json::json!([40.0]));
    assert_eq!(json["config"]["physics"]["fields_mt"], serde_json::json!([500.0]));
    assert!(!dir.path().join("from-file").exists());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    assert_eq!(run(&["sweep", "--no-such-flag"]), 2);
    assert_eq!(run(&["sweep", "--couplings", "/nonexistent/couplings.json", "--out", s(&out)]), 2);
    assert_eq!(run(&["sweep", "--out", s(&out)]), 2);

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"schema": "spinlat-config/1", "physics": {"temperature": [3]}}"#).unwrap();
    assert_eq!(run(&["--config", s(&cfg), "sweep"]), 2);
    std::fs::write(&cfg, r#"{"schema": "other/9"}"#).unwrap();
    assert_eq!(run(&["--config", s(&cfg), "sweep"]), 2);

    let cp = write_couplings(dir.path(), &synthetic_g2_system());
    assert_eq!(run(&["sweep", "--couplings", s(&cp), "--temp=-4", "--out", s(&out)]), 2);
    assert_eq!(run(&["sweep", "--couplings", s(&cp), "--temp", "1:2:x", "--out", s(&out)]), 2);
    // a step far too coarse for the dynamics is a runtime failure
    let code = run(&[
        "dynamics",
        "--couplings",
        s(&cp),
        "--temp",
        "300",
        "--model",
        "lindblad",
        "--safety",
        "0.05",
        "--no-trajectories",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 1);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn jobs_do_not_change_outputs() {
    let dir = TempDir::new().unwrap();
    let cp = write_couplings(dir.path(), &synthetic_g2_system());
    let mut outputs = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(format!("j{jobs}"));
        assert_eq!(run(&["--jobs", jobs, "sweep", "--couplings", s(&cp), "--temp", "5:300:12", "--field-mt", "100,1266", "--out", s(&out)]), 0);
        let dyn_out = out.join("dyn");
        let code = run(&[
            "--jobs",
            jobs,
            "dynamics",
            "--couplings",
            s(&cp),
            "--temp",
            "100,200",
            "--model",
            "both",
            "--t1-steps",
            "400",
            "--t2-steps",
            "400",
            "--out",
            s(&dyn_out),
        ]);
        assert_eq!(code, 0);
        outputs.push(
            ["sweep.csv", "sweep.json", "inv_t1.dat", "dyn/dynamics.csv", "dyn/dynamics.json", "dyn/trajectories/lindblad_t1_000.csv"]
                .map(|f| read(&out.join(f)).replace(&format!("j{jobs}"), "jN")),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn dynamics_matches_analytic_rates() {
    let dir = TempDir::new().unwrap();
    let cp = write_couplings(dir.path(), &synthetic_g2_system());
    let out = dir.path().join("d");
    let code = run(&[
        "dynamics",
        "--couplings",
        s(&cp),
        "--temp",
        "150",
        "--model",
        "lindblad",
        "--t1-steps",
        "800",
        "--t2-steps",
        "800",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let json: Value = serde_json::from_str(&read(&out.join("dynamics.json"))).unwrap();
    assert!(json["config"].is_object());
    let text = read(&out.join("dynamics.csv"));
    assert!(text.starts_with("# {"));
    let header = csv_header(&text);
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 1);
    let col = |name: &str| -> f64 { rows[0][header.iter().position(|h| h == name).unwrap()].parse().unwrap() };
    for (fit, analytic) in [("inv_t1_fit_per_us", "inv_t1_dissipator_per_us"), ("inv_t2_fit_per_us", "inv_t2_dissipator_per_us")] {
        let (a, b) = (col(fit), col(analytic));
        assert!(b > 0.0 && (a / b - 1.0).abs() < 1e-2, "{fit} {a} vs {b}");
    }
    let traj = read(&out.join("trajectories/lindblad_t1_000.csv"));
    assert!(traj.lines().any(|l| l.starts_with('#')));
    assert!(out.join("dynamics_inv_t1.dat").exists());
    assert!(out.join("dynamics_inv_t2.dat").exists());
}

#[test]
fn attribute_and_jobs_env() {
    let dir = TempDir::new().unwrap();
    let cp = write_couplings(dir.path(), &synthetic_g2_system());
    let out = dir.path().join("a");
    assert_eq!(run(&["attribute", "--couplings", s(&cp), "--temp", "100", "--top", "2", "--out", s(&out)]), 0);
    let text = read(&out.join("attribution.csv"));
    assert!(text.starts_with("# {"));
    let json: Value = serde_json::from_str(&read(&out.join("attribution.json"))).unwrap();
    assert!(json["config"].is_object());
    // a grid is not a single point
    assert_eq!(run(&["tensor", "--couplings", s(&cp), "--temp", "10,20", "--out", s(&out)]), 2);
}
