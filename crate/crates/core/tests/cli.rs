use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rydfiber(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rydfiber"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn simulate_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    rydfiber(&args)
}

#[test]
fn simulate_writes_traces_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate_into(dir.path(), &["--seed", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["n_reps"], 1000);
    assert_eq!(v["slots"], 2);
    let csv = std::fs::read_to_string(dir.path().join("traces.csv")).unwrap();
    assert!(csv.starts_with("detuning_MHz,repetition,slot,transmission\n"));
    let sidecar: Value = serde_json::from_slice(&std::fs::read(dir.path().join("traces.json")).unwrap()).unwrap();
    assert_eq!(sidecar["format"], "rydfiber-traceset");
    assert_eq!(sidecar["sequence"]["seed"], 4);
}

#[test]
fn same_seed_gives_identical_files_and_other_seeds_differ() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    simulate_into(dirs[0].path(), &["--seed", "7"]);
    simulate_into(dirs[1].path(), &["--seed", "7", "--serial"]);
    simulate_into(dirs[2].path(), &["--seed", "8"]);
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("traces.csv")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    assert_ne!(read(&dirs[0]), read(&dirs[2]));
}

#[test]
fn fit_eit_on_simulated_inside_data() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &[]);
    let data = dir.path().join("traces.csv");
    let o = rydfiber(&["fit-eit", "--data", data.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: Value = serde_json::from_slice(&std::fs::read(dir.path().join("fit_eit.json")).unwrap()).unwrap();
    assert_eq!(fit["converged"], true);
    let omega = fit["params"]["omega_c_mhz"].as_f64().unwrap();
    assert!((omega - 9.5).abs() < 0.6, "{omega}");
    assert!(fit["stderr"]["omega_c_mhz"].as_f64().unwrap() > 0.0);
}

#[test]
fn fit_od_on_empty_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = rydfiber(&["fit-od", "--data", empty.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["exit_code"], 1);
    assert_eq!(e["stages"][0], "read");
    assert!(!dir.path().join("fit_od.json").exists());
}

#[test]
fn missing_data_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let o = rydfiber(&["fit-od", "--data", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn invalid_config_lists_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "[params]\nod = -1.0\n[sequence]\ndetection_efficiency = 2.0\n[analysis]\nwindow = 0\n",
    )
    .unwrap();
    let o = rydfiber(&["simulate", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    let fields: Vec<&str> = e["fields"].as_array().unwrap().iter().map(|f| f["field"].as_str().unwrap()).collect();
    assert!(fields.len() >= 3, "{fields:?}");
    for want in ["od", "detection_efficiency", "window"] {
        assert!(fields.iter().any(|f| f.contains(want)), "{want} missing from {fields:?}");
    }
    assert!(!dir.path().join("traces.csv").exists());
}

#[test]
fn config_file_overrides_preset_and_flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "preset = \"outside\"\n[sequence]\nn_reps = 60\nseed = 3\n").unwrap();
    let o = rydfiber(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sidecar: Value = serde_json::from_slice(&std::fs::read(dir.path().join("traces.json")).unwrap()).unwrap();
    assert_eq!(sidecar["n_reps"], 60);
    assert_eq!(sidecar["sequence"]["seed"], 5);
    assert_eq!(sidecar["params"]["od"], 32.0);
}

#[test]
fn fixed_break_matches_free_search() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &[]);
    let data = dir.path().join("traces.csv");
    let d = data.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    let free = stdout_json(&rydfiber(&["fit-decay", "--data", d, "--out-dir", out]));
    let bp = free["breakpoint"]["time_ms"].as_f64().expect("breakpoint found");
    assert!((bp - 3.0).abs() <= 0.2, "{bp}");
    let fixed = stdout_json(&rydfiber(&["fit-decay", "--data", d, "--out-dir", out, "--break", "3"]));
    assert_eq!(fixed["breakpoint"]["rep"], 300);
    assert!(fixed["breakpoint"]["z_slope_change"].is_null());
    for slot in ["eit", "od"] {
        for seg in ["regime1", "regime2"] {
            let a = free[slot][seg]["tau_ms"].as_f64().unwrap();
            let b = fixed[slot][seg]["tau_ms"].as_f64().unwrap();
            assert!((a - b).abs() <= 0.05 * a, "{slot} {seg}: {a} vs {b}");
        }
    }
}

#[test]
fn no_loss_run_has_no_breakpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = rydfiber(&["regimes", "--no-loss", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout_json(&o)["breakpoint"].is_null());
}

#[test]
fn diffmap_and_cut_csv_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    simulate_into(dir.path(), &["--no-noise"]);
    let data = dir.path().join("traces.csv");
    let d = data.to_str().unwrap();
    assert!(rydfiber(&["diffmap", "--data", d, "--out-dir", out]).status.success());
    assert!(rydfiber(&["cut", "--data", d, "--out-dir", out, "--window", "10"]).status.success());
    let map = std::fs::read_to_string(dir.path().join("diffmap.csv")).unwrap();
    assert_eq!(map.lines().next(), Some("detuning_MHz,repetition,eit_minus_od"));
    assert_eq!(map.lines().count(), 1 + 41 * 1000);
    let cut = std::fs::read_to_string(dir.path().join("cut.csv")).unwrap();
    assert_eq!(cut.lines().next(), Some("repetition,time_ms,eit,od"));
    assert_eq!(cut.lines().count(), 1 + 1000);
}

#[test]
fn stark_conversions() {
    let v = stdout_json(&rydfiber(&["stark", "--shift", "2.2"]));
    assert!((v["field_v_per_cm"].as_f64().unwrap() - 1.965).abs() < 1e-3);
    let v = stdout_json(&rydfiber(&["stark", "--field", "2"]));
    assert!((v["shift_mhz"].as_f64().unwrap() - 2.28).abs() < 1e-12);
    assert_eq!(rydfiber(&["stark", "--shift=-1"]).status.code(), Some(1));
}

#[test]
fn transport_profile_ends_at_displacement() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&rydfiber(&["transport", "--out-dir", dir.path().to_str().unwrap(), "--samples", "11"]));
    assert!((v["displacement_mm"].as_f64().unwrap() - 10.0625).abs() < 1e-9);
    let csv = std::fs::read_to_string(dir.path().join("transport.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((last[0] - 100.0).abs() < 1e-9);
    assert!((last[3] - 10.0625).abs() < 1e-9);
}

#[test]
fn reproduce_summary_is_deterministic() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let o = rydfiber(&["reproduce", "fig4", "--out-dir", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join("fig4").join(f)).unwrap();
    for f in ["summary.txt", "summary.json", "inside/regimes.json", "inside/cut.csv"] {
        assert_eq!(read(&dirs[0], f), read(&dirs[1], f), "{f}");
    }
    let summary: Value = serde_json::from_slice(&read(&dirs[0], "summary.json")).unwrap();
    let rows = summary["rows"].as_array().unwrap();
    let row = |q: &str| rows.iter().find(|r| r["quantity"] == q).unwrap();
    assert_eq!(row("inside: breakpoint time")["within"], true);
    assert_eq!(row("inside: eit decay time, regime 1")["kind"], "injected");
}
