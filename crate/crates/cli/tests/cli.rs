use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/instances").join(name);
    p.canonicalize().unwrap().display().to_string()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diabatic"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg("1")
        .output()
        .unwrap()
}

/// Data rows of a CSV output, skipping the provenance line and header.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let line = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(line.trim()).unwrap_or_else(|_| panic!("stderr is not one JSON line: {line}"))
}

fn n5_spectrum(points: usize) -> String {
    format!(
        "[instance]\npath = {:?}\n\n[catalyst]\nenabled = false\n\n[spectrum]\ns = {{ start = 0.0, stop = 1.0, points = {points} }}\n",
        fixture("bipartite_n05.json")
    )
}

#[test]
fn spectrum_finds_the_late_crossing_and_stamps_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &n5_spectrum(401));
    let out = dir.path().join("out");
    let o = run(&["spectrum"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let text = std::fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# diabatic "));
    assert!(first.contains("config=") && first.contains("instance="));
    assert_eq!(rows(&out.join("spectrum.csv")).len(), 401);

    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("gap_minima.json")).unwrap()).unwrap();
    assert_eq!(v["provenance"]["command"], "spectrum");
    let s = v["data"]["minima"][0]["s_star"].as_f64().unwrap();
    assert!((s - 0.9).abs() < 1e-3, "s* = {s}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &n5_spectrum(101));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["spectrum"], &cfg, &a).status.success());
    assert!(run(&["spectrum"], &cfg, &b).status.success());
    for f in ["spectrum.csv", "gap_minima.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_2_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &n5_spectrum(0));
    let out = dir.path().join("out");
    let o = run(&["spectrum"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["exit_code"], 2);
    assert_eq!(e["command"], "spectrum");
    assert!(!out.exists());

    let o = Command::new(env!("CARGO_BIN_EXE_diabatic")).arg("validate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["exit_code"], 2);
}

#[test]
fn jstar_reports_bracket_failures_per_row_and_reuses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let body = format!(
        "cache = {:?}\n\n[instance]\nbipartite_sizes = [5]\nenergy_scale_ghz = 15.0\n",
        cache.display().to_string()
    );
    let cfg = write_config(dir.path(), &body);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["jstar"], &cfg, &a).status.success());
    assert!(cache.read_dir().unwrap().next().is_some());
    assert!(run(&["jstar"], &cfg, &b).status.success());
    assert_eq!(std::fs::read(a.join("jstar.csv")).unwrap(), std::fs::read(b.join("jstar.csv")).unwrap());
    let r = rows(&a.join("jstar.csv"));
    let j: f64 = r[0][2].parse().unwrap();
    assert!((j - 1.9281907).abs() < 1e-5, "J* = {j}");

    let cfg = write_config(dir.path(), &format!("{body}\n[catalyst]\nbracket = [0.1, 0.5]\n"));
    let c = dir.path().join("c");
    assert!(run(&["jstar"], &cfg, &c).status.success());
    let r = rows(&c.join("jstar.csv"));
    assert!(r[0][2].is_empty());
    assert!(!r[0][5].is_empty());
}

#[test]
fn validate_passes_and_an_impossible_tolerance_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("[instance]\npath = {:?}\n\n[catalyst]\nstrength = 1.5\n", fixture("bipartite_n05.json"));
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("ok");
    let o = run(&["validate"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(rows(&out.join("validate.csv")).iter().all(|r| r[4] == "true"));

    let cfg = write_config(dir.path(), &format!("{body}\n[validate]\ntolerance = 1e-30\n"));
    let out = dir.path().join("strict");
    let o = run(&["validate"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["exit_code"], 3);
    // the report is still written so the failing checks can be read
    assert!(rows(&out.join("validate.csv")).iter().any(|r| r[4] == "false"));
}

#[test]
fn pc_predict_lands_near_the_exact_crossing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[instance]\nbipartite_sizes = [5, 7]\n");
    let out = dir.path().join("out");
    assert!(run(&["pc-predict"], &cfg, &out).status.success());
    for r in rows(&out.join("pc_predict.csv")) {
        let lambda: f64 = r[5].parse().unwrap();
        let (pred, exact): (f64, f64) = (r[6].parse().unwrap(), r[10].parse().unwrap());
        assert!(lambda > 0.0);
        assert!((pred - exact).abs() < 5e-3, "{pred} vs {exact}");
    }
}

#[test]
fn grid_writes_slices_and_resumes_from_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let body = format!(
        "cache = {:?}\n\n[instance]\npath = {:?}\n\n[grid]\nt_a_us = [1.0, 2.0]\ndelta_jxx = [-0.05, 0.0, 0.05]\nslice_t_a_us = [2.0]\nslice_delta_jxx = [0.0]\n",
        cache.display().to_string(),
        fixture("bipartite_n05.json")
    );
    let cfg = write_config(dir.path(), &body);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["grid"], &cfg, &a).status.success());
    assert_eq!(rows(&a.join("grid.csv")).len(), 6);
    assert!(rows(&a.join("grid_failures.csv")).is_empty());
    assert_eq!(rows(&a.join("slice_t_2.csv")).len(), 3);
    assert_eq!(rows(&a.join("slice_delta_0.csv")).len(), 2);
    assert!(run(&["grid"], &cfg, &b).status.success());
    assert_eq!(std::fs::read(a.join("grid.csv")).unwrap(), std::fs::read(b.join("grid.csv")).unwrap());
    for r in rows(&a.join("grid.csv")) {
        let f: f64 = r[2].parse().unwrap();
        assert!((0.0..=1.0 + 1e-9).contains(&f));
    }
}

#[test]
fn scaling_with_one_size_has_no_trends() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[instance]\nbipartite_sizes = [5]\n\n[scaling]\nfwhm_t_a_us = [3.0]\ndecay_delta_jxx = [0.1]\ndecay_points = 6\n";
    let cfg = write_config(dir.path(), body);
    let out = dir.path().join("out");
    let o = run(&["scaling"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&out.join("scaling_fwhm.csv")).len(), 1);
    assert_eq!(rows(&out.join("scaling_decay.csv")).len(), 1);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("scaling.json")).unwrap()).unwrap();
    assert_eq!(v["data"]["fwhm_trends"].as_array().unwrap().len(), 0);
    assert_eq!(v["data"]["decay_trends"].as_array().unwrap().len(), 0);
}
