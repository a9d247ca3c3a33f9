use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn haarbcr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_haarbcr"))
        .current_dir(dir)
        .env_remove("HAARBCR_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().unwrap())
        .collect()
}

fn write_csv(path: &Path, values: &[f64]) {
    let text: Vec<String> = values.iter().map(|v| format!("{v:e}")).collect();
    fs::write(path, text.join("\n")).unwrap();
}

fn report(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_kernel_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = haarbcr(dir.path(), &["build", "--kernel", "no-such-kernel"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no-such-kernel"));
}

#[test]
fn bad_flags_and_configs_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&haarbcr(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&haarbcr(dir.path(), &["build", "--J", "0"])), 2);
    fs::write(dir.path().join("c.json"), r#"{"kernel": "constant", "colour": 3}"#).unwrap();
    let o = haarbcr(dir.path(), &["build", "--config", "c.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("colour"));
    fs::write(dir.path().join("p.json"), r#"{"p": 1.0}"#).unwrap();
    assert_eq!(code(&haarbcr(dir.path(), &["tb", "--config", "p.json"])), 2);
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&haarbcr(dir.path(), &["verify", "--config", "absent.json"])), 3);
}

#[test]
fn threads_env_must_be_an_integer() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_haarbcr"))
        .current_dir(dir.path())
        .env("HAARBCR_THREADS", "many")
        .args(["build", "--kernel", "constant", "--J", "2"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn constant_kernel_build_writes_zero_wavelet_blocks() {
    let dir = TempDir::new().unwrap();
    let o = haarbcr(dir.path(), &["build", "--kernel", "constant", "--M", "2", "--J", "3", "--out", "forms"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let echo: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(echo["files"].as_array().unwrap().len(), 2);
    let (_, form) = haarbcr::nsform::read_form_file(&dir.path().join("forms/nsf.hbf")).unwrap();
    let haarbcr::nsform::FormFile::NonStandard(nsf) = form else { panic!("expected a non-standard form") };
    let blocks = nsf.a.iter().chain(&nsf.b).chain(&nsf.c);
    assert!(blocks.map(|m| m.max_abs()).all(|v| v == 0.0));
    assert!(nsf.coarse.max_abs() > 0.0);
    assert!(dir.path().join("forms/split.hbf").exists());
}

#[test]
fn banded_build_file_size_matches_layout() {
    let dir = TempDir::new().unwrap();
    let o = haarbcr(dir.path(), &["build", "--M", "2", "--J", "8", "--band", "3", "--out", "f"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, _) = haarbcr::nsform::read_form_file(&dir.path().join("f/nsf.hbf")).unwrap();
    // levels 0..8 have sides 2..256; each of A, B, C stores side rows of 2·min(7, side − 1) + 1
    let per_level: usize = (0..8).map(|j| 2usize << j).map(|s| s * (2 * 7.min(s - 1) + 1)).sum();
    let payload: usize = header.blocks.iter().map(|b| b.len).sum();
    assert_eq!(payload, 3 * per_level + 4);
}

#[test]
fn apply_constant_kernel_to_ones_gives_m() {
    let dir = TempDir::new().unwrap();
    let n = 3 * 16;
    write_csv(&dir.path().join("ones.csv"), &vec![1.0; n]);
    let o = haarbcr(
        dir.path(),
        &["apply", "--kernel", "constant", "--M", "3", "--J", "4", "--input", "ones.csv", "--out", "out.csv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = read_csv(&dir.path().join("out.csv"));
    assert_eq!(out.len(), n);
    assert!(out.iter().all(|v| (v - 3.0).abs() < 1e-12), "{out:?}");
}

#[test]
fn apply_zero_gives_zero_for_every_component_set() {
    let dir = TempDir::new().unwrap();
    write_csv(&dir.path().join("zero.csv"), &[0.0; 64]);
    for comps in ["full", "smooth", "dyadic", "coarse", "smooth+dyadic"] {
        let o = haarbcr(
            dir.path(),
            &["apply", "--J", "5", "--components", comps, "--input", "zero.csv", "--out", "out.csv"],
        );
        assert_eq!(code(&o), 0, "{comps}: {}", stderr(&o));
        assert!(read_csv(&dir.path().join("out.csv")).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn apply_full_matches_dense() {
    let dir = TempDir::new().unwrap();
    let input: Vec<f64> = (0..512).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
    write_csv(&dir.path().join("f.csv"), &input);
    for (mode, out) in [("nsf", "nsf.csv"), ("dense", "dense.csv")] {
        let o = haarbcr(dir.path(), &["apply", "--mode", mode, "--input", "f.csv", "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let (a, b) = (read_csv(&dir.path().join("nsf.csv")), read_csv(&dir.path().join("dense.csv")));
    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    assert!(diff / norm <= 1e-10, "{}", diff / norm);
}

#[test]
fn apply_rejects_length_mismatch_and_missing_input() {
    let dir = TempDir::new().unwrap();
    write_csv(&dir.path().join("short.csv"), &[1.0; 10]);
    let o = haarbcr(dir.path(), &["apply", "--J", "4", "--input", "short.csv", "--out", "o.csv"]);
    assert_eq!(code(&o), 2);
    let o = haarbcr(dir.path(), &["apply", "--J", "4", "--input", "absent.csv", "--out", "o.csv"]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&haarbcr(dir.path(), &["apply", "--J", "4"])), 2);
}

#[test]
fn apply_from_form_file_matches_fresh_build() {
    let dir = TempDir::new().unwrap();
    let input: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
    write_csv(&dir.path().join("f.csv"), &input);
    assert_eq!(code(&haarbcr(dir.path(), &["build", "--J", "5", "--out", "forms"])), 0);
    for (form, out) in [("forms/nsf.hbf", "a.csv"), ("forms/split.hbf", "b.csv")] {
        let o = haarbcr(dir.path(), &["apply", "--form", form, "--input", "f.csv", "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let o = haarbcr(dir.path(), &["apply", "--J", "5", "--input", "f.csv", "--out", "c.csv"]);
    assert_eq!(code(&o), 0);
    let c = read_csv(&dir.path().join("c.csv"));
    for other in ["a.csv", "b.csv"] {
        let v = read_csv(&dir.path().join(other));
        assert!(v.iter().zip(&c).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs())));
    }
}

#[test]
fn corrupted_form_file_fails_with_check_code() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&haarbcr(dir.path(), &["build", "--J", "4", "--out", "forms"])), 0);
    let path = dir.path().join("forms/nsf.hbf");
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 3;
    bytes[last] ^= 0x55;
    fs::write(&path, bytes).unwrap();
    let o = haarbcr(dir.path(), &["verify", "--form", "forms/nsf.hbf", "--out", "r.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("checksum"));
}

#[test]
fn verify_constant_kernel_passes() {
    let dir = TempDir::new().unwrap();
    let o = haarbcr(dir.path(), &["verify", "--kernel", "constant", "--J", "4", "--out", "r.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&dir.path().join("r.json"));
    assert_eq!(r["pass"], true);
    assert!(r["timing"].is_null());
    let names: Vec<&str> = r["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    let mut unique = names.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), names.len());
}

#[test]
fn verify_default_config_passes_every_check() {
    let dir = TempDir::new().unwrap();
    let o = haarbcr(dir.path(), &["verify", "--out", "r.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&dir.path().join("r.json"));
    for c in r["checks"].as_array().unwrap() {
        assert_eq!(c["pass"], true, "{c}");
    }
    assert_eq!(r["config"]["M"], 2);
    assert_eq!(r["config"]["J"], 8);
}

#[test]
fn verify_report_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"J": 6, "seed": 99, "out": "r.json"}"#).unwrap();
    let mut runs = Vec::new();
    for _ in 0..2 {
        assert_eq!(code(&haarbcr(dir.path(), &["verify", "--config", "c.json"])), 0);
        runs.push(fs::read(dir.path().join("r.json")).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn flags_override_config_keys() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"kernel": "constant", "M": 3, "J": 6}"#).unwrap();
    let o = haarbcr(dir.path(), &["verify", "--config", "c.json", "--J", "3", "--out", "r.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&dir.path().join("r.json"));
    assert_eq!(r["config"]["kernel"], "constant");
    assert_eq!(r["config"]["M"], 3);
    assert_eq!(r["config"]["J"], 3);
}

#[test]
fn tb_indicator_defaults_pass() {
    let dir = TempDir::new().unwrap();
    let o = haarbcr(dir.path(), &["tb", "--J", "6", "--out", "tb.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&dir.path().join("tb.json"));
    assert_eq!(r["exponent_constraint"], true);
    assert_eq!(r["sup_normalization"], 0.0);
    assert_eq!(r["sup_size"], 2.0);
    assert_eq!(r["cubes"].as_array().unwrap().len(), 2 * ((1 << 6) - 1));
}

#[test]
fn tb_fails_when_constant_is_too_small() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"J": 5, "C": 0.5}"#).unwrap();
    let o = haarbcr(dir.path(), &["tb", "--config", "c.json", "--out", "tb.json"]);
    assert_eq!(code(&o), 1);
    assert_eq!(report(&dir.path().join("tb.json"))["pass_size"], false);
}

#[test]
fn tb_rejects_b_system_with_bad_support() {
    let dir = TempDir::new().unwrap();
    let mut b1 = vec![0.0; 16];
    b1[0] = 1.0;
    b1[9] = 1.0;
    let doc = serde_json::json!({ "p": 2, "q": 2, "cubes": [{ "j": 1, "k": 0, "b1": b1 }] });
    fs::write(dir.path().join("b.json"), doc.to_string()).unwrap();
    let o = haarbcr(dir.path(), &["tb", "--M", "1", "--J", "4", "--bsystem", "b.json"]);
    assert_eq!(code(&o), 2);
    let msg = stderr(&o);
    assert!(msg.contains("j=1") && msg.contains("k=0"), "{msg}");
    fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&haarbcr(dir.path(), &["tb", "--J", "4", "--bsystem", "bad.json"])), 2);
}

#[test]
fn bench_writes_ordered_table() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"bench_levels": [6, 7, 8], "bench_min_ms": 2}"#).unwrap();
    let o = haarbcr(dir.path(), &["bench", "--config", "c.json", "--out", "t.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "N,band,component-set,seconds-per-apply,doubling-ratio");
    let keys: Vec<String> = lines[1..].iter().map(|l| l.split(',').take(3).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(
        keys,
        ["128,0,dense", "128,8,nsf-full", "256,0,dense", "256,8,nsf-full", "512,0,dense", "512,8,nsf-full"]
    );
    fs::write(dir.path().join("d.json"), r#"{"bench_levels": [8, 7]}"#).unwrap();
    assert_eq!(code(&haarbcr(dir.path(), &["bench", "--config", "d.json"])), 2);
}
