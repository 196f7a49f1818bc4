use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use exid_fingerprint::config::{ALL_ONES, ALL_ZEROS, ALTERNATING};

const CONFIG: &str = r#"
profiles = 3
signals_per_profile = 40
folds = 4
alien_signals = 30
known_test_signals = 20
seed = 7
patterns = ["000000000000000000", "010101010101010101", "111111111111111111"]
"#;

fn exidfp(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("config.toml");
    if !config.exists() {
        fs::write(&config, CONFIG).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_exidfp"))
        .arg("--config")
        .arg(&config)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_is_deterministic_and_covers_every_pattern() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&exidfp(tmp.path(), &["--out", a.to_str().unwrap(), "simulate"]));
    ok(&exidfp(tmp.path(), &["--out", b.to_str().unwrap(), "simulate"]));
    for p in [ALL_ZEROS, ALTERNATING, ALL_ONES] {
        let dir = a.join(format!("pattern_{p}"));
        let traces = fs::read_dir(dir.join("traces")).unwrap().count();
        assert_eq!(traces, 3 * 40, "{p}");
        assert!(dir.join("pairing.csv").exists());
    }
    let listing = files(&a);
    assert_eq!(listing, files(&b));
    for f in &listing {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{}", f.display());
    }
}

#[test]
fn evaluate_then_monitor_flags_only_injected_streams() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let eval = tmp.path().join("eval");
    let mon = tmp.path().join("mon");
    ok(&exidfp(tmp.path(), &["--out", sim.to_str().unwrap(), "simulate", "--scenarios"]));
    let data = sim.join(format!("pattern_{ALL_ZEROS}"));
    let arg = |p: &str| data.join(p).to_str().unwrap().to_string();
    let out = exidfp(
        tmp.path(),
        &[
            "--out",
            eval.to_str().unwrap(),
            "evaluate",
            "--dataset",
            &arg(""),
            "--known",
            &arg("holdout"),
            "--alien",
            &arg("aliens"),
        ],
    );
    ok(&out);
    let report = fs::read_to_string(eval.join("report.csv")).unwrap();
    assert!(report.contains("ecu01"));
    let model = eval.join("model.json");
    let m = |stream: &str| {
        exidfp(
            tmp.path(),
            &[
                "--out",
                mon.to_str().unwrap(),
                "monitor",
                "--model",
                model.to_str().unwrap(),
                "--pairing",
                &arg("pairing.csv"),
                &arg(stream),
            ],
        )
    };
    ok(&m("streams/honest"));
    let log = fs::read_to_string(mon.join("verdicts_0.log")).unwrap();
    assert_eq!(log.lines().count(), 1001);
    assert!(!log.contains("ALARM"));
    assert_eq!(m("streams/type2").status.code(), Some(1));
    assert!(fs::read_to_string(mon.join("verdicts_0.log")).unwrap().contains("TYPE2_MISMATCH"));
    assert_eq!(m("streams/type1").status.code(), Some(1));
    assert!(fs::read_to_string(mon.join("verdicts_0.log")).unwrap().contains("ALARM"));
}

#[test]
fn grid_has_three_rows_of_eight() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&exidfp(tmp.path(), &["--out", tmp.path().to_str().unwrap(), "grid"]));
    let text = fs::read_to_string(tmp.path().join("grid.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("exid,svm-linear,svm-rbf,nn-10"));
    for (line, p) in lines[1..].iter().zip([ALL_ZEROS, ALTERNATING, ALL_ONES]) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], p);
        assert_eq!(cells.len(), 9);
        for c in &cells[1..] {
            let v: f64 = c.parse().unwrap();
            assert!((0.0..=100.0).contains(&v));
        }
    }
}

#[test]
fn corrupt_trace_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    ok(&exidfp(tmp.path(), &["--out", sim.to_str().unwrap(), "simulate"]));
    let data = sim.join(format!("pattern_{ALL_ONES}"));
    let victim = data.join("traces").join("ecu02_0003.trace");
    fs::write(&victim, "sample_rate=fast\n1.0\n").unwrap();
    let out = exidfp(tmp.path(), &["--out", tmp.path().to_str().unwrap(), "extract", "--dataset", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ecu02_0003.trace"));
}

#[test]
fn bad_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("config.toml"), "profiles = 1\n").unwrap();
    let out = exidfp(tmp.path(), &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
}
