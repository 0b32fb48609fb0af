use std::path::Path;
use std::process::{Command, Output};

use octic::data::read_pnm;

fn octic(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_octic"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_exit_codes_follow_the_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let ok = octic(&["check", "--scope", "group", "--inputs", "10"], dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).starts_with("# octic 0.1.0 check seed=0 config="));

    let bad = octic(&["check", "--scope", "group", "--inputs", "10", "--inject", "e-sign"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("FAIL"));

    let usage = octic(&["check", "--scope", "everything"], dir.path());
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn json_output_is_line_delimited_with_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let o = octic(&["--json", "check", "--scope", "invariants", "--inputs", "10"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["type"], "header");
    assert_eq!(lines[0]["command"], "check");
    assert!(lines.len() > 6);
}

#[test]
fn missing_manifest_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = octic(&["train", "--manifest", "nope.txt", "--steps", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.txt"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "model.colour = red\n").unwrap();
    let o = octic(&["train", "--config", "run.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn training_is_deterministic_and_filters_dump() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "data.train_size = 64\ndata.eval_size = 32\ntrain.eval_every = 10\n",
    )
    .unwrap();
    let run = |tag: &str| {
        let (m, c) = (format!("{tag}.csv"), format!("{tag}.ckpt"));
        let o = octic(
            &["train", "--config", "run.cfg", "--steps", "20", "--metrics", &m, "--checkpoint", &c],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (
            std::fs::read(dir.path().join(m)).unwrap(),
            std::fs::read(dir.path().join(c)).unwrap(),
        )
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let csv = String::from_utf8(a.0).unwrap();
    assert!(csv.lines().any(|l| l == "step,loss,acc,rot_acc,rot_acc_minus_acc"));

    let o = octic(&["dump-filters", "a.ckpt", "--out", "filters"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let files: Vec<_> = std::fs::read_dir(dir.path().join("filters")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 48);
    for f in &files {
        assert_eq!(f.extension().unwrap(), "pgm");
        assert_eq!(read_pnm(f).unwrap().m, 4);
    }
}

#[test]
fn flops_and_intensity_report_the_headline_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let o = octic(&["--csv", "flops", "--shape", "vit-22b"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("vit-22b"));

    let o = octic(&["--json", "intensity"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let crossover = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .find(|v| v["type"] == "crossover")
        .and_then(|v| v["c"].as_f64());
    assert!((crossover.unwrap() - 3185.0).abs() < 1e-6);
}

#[test]
fn fourier_dump_is_orthogonal() {
    let dir = tempfile::tempdir().unwrap();
    let o = octic(&["fourier", "--dump"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<Vec<f64>> = stdout(&o)
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("slot"))
        .map(|l| l.split(',').skip(2).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 8);
    for i in 0..8 {
        for j in 0..8 {
            let dot: f64 = (0..8).map(|k| rows[i][k] * rows[j][k]).sum();
            assert!((dot - f64::from(u8::from(i == j))).abs() < 1e-15);
        }
    }
}
