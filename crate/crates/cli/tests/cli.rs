use std::path::Path;
use std::process::{Command, Output};

fn zakrach(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zakrach"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn detect_single_reports_lines_and_root() {
    let out = stdout(&zakrach(&["detect-single", "--seed", "3"]));
    assert!(out.contains("l' = 22"), "{out}");
    assert!(out.contains("k' = 16"), "{out}");
    assert!(out.contains("CRT point 981"));
    assert!(out.contains("detected: 981"));
}

#[test]
fn detect_single_writes_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"grid": {"M": 31, "N": 37}, "channel": {"profile": "identity"}}"#,
    );
    let report = dir.path().join("r.json");
    let out = stdout(&zakrach(&[
        "detect-single",
        "--config",
        &cfg,
        "--root",
        "5",
        "--shift",
        "12",
        "--out",
        report.to_str().unwrap(),
    ]));
    assert!(out.contains("hit: true"));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["detected"][0], 5);
}

#[test]
fn sweep_writes_csv_and_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"grid": {"M": 31, "N": 37}, "roots": 64, "detector": "both",
            "snr_grid_db": [0, 10], "trials": 12, "timing": false}"#,
    );
    let mut csvs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("s{threads}.csv"));
        let o = zakrach(&[
            "sweep",
            "--config",
            &cfg,
            "--seed",
            "11",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ]);
        stdout(&o);
        csvs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "detector,snr_db,trials,misses,p_md,stderr_p_md,mean_ms_per_trial"
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"grid": {"N": 37}}"#);
    let o = zakrach(&["sweep", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.M"));
}

#[test]
fn gen_matrix_then_detect_multi_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"grid": {"M": 31, "N": 37}, "roots": 32, "users": 3, "detector": "alg2"}"#,
    );
    let cache = dir.path().join("a.zksm");
    let out = stdout(&zakrach(&[
        "gen-matrix",
        "--config",
        &cfg,
        "--out",
        cache.to_str().unwrap(),
    ]));
    assert!(out.contains("32 roots x 9 translates"));
    let out = stdout(&zakrach(&[
        "detect-multi",
        "--config",
        &cfg,
        "--roots",
        "2,9,20",
        "--snr-db",
        "30",
        "--matrix",
        cache.to_str().unwrap(),
    ]));
    assert!(out.contains("transmitted [2, 9, 20]"));
    assert!(out.contains("ost detected"));
    assert!(out.contains("alg2"));
}

#[test]
fn bench_small_grids() {
    let out = stdout(&zakrach(&[
        "bench",
        "--grids",
        "7x9,15x17",
        "--repetitions",
        "3",
    ]));
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "detector,m,n,mn,roots,repetitions,median_ms,min_ms"
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn rejects_unknown_subcommand() {
    assert!(!zakrach(&["frobnicate"]).status.success());
}
