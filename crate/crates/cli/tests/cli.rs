use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "name": "small",
  "source": {"alpha": 0.3, "beta": 0.7, "lambda_bits_per_frame": 10000},
  "rf": {"distance_m": 10.0},
  "budget": {"avg_power_dbm": 30.0, "avg_to_peak_ratio": 0.7},
  "simulation": {"frames": 20000, "warmup": 1000, "seeds": [3, 4]},
  "strategies": ["rf", "vlc", "hybrid1"],
  "figures": [
    {"id": "rates", "metric": "rho", "sweep": {"axis": "theta", "values": [0.001, 0.01, 0.1]}},
    {"id": "delays", "metric": "delay", "simulate": true,
     "sweep": {"axis": "beta", "values": [0.3, 0.7]}, "series": {"load": [0.5, 0.9]}}
  ]
}"#;

fn hybridqos(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hybridqos"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("HYBRIDQOS_THREADS", t),
        None => cmd.env_remove("HYBRIDQOS_THREADS"),
    };
    cmd.output().expect("spawn hybridqos")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_key_exits_one_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace(r#""alpha": 0.3, "#, "");
    let f = write(tmp.path(), "s.json", &text);
    let o = hybridqos(&["run", &f, "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("source.alpha"), "{}", stderr(&o));
}

#[test]
fn unknown_and_out_of_range_keys_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace(
        r#""distance_m": 10.0"#,
        r#""distance_m": 10.0, "distanse": 1"#,
    );
    let f = write(tmp.path(), "a.json", &text);
    let o = hybridqos(&["validate", &f], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rf.distanse"), "{}", stderr(&o));

    let text = SMALL.replace(r#""avg_to_peak_ratio": 0.7"#, r#""avg_to_peak_ratio": 1.5"#);
    let f = write(tmp.path(), "b.json", &text);
    let o = hybridqos(&["run", &f, "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("budget.avg_to_peak_ratio"),
        "{}",
        stderr(&o)
    );

    let o = hybridqos(&["run", "/nonexistent/scenario.json"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let f = write(tmp.path(), "s.json", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = hybridqos(&["run", &f, "--out", a.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = hybridqos(&["run", &f, "--out", b.to_str().unwrap()], Some("1"));
    assert!(o.status.success(), "{}", stderr(&o));
    let (ca, cb) = (csvs(&a), csvs(&b));
    assert_eq!(ca.len(), 6);
    assert_eq!(ca, cb);
}

#[test]
fn csv_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let f = write(tmp.path(), "s.json", SMALL);
    let o = hybridqos(&["run", &f, "--out", tmp.path().to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("delays_hybrid1.csv")).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(
        &header[..4],
        [
            "beta",
            "load",
            "lambda_bits_per_frame",
            "mean_rate_bits_per_frame"
        ]
    );
    assert!(
        header.contains(&"sim_pr_delay_gt_ceil_d")
            && header.contains(&"d_ms")
            && header.contains(&"q_bits")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.split(',').count() == header.len()));
    let text = std::fs::read_to_string(tmp.path().join("rates_vlc.csv")).unwrap();
    assert!(text.contains("\ntheta_per_bit,rho_bits_per_frame,rho_bits_per_s\n"));
}

#[test]
fn manifest_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let f = write(tmp.path(), "s.json", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = hybridqos(
        &[
            "run",
            &f,
            "--out",
            a.to_str().unwrap(),
            "--seed",
            "9",
            "--quick",
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest_path = a.join("run_manifest.json");
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(
        m["resolved_scenario"]["simulation"]["seeds"],
        serde_json::json!([9, 10])
    );
    assert_eq!(m["outputs"].as_array().unwrap().len(), 6);
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    let o = hybridqos(
        &[
            "run",
            manifest_path.to_str().unwrap(),
            "--out",
            b.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csvs(&a), csvs(&b));
}

#[test]
fn seed_changes_only_simulated_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let f = write(tmp.path(), "s.json", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(hybridqos(&["run", &f, "--out", a.to_str().unwrap()], None)
        .status
        .success());
    assert!(hybridqos(
        &["run", &f, "--out", b.to_str().unwrap(), "--seed", "100"],
        None
    )
    .status
    .success());
    assert_eq!(
        std::fs::read(a.join("rates_rf.csv")).unwrap(),
        std::fs::read(b.join("rates_rf.csv")).unwrap()
    );
    let rows = |d: &Path| -> Vec<Vec<String>> {
        std::fs::read_to_string(d.join("delays_rf.csv"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').map(String::from).collect())
            .collect()
    };
    let (ra, rb) = (rows(&a), rows(&b));
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x[..8], y[..8]);
    }
    assert_ne!(ra, rb);
}

#[test]
fn validate_reports_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let f = write(tmp.path(), "s.json", SMALL);
    let o = hybridqos(&["validate", &f], None);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{out}\n{}", stderr(&o));
    assert_eq!(
        out.lines().filter(|l| l.starts_with("PASS ")).count(),
        12,
        "{out}"
    );
}

#[test]
fn selftest_quick_passes() {
    let o = hybridqos(&["selftest", "--quick"], None);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{out}");
    assert!(!out.contains("FAIL"));
    assert!(out.lines().filter(|l| l.starts_with("PASS ")).count() >= 10);
}

#[test]
fn selftest_catches_a_sign_flip() {
    let o = hybridqos(&["selftest", "--quick", "--inject-fault", "ab-sign"], None);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(!o.status.success());
    assert!(
        out.lines()
            .any(|l| l.starts_with("FAIL power equations residual")),
        "{out}"
    );
}
