//! End-to-end checks of the `freqpanel` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use freqpanel::io::{ingest_csv, read_panel_csv, write_panel_csv, Config};
use freqpanel::panel::PanelData;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_freqpanel"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `y = 2 x1 − x2 + effects`, no error term.
fn noiseless_csv(dir: &Path) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, t) = (6, 10);
    let x1 = Array2::from_shape_fn((n, t), |_| rng.random::<f64>() - 0.5);
    let x2 = Array2::from_shape_fn((n, t), |_| rng.random::<f64>() - 0.5);
    let y = Array2::from_shape_fn((n, t), |(a, s)| {
        2.0 * x1[(a, s)] - x2[(a, s)] + 0.3 * a as f64 + 0.1 * s as f64
    });
    let panel = PanelData::with_names(y, vec![x1, x2], vec!["x1".into(), "x2".into()]).unwrap();
    let path = dir.join("noiseless.csv");
    let mut buf = Vec::new();
    write_panel_csv(&panel, &mut buf).unwrap();
    std::fs::write(&path, buf).unwrap();
    path
}

fn noisy_csv(dir: &Path) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, t) = (12, 20);
    let x = Array2::from_shape_fn((n, t), |_| rng.random::<f64>());
    let y = Array2::from_shape_fn((n, t), |(a, s)| {
        0.5 * x[(a, s)] + a as f64 * 0.1 + rng.random::<f64>() + s as f64 * 0.01
    });
    let panel = PanelData::with_names(y, vec![x], vec!["x".into()]).unwrap();
    let path = dir.join("noisy.csv");
    let mut buf = Vec::new();
    write_panel_csv(&panel, &mut buf).unwrap();
    std::fs::write(&path, buf).unwrap();
    path
}

#[test]
fn noiseless_panel_recovers_coefficients_with_zero_se() {
    let dir = tempfile::tempdir().unwrap();
    let data = noiseless_csv(dir.path());
    let json = dir.path().join("r.json");
    let out = run(&[
        "estimate",
        "--data",
        p(&data),
        "--method",
        "hs-asy",
        "--out",
        p(&json),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let beta: Vec<f64> = serde_json::from_value(v["beta"].clone()).unwrap();
    assert!(
        (beta[0] - 2.0).abs() < 1e-10 && (beta[1] + 1.0).abs() < 1e-10,
        "{beta:?}"
    );
    let se: Vec<f64> = serde_json::from_value(v["methods"][0]["std_errors"].clone()).unwrap();
    assert!(se.iter().all(|s| s.abs() < 1e-10), "{se:?}");
}

#[test]
fn robust_request_reports_plain_and_robust() {
    let dir = tempfile::tempdir().unwrap();
    let data = noisy_csv(dir.path());
    let json = dir.path().join("r.json");
    let out = run(&[
        "estimate",
        "--data",
        p(&data),
        "--method",
        "hs-robust",
        "--bootstrap-reps",
        "99",
        "--out",
        p(&json),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(
        text.contains("hs-asy") && text.contains("hs-robust-asy"),
        "{text}"
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let names: Vec<String> = v["methods"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["method"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(names[0], "hs-asy");
    assert!(names.iter().any(|n| n == "hs-robust-asy"), "{names:?}");
}

#[test]
fn same_seed_gives_identical_output_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = noisy_csv(dir.path());
    let outs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let json = dir.path().join(format!("r{i}.json"));
            let out = run(&[
                "estimate",
                "--data",
                p(&data),
                "--method",
                "hs-nb",
                "--method",
                "hs-wb",
                "--method",
                "dk-mbb",
                "--bootstrap-reps",
                "99",
                "--seed",
                "17",
                "--out",
                p(&json),
            ]);
            assert_eq!(code(&out), 0);
            std::fs::read(&json).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);

    let json = dir.path().join("other.json");
    let out = run(&[
        "estimate",
        "--data",
        p(&data),
        "--method",
        "hs-nb",
        "--bootstrap-reps",
        "99",
        "--seed",
        "18",
        "--out",
        p(&json),
    ]);
    assert_eq!(code(&out), 0);
    assert_ne!(std::fs::read(&json).unwrap(), outs[0]);
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    assert_eq!(code(&run(&["estimate", "--data", p(&missing)])), 2);

    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "id,t,y,x\n1,1,0.5,1.0\n1,2,abc,2.0\n2,1,0.1,0.3\n2,2,0.2,0.4\n",
    )
    .unwrap();
    let out = run(&["validate", "--data", p(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("abc"));

    let gap = dir.path().join("gap.csv");
    std::fs::write(&gap, "id,t,y,x\n1,1,0.5,1.0\n1,2,0.3,2.0\n2,1,0.1,0.3\n").unwrap();
    assert_eq!(code(&run(&["validate", "--data", p(&gap)])), 2);
}

#[test]
fn config_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = noisy_csv(dir.path());
    assert_eq!(code(&run(&["frobnicate"])), 4);
    assert_eq!(
        code(&run(&[
            "estimate",
            "--data",
            p(&data),
            "--method",
            "nonsense"
        ])),
        4
    );
    // wrong length null
    assert_eq!(
        code(&run(&[
            "estimate",
            "--data",
            p(&data),
            "--beta0",
            "0.5,1",
            "--method",
            "hs-asy"
        ])),
        4
    );
    // fixed-b only has tabulated levels
    assert_eq!(
        code(&run(&[
            "estimate",
            "--data",
            p(&data),
            "--method",
            "dk-fixb",
            "--level",
            "0.07"
        ])),
        4
    );
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "version = 2\n").unwrap();
    assert_eq!(code(&run(&["validate", "--config", p(&cfg)])), 4);
    std::fs::write(&cfg, "version = 1\n[estimate]\nbogus = 1\n").unwrap();
    assert_eq!(code(&run(&["validate", "--config", p(&cfg)])), 4);
    assert_eq!(
        code(&run(&[
            "validate",
            "--config",
            p(&dir.path().join("absent.toml"))
        ])),
        4
    );
}

#[test]
fn numerical_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = noiseless_csv(dir.path());
    // every bootstrap draw of an exact fit is degenerate
    assert_eq!(
        code(&run(&[
            "estimate",
            "--data",
            p(&data),
            "--method",
            "hs-nb",
            "--bootstrap-reps",
            "99"
        ])),
        3
    );
}

#[test]
fn simulate_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        r#"version = 1
[experiment]
name = "tiny"
grid = [[10, 16]]
methods = ["hs-asy", "dk-asy"]
replications = 12
[experiment.dgp]
spatial = "weak"
temporal = { kind = "ar1", rho = 0.5 }
"#,
    )
    .unwrap();
    let csv = dir.path().join("mc.csv");
    let manifest = dir.path().join("m.json");
    let out = run(&[
        "simulate",
        "--config",
        p(&cfg),
        "--out",
        p(&csv),
        "--manifest",
        p(&manifest),
        "--threads",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);

    let csv2 = dir.path().join("mc2.csv");
    assert_eq!(
        code(&run(&[
            "simulate",
            "--config",
            p(&cfg),
            "--out",
            p(&csv2),
            "--threads",
            "1"
        ])),
        0
    );
    assert_eq!(text, std::fs::read_to_string(&csv2).unwrap());

    let panel = dir.path().join("panel.csv");
    assert_eq!(
        code(&run(&[
            "simulate",
            "--config",
            p(&cfg),
            "--panel",
            "8x12",
            "--out",
            p(&panel)
        ])),
        0
    );
    let read = ingest_csv(&panel).unwrap();
    assert_eq!((read.n(), read.periods(), read.k()), (8, 12, 1));
}

#[test]
fn fixedb_cv_prints_and_caches() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.txt");
    let args = [
        "fixedb-cv",
        "--b",
        "0.1",
        "--reps",
        "2000",
        "--grid",
        "200",
        "--cache",
        p(&cache),
    ];
    let first = run(&args);
    assert_eq!(code(&first), 0);
    assert!(cache.exists());
    let second = run(&args);
    assert_eq!(stdout(&first), stdout(&second));
    assert_eq!(code(&run(&["fixedb-cv"])), 4);
}

#[test]
fn csv_round_trip_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Array2::from_shape_fn((5, 7), |_| rng.random::<f64>() * 1e3 - 17.0);
    let y = Array2::from_shape_fn((5, 7), |_| rng.random::<f64>() / 3.0);
    let panel = PanelData::with_names(y, vec![x], vec!["x".into()]).unwrap();
    let mut buf = Vec::new();
    write_panel_csv(&panel, &mut buf).unwrap();
    let back = read_panel_csv(buf.as_slice()).unwrap();
    assert_eq!(back.y(), panel.y());
    assert_eq!(back.x(), panel.x());
    assert_eq!(back.regressor_names(), panel.regressor_names());
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = Config::load(&path).unwrap();
            cfg.validate()
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
