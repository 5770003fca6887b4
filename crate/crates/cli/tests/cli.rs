use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use apc_core::ingest::{load_codebook, save_codebook, save_real_matrix};
use apc_core::{Centroid, CentroidSet, MetricsReport, PatternMatrix};

fn apc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apc"))
        .args(args)
        .env_remove("APC_THREADS")
        .output()
        .expect("spawn apc")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small noisy dataset written under `dir` with the given prefix.
fn generate(dir: &Path, prefix: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec![
        "generate",
        "--n-prototypes",
        "4",
        "--dim",
        "64",
        "--rows",
        "200",
        "--seed",
        "9",
        "--out-dir",
        s(dir),
        "--prefix",
        prefix,
    ];
    args.extend_from_slice(extra);
    let out = apc(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join(format!("{prefix}.apcf"))
}

fn report(path: &Path) -> MetricsReport {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn generate_writes_three_reproducible_files() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "a", &[]);
    generate(dir.path(), "b", &[]);
    for suffix in ["apcf", "planted.apcc", "manifest.json"] {
        let a = std::fs::read(dir.path().join(format!("a.{suffix}"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b.{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix}");
    }
}

#[test]
fn generate_rejects_out_of_range_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = apc(&[
        "generate",
        "--flip-noise",
        "0.6",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("synthetic.apcf").exists());
}

#[test]
fn cluster_recovers_noise_free_prototypes() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(
        dir.path(),
        "clean",
        &["--flip-noise", "0", "--proto-density", "0.25"],
    );
    let rep = dir.path().join("r.json");
    let out = apc(&[
        "cluster",
        "--input",
        s(&input),
        "--k",
        "4",
        "--density",
        "0.25",
        "--report",
        s(&rep),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&rep);
    assert_eq!(r.precision, 1.0);
    assert_eq!(r.error_count, 0);
    assert_eq!(r.cluster_sizes, vec![50; 4]);
}

#[test]
fn cluster_is_repeatable_and_k_one_works() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "d", &[]);
    for algorithm in ["awc", "bmf", "brbk"] {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let cb = dir.path().join(format!("{algorithm}{run}.apcc"));
            let rep = dir.path().join(format!("{algorithm}{run}.json"));
            let out = apc(&[
                "cluster",
                "--input",
                s(&input),
                "--algorithm",
                algorithm,
                "--k",
                "5",
                "--seed",
                "3",
                "--out",
                s(&cb),
                "--report",
                s(&rep),
            ]);
            assert_eq!(code(&out), 0);
            outputs.push((std::fs::read(&cb).unwrap(), std::fs::read(&rep).unwrap()));
        }
        assert_eq!(outputs[0], outputs[1], "{algorithm}");
        let out = apc(&[
            "cluster",
            "--input",
            s(&input),
            "--algorithm",
            algorithm,
            "--k",
            "1",
        ]);
        assert_eq!(code(&out), 0, "{algorithm}");
        let r: MetricsReport = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(r.cluster_sizes, vec![200]);
    }
}

#[test]
fn cluster_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "e", &[]);
    let out = apc(&["cluster", "--input", s(&input), "--k", "201"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("k <= N"));
    let missing = dir.path().join("missing.apcf");
    assert_eq!(
        code(&apc(&["cluster", "--input", s(&missing), "--k", "2"])),
        1
    );
    assert_eq!(code(&apc(&["cluster", "--input", s(&input)])), 2);
    assert_eq!(
        code(&apc(&[
            "cluster",
            "--input",
            s(&input),
            "--k",
            "2",
            "--density",
            "1.5"
        ])),
        2
    );
}

#[test]
fn cluster_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "t", &[]);
    let trace = dir.path().join("trace.csv");
    let out = apc(&[
        "cluster",
        "--input",
        s(&input),
        "--k",
        "4",
        "--trace",
        s(&trace),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,reassigned,precision"));
    assert!(lines.count() >= 1);
}

#[test]
fn eval_matches_training_on_clean_data() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "c", &["--flip-noise", "0"]);
    let cb = dir.path().join("cb.apcc");
    let train = dir.path().join("train.json");
    let out = apc(&[
        "cluster",
        "--input",
        s(&input),
        "--k",
        "4",
        "--out",
        s(&cb),
        "--report",
        s(&train),
    ]);
    assert_eq!(code(&out), 0);
    let out = apc(&["eval", "--input", s(&input), "--codebook", s(&cb)]);
    assert_eq!(code(&out), 0);
    let evaluated: MetricsReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(evaluated.precision, report(&train).precision);
}

#[test]
fn eval_empty_codebook_and_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "z", &[]);
    let empty = dir.path().join("empty.apcc");
    let centroids = (0..3)
        .map(|_| Centroid::from_support(64, vec![]).unwrap())
        .collect();
    save_codebook(&CentroidSet::new(64, None, centroids).unwrap(), &empty).unwrap();
    let out = apc(&["eval", "--input", s(&input), "--codebook", s(&empty)]);
    assert_eq!(code(&out), 0);
    let r: MetricsReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r.precision, 0.0);

    let narrow = dir.path().join("narrow.apcc");
    save_codebook(
        &CentroidSet::new(32, None, vec![Centroid::from_support(32, vec![1]).unwrap()]).unwrap(),
        &narrow,
    )
    .unwrap();
    assert_eq!(
        code(&apc(&[
            "eval",
            "--input",
            s(&input),
            "--codebook",
            s(&narrow)
        ])),
        2
    );
}

#[test]
fn sweep_row_count_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "s", &[]);
    let csv = dir.path().join("sweep.csv");
    let cbs = dir.path().join("cbs");
    let args = [
        "sweep",
        "--input",
        s(&input),
        "--algorithms",
        "awc,bmf",
        "--k",
        "4,8",
        "--density",
        "0.5",
        "--seeds",
        "1",
        "--omit-timing",
        "--out",
        s(&csv),
        "--codebook-dir",
        s(&cbs),
    ];
    assert_eq!(code(&apc(&args)), 0);
    let first = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], apc_cli::SWEEP_COLUMNS.join(","));
    assert!(lines[1].starts_with("awc,1,4,0.5,"));
    assert!(lines[3].starts_with("bmf,1,4,,"));
    assert_eq!(std::fs::read_dir(&cbs).unwrap().count(), 4);
    let cb = load_codebook(cbs.join("awc_k8_p0.5_s1.apcc")).unwrap();
    assert_eq!(cb.k(), 8);

    assert_eq!(code(&apc(&args)), 0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), first);
}

#[test]
fn sweep_timing_column_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "v", &[]);
    let out = apc(&[
        "sweep",
        "--input",
        s(&input),
        "--algorithms",
        "bmf",
        "--k",
        "2",
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(row[10].parse::<f64>().unwrap() >= 0.0);
    assert_eq!(row[11], "");
    assert_eq!(
        code(&apc(&["sweep", "--input", s(&input), "--k", "2,500"])),
        2
    );
}

#[test]
fn sweep_records_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    // Every row is zero, so precision is undefined and each cell fails.
    let zeros = dir.path().join("zeros.apcf");
    save_real_matrix(&PatternMatrix::new(6, 5, vec![0.0; 30]).unwrap(), &zeros).unwrap();
    let csv = dir.path().join("out.csv");
    let out = apc(&[
        "sweep",
        "--input",
        s(&zeros),
        "--algorithms",
        "bmf",
        "--k",
        "2",
        "--out",
        s(&csv),
    ]);
    assert_eq!(code(&out), 1);
    let text = std::fs::read_to_string(&csv).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("bmf,0,2,,,,,,,,"));
    assert!(!row.ends_with(','));
}

#[test]
fn compare_runs_all_algorithms() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "m", &[]);
    let out = apc(&[
        "compare",
        "--input",
        s(&input),
        "--k",
        "4",
        "--seeds",
        "0,1",
        "--omit-timing",
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let algs: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(algs, ["awc", "awc", "bmf", "bmf", "brbk", "brbk"]);
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "g", &[]);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# cluster settings\ninput = {}\nk = 3\nseed = 5\n",
            s(&input)
        ),
    )
    .unwrap();
    let out = apc(&["--config", s(&cfg), "cluster"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r: MetricsReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r.k, 3);
    let out = apc(&["cluster", "--config", s(&cfg), "--k", "6"]);
    let r: MetricsReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r.k, 6);

    std::fs::write(
        &cfg,
        format!("input = {}\nk = 2,3\nalgorithms = bmf\n", s(&input)),
    )
    .unwrap();
    let out = apc(&["--config", s(&cfg), "sweep", "--k", "4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
}

#[test]
fn thread_settings() {
    let dir = tempfile::tempdir().unwrap();
    let input = generate(dir.path(), "th", &[]);
    let base = ["cluster", "--input", s(&input), "--k", "4"];
    let one = apc(&[&["--threads", "1"], &base[..]].concat());
    let many = apc(&[&["--threads", "8"], &base[..]].concat());
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, many.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_apc"))
        .args(base)
        .env("APC_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn cost_defaults_and_scaling() {
    let out = apc(&["cost"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let gain = v["gain"].as_f64().unwrap();
    assert!((gain / 7.6e5 - 1.0).abs() < 0.005, "{gain}");
    assert_eq!(v["k"].as_u64(), Some(6144));

    let doubled = apc(&["cost", "--clusters-per-sublayer", "4096"]);
    let d: serde_json::Value = serde_json::from_slice(&doubled.stdout).unwrap();
    assert!((d["gain"].as_f64().unwrap() * 2.0 / gain - 1.0).abs() < 1e-12);

    let unit = apc(&[
        "cost",
        "--total-params",
        "6e9",
        "--ffn-fraction",
        "1",
        "--clusters-per-sublayer",
        "2000000000",
    ]);
    let u: serde_json::Value = serde_json::from_slice(&unit.stdout).unwrap();
    assert_eq!(u["gain"].as_f64(), Some(1.0));

    assert_eq!(code(&apc(&["cost", "--ffn-fraction", "1.5"])), 2);
    assert_eq!(code(&apc(&["cost", "--bogus"])), 2);
}
