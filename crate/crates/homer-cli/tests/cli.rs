//! End-to-end tests of the `homer` binary: exit codes, file contracts and
//! the predict→evaluate equals in-process-bench equivalence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn homer_bin() -> &'static str {
    env!("CARGO_BIN_EXE_homer")
}

fn run(args: &[&str]) -> Output {
    Command::new(homer_bin()).args(args).output().expect("spawn homer")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A small grouped corpus: 6 labels in 2 groups, group-indicating features.
fn write_corpus(dir: &Path) -> (PathBuf, PathBuf) {
    let mut train = String::new();
    let mut test = String::new();
    for g in 0..2u32 {
        for i in 0..12u32 {
            let l1 = g * 3 + (i % 3);
            let l2 = g * 3 + ((i + 1) % 3);
            let line = format!("l{l1},l{l2} {}:1 {}:1 {}:1\n", g * 10, g * 10 + 1 + (l1 % 3), g * 10 + 5 + (l2 % 3));
            if i < 9 {
                train.push_str(&line);
            } else {
                test.push_str(&line);
            }
        }
    }
    let train_path = dir.join("train.svm");
    let test_path = dir.join("test.svm");
    fs::write(&train_path, train).unwrap();
    fs::write(&test_path, test).unwrap();
    (train_path, test_path)
}

#[test]
fn flat_br_writes_single_node_model() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_corpus(dir.path());
    let model = dir.path().join("model.json");
    let out = run(&[
        "train",
        "--flat-br",
        "--train",
        train.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(doc["tree"]["nodes"].as_array().unwrap().len(), 1);
}

#[test]
fn same_seed_trains_byte_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_corpus(dir.path());
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for (path, threads) in [(&a, "1"), (&b, "4")] {
        let out = run(&[
            "--threads",
            threads,
            "train",
            "--train",
            train.to_str().unwrap(),
            "--model",
            path.to_str().unwrap(),
            "--k",
            "2",
            "--nmax",
            "2",
            "--seed",
            "7",
        ]);
        assert_ok(&out);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let out = run(&["train", "--train", "/nonexistent/x.svm", "--model", "/tmp/never.json"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/nonexistent/x.svm"), "{stderr}");
}

#[test]
fn bad_usage_exits_2() {
    let out = run(&["train", "--train"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_test_file_gives_empty_output_and_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_corpus(dir.path());
    let model = dir.path().join("model.json");
    assert_ok(&run(&[
        "train",
        "--train",
        train.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--k",
        "2",
        "--nmax",
        "3",
    ]));
    let empty = dir.path().join("empty.svm");
    fs::write(&empty, "").unwrap();
    let preds = dir.path().join("preds.txt");
    let out = run(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--input",
        empty.to_str().unwrap(),
        "--output",
        preds.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert_eq!(fs::read_to_string(&preds).unwrap(), "");
}

#[test]
fn ranking_mode_caps_labels_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = write_corpus(dir.path());
    let model = dir.path().join("model.json");
    assert_ok(&run(&[
        "train",
        "--train",
        train.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--k",
        "2",
        "--nmax",
        "3",
    ]));
    let out = run(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--input",
        test.to_str().unwrap(),
        "--mode",
        "ranking",
        "--top",
        "5",
    ]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 6);
    for line in lines {
        let n = line.split_whitespace().count();
        assert!(n <= 5, "line has {n} scored labels: {line}");
        for tok in line.split_whitespace() {
            assert!(tok.contains(':'), "malformed ranking token {tok}");
        }
    }
}

#[test]
fn evaluate_perfect_and_empty_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.svm");
    fs::write(&truth, "a 0:1\nb 1:1\na,b 0:1 1:1\n").unwrap();

    let perfect = dir.path().join("perfect.txt");
    fs::write(&perfect, "a\nb\na,b\n").unwrap();
    let out = run(&[
        "evaluate",
        "--truth",
        truth.to_str().unwrap(),
        "--predictions",
        perfect.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["micro_f"].as_f64().unwrap(), 1.0);
    assert_eq!(doc["macro_f"].as_f64().unwrap(), 1.0);

    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "\n\n\n").unwrap();
    let out = run(&[
        "evaluate",
        "--truth",
        truth.to_str().unwrap(),
        "--predictions",
        empty.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["micro_f"].as_f64().unwrap(), 0.0);
}

#[test]
fn misaligned_predictions_error() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.svm");
    fs::write(&truth, "a 0:1\nb 1:1\n").unwrap();
    let preds = dir.path().join("preds.txt");
    fs::write(&preds, "a\n").unwrap();
    let out = run(&[
        "evaluate",
        "--truth",
        truth.to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn vocab_mismatch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_corpus(dir.path());
    let model = dir.path().join("model.json");
    assert_ok(&run(&[
        "train",
        "--train",
        train.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--k",
        "2",
        "--nmax",
        "3",
    ]));
    // a test file with a label the model never saw
    let alien = dir.path().join("alien.svm");
    fs::write(&alien, "zz 0:1\n").unwrap();
    let out = run(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--input",
        alien.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    // a sidecar whose digest differs from the model vocabulary
    let sidecar = dir.path().join("other.labels");
    fs::write(&sidecar, "x\ny\nz\n").unwrap();
    let (_, test) = write_corpus(dir.path());
    let out = run(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--input",
        test.to_str().unwrap(),
        "--labels",
        sidecar.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_model_version_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_corpus(dir.path());
    let model = dir.path().join("model.json");
    assert_ok(&run(&[
        "train",
        "--flat-br",
        "--train",
        train.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
    ]));
    let text = fs::read_to_string(&model).unwrap();
    fs::write(&model, text.replace("\"format_version\":1", "\"format_version\":2")).unwrap();
    let out = run(&["inspect-tree", "--model", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn cluster_dump_partitions_all_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_corpus(dir.path());
    let out = run(&[
        "cluster",
        "--input",
        train.to_str().unwrap(),
        "--k",
        "3",
        "--dump",
    ]);
    assert_ok(&out);
    let clusters: Vec<Vec<u32>> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(clusters.len(), 3);
    let mut all: Vec<u32> = clusters.concat();
    all.sort_unstable();
    assert_eq!(all, (0..6).collect::<Vec<u32>>());
}

#[test]
fn config_file_supplies_defaults_but_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = write_corpus(dir.path());
    let config = dir.path().join("train.conf");
    fs::write(
        &config,
        format!(
            "train = {}\nk = 2\nnmax = 3\nseed = 5\n# comment\nepochs = 40\n",
            train.display()
        ),
    )
    .unwrap();
    let from_config = dir.path().join("from_config.json");
    assert_ok(&run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--model",
        from_config.to_str().unwrap(),
    ]));
    let from_flags = dir.path().join("from_flags.json");
    assert_ok(&run(&[
        "train",
        "--train",
        train.to_str().unwrap(),
        "--model",
        from_flags.to_str().unwrap(),
        "--k",
        "2",
        "--nmax",
        "3",
        "--seed",
        "5",
        "--epochs",
        "40",
    ]));
    assert_eq!(fs::read(&from_config).unwrap(), fs::read(&from_flags).unwrap());

    // flag overrides the config seed → different tree seed recorded
    let overridden = dir.path().join("override.json");
    assert_ok(&run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--model",
        overridden.to_str().unwrap(),
        "--seed",
        "9",
    ]));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&overridden).unwrap()).unwrap();
    assert_eq!(doc["tree"]["params"]["seed"].as_u64(), Some(9));
}

#[test]
fn bench_writes_reports_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = write_corpus(dir.path());
    let config = dir.path().join("bench.conf");
    fs::write(
        &config,
        format!(
            "train = {}\ntest = {}\nk_values = 2,3\nnmax_values = 3\nseeds = 0,1\nepochs = 30\n",
            train.display(),
            test.display()
        ),
    )
    .unwrap();
    let out1 = dir.path().join("out1");
    let out2 = dir.path().join("out2");
    for out_dir in [&out1, &out2] {
        let out = run(&[
            "bench",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert_ok(&out);
    }
    for name in ["report.json", "report.md", "k_sweep.csv", "nmax_sweep.csv"] {
        assert!(out1.join(name).exists(), "{name} missing");
    }
    // CSVs are timing-free and must be byte-identical across reruns
    for name in ["k_sweep.csv", "nmax_sweep.csv"] {
        assert_eq!(
            fs::read(out1.join(name)).unwrap(),
            fs::read(out2.join(name)).unwrap(),
            "{name} differs between reruns"
        );
    }
    let csv = fs::read_to_string(out1.join("k_sweep.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("BR,")), "baseline row missing:\n{csv}");
    // one BR row + one row per k value
    assert_eq!(csv.lines().count(), 1 + 1 + 2, "{csv}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out1.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
}

/// `predict` piped into `evaluate` must reproduce the in-process benchmark
/// metrics exactly.
#[test]
fn predict_then_evaluate_matches_bench() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = write_corpus(dir.path());

    // in-process route via bench with a single HOMER grid point
    let config = dir.path().join("bench.conf");
    fs::write(
        &config,
        format!(
            "train = {}\ntest = {}\nk_values = 2\nnmax_values = 3\nseeds = 4\ninclude_br = false\n",
            train.display(),
            test.display()
        ),
    )
    .unwrap();
    let bench_dir = dir.path().join("bench");
    assert_ok(&run(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        bench_dir.to_str().unwrap(),
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(bench_dir.join("report.json")).unwrap()).unwrap();
    let bench_micro = report["rows"][0]["micro_f"].as_f64().unwrap();
    let bench_macro = report["rows"][0]["macro_f"].as_f64().unwrap();

    // file route: train → predict → evaluate with the same seed
    let model = dir.path().join("model.json");
    assert_ok(&run(&[
        "train",
        "--train",
        train.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--k",
        "2",
        "--nmax",
        "3",
        "--seed",
        "4",
    ]));
    let preds = dir.path().join("preds.txt");
    assert_ok(&run(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--input",
        test.to_str().unwrap(),
        "--output",
        preds.to_str().unwrap(),
    ]));
    let out = run(&[
        "evaluate",
        "--truth",
        test.to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["micro_f"].as_f64().unwrap(), bench_micro);
    assert_eq!(doc["macro_f"].as_f64().unwrap(), bench_macro);
}

#[test]
fn inspect_reports_exact_stats() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tiny.svm");
    fs::write(&input, "a 0:1\na,b 1:1\n").unwrap();
    let out = run(&["inspect", "--input", input.to_str().unwrap()]);
    assert_ok(&out);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["num_instances"].as_u64(), Some(2));
    assert_eq!(doc["cardinality"].as_f64(), Some(1.5));
    assert_eq!(doc["label_frequencies"][0].as_u64(), Some(2));
}
