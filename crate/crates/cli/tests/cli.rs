use std::path::Path;
use std::process::{Command, Output};

use eog::corpus::to_pubtator;
use eog::synthetic::lexical_cue_corpus;

fn eog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eog"))
        .args(args)
        .output()
        .expect("run eog")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &[&str] = &[
    "--word-dim", "8", "--hidden-dim", "6", "--edge-dim", "6", "--node-type-dim", "3",
    "--distance-dim", "3", "--max-epochs", "3", "--seed", "5",
];

fn prepared(dir: &Path) -> String {
    let raw = dir.join("corpus.pubtator");
    std::fs::write(&raw, to_pubtator(&lexical_cue_corpus(6, 2))).unwrap();
    let out_dir = dir.join("data");
    let o = eog(&["prepare", "--input", raw.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("documents\t6"));
    out_dir.join("documents.jsonl").to_str().unwrap().to_string()
}

fn train_run(dir: &Path, data: &str, extra: &[&str]) -> (Output, String) {
    let runs = dir.join("runs");
    let mut args = vec!["train", "--train", data, "--dev", data, "--runs-dir", runs.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    let o = eog(&args);
    let run_dir = stdout(&o).trim().to_string();
    (o, run_dir)
}

#[test]
fn help_exits_zero_and_unknown_flag_exits_one() {
    assert_eq!(code(&eog(&["--help"])), 0);
    assert_eq!(code(&eog(&["train", "--help"])), 0);
    let o = eog(&["train", "--no-such-flag", "x"]);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());
    assert_eq!(code(&eog(&[])), 1);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "batch_size = 2\nlearning_rat = 0.1\n").unwrap();
    let (o, _) = train_run(dir.path(), &data, &["--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rat"));
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.jsonl");
    let (o, _) = train_run(dir.path(), missing.to_str().unwrap(), &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("none.jsonl"));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let (o, _) = train_run(dir.path(), &data, &["--learning-rate", "1e300", "--gradient-clipping", "1e300"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn flags_override_config_file_and_name_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "max_epochs = 50\nbeta = 0.7\n").unwrap();
    let (o, run_dir) = train_run(dir.path(), &data, &["--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(Path::new(&run_dir).join("config.txt")).unwrap();
    assert!(text.contains("max_epochs = 3\n") && text.contains("beta = 0.7\n"));
    let log = std::fs::read_to_string(Path::new(&run_dir).join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let name = Path::new(&run_dir).file_name().unwrap().to_str().unwrap();
    assert_eq!(name.len(), 16);
    assert!(name.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn train_then_evaluate_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let (o, run_dir) = train_run(dir.path(), &data, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = Path::new(&run_dir).join("checkpoint");
    let summary = std::fs::read_to_string(Path::new(&run_dir).join("summary.tsv")).unwrap();
    assert_eq!(summary.lines().count(), 4);

    let out = dir.path().join("eval");
    let e = eog(&[
        "evaluate", "--checkpoint", ckpt.to_str().unwrap(), "--data", &data,
        "--output", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&e), 0, "{}", String::from_utf8_lossy(&e.stderr));
    let table = stdout(&e);
    assert!(table.starts_with("split\tP\tR\tF1"));
    assert_eq!(table.lines().count(), 4);
    assert_eq!(std::fs::read_to_string(out.join("metrics.tsv")).unwrap(), table);
    let preds = std::fs::read_to_string(out.join("predictions.jsonl")).unwrap();
    assert!(preds.lines().count() > 0);

    let again = eog(&["evaluate", "--checkpoint", ckpt.to_str().unwrap(), "--data", &data]);
    assert_eq!(stdout(&again), table);

    let d = eog(&["analyze", "distance", "--checkpoint", ckpt.to_str().unwrap(), "--data", &data]);
    assert_eq!(code(&d), 0);
    assert!(stdout(&d).starts_with("distance\tpairs"));

    let records = dir.path().join("dump.jsonl");
    let g = eog(&["analyze", "graph-dump", "--data", &data, "--records", records.to_str().unwrap()]);
    assert_eq!(code(&g), 0);
    let g_out = stdout(&g);
    assert_eq!(g_out.lines().count(), 7);
    assert!(g_out.contains("EE\t0\t"));
    let first: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(records).unwrap().lines().next().unwrap()).unwrap();
    assert!(first["exists_after_inference"].is_boolean());
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let (_, first) = train_run(dir.path(), &data, &[]);
    let log1 = std::fs::read(Path::new(&first).join("train_log.jsonl")).unwrap();
    let params1 = std::fs::read(Path::new(&first).join("checkpoint/params.bin")).unwrap();
    let (_, second) = train_run(dir.path(), &data, &[]);
    assert_eq!(first, second);
    assert_eq!(std::fs::read(Path::new(&second).join("train_log.jsonl")).unwrap(), log1);
    assert_eq!(std::fs::read(Path::new(&second).join("checkpoint/params.bin")).unwrap(), params1);
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let data = prepared(dir.path());
    let grid = dir.path().join("grid.txt");
    std::fs::write(&grid, "# ablations\nvariant=EoG\nvariant=NoInf\nedges=MM,ME,MS,ES\nbatch_size=0\n").unwrap();
    let runs = dir.path().join("runs");
    let mut args = vec![
        "analyze", "sweep", "--train", &data, "--dev", &data, "--grid", grid.to_str().unwrap(),
        "--runs-dir", runs.to_str().unwrap(),
    ];
    args.extend_from_slice(SMALL);
    let o = eog(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let tsv = stdout(&o);
    assert_eq!(tsv.lines().count(), 5);
    assert!(tsv.lines().last().unwrap().contains("batch_size"));
}

#[test]
fn gradcheck_reports_every_layer() {
    let o = eog(&["gradcheck", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().skip(1).all(|l| l.ends_with("\tok")));
}
