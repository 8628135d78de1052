use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn slda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slda"))
        .args(args)
        .env_remove("SLDA_THREADS")
        .output()
        .expect("spawn slda")
}

fn code(args: &[&str]) -> i32 {
    slda(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_dataset(dir: &Path, seed: &str) {
    let out = slda(&[
        "generate", "--out", s(dir), "--seed", seed, "--n-docs", "60", "--grid", "6", "--tokens", "30",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn train(data: &Path, out: &Path, regime: &str, extra: &[&str]) -> Output {
    let corpus = data.join("train.txt");
    let mut args = vec![
        "--threads", "1", "train", "--corpus", s(&corpus), "--out", s(out), "--K", "3", "--regime", regime,
        "--sweeps", "4", "--seed", "5",
    ];
    args.extend_from_slice(extra);
    slda(&args)
}

#[test]
fn generate_writes_dataset_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    small_dataset(a.path(), "3");
    small_dataset(b.path(), "3");
    for f in ["train.txt", "test.txt", "vocab.txt", "truth/phi6.csv", "truth/config.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let vocab = fs::read_to_string(a.path().join("vocab.txt")).unwrap();
    assert_eq!(vocab.lines().count(), 36);
    let c = tempfile::tempdir().unwrap();
    small_dataset(c.path(), "4");
    assert_ne!(fs::read(a.path().join("train.txt")).unwrap(), fs::read(c.path().join("train.txt")).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&["generate"]), 2);
    assert_eq!(code(&["nonsense"]), 2);
    assert_eq!(code(&["--threads", "0", "generate", "--out", "x"]), 2);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn train_contract_and_exit_codes() {
    let data = tempfile::tempdir().unwrap();
    small_dataset(data.path(), "1");
    let out = tempfile::tempdir().unwrap();
    let model = out.path().join("m");
    let r = train(data.path(), &model, "instantiated", &[]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["model.txt", "trace.tsv", "run.txt"] {
        assert!(model.join(f).exists(), "{f}");
    }
    let trace = fs::read_to_string(model.join("trace.tsv")).unwrap();
    assert_eq!(trace.lines().count(), 4);
    assert!(trace.lines().all(|l| l.split('\t').count() == 6));
    let head = fs::read_to_string(model.join("model.txt")).unwrap();
    assert!(head.starts_with("sldae2e-model v1 K=3 V=36 "));

    let bad = out.path().join("bad");
    assert_eq!(train(data.path(), &bad, "instantiated", &["--wx", "0", "--wy", "0"]).status.code(), Some(2));
    assert_eq!(train(data.path(), &bad, "instantiated", &["--wx", "0"]).status.code(), Some(2));
    assert_eq!(train(data.path(), &bad, "sideways", &[]).status.code(), Some(2));
    let missing = out.path().join("nope.txt");
    assert_eq!(
        code(&["train", "--corpus", s(&missing), "--out", s(&bad)]),
        1
    );
}

#[test]
fn config_file_is_read_and_flags_win() {
    let data = tempfile::tempdir().unwrap();
    small_dataset(data.path(), "1");
    let out = tempfile::tempdir().unwrap();
    let cfg = out.path().join("run.cfg");
    fs::write(&cfg, "# toy\nsweeps = 2\nK = 4\n").unwrap();
    let model = out.path().join("m");
    let r = train(data.path(), &model, "instantiated", &["--config", s(&cfg)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    // --sweeps 4 and --K 3 from the command line beat the file
    assert_eq!(fs::read_to_string(model.join("trace.tsv")).unwrap().lines().count(), 4);
    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(train(data.path(), &model, "instantiated", &["--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn eval_and_baseline_reports() {
    let data = tempfile::tempdir().unwrap();
    small_dataset(data.path(), "2");
    let out = tempfile::tempdir().unwrap();
    let model = out.path().join("m");
    assert!(train(data.path(), &model, "approx", &["--recog-hidden", "5", "--recog-sample", "20"]).status.success());
    let report = out.path().join("eval.txt");
    let json = out.path().join("eval.json");
    let test = data.path().join("test.txt");
    let r = slda(&["eval", "--corpus", s(&test), "--model", s(&model), "--report", s(&report), "--json", s(&json)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let kv = fs::read_to_string(&report).unwrap();
    for key in ["task=test", "regime=approx", "w_x=1", "w_y=1", "K=3", "error_rate=", "n_test=6"] {
        assert!(kv.contains(key), "{key} missing from {kv}");
    }
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["regime"], "approx");

    let r = slda(&["eval", "--corpus", s(&test), "--model", s(&model), "--embedder", "ideal", "--report", s(&report)]);
    assert!(r.status.success());

    let train_c = data.path().join("train.txt");
    let r = slda(&["baseline", "--train", s(&train_c), "--test", s(&test), "--l2", "0.01", "--report", s(&report)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(fs::read_to_string(&report).unwrap().contains("regime=bow"));

    let unlabeled = data.path().join("unlabeled.txt");
    let text = fs::read_to_string(&train_c).unwrap();
    let stripped: String = text.lines().map(|l| format!("?{}\n", &l[1..])).collect();
    fs::write(&unlabeled, stripped).unwrap();
    let r = slda(&["baseline", "--train", s(&unlabeled), "--test", s(&test), "--report", s(&report)]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn export_writes_images() {
    let data = tempfile::tempdir().unwrap();
    small_dataset(data.path(), "2");
    let out = tempfile::tempdir().unwrap();
    let model = out.path().join("m");
    assert!(train(data.path(), &model, "instantiated", &["--export-grid", "6"]).status.success());
    assert!(model.join("topics/topic_2.pgm").exists());
    let img = out.path().join("img");
    assert_eq!(code(&["export", "--model", s(&model), "--out", s(&img), "--grid", "6"]), 0);
    assert!(fs::read_to_string(img.join("topic_0.pgm")).unwrap().starts_with("P2\n"));
    assert_eq!(code(&["export", "--model", s(&model), "--out", s(&img), "--grid", "5"]), 2);
}

#[test]
fn single_thread_reruns_are_byte_identical() {
    let data = tempfile::tempdir().unwrap();
    small_dataset(data.path(), "7");
    let out = tempfile::tempdir().unwrap();
    for regime in ["instantiated", "ideal", "approx"] {
        let a = out.path().join(format!("{regime}_a"));
        let b = out.path().join(format!("{regime}_b"));
        let extra = ["--recog-hidden", "5", "--recog-sample", "20", "--unroll", "30"];
        assert!(train(data.path(), &a, regime, &extra).status.success());
        assert!(train(data.path(), &b, regime, &extra).status.success());
        for f in ["model.txt", "trace.tsv", "run.txt"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{regime} {f}");
        }
    }
}
