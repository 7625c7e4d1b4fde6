use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn setgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setgnn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = setgnn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn small_synth(dir: &Path, seed: &str) -> String {
    let out = dir.join(format!("synth{seed}")).display().to_string();
    ok(&[
        "gen-synth", "--out", &out, "--seed", seed, "--train-positives", "60", "--val-positives", "20",
        "--test-positives", "20",
    ]);
    out
}

const FILES: [&str; 6] = ["embeddings.tsv", "train.tsv", "val.tsv", "test.tsv", "sets.tsv", "fitb.tsv"];

#[test]
fn gen_synth_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_synth(dir.path(), "4");
    let b = dir.path().join("again").display().to_string();
    ok(&[
        "gen-synth", "--out", &b, "--seed", "4", "--train-positives", "60", "--val-positives", "20",
        "--test-positives", "20",
    ]);
    for f in FILES {
        let (x, y) = (fs::read(Path::new(&a).join(f)).unwrap(), fs::read(Path::new(&b).join(f)).unwrap());
        assert!(!x.is_empty() && x == y, "{f} differs");
    }
    let c = small_synth(dir.path(), "5");
    assert_ne!(
        fs::read(Path::new(&a).join("embeddings.tsv")).unwrap(),
        fs::read(Path::new(&c).join("embeddings.tsv")).unwrap()
    );
}

#[test]
fn impossible_anchor_dimension_is_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x").display().to_string();
    let res = setgnn(&["gen-synth", "--dim", "2", "--styles", "4", "--out", &out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("orthogonal"));
}

#[test]
fn missing_files_and_bad_values_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.tsv").display().to_string();
    let res = setgnn(&["train", "--embeddings", &missing, "--train", &missing]);
    assert_eq!(res.status.code(), Some(2));
    let res = setgnn(&["train", "--epochs", "2"]);
    assert_eq!(res.status.code(), Some(2));
    let res = setgnn(&["train", "--normalization", "sometimes"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn flags_override_config_file_and_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let synth = small_synth(dir.path(), "1");
    let cfg = dir.path().join("run.cfg");
    let ckpt = dir.path().join("m.ckpt").display().to_string();
    let report = dir.path().join("r.txt");
    fs::write(
        &cfg,
        format!(
            "# small run\nvariant = II\nepochs = 5\nmessage_dim = 8\nmlp_hidden = 8\nembeddings = {synth}/embeddings.tsv\ntrain = {synth}/train.tsv\nval = {synth}/val.tsv\n"
        ),
    )
    .unwrap();
    ok(&[
        "train", "--config", &cfg.display().to_string(), "--epochs", "2", "--checkpoint", &ckpt, "--report",
        &report.display().to_string(),
    ]);
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("config.epochs=2\n"), "{text}");
    assert!(text.contains("config.variant=II\n"));
    assert!(text.contains("config.message_dim=8\n"));
    assert!(text.contains("epoch.2.train_loss="));
    assert!(!text.contains("epoch.3."));

    let emb = format!("{synth}/embeddings.tsv");
    let out = ok(&["eval", "--checkpoint", &ckpt, "--embeddings", &emb, "--corpus", &format!("{synth}/test.tsv")]);
    let auc: f64 = String::from_utf8(out.stdout).unwrap().trim().strip_prefix("auc=").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&auc));

    let out = ok(&[
        "fitb", "--checkpoint", &ckpt, "--embeddings", &emb, "--questions", &format!("{synth}/fitb.tsv"),
        "--pairwise",
    ]);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("fitb_accuracy="));

    let out = ok(&["score", "--checkpoint", &ckpt, "--embeddings", &emb, "--items", "s0_000,s0_001,s1_002"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("score=") && stdout.contains("logit="), "{stdout}");
}

#[test]
fn gradcheck_passes_at_default_tolerance() {
    let out = ok(&["gradcheck", "--seeds", "1"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("gradcheck=pass"));
}

#[test]
fn gradcheck_failure_exits_with_3() {
    let res = setgnn(&["gradcheck", "--seeds", "1", "--tolerance", "1e-300"]);
    assert_eq!(res.status.code(), Some(3));
}
