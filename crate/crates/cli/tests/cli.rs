use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fingertrain"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn every_subcommand_has_help() {
    let commands: &[&[&str]] = &[
        &[],
        &["standardize"],
        &["fingerprint"],
        &["vocab"],
        &["vocab", "build"],
        &["vocab", "apply"],
        &["split", "make"],
        &["filter"],
        &["coverage"],
        &["pretrain"],
        &["featurise"],
        &["benchmark"],
        &["importance"],
        &["stats", "compare"],
        &["pipeline", "run"],
        &["toy"],
    ];
    for c in commands {
        let mut args = c.to_vec();
        args.push("--help");
        let text = ok(&args);
        assert!(text.contains("Usage"), "{args:?}");
    }
}

#[test]
fn fingerprint_and_standardize_preserve_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["toy", "--out", p(d), "--molecules", "30", "--pretrain", "10"]);
    let data = d.join("toy_labelled.csv");

    let fp = d.join("fp.csv");
    ok(&["fingerprint", "--in", p(&data), "--out", p(&fp), "--radius", "2", "--nbits", "1024"]);
    assert_eq!(lines(&fp), 31);
    let sparse = d.join("fp.tsv");
    ok(&["fingerprint", "--in", p(&data), "--out", p(&sparse), "--sparse"]);
    assert_eq!(lines(&sparse), 30);

    let smi = d.join("mixed.smi");
    std::fs::write(&smi, "CCO ethanol\nC1CC bad\n[Na+].[Cl-] salt\n").unwrap();
    let std_out = d.join("std.csv");
    let rejects = d.join("rejects.csv");
    ok(&["standardize", "--in", p(&smi), "--out", p(&std_out), "--rejects", p(&rejects)]);
    assert_eq!(lines(&std_out) + lines(&rejects), 3 + 2);
    assert!(std::fs::read_to_string(&rejects).unwrap().contains("bad"));
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["toy", "--out", p(d), "--molecules", "20", "--pretrain", "10"]);
    let data = d.join("toy_labelled.csv");
    let out = d.join("split.csv");

    let k1 = run(&["split", "make", "--data", p(&data), "--k", "1", "--out", p(&out)]);
    assert_eq!(k1.status.code(), Some(2));

    let missing = run(&["fingerprint", "--in", p(&d.join("nope.smi")), "--out", p(&out)]);
    assert_eq!(missing.status.code(), Some(3));

    let conf = d.join("bad.conf");
    std::fs::write(&conf, "data.dataset = toy_labelled.csv\ndata.pretrain = toy_pretrain.smi\nsplit.k = 1\n").unwrap();
    let cfg = run(&["pipeline", "run", "--config", p(&conf)]);
    assert_eq!(cfg.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&cfg.stderr).contains("split.k"));
}

#[test]
fn modular_workflow_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["toy", "--out", p(d), "--molecules", "40", "--pretrain", "80"]);
    let data = d.join("toy_labelled.csv");
    let corpus = d.join("toy_pretrain.smi");

    let filtered = d.join("filtered.smi");
    ok(&["filter", "--pretrain", p(&corpus), "--benchmark", p(&data), "--threshold", "0.7", "--out", p(&filtered)]);
    let vocab = d.join("vocab.json");
    ok(&["vocab", "build", "--corpus", p(&filtered), "--rmax", "1", "--k", "32", "--out", p(&vocab)]);
    let cover: f64 = ok(&["coverage", "--benchmark", p(&data), "--vocab", p(&vocab)]).trim().parse().unwrap();
    assert!((0.0..=100.0).contains(&cover));
    let tokens = d.join("tokens.csv");
    ok(&["vocab", "apply", "--vocab", p(&vocab), "--in", p(&data), "--out", p(&tokens), "--format", "tokens"]);

    let model = d.join("model.ftgm");
    ok(&[
        "pretrain", "--vocab", p(&vocab), "--corpus", p(&filtered), "--target-bits", "64", "--epochs", "2",
        "--warmup-epochs", "1", "--batch-size", "16", "--message-layers", "1", "--mlp-layers", "1", "--hidden",
        "8", "--embed-dim", "48", "--out", p(&model),
    ]);
    let emb = d.join("emb.csv");
    ok(&["featurise", "--model", p(&model), "--vocab", p(&vocab), "--in", p(&data), "--out", p(&emb)]);
    assert_eq!(lines(&emb), 41);

    let splits = d.join("splits.csv");
    ok(&["split", "make", "--data", p(&data), "--k", "3", "--repeats", "3", "--out", p(&splits)]);
    let fp = d.join("fp.csv");
    ok(&["fingerprint", "--in", p(&data), "--out", p(&fp)]);

    let common = ["--data", p(&data), "--splits", p(&splits), "--n-estimators", "10", "--min-data-in-leaf", "3"];
    let gin_metrics = d.join("gin.csv");
    let predictors = d.join("predictors");
    let mut args = vec!["benchmark"];
    args.extend(common);
    args.extend(["--features", p(&emb), "--method", "pt_gin", "--out", p(&gin_metrics)]);
    args.extend(["--save-predictors", p(&predictors)]);
    ok(&args);
    let ecfp_metrics = d.join("ecfp.csv");
    let mut args = vec!["benchmark"];
    args.extend(common);
    args.extend(["--fingerprints", p(&fp), "--method", "ecfp", "--out", p(&ecfp_metrics)]);
    ok(&args);

    let cmp = d.join("cmp.csv");
    ok(&["stats", "compare", "--in", p(&gin_metrics), p(&ecfp_metrics), "--out", p(&cmp)]);
    // Three metrics, one pair each.
    assert_eq!(lines(&cmp), 4);

    let predictor = predictors.join("r001_f00.json");
    let imp = d.join("imp.csv");
    ok(&[
        "importance", "--model", p(&model), "--vocab", p(&vocab), "--predictor", p(&predictor), "--data", p(&data),
        "--iterations", "1", "--out", p(&imp),
    ]);
    assert!(lines(&imp) > 1);
}

#[test]
fn pipeline_rerun_skips_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["toy", "--out", p(d), "--molecules", "45", "--pretrain", "90"]);
    let conf = d.join("run.conf");
    std::fs::write(
        &conf,
        "data.dataset = toy_labelled.csv\ndata.pretrain = toy_pretrain.smi\ndata.filter_threshold = 0.7\n\
         vocab.rmax = 1\nvocab.k = 32\nsplit.k = 3\nsplit.repeats = 2\npretrain.target_bits = 64\n\
         pretrain.epochs = 2\npretrain.warmup_epochs = 1\npretrain.message_layers = 1\npretrain.mlp_layers = 1\n\
         pretrain.hidden_dim = 8\npretrain.embed_dim = 48\npredictor.n_estimators = 10\npredictor.min_data_in_leaf = 3\n",
    )
    .unwrap();
    let out = d.join("run");
    let first = run(&["pipeline", "run", "--config", p(&conf), "--out", p(&out)]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(out.join("manifest.json").exists());
    let second = run(&["pipeline", "run", "--config", p(&conf), "--out", p(&out)]);
    let log = String::from_utf8_lossy(&second.stderr);
    let stages: Vec<&str> = log.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(stages.len(), 10, "{log}");
    assert!(stages.iter().all(|l| l.contains("skipped")), "{log}");
}
