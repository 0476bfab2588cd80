use std::io::Write;
use std::path::Path;

use fingertrain::datasets::TaskKind;
use fingertrain::pipeline::{run_pipeline, stage_names, RunConfig};
use fingertrain::toy::{toy_dataset, toy_smiles};
use fingertrain::Exec;

const TINY: &str = "\
seed = 3
output.dir = run-a
data.dataset = labelled.csv
data.name = tiny
data.task = regression
data.pretrain = corpus.smi
data.filter_threshold = 0.6
vocab.rmax = 1
vocab.k = 32
split.k = 3
split.repeats = 2
pretrain.target_bits = 64
pretrain.epochs = 2
pretrain.warmup_epochs = 1
pretrain.batch_size = 16
pretrain.message_layers = 1
pretrain.mlp_layers = 1
pretrain.hidden_dim = 8
pretrain.embed_dim = 48
predictor.n_estimators = 10
predictor.min_data_in_leaf = 3
importance.enabled = true
importance.iterations = 1
";

fn workspace(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    toy_dataset(45, 8, TaskKind::Regression)
        .write_csv(&dir.path().join("labelled.csv"))
        .unwrap();
    let mut f = std::fs::File::create(dir.path().join("corpus.smi")).unwrap();
    for s in toy_smiles(90, 9) {
        writeln!(f, "{s}").unwrap();
    }
    let conf = dir.path().join("tiny.conf");
    std::fs::write(&conf, text).unwrap();
    (dir, conf)
}

fn tiny() -> (tempfile::TempDir, RunConfig) {
    let (dir, conf) = workspace(TINY);
    let cfg = RunConfig::load(&conf).unwrap();
    (dir, cfg)
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap()
}

#[test]
fn rerun_skips_and_outputs_are_reproducible() {
    let (dir, cfg) = tiny();
    let first = run_pipeline(&cfg, Exec::Parallel).unwrap();
    assert_eq!(
        first.stages.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(),
        stage_names()
    );
    assert!(first.stages.iter().all(|s| !s.skipped));

    let second = run_pipeline(&cfg, Exec::Parallel).unwrap();
    assert!(second.stages.iter().all(|s| s.skipped));
    assert_eq!(first.artifacts, second.artifacts);
    for (a, b) in first.stages.iter().zip(&second.stages) {
        assert_eq!(a.key, b.key);
    }

    // Same inputs into a second directory, sequential execution: identical bytes.
    let other = dir.path().join("run-b");
    let cfg_b = cfg.clone().with_output_dir(&other);
    let third = run_pipeline(&cfg_b, Exec::Sequential).unwrap();
    assert_eq!(first.artifacts, third.artifacts);
    for rel in first.artifacts.keys() {
        assert_eq!(read(&cfg.output_dir, rel), read(&other, rel), "{rel}");
    }
}

#[test]
fn changed_predictor_settings_rerun_only_downstream_stages() {
    let (_dir, cfg) = tiny();
    run_pipeline(&cfg, Exec::Parallel).unwrap();
    let conf = cfg.output_dir.parent().unwrap().join("tiny.conf");
    std::fs::write(&conf, format!("{TINY}predictor.learning_rate = 0.2\n")).unwrap();
    let changed = RunConfig::load(&conf).unwrap();
    let manifest = run_pipeline(&changed, Exec::Parallel).unwrap();
    let rerun: Vec<&str> = manifest
        .stages
        .iter()
        .filter(|s| !s.skipped)
        .map(|s| s.name.as_str())
        .collect();
    assert_eq!(rerun, ["benchmark", "stats", "importance"]);
}

#[test]
fn tampered_output_is_regenerated() {
    let (_dir, cfg) = tiny();
    let first = run_pipeline(&cfg, Exec::Parallel).unwrap();
    std::fs::write(cfg.output_dir.join("vocab.json"), "{}").unwrap();
    let second = run_pipeline(&cfg, Exec::Parallel).unwrap();
    let vocab = second.stages.iter().find(|s| s.name == "vocab").unwrap();
    assert!(!vocab.skipped);
    assert_eq!(first.artifacts, second.artifacts);
}

#[test]
fn single_fold_is_a_config_error() {
    let (_dir, conf) = workspace(&TINY.replace("split.k = 3", "split.k = 1"));
    let err = RunConfig::load(&conf)
        .and_then(|cfg| run_pipeline(&cfg, Exec::Parallel))
        .unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
    assert!(err.to_string().contains("split.k"));
}
