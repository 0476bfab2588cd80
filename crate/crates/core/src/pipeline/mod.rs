//! Config-driven end-to-end run with content-hashed, resumable stages.
//!
//! Stages run in order: standardise, filter, fingerprint, vocab, split,
//! pretrain, featurise, benchmark, stats, importance. Each stage reads its
//! inputs from files written by earlier stages, so a stage whose key (its
//! configuration slice plus the hashes of its input files) matches the
//! previous manifest is skipped.

mod config;
mod manifest;
mod stages;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use config::{
    parse_pairs, BenchmarkSection, DataSection, ImportanceSection, Method, PretrainSection, RunConfig, SplitSection,
    SHUFFLED_BASELINE,
};
pub use manifest::{sha256_file, sha256_text, RunManifest, StageRecord, MANIFEST_FILE};
pub use stages::{
    fold_predictor_config, metric_vectors, objective, paths, read_embeddings, read_fold_metrics, write_embeddings,
    write_fold_metrics, FoldMetric,
};

use crate::par::Exec;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error in stage '{stage}': {message}")]
    Data { stage: String, message: String },
    #[error("stage '{stage}' failed: {message}")]
    Stage { stage: String, message: String },
}

impl PipelineError {
    /// Process exit status: 2 config, 3 data, 4 stage failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data { .. } => 3,
            PipelineError::Stage { .. } => 4,
        }
    }
}

/// Error raised inside a stage body; the runner attaches the stage name.
#[derive(Debug)]
pub enum StageFailure {
    Data(String),
    Other(String),
}

impl<E: std::error::Error> From<E> for StageFailure {
    fn from(e: E) -> Self {
        StageFailure::Other(e.to_string())
    }
}

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

struct Stage {
    name: &'static str,
    /// Config key prefixes the stage depends on.
    config: &'static [&'static str],
    /// Paths relative to the run directory; external inputs are hashed through the config slice.
    inputs: fn(&RunConfig, &Path) -> Vec<String>,
    run: fn(&RunConfig, &Path, Exec) -> Result<Vec<String>, StageFailure>,
}

fn fixed(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn split_inputs(_: &RunConfig, dir: &Path) -> Vec<String> {
    let mut v = fixed(&[paths::BENCHMARK]);
    v.extend(stages::split_files(dir));
    v
}

const STAGES: &[Stage] = &[
    Stage {
        name: "standardise",
        config: &["data.dataset", "data.name", "data.task", "data.smiles_column", "data.pretrain"],
        inputs: |_, _| Vec::new(),
        run: stages::standardise,
    },
    Stage {
        name: "filter",
        config: &["data.filter_threshold", "data.pretrain_size", "seed"],
        inputs: |_, _| fixed(&[paths::BENCHMARK, paths::PRETRAIN_STANDARDISED]),
        run: stages::filter,
    },
    Stage {
        name: "fingerprint",
        config: &["fp.", "pretrain.target_"],
        inputs: |_, _| fixed(&[paths::BENCHMARK, paths::PRETRAIN_CORPUS]),
        run: stages::fingerprint,
    },
    Stage {
        name: "vocab",
        config: &["fp.", "vocab."],
        inputs: |_, _| fixed(&[paths::PRETRAIN_CORPUS]),
        run: stages::vocab,
    },
    Stage {
        name: "split",
        config: &["split.", "seed", "data.task"],
        inputs: |_, _| fixed(&[paths::BENCHMARK, paths::ECFP]),
        run: stages::split,
    },
    Stage {
        name: "pretrain",
        config: &["pretrain.", "vocab.", "seed"],
        inputs: |_, _| fixed(&[paths::VOCAB, paths::PRETRAIN_CORPUS, paths::TARGETS]),
        run: stages::pretrain,
    },
    Stage {
        name: "featurise",
        config: &[],
        inputs: |_, _| fixed(&[paths::MODEL, paths::VOCAB, paths::BENCHMARK]),
        run: stages::featurise,
    },
    Stage {
        name: "benchmark",
        config: &["benchmark.", "predictor.", "fp.", "seed", "data.name", "data.task"],
        inputs: |c, d| {
            let mut v = split_inputs(c, d);
            v.extend(fixed(&[paths::ECFP, paths::FCFP, paths::EMBEDDINGS]));
            v
        },
        run: stages::benchmark,
    },
    Stage {
        name: "stats",
        config: &["stats."],
        inputs: |_, _| fixed(&[paths::METRICS]),
        run: stages::stats,
    },
    Stage {
        name: "importance",
        config: &["importance.", "predictor.", "seed", "data.task"],
        inputs: |c, d| {
            let mut v = split_inputs(c, d);
            v.extend(fixed(&[paths::MODEL, paths::VOCAB, paths::EMBEDDINGS]));
            v
        },
        run: stages::importance,
    },
];

/// Names of every stage in execution order.
pub fn stage_names() -> Vec<&'static str> {
    STAGES.iter().map(|s| s.name).collect()
}

fn stage_key(cfg: &RunConfig, dir: &Path, stage: &Stage) -> Result<String, StageFailure> {
    let mut text = format!("{}\n{}\n", stage.name, TOOL_VERSION);
    text.push_str(&cfg.section_text(stage.config));
    if stage.name == "standardise" {
        // External inputs: hash their contents, not their location.
        for p in [&cfg.data.dataset, &cfg.data.pretrain] {
            text.push_str(&format!("external:{}\n", sha256_file(p)?));
        }
    }
    for rel in (stage.inputs)(cfg, dir) {
        let h = sha256_file(&dir.join(&rel)).map_err(|e| StageFailure::Other(format!("missing input {rel}: {e}")))?;
        text.push_str(&format!("{rel}:{h}\n"));
    }
    Ok(sha256_text(&text))
}

fn outputs_intact(dir: &Path, previous: &RunManifest, record: &StageRecord) -> bool {
    record.outputs.iter().all(|rel| {
        previous
            .artifacts
            .get(rel)
            .is_some_and(|h| sha256_file(&dir.join(rel)).is_ok_and(|now| &now == h))
    })
}

fn fail(stage: &str, f: StageFailure) -> PipelineError {
    match f {
        StageFailure::Data(message) => PipelineError::Data {
            stage: stage.into(),
            message,
        },
        StageFailure::Other(message) => PipelineError::Stage {
            stage: stage.into(),
            message,
        },
    }
}

/// Execute (or resume) a run. The manifest is written after every stage.
pub fn run_pipeline(cfg: &RunConfig, exec: Exec) -> Result<RunManifest, PipelineError> {
    run_pipeline_with(cfg, exec, |_, _| {})
}

/// As [`run_pipeline`], reporting each finished stage to `progress`.
pub fn run_pipeline_with(
    cfg: &RunConfig,
    exec: Exec,
    mut progress: impl FnMut(&StageRecord, usize),
) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let dir: PathBuf = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::Config(format!("output.dir {}: {e}", dir.display())))?;
    let previous = RunManifest::load(&dir);
    let mut manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        config: cfg.snapshot.clone(),
        stages: Vec::new(),
        artifacts: Default::default(),
    };
    let active: Vec<&Stage> = STAGES
        .iter()
        .filter(|s| s.name != "importance" || cfg.importance.enabled)
        .collect();
    for (i, stage) in active.iter().enumerate() {
        let start = Instant::now();
        let key = stage_key(cfg, &dir, stage).map_err(|f| fail(stage.name, f))?;
        let reusable = previous.as_ref().and_then(|p| {
            p.stage(stage.name)
                .filter(|r| r.key == key && outputs_intact(&dir, p, r))
                .map(|r| (r.outputs.clone(), p))
        });
        let (outputs, skipped) = match reusable {
            Some((outputs, _)) => (outputs, true),
            None => ((stage.run)(cfg, &dir, exec).map_err(|f| fail(stage.name, f))?, false),
        };
        for rel in &outputs {
            let h = sha256_file(&dir.join(rel)).map_err(|e| fail(stage.name, e.into()))?;
            manifest.artifacts.insert(rel.clone(), h);
        }
        let record = StageRecord {
            name: stage.name.to_string(),
            key,
            outputs,
            skipped,
            seconds: start.elapsed().as_secs_f64(),
        };
        progress(&record, i);
        manifest.stages.push(record);
        manifest.save(&dir).map_err(|e| fail(stage.name, e.into()))?;
    }
    Ok(manifest)
}
