//! Flat `section.key = value` run configuration with a fixed schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::datasets::TaskKind;
use crate::fingerprints::{FingerprintConfig, InvariantKind};
use crate::gin::{GinConfig, TrainConfig};
use crate::metrics::MetricKind;
use crate::predictor::GbdtConfig;

/// Featurisation strategies compared by the benchmark stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EcfpHashed,
    FcfpHashed,
    EcfpSortSlice,
    PtGin,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::EcfpHashed => "ecfp_hashed",
            Method::FcfpHashed => "fcfp_hashed",
            Method::EcfpSortSlice => "ecfp_sort_slice",
            Method::PtGin => "pt_gin",
        }
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [Method::EcfpHashed, Method::FcfpHashed, Method::EcfpSortSlice, Method::PtGin]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

/// Name of the PT-GIN run whose training labels are shuffled.
pub const SHUFFLED_BASELINE: &str = "pt_gin_shuffled_labels";

const REQUIRED: &str = "<required>";

/// `(key, default)`; every accepted key is listed here.
const SCHEMA: &[(&str, &str)] = &[
    ("seed", "0"),
    ("output.dir", "run"),
    ("data.dataset", REQUIRED),
    ("data.name", "dataset"),
    ("data.task", "regression"),
    ("data.smiles_column", "smiles"),
    ("data.pretrain", REQUIRED),
    ("data.filter_threshold", "none"),
    ("data.pretrain_size", "none"),
    ("fp.kind", "ecfp"),
    ("fp.radius", "2"),
    ("fp.nbits", "2048"),
    ("fp.chirality", "true"),
    ("vocab.rmax", "2"),
    ("vocab.k", "2048"),
    ("split.k", "5"),
    ("split.repeats", "200"),
    ("split.cutoff", "0.65"),
    ("pretrain.target_radius", "2"),
    ("pretrain.target_bits", "2048"),
    ("pretrain.epochs", "50"),
    ("pretrain.batch_size", "128"),
    ("pretrain.warmup_epochs", "2"),
    ("pretrain.half_life", "5"),
    ("pretrain.start_factor", "0.5"),
    ("pretrain.lr_scale", "1"),
    ("pretrain.message_layers", "3"),
    ("pretrain.hidden_dim", "512"),
    ("pretrain.mlp_layers", "3"),
    ("pretrain.embed_dim", "512"),
    ("pretrain.activation", "hardswish"),
    ("pretrain.pooling", "sum"),
    ("pretrain.layer_agg", "concat"),
    ("pretrain.dropout", "0.125"),
    ("pretrain.share_weights", "true"),
    ("pretrain.train_eps", "true"),
    ("predictor.n_estimators", "200"),
    ("predictor.learning_rate", "0.05"),
    ("predictor.num_leaves", "31"),
    ("predictor.min_data_in_leaf", "5"),
    ("predictor.feature_fraction", "1"),
    ("predictor.bagging_fraction", "1"),
    ("predictor.reg_lambda", "0"),
    ("benchmark.methods", "ecfp_hashed,fcfp_hashed,ecfp_sort_slice,pt_gin"),
    ("benchmark.metrics", "auto"),
    ("benchmark.shuffled_baseline", "true"),
    ("stats.alpha", "0.05"),
    ("stats.exclude_tuning", "true"),
    ("importance.enabled", "true"),
    ("importance.iterations", "5"),
    ("importance.repeat", "1"),
    ("importance.metric", "auto"),
];

/// Keys whose value is a path resolved against the config file's directory.
const PATH_KEYS: &[&str] = &["output.dir", "data.dataset", "data.pretrain"];

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub dataset: PathBuf,
    pub name: String,
    pub task: TaskKind,
    pub smiles_column: String,
    pub pretrain: PathBuf,
    pub filter_threshold: Option<f64>,
    pub pretrain_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSection {
    pub k: usize,
    pub repeats: usize,
    pub cutoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSection {
    pub target: FingerprintConfig,
    /// Model shape; `vocab_size` and `output_dim` follow the vocabulary and targets.
    pub gin: GinConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSection {
    pub methods: Vec<Method>,
    pub metrics: Vec<MetricKind>,
    pub shuffled_baseline: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceSection {
    pub enabled: bool,
    pub iterations: usize,
    pub repeat: usize,
    pub metric: MetricKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSection,
    /// Benchmark fingerprint settings; `kind` also drives the vocabulary.
    pub fp: FingerprintConfig,
    pub vocab_r_max: u32,
    pub vocab_k: usize,
    pub split: SplitSection,
    pub pretrain: PretrainSection,
    pub predictor: GbdtConfig,
    pub benchmark: BenchmarkSection,
    pub alpha: f64,
    pub exclude_tuning: bool,
    pub importance: ImportanceSection,
    /// Every key with its resolved value, defaults included.
    pub snapshot: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

/// Split `text` into `key = value` pairs; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected 'key = value'", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(config_err(format!("line {}: empty key", n + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(config_err(format!("line {}: duplicate key '{k}'", n + 1)));
        }
    }
    Ok(out)
}

struct Values(BTreeMap<String, String>);

impl Values {
    fn raw(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).expect("schema key")
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, PipelineError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse::<T>()
            .map_err(|e| config_err(format!("{key}: cannot parse '{raw}': {e}")))
    }

    fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, PipelineError>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(key).eq_ignore_ascii_case("none") {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, PipelineError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| config_err(format!("{key}: cannot parse '{s}': {e}")))
            })
            .collect()
    }
}

fn default_metrics(task: TaskKind) -> Vec<MetricKind> {
    match task {
        TaskKind::Regression => vec![MetricKind::R2, MetricKind::Pearson, MetricKind::Mape],
        TaskKind::Binary => vec![MetricKind::Auroc, MetricKind::Aucpr, MetricKind::Mcc],
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parse and validate; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let given = parse_pairs(text)?;
        if let Some(k) = given.keys().find(|k| !SCHEMA.iter().any(|(s, _)| s == k)) {
            return Err(config_err(format!("unknown key '{k}'")));
        }
        let mut map = BTreeMap::new();
        for (key, default) in SCHEMA {
            let v = match given.get(*key) {
                Some(v) => v.clone(),
                None if *default == REQUIRED => return Err(config_err(format!("missing required key '{key}'"))),
                None => default.to_string(),
            };
            let v = if PATH_KEYS.contains(key) {
                base.join(&v).to_string_lossy().into_owned()
            } else {
                v
            };
            map.insert(key.to_string(), v);
        }
        let v = Values(map);
        let task: TaskKind = v.get("data.task")?;
        let fp = FingerprintConfig {
            radius: v.get("fp.radius")?,
            nbits: v.get("fp.nbits")?,
            use_chirality: v.get("fp.chirality")?,
            kind: v.get::<InvariantKind>("fp.kind")?,
        };
        let gin = GinConfig {
            message_layers: v.get("pretrain.message_layers")?,
            hidden_dim: v.get("pretrain.hidden_dim")?,
            mlp_layers: v.get("pretrain.mlp_layers")?,
            activation: v.get("pretrain.activation")?,
            pooling: v.get("pretrain.pooling")?,
            layer_agg: v.get("pretrain.layer_agg")?,
            dropout: v.get("pretrain.dropout")?,
            share_weights: v.get("pretrain.share_weights")?,
            train_eps: v.get("pretrain.train_eps")?,
            r_max: v.get("vocab.rmax")?,
            embed_dim: v.get("pretrain.embed_dim")?,
            vocab_size: v.get::<usize>("vocab.k")? + 2,
            output_dim: v.get("pretrain.target_bits")?,
        };
        let train = TrainConfig {
            epochs: v.get("pretrain.epochs")?,
            batch_size: v.get("pretrain.batch_size")?,
            warmup_epochs: v.get("pretrain.warmup_epochs")?,
            lr_half_life_epochs: v.get("pretrain.half_life")?,
            lr_start_factor: v.get("pretrain.start_factor")?,
            lr_scale: v.get("pretrain.lr_scale")?,
            ..Default::default()
        };
        let metrics = if v.raw("benchmark.metrics") == "auto" {
            default_metrics(task)
        } else {
            v.list("benchmark.metrics")?
        };
        let importance_metric = if v.raw("importance.metric") == "auto" {
            match task {
                TaskKind::Regression => MetricKind::R2,
                TaskKind::Binary => MetricKind::Aucpr,
            }
        } else {
            v.get("importance.metric")?
        };
        let cfg = RunConfig {
            seed: v.get("seed")?,
            output_dir: PathBuf::from(v.raw("output.dir")),
            data: DataSection {
                dataset: PathBuf::from(v.raw("data.dataset")),
                name: v.raw("data.name").to_string(),
                task,
                smiles_column: v.raw("data.smiles_column").to_string(),
                pretrain: PathBuf::from(v.raw("data.pretrain")),
                filter_threshold: v.optional("data.filter_threshold")?,
                pretrain_size: v.optional("data.pretrain_size")?,
            },
            fp,
            vocab_r_max: v.get("vocab.rmax")?,
            vocab_k: v.get("vocab.k")?,
            split: SplitSection {
                k: v.get("split.k")?,
                repeats: v.get("split.repeats")?,
                cutoff: v.get("split.cutoff")?,
            },
            pretrain: PretrainSection {
                target: FingerprintConfig::ecfp(v.get("pretrain.target_radius")?, v.get("pretrain.target_bits")?),
                gin,
                train,
            },
            predictor: GbdtConfig {
                n_estimators: v.get("predictor.n_estimators")?,
                learning_rate: v.get("predictor.learning_rate")?,
                num_leaves: v.get("predictor.num_leaves")?,
                min_data_in_leaf: v.get("predictor.min_data_in_leaf")?,
                feature_fraction: v.get("predictor.feature_fraction")?,
                bagging_fraction: v.get("predictor.bagging_fraction")?,
                reg_lambda: v.get("predictor.reg_lambda")?,
                seed: 0,
            },
            benchmark: BenchmarkSection {
                methods: v.list("benchmark.methods")?,
                metrics,
                shuffled_baseline: v.get("benchmark.shuffled_baseline")?,
            },
            alpha: v.get("stats.alpha")?,
            exclude_tuning: v.get("stats.exclude_tuning")?,
            importance: ImportanceSection {
                enabled: v.get("importance.enabled")?,
                iterations: v.get("importance.iterations")?,
                repeat: v.get("importance.repeat")?,
                metric: importance_metric,
            },
            snapshot: v.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Semantic checks; run before any stage touches the disk.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(config_err(m));
        for (key, path) in [("data.dataset", &self.data.dataset), ("data.pretrain", &self.data.pretrain)] {
            if !path.is_file() {
                return fail(format!("{key}: file not found: {}", path.display()));
            }
        }
        if let Some(t) = self.data.filter_threshold {
            if !(t > 0.0 && t <= 1.0) {
                return fail(format!("data.filter_threshold must lie in (0, 1], got {t}"));
            }
        }
        if self.data.pretrain_size == Some(0) {
            return fail("data.pretrain_size must be positive".into());
        }
        self.fp.validate().map_err(|e| config_err(format!("fp: {e}")))?;
        self.pretrain
            .target
            .validate()
            .map_err(|e| config_err(format!("pretrain.target: {e}")))?;
        if self.vocab_k == 0 {
            return fail("vocab.k must be positive".into());
        }
        if self.vocab_r_max > crate::fingerprints::MAX_RADIUS {
            return fail(format!("vocab.rmax {} is too large", self.vocab_r_max));
        }
        if self.split.k < 2 {
            return fail(format!("split.k must be at least 2, got {}", self.split.k));
        }
        if self.split.repeats == 0 {
            return fail("split.repeats must be positive".into());
        }
        if self.exclude_tuning && self.split.repeats < 2 {
            return fail("stats.exclude_tuning needs split.repeats >= 2".into());
        }
        if !(0.0..=1.0).contains(&self.split.cutoff) {
            return fail(format!("split.cutoff must lie in [0, 1], got {}", self.split.cutoff));
        }
        self.pretrain
            .gin
            .validate()
            .map_err(|e| config_err(format!("pretrain: {e}")))?;
        self.pretrain
            .train
            .validate()
            .map_err(|e| config_err(format!("pretrain: {e}")))?;
        self.predictor
            .validate()
            .map_err(|e| config_err(format!("predictor: {e}")))?;
        if self.benchmark.methods.is_empty() {
            return fail("benchmark.methods is empty".into());
        }
        if self.benchmark.shuffled_baseline && !self.benchmark.methods.contains(&Method::PtGin) {
            return fail("benchmark.shuffled_baseline requires the pt_gin method".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(m) = self.benchmark.methods.iter().find(|m| !seen.insert(**m)) {
            return fail(format!("benchmark.methods lists '{}' twice", m.name()));
        }
        if self.benchmark.metrics.is_empty() {
            return fail("benchmark.metrics is empty".into());
        }
        let binary = self.data.task == TaskKind::Binary;
        for m in self.benchmark.metrics.iter().chain([&self.importance.metric]) {
            if m.is_classification() != binary {
                return fail(format!("metric {m} does not apply to a {:?} task", self.data.task));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("stats.alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.importance.enabled {
            if self.importance.repeat >= self.split.repeats {
                return fail(format!(
                    "importance.repeat {} is outside 0..{}",
                    self.importance.repeat, self.split.repeats
                ));
            }
            if !self.benchmark.methods.contains(&Method::PtGin) {
                return fail("importance requires the pt_gin method".into());
            }
        }
        Ok(())
    }

    /// Redirect outputs, keeping the snapshot in sync.
    pub fn with_output_dir(mut self, dir: &Path) -> Self {
        self.output_dir = dir.to_path_buf();
        self.snapshot
            .insert("output.dir".into(), dir.to_string_lossy().into_owned());
        self
    }

    /// Fingerprint settings of the substructure vocabulary.
    pub fn vocab_fp(&self) -> FingerprintConfig {
        FingerprintConfig {
            radius: self.vocab_r_max,
            ..self.fp
        }
    }

    /// Resolved values of every key starting with one of `prefixes`.
    pub fn section_text(&self, prefixes: &[&str]) -> String {
        self.snapshot
            .iter()
            .filter(|(k, _)| prefixes.iter().any(|p| k.starts_with(p)))
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn files() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "id,smiles,label\n").unwrap();
        std::fs::write(dir.path().join("p.smi"), "CC\n").unwrap();
        dir
    }

    const MINIMAL: &str = "data.dataset = d.csv\ndata.pretrain = p.smi\n";

    #[test]
    fn defaults_fill_in() {
        let dir = files();
        let c = RunConfig::parse(MINIMAL, dir.path()).unwrap();
        assert_eq!(c.split.k, 5);
        assert_eq!(c.split.repeats, 200);
        assert_eq!(c.benchmark.methods.len(), 4);
        assert_eq!(c.benchmark.metrics, vec![MetricKind::R2, MetricKind::Pearson, MetricKind::Mape]);
        assert_eq!(c.pretrain.gin.vocab_size, 2050);
        assert_eq!(c.snapshot.len(), SCHEMA.len());
        assert!(c.data.dataset.starts_with(dir.path()));
    }

    #[test]
    fn schema_errors() {
        let dir = files();
        let bad = |extra: &str| RunConfig::parse(&format!("{MINIMAL}{extra}"), dir.path()).unwrap_err();
        assert!(bad("split.k = 1\n").to_string().contains("split.k"));
        assert!(bad("split.typo = 1\n").to_string().contains("unknown key"));
        assert!(bad("seed = x\n").to_string().contains("seed"));
        assert!(bad("data.task = binary\nbenchmark.metrics = r2\n").to_string().contains("r2"));
        assert!(bad("benchmark.methods = pt_gin, pt_gin\n").to_string().contains("twice"));
        assert!(bad("seed = 1\nseed = 2\n").to_string().contains("duplicate"));
        let missing = RunConfig::parse("data.dataset = d.csv\n", dir.path()).unwrap_err();
        assert!(missing.to_string().contains("data.pretrain"));
        let absent = RunConfig::parse("data.dataset = nope.csv\ndata.pretrain = p.smi\n", dir.path()).unwrap_err();
        assert!(absent.to_string().contains("not found"));
    }

    #[test]
    fn comments_and_lists() {
        let dir = files();
        let text = format!("{MINIMAL}# note\nbenchmark.methods = pt_gin , ecfp_hashed # two\nbenchmark.shuffled_baseline=false\n");
        let c = RunConfig::parse(&text, dir.path()).unwrap();
        assert_eq!(c.benchmark.methods, vec![Method::PtGin, Method::EcfpHashed]);
        assert!(!c.benchmark.shuffled_baseline);
    }
}
