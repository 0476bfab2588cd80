use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Method, RunConfig, SHUFFLED_BASELINE};
use super::StageFailure;
use crate::chem::{parse_smiles, standardize_smiles, to_smiles, MolecularGraph};
use crate::datasets::{
    butina_cluster, read_smiles_file, read_split_csv, repeated_grouped_cv, similarity_filter_graphs, write_split_csv,
    FilterConfig, LabeledDataset, Record, SplitPlan, TaskKind,
};
use crate::fingerprints::{
    folded_batch, read_folded_csv, write_folded_csv, FingerprintConfig, FoldedFingerprint, InvariantKind,
};
use crate::gin::{load_model, pretrain as train_gin, save_model, GinConfig, GinModel, ModelMetadata};
use crate::hash::{derive_indexed, derive_seed};
use crate::importance::{gin_substructure_importance, vocabulary_tokens, ImportanceReport};
use crate::metrics::{compute_metric, fold_mean, MetricKind};
use crate::par::Exec;
use crate::predictor::{fit, GbdtConfig, Objective};
use crate::stats::{compare_all, read_metric_vectors, write_comparisons, write_metric_vectors, MetricVector};
use crate::vocab::{build_vocabulary, sort_slice_matrix, tokenize_batch, Vocabulary};

/// Artifact locations relative to the run directory.
pub mod paths {
    pub const BENCHMARK: &str = "standardised/benchmark.csv";
    pub const PRETRAIN_STANDARDISED: &str = "standardised/pretrain.smi";
    pub const REJECTS: &str = "standardised/rejects.csv";
    pub const PRETRAIN_CORPUS: &str = "pretrain_corpus.smi";
    pub const ECFP: &str = "fingerprints/ecfp.csv";
    pub const FCFP: &str = "fingerprints/fcfp.csv";
    pub const TARGETS: &str = "fingerprints/pretrain_targets.csv";
    pub const VOCAB: &str = "vocab.json";
    pub const SPLIT_DIR: &str = "splits";
    pub const MODEL: &str = "model.ftgm";
    pub const HISTORY: &str = "pretrain_history.csv";
    pub const EMBEDDINGS: &str = "embeddings.csv";
    pub const FOLD_METRICS: &str = "fold_metrics.csv";
    pub const METRICS: &str = "metrics.csv";
    pub const COMPARISONS: &str = "comparisons.csv";
    pub const IMPORTANCE: &str = "importance.csv";
    pub const IMPORTANCE_RANKING: &str = "importance_ranking.csv";
}

type StageResult = Result<Vec<String>, StageFailure>;

fn create(dir: &Path, rel: &str) -> Result<BufWriter<File>, StageFailure> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn data_err(msg: impl Into<String>) -> StageFailure {
    StageFailure::Data(msg.into())
}

fn load_benchmark(cfg: &RunConfig, dir: &Path) -> Result<(LabeledDataset, Vec<MolecularGraph>), StageFailure> {
    let ds = LabeledDataset::read_csv(&dir.join(paths::BENCHMARK), &cfg.data.name, cfg.data.task, "smiles")?;
    let graphs = ds
        .records
        .iter()
        .map(|r| parse_smiles(&r.smiles))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((ds, graphs))
}

fn load_corpus(dir: &Path) -> Result<Vec<MolecularGraph>, StageFailure> {
    read_smiles_file(&dir.join(paths::PRETRAIN_CORPUS), "smiles")?
        .iter()
        .map(|s| parse_smiles(s).map_err(StageFailure::from))
        .collect()
}

fn write_lines(dir: &Path, rel: &str, lines: &[String]) -> Result<(), StageFailure> {
    let mut w = create(dir, rel)?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn standardise(cfg: &RunConfig, dir: &Path, exec: Exec) -> StageResult {
    let raw = LabeledDataset::read_csv(&cfg.data.dataset, &cfg.data.name, cfg.data.task, &cfg.data.smiles_column)
        .map_err(|e| data_err(format!("{}: {e}", cfg.data.dataset.display())))?;
    let pretrain_raw = read_smiles_file(&cfg.data.pretrain, &cfg.data.smiles_column)
        .map_err(|e| data_err(format!("{}: {e}", cfg.data.pretrain.display())))?;
    let mut rejects = csv::Writer::from_writer(create(dir, paths::REJECTS)?);
    rejects.write_record(["source", "id", "smiles", "reason"])?;

    let reports = exec.map(&raw.records, |r| standardize_smiles(&r.smiles));
    let mut kept = Vec::new();
    for (rec, rep) in raw.records.iter().zip(reports) {
        match rep.output {
            Some(g) => kept.push(Record {
                id: rec.id.clone(),
                smiles: to_smiles(&g),
                label: rec.label,
            }),
            None => rejects.write_record([
                "benchmark",
                rec.id.as_str(),
                rec.smiles.as_str(),
                rep.failure_reason.as_deref().unwrap_or("unknown"),
            ])?,
        }
    }
    let pre_reports = exec.map(&pretrain_raw, |s| standardize_smiles(s));
    let mut pre = Vec::new();
    for (i, rep) in pre_reports.into_iter().enumerate() {
        match rep.output {
            Some(g) => pre.push(to_smiles(&g)),
            None => rejects.write_record([
                "pretrain",
                &format!("line{}", i + 1),
                rep.input_smiles.as_str(),
                rep.failure_reason.as_deref().unwrap_or("unknown"),
            ])?,
        }
    }
    rejects.flush()?;
    if kept.len() < 2 {
        return Err(data_err(format!("only {} benchmark molecules survived standardisation", kept.len())));
    }
    if pre.is_empty() {
        return Err(data_err("no pre-training molecule survived standardisation"));
    }
    let ds = LabeledDataset::new(&cfg.data.name, cfg.data.task, kept)?;
    std::fs::create_dir_all(dir.join("standardised"))?;
    ds.write_csv(&dir.join(paths::BENCHMARK))?;
    write_lines(dir, paths::PRETRAIN_STANDARDISED, &pre)?;
    Ok(vec![paths::BENCHMARK.into(), paths::PRETRAIN_STANDARDISED.into(), paths::REJECTS.into()])
}

pub fn filter(cfg: &RunConfig, dir: &Path, exec: Exec) -> StageResult {
    let smiles = read_smiles_file(&dir.join(paths::PRETRAIN_STANDARDISED), "smiles")?;
    let keep: Vec<usize> = if cfg.data.filter_threshold.is_none() && cfg.data.pretrain_size.is_none() {
        (0..smiles.len()).collect()
    } else {
        let (_, bench) = load_benchmark(cfg, dir)?;
        let graphs = smiles
            .iter()
            .map(|s| parse_smiles(s))
            .collect::<Result<Vec<_>, _>>()?;
        let fc = FilterConfig {
            threshold: cfg.data.filter_threshold.unwrap_or(1.0),
            target_size: cfg.data.pretrain_size,
            seed: derive_seed(cfg.seed, "filter"),
        };
        similarity_filter_graphs(&graphs, &bench, &fc, exec).map_err(|e| data_err(e.to_string()))?
    };
    if keep.is_empty() {
        return Err(data_err("the similarity filter removed every pre-training molecule"));
    }
    let lines: Vec<String> = keep.iter().map(|&i| smiles[i].clone()).collect();
    write_lines(dir, paths::PRETRAIN_CORPUS, &lines)?;
    Ok(vec![paths::PRETRAIN_CORPUS.into()])
}

fn corpus_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("pre{i:06}")).collect()
}

fn write_folded(dir: &Path, rel: &str, ids: &[String], fps: Vec<FoldedFingerprint>) -> Result<(), StageFailure> {
    let rows: Vec<(String, FoldedFingerprint)> = ids.iter().cloned().zip(fps).collect();
    write_folded_csv(create(dir, rel)?, &rows)?;
    Ok(())
}

pub fn fingerprint(cfg: &RunConfig, dir: &Path, exec: Exec) -> StageResult {
    let (ds, graphs) = load_benchmark(cfg, dir)?;
    let ids: Vec<String> = ds.records.iter().map(|r| r.id.clone()).collect();
    for (rel, kind) in [(paths::ECFP, InvariantKind::Ecfp), (paths::FCFP, InvariantKind::Fcfp)] {
        let fc = FingerprintConfig { kind, ..cfg.fp };
        write_folded(dir, rel, &ids, folded_batch(&graphs, &fc, exec)?)?;
    }
    let corpus = load_corpus(dir)?;
    let targets = folded_batch(&corpus, &cfg.pretrain.target, exec)?;
    write_folded(dir, paths::TARGETS, &corpus_ids(corpus.len()), targets)?;
    Ok(vec![paths::ECFP.into(), paths::FCFP.into(), paths::TARGETS.into()])
}

pub fn vocab(cfg: &RunConfig, dir: &Path, exec: Exec) -> StageResult {
    let corpus = load_corpus(dir)?;
    let v = build_vocabulary(&corpus, &cfg.vocab_fp(), cfg.vocab_k, exec)?;
    v.save(&dir.join(paths::VOCAB))?;
    Ok(vec![paths::VOCAB.into()])
}

fn read_aligned_fps(dir: &Path, rel: &str, ids: &[String]) -> Result<Vec<FoldedFingerprint>, StageFailure> {
    let rows = read_folded_csv(File::open(dir.join(rel))?)?;
    if rows.len() != ids.len() || rows.iter().zip(ids).any(|((a, _), b)| a != b) {
        return Err(StageFailure::Other(format!("{rel} is not aligned with its molecule list")));
    }
    Ok(rows.into_iter().map(|(_, f)| f).collect())
}

fn split_file(repeat: usize, fold: usize) -> String {
    format!("{}/r{repeat:03}_f{fold:02}.csv", paths::SPLIT_DIR)
}

/// Split files currently present, sorted.
pub fn split_files(dir: &Path) -> Vec<String> {
    let Ok(read) = std::fs::read_dir(dir.join(paths::SPLIT_DIR)) else {
        return Vec::new();
    };
    let mut v: Vec<String> = read
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .map(|n| format!("{}/{n}", paths::SPLIT_DIR))
        .collect();
    v.sort();
    v
}

pub fn split(cfg: &RunConfig, dir: &Path, exec: Exec) -> StageResult {
    let (ds, _) = load_benchmark(cfg, dir)?;
    let ids: Vec<String> = ds.records.iter().map(|r| r.id.clone()).collect();
    let fps = read_aligned_fps(dir, paths::ECFP, &ids)?;
    let clusters = butina_cluster(&fps, cfg.split.cutoff, exec);
    let plans = repeated_grouped_cv(
        &ds,
        &clusters,
        cfg.split.k,
        cfg.split.repeats,
        derive_seed(cfg.seed, "split"),
        exec,
    )
    .map_err(|e| data_err(e.to_string()))?;
    let split_dir = dir.join(paths::SPLIT_DIR);
    if split_dir.exists() {
        std::fs::remove_dir_all(&split_dir)?;
    }
    std::fs::create_dir_all(&split_dir)?;
    let mut out = Vec::with_capacity(plans.len());
    for p in &plans {
        let rel = split_file(p.repeat_id, p.fold_id);
        write_split_csv(create(dir, &rel)?, std::slice::from_ref(p), &ds)?;
        out.push(rel);
    }
    Ok(out)
}

fn load_plans(dir: &Path, ds: &LabeledDataset) -> Result<Vec<SplitPlan>, StageFailure> {
    let mut plans = Vec::new();
    for rel in split_files(dir) {
        plans.extend(read_split_csv(File::open(dir.join(&rel))?, ds)?);
    }
    plans.sort_by_key(|p| (p.repeat_id, p.fold_id));
    Ok(plans)
}

pub fn pretrain(cfg: &RunConfig, dir: &Path, _exec: Exec) -> StageResult {
    let vocab = Vocabulary::load(&dir.join(paths::VOCAB))?;
    let corpus = load_corpus(dir)?;
    let targets = read_aligned_fps(dir, paths::TARGETS, &corpus_ids(corpus.len()))?;
    let tokens = tokenize_batch(&corpus, &vocab, Exec::Sequential);
    let gin = GinConfig {
        vocab_size: vocab.size(),
        r_max: vocab.r_max,
        ..cfg.pretrain.gin.clone()
    };
    let mut model = GinModel::new(gin, derive_seed(cfg.seed, "gin-init"))?;
    let tc = crate::gin::TrainConfig {
        seed: derive_seed(cfg.seed, "pretrain"),
        ..cfg.pretrain.train.clone()
    };
    let report = train_gin(&mut model, &tokens, &targets, &tc)?;
    let meta = ModelMetadata {
        vocab_fingerprint: vocab.corpus_fingerprint.clone(),
        seed: cfg.seed,
        epochs: tc.epochs,
        loss_history: report.loss_history.clone(),
    };
    save_model(&model, &meta, &dir.join(paths::MODEL))?;
    let mut w = csv::Writer::from_writer(create(dir, paths::HISTORY)?);
    w.write_record(["epoch", "loss", "learning_rate"])?;
    for (e, (loss, lr)) in report.loss_history.iter().zip(&report.lr_history).enumerate() {
        w.write_record([(e + 1).to_string(), loss.to_string(), lr.to_string()])?;
    }
    w.flush()?;
    Ok(vec![paths::MODEL.into(), paths::HISTORY.into()])
}

fn load_model_checked(dir: &Path) -> Result<(GinModel, Vocabulary), StageFailure> {
    let (model, meta) = load_model(&dir.join(paths::MODEL))?;
    let vocab = Vocabulary::load(&dir.join(paths::VOCAB))?;
    if meta.vocab_fingerprint != vocab.corpus_fingerprint {
        return Err(StageFailure::Other("model was trained against a different vocabulary".into()));
    }
    Ok((model, vocab))
}

/// `id,e0,e1,...` rows.
pub fn write_embeddings<W: Write>(out: W, ids: &[String], rows: &[Vec<f64>]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let width = rows.first().map_or(0, Vec::len);
    let mut header = vec!["id".to_string()];
    header.extend((0..width).map(|j| format!("e{j}")));
    w.write_record(&header)?;
    for (id, r) in ids.iter().zip(rows) {
        let mut rec = vec![id.clone()];
        rec.extend(r.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), StageFailure> {
    let mut r = csv::Reader::from_path(path)?;
    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        ids.push(rec[0].to_string());
        rows.push(
            rec.iter()
                .skip(1)
                .map(|x| x.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok((ids, rows))
}

pub fn featurise(cfg: &RunConfig, dir: &Path, exec: Exec) -> StageResult {
    let (model, vocab) = load_model_checked(dir)?;
    let (ds, graphs) = load_benchmark(cfg, dir)?;
    let tokens = tokenize_batch(&graphs, &vocab, exec);
    let rows = model.featurise(&tokens, exec)?;
    let ids: Vec<String> = ds.records.iter().map(|r| r.id.clone()).collect();
    write_embeddings(create(dir, paths::EMBEDDINGS)?, &ids, &rows)?;
    Ok(vec![paths::EMBEDDINGS.into()])
}

pub fn objective(task: TaskKind) -> Objective {
    match task {
        TaskKind::Regression => Objective::SquaredError,
        TaskKind::Binary => Objective::Logistic,
    }
}

/// Predictor settings for one fold; the seed depends only on the run seed and the fold.
pub fn fold_predictor_config(base: &GbdtConfig, seed: u64, plan: &SplitPlan) -> GbdtConfig {
    GbdtConfig {
        seed: derive_indexed(seed, "predictor", &[plan.repeat_id as u64, plan.fold_id as u64]),
        ..base.clone()
    }
}

fn predictor_config(cfg: &RunConfig, plan: &SplitPlan) -> GbdtConfig {
    fold_predictor_config(&cfg.predictor, cfg.seed, plan)
}

fn rows(features: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| features[i].clone()).collect()
}

/// One metric on one fold; `value` is `None` when the fold is dropped or the
/// metric is undefined on it.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldMetric {
    pub method: String,
    pub metric: MetricKind,
    pub repeat: usize,
    pub fold: usize,
    pub value: Option<f64>,
}

enum Features<'a> {
    Fixed(&'a [Vec<f64>]),
    SortSlice,
}

struct Run<'a> {
    name: String,
    features: Features<'a>,
    shuffle_labels: bool,
}

fn aligned_embeddings(dir: &Path, ds: &LabeledDataset) -> Result<Vec<Vec<f64>>, StageFailure> {
    let (ids, emb) = read_embeddings(&dir.join(paths::EMBEDDINGS))?;
    if ids.len() != ds.len() || ids.iter().zip(&ds.records).any(|(a, r)| *a != r.id) {
        return Err(StageFailure::Other("embeddings are not aligned with the dataset".into()));
    }
    Ok(emb)
}

pub fn benchmark(cfg: &RunConfig, dir: &Path, exec: Exec) -> StageResult {
    let (ds, graphs) = load_benchmark(cfg, dir)?;
    let ids: Vec<String> = ds.records.iter().map(|r| r.id.clone()).collect();
    let labels = ds.labels();
    let plans = load_plans(dir, &ds)?;
    let dense = |rel: &str| -> Result<Vec<Vec<f64>>, StageFailure> {
        Ok(read_aligned_fps(dir, rel, &ids)?.iter().map(|f| f.to_dense()).collect())
    };
    let ecfp = dense(paths::ECFP)?;
    let fcfp = dense(paths::FCFP)?;
    let emb = if cfg.benchmark.methods.contains(&Method::PtGin) {
        aligned_embeddings(dir, &ds)?
    } else {
        Vec::new()
    };
    let mut runs = Vec::new();
    for m in &cfg.benchmark.methods {
        let features = match m {
            Method::EcfpHashed => Features::Fixed(&ecfp),
            Method::FcfpHashed => Features::Fixed(&fcfp),
            Method::EcfpSortSlice => Features::SortSlice,
            Method::PtGin => Features::Fixed(&emb),
        };
        runs.push(Run {
            name: m.name().to_string(),
            features,
            shuffle_labels: false,
        });
    }
    if cfg.benchmark.shuffled_baseline {
        runs.push(Run {
            name: SHUFFLED_BASELINE.to_string(),
            features: Features::Fixed(&emb),
            shuffle_labels: true,
        });
    }
    let sort_slice_fp = FingerprintConfig {
        kind: InvariantKind::Ecfp,
        ..cfg.fp
    };
    let jobs: Vec<(usize, usize)> = (0..runs.len())
        .flat_map(|r| (0..plans.len()).map(move |p| (r, p)))
        .collect();
    let results = exec.map(&jobs, |&(ri, pi)| -> Result<Vec<Option<f64>>, StageFailure> {
        let (run, plan) = (&runs[ri], &plans[pi]);
        if plan.dropped_flag {
            return Ok(vec![None; cfg.benchmark.metrics.len()]);
        }
        let owned;
        let features: &[Vec<f64>] = match run.features {
            Features::Fixed(f) => f,
            Features::SortSlice => {
                let train: Vec<MolecularGraph> = plan.train_idx.iter().map(|&i| graphs[i].clone()).collect();
                let v = build_vocabulary(&train, &sort_slice_fp, cfg.fp.nbits, Exec::Sequential)?;
                owned = sort_slice_matrix(&graphs, &v, Exec::Sequential);
                &owned
            }
        };
        let mut y: Vec<f64> = plan.train_idx.iter().map(|&i| labels[i]).collect();
        if run.shuffle_labels {
            let seed = derive_indexed(cfg.seed, "shuffled-labels", &[plan.repeat_id as u64, plan.fold_id as u64]);
            y.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        let model = fit(
            &rows(features, &plan.train_idx),
            &y,
            objective(cfg.data.task),
            &predictor_config(cfg, plan),
            Exec::Sequential,
        )?;
        let pred = model.predict(&rows(features, &plan.test_idx))?;
        let truth: Vec<f64> = plan.test_idx.iter().map(|&i| labels[i]).collect();
        Ok(cfg
            .benchmark
            .metrics
            .iter()
            .map(|&m| compute_metric(m, &truth, &pred).ok())
            .collect())
    });
    let mut fold_metrics = Vec::new();
    for (&(ri, pi), res) in jobs.iter().zip(results) {
        let values = res?;
        for (&metric, value) in cfg.benchmark.metrics.iter().zip(values) {
            fold_metrics.push(FoldMetric {
                method: runs[ri].name.clone(),
                metric,
                repeat: plans[pi].repeat_id,
                fold: plans[pi].fold_id,
                value,
            });
        }
    }
    write_fold_metrics(create(dir, paths::FOLD_METRICS)?, &cfg.data.name, &fold_metrics)?;
    let method_names: Vec<String> = runs.iter().map(|r| r.name.clone()).collect();
    let vectors = metric_vectors(&cfg.data.name, &method_names, &cfg.benchmark.metrics, &fold_metrics);
    write_metric_vectors(create(dir, paths::METRICS)?, &vectors)?;
    Ok(vec![paths::FOLD_METRICS.into(), paths::METRICS.into()])
}

pub fn write_fold_metrics<W: Write>(out: W, dataset: &str, rows: &[FoldMetric]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "dataset", "metric", "repeat", "fold", "value", "dropped"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            dataset.to_string(),
            r.metric.to_string(),
            r.repeat.to_string(),
            r.fold.to_string(),
            r.value.map_or_else(String::new, |v| v.to_string()),
            if r.value.is_some() { "0" } else { "1" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of the `fold_metrics.csv` writer.
pub fn read_fold_metrics(path: &Path) -> Result<Vec<FoldMetric>, StageFailure> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let value = if rec[5].is_empty() { None } else { Some(rec[5].parse::<f64>()?) };
        out.push(FoldMetric {
            method: rec[0].to_string(),
            metric: rec[2].parse::<MetricKind>()?,
            repeat: rec[3].parse()?,
            fold: rec[4].parse()?,
            value,
        });
    }
    Ok(out)
}

/// Fold means per repeat; a repeat is kept only when every method has at
/// least one usable fold for that metric.
pub fn metric_vectors(dataset: &str, methods: &[String], metrics: &[MetricKind], folds: &[FoldMetric]) -> Vec<MetricVector> {
    let mut out = Vec::new();
    for &metric in metrics {
        let mut per: BTreeMap<(&str, usize), Vec<(f64, bool)>> = BTreeMap::new();
        for f in folds.iter().filter(|f| f.metric == metric) {
            per.entry((f.method.as_str(), f.repeat))
                .or_default()
                .push((f.value.unwrap_or(0.0), f.value.is_none()));
        }
        let repeats: std::collections::BTreeSet<usize> = per.keys().map(|k| k.1).collect();
        let usable: Vec<usize> = repeats
            .into_iter()
            .filter(|&r| {
                methods
                    .iter()
                    .all(|m| per.get(&(m.as_str(), r)).is_some_and(|v| fold_mean(v).is_ok()))
            })
            .collect();
        for m in methods {
            let mut v = MetricVector {
                method: m.clone(),
                dataset: dataset.to_string(),
                metric,
                repeats: usable.clone(),
                values: Vec::new(),
                folds_used: Vec::new(),
            };
            for &r in &usable {
                let folds = &per[&(m.as_str(), r)];
                v.values.push(fold_mean(folds).expect("checked usable"));
                v.folds_used.push(folds.iter().filter(|(_, d)| !d).count());
            }
            out.push(v);
        }
    }
    out
}

pub fn stats(cfg: &RunConfig, dir: &Path, exec: Exec) -> StageResult {
    let mut vectors = read_metric_vectors(File::open(dir.join(paths::METRICS))?)?;
    if cfg.exclude_tuning {
        for v in &mut vectors {
            let keep: Vec<usize> = (0..v.repeats.len()).filter(|&i| v.repeats[i] != 0).collect();
            v.values = keep.iter().map(|&i| v.values[i]).collect();
            v.folds_used = keep.iter().map(|&i| v.folds_used[i]).collect();
            v.repeats = keep.iter().map(|&i| v.repeats[i]).collect();
        }
    }
    vectors.retain(|v| !v.values.is_empty());
    let results = compare_all(&vectors, cfg.alpha, exec)?;
    write_comparisons(create(dir, paths::COMPARISONS)?, &results)?;
    Ok(vec![paths::COMPARISONS.into()])
}

pub fn importance(cfg: &RunConfig, dir: &Path, exec: Exec) -> StageResult {
    let (model, vocab) = load_model_checked(dir)?;
    let (ds, graphs) = load_benchmark(cfg, dir)?;
    let labels = ds.labels();
    let emb = aligned_embeddings(dir, &ds)?;
    let tokens = tokenize_batch(&graphs, &vocab, exec);
    let all_tokens = vocabulary_tokens(&vocab);
    let plans: Vec<SplitPlan> = load_plans(dir, &ds)?
        .into_iter()
        .filter(|p| p.repeat_id == cfg.importance.repeat && !p.dropped_flag)
        .collect();
    let mut report = ImportanceReport {
        metric: cfg.importance.metric,
        folds: Vec::new(),
    };
    for plan in &plans {
        let y: Vec<f64> = plan.train_idx.iter().map(|&i| labels[i]).collect();
        let predictor = fit(
            &rows(&emb, &plan.train_idx),
            &y,
            objective(cfg.data.task),
            &predictor_config(cfg, plan),
            exec,
        )?;
        let test: Vec<_> = plan.test_idx.iter().map(|&i| tokens[i].clone()).collect();
        let truth: Vec<f64> = plan.test_idx.iter().map(|&i| labels[i]).collect();
        let fold = gin_substructure_importance(
            &model,
            &predictor,
            &test,
            &truth,
            &all_tokens,
            cfg.importance.metric,
            cfg.importance.iterations,
            derive_indexed(cfg.seed, "importance", &[plan.fold_id as u64]),
            exec,
        )?;
        report.folds.push((plan.fold_id, fold));
    }
    report.write_csv(create(dir, paths::IMPORTANCE)?, Some(&vocab))?;
    let mut w = csv::Writer::from_writer(create(dir, paths::IMPORTANCE_RANKING)?);
    w.write_record(["token", "substructure_id", "radius", "mean_delta"])?;
    for (t, mean) in report.ranking() {
        let e = vocab.entry_for_token(t);
        w.write_record([
            t.to_string(),
            e.map_or_else(String::new, |e| e.id.to_string()),
            e.map_or_else(String::new, |e| e.radius.to_string()),
            mean.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![paths::IMPORTANCE.into(), paths::IMPORTANCE_RANKING.into()])
}
