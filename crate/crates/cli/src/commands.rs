use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use fingertrain::chem::{parse_smiles, standardize_smiles, to_smiles, MolecularGraph};
use fingertrain::datasets::{
    butina_cluster, filter_fingerprint_config, read_molecule_file, read_split_csv, repeated_grouped_cv,
    similarity_filter_graphs, substructure_coverage, write_split_csv, FilterConfig, LabeledDataset, TaskKind,
};
use fingertrain::fingerprints::{
    fold_hash, morgan_enumerate, read_folded_csv, write_folded_csv, write_sparse_tsv, FingerprintConfig,
};
use fingertrain::gin::{load_model, pretrain, save_model, GinConfig, GinModel, ModelMetadata, TrainConfig};
use fingertrain::hash::derive_seed;
use fingertrain::importance::{gin_substructure_importance, vocabulary_tokens, ImportanceReport};
use fingertrain::metrics::{compute_metric, MetricKind};
use fingertrain::pipeline::{
    fold_predictor_config, metric_vectors, objective, read_embeddings, run_pipeline_with, write_embeddings,
    write_fold_metrics, FoldMetric, RunConfig,
};
use fingertrain::predictor::{fit, GbdtConfig, GbdtModel};
use fingertrain::stats::{compare_all, read_metric_vectors, write_comparisons, write_metric_vectors};
use fingertrain::toy::{toy_dataset, toy_smiles};
use fingertrain::vocab::{build_vocabulary, sort_slice_vector, tokenize, tokenize_batch, Vocabulary};
use fingertrain::Exec;

use crate::*;

/// Error with its process exit status: 2 config, 3 data, 4 stage failure.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn data(self) -> Result<T, Failure>;
    fn stage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: 2, error: e.into() })
    }
    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: 3, error: e.into() })
    }
    fn stage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: 4, error: e.into() })
    }
}

type CmdResult = Result<(), Failure>;

pub fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Standardize(a) => standardize(a),
        Command::Fingerprint(a) => fingerprint(a),
        Command::Vocab(VocabCommand::Build(a)) => vocab_build(a),
        Command::Vocab(VocabCommand::Apply(a)) => vocab_apply(a),
        Command::Split(SplitCommand::Make(a)) => split_make(a),
        Command::Filter(a) => filter(a),
        Command::Coverage(a) => coverage(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Featurise(a) => featurise(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Importance(a) => importance(a),
        Command::Stats(StatsCommand::Compare(a)) => stats_compare(a),
        Command::Pipeline(PipelineCommand::Run(a)) => pipeline_run(a),
        Command::Toy(a) => toy(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .stage()?;
    }
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .stage()
}

fn read_molecules(path: &Path, column: &str) -> Result<Vec<(String, String)>, Failure> {
    read_molecule_file(path, column)
        .with_context(|| format!("reading {}", path.display()))
        .data()
}

fn parse_all(mols: &[(String, String)]) -> Result<Vec<MolecularGraph>, Failure> {
    mols.iter()
        .map(|(id, s)| parse_smiles(s).with_context(|| format!("molecule '{id}' ({s})")))
        .collect::<Result<_, _>>()
        .data()
}

fn load_graphs(path: &Path, column: &str) -> Result<(Vec<String>, Vec<MolecularGraph>), Failure> {
    let mols = read_molecules(path, column)?;
    let graphs = parse_all(&mols)?;
    Ok((mols.into_iter().map(|(id, _)| id).collect(), graphs))
}

fn fp_config(kind: &str, radius: u32, nbits: usize, no_chirality: bool) -> Result<FingerprintConfig, Failure> {
    let fc = FingerprintConfig {
        radius,
        nbits,
        use_chirality: !no_chirality,
        kind: kind.parse().map_err(|e: String| anyhow!(e)).config()?,
    };
    fc.validate().config()?;
    Ok(fc)
}

fn task(s: &str) -> Result<TaskKind, Failure> {
    s.parse::<TaskKind>().map_err(|e| anyhow!(e)).config()
}

fn load_dataset(a: &DatasetArgs) -> Result<LabeledDataset, Failure> {
    LabeledDataset::read_csv(&a.data, &a.name, task(&a.task)?, "smiles")
        .with_context(|| format!("reading {}", a.data.display()))
        .data()
}

fn load_vocab(path: &Path) -> Result<Vocabulary, Failure> {
    Vocabulary::load(path)
        .with_context(|| format!("reading {}", path.display()))
        .data()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, Failure> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn standardize(a: StandardizeArgs) -> CmdResult {
    let mols = read_molecules(&a.input.input, &a.input.smiles_column)?;
    let reports = Exec::Parallel.map(&mols, |(_, s)| standardize_smiles(s));
    let mut out = csv_writer(&a.out)?;
    out.write_record(["id", "input_smiles", "smiles", "steps"]).stage()?;
    let mut rejects = match &a.rejects {
        Some(p) => {
            let mut w = csv_writer(p)?;
            w.write_record(["id", "smiles", "reason"]).stage()?;
            Some(w)
        }
        None => None,
    };
    let mut failed = 0usize;
    for ((id, smiles), rep) in mols.iter().zip(&reports) {
        match &rep.output {
            Some(g) => out
                .write_record([id.as_str(), smiles.as_str(), &to_smiles(g), &rep.steps_applied.join(";")])
                .stage()?,
            None => {
                failed += 1;
                if let Some(w) = rejects.as_mut() {
                    let reason = rep.failure_reason.as_deref().unwrap_or("unknown");
                    w.write_record([id.as_str(), smiles.as_str(), reason]).stage()?;
                }
            }
        }
    }
    out.flush().stage()?;
    if let Some(mut w) = rejects {
        w.flush().stage()?;
    }
    eprintln!("standardised {} molecules, {failed} rejected", mols.len() - failed);
    Ok(())
}

fn fingerprint(a: FingerprintArgs) -> CmdResult {
    let fc = fp_config(&a.fp.kind, a.fp.radius, a.fp.nbits, a.fp.no_chirality)?;
    let (ids, graphs) = load_graphs(&a.input.input, &a.input.smiles_column)?;
    let sparse = Exec::Parallel.map(&graphs, |g| morgan_enumerate(g, &fc));
    let out = create(&a.out)?;
    if a.sparse {
        let rows: Vec<_> = ids.into_iter().zip(sparse.iter().map(|s| s.entries())).collect();
        write_sparse_tsv(out, &rows).stage()?;
    } else {
        let folded = sparse
            .iter()
            .map(|s| fold_hash(s, fc.nbits))
            .collect::<Result<Vec<_>, _>>()
            .stage()?;
        let rows: Vec<_> = ids.into_iter().zip(folded).collect();
        write_folded_csv(out, &rows).stage()?;
    }
    Ok(())
}

fn vocab_build(a: VocabBuildArgs) -> CmdResult {
    let fc = fp_config(&a.kind, a.rmax, 2048, a.no_chirality)?;
    if a.k == 0 {
        return Err(anyhow!("--k must be positive")).config();
    }
    let (_, corpus) = load_graphs(&a.corpus, &a.smiles_column)?;
    let v = build_vocabulary(&corpus, &fc, a.k, Exec::Parallel).stage()?;
    v.save(&a.out).stage()?;
    eprintln!(
        "vocabulary: {} of {} slots filled from {} molecules (unk token {})",
        v.entries.len(),
        v.k,
        corpus.len(),
        v.unk_token()
    );
    Ok(())
}

fn vocab_apply(a: VocabApplyArgs) -> CmdResult {
    let v = load_vocab(&a.vocab)?;
    let (ids, graphs) = load_graphs(&a.input.input, &a.input.smiles_column)?;
    let mut w = csv_writer(&a.out)?;
    if a.format == "tokens" {
        let mut header = vec!["id".to_string(), "atom".to_string()];
        header.extend((0..=v.r_max).map(|r| format!("radius{r}")));
        w.write_record(&header).stage()?;
        for (id, g) in ids.iter().zip(&graphs) {
            let tg = tokenize(g, &v);
            for atom in 0..tg.atom_count() {
                let mut rec = vec![id.clone(), atom.to_string()];
                rec.extend(tg.row(atom).iter().map(u32::to_string));
                w.write_record(&rec).stage()?;
            }
        }
    } else {
        let mut header = vec!["id".to_string()];
        header.extend((1..=v.k).map(|t| format!("t{t}")));
        w.write_record(&header).stage()?;
        for (id, g) in ids.iter().zip(&graphs) {
            let mut rec = vec![id.clone()];
            rec.extend(sort_slice_vector(g, &v).iter().map(|x| (*x as u8).to_string()));
            w.write_record(&rec).stage()?;
        }
    }
    w.flush().stage()?;
    Ok(())
}

fn split_make(a: SplitMakeArgs) -> CmdResult {
    if a.k < 2 {
        return Err(anyhow!("--k must be at least 2, got {}", a.k)).config();
    }
    if !(0.0..=1.0).contains(&a.cutoff) {
        return Err(anyhow!("--cutoff must lie in [0, 1]")).config();
    }
    let ds = load_dataset(&a.dataset)?;
    let graphs = parse_all(
        &ds.records
            .iter()
            .map(|r| (r.id.clone(), r.smiles.clone()))
            .collect::<Vec<_>>(),
    )?;
    let fps = fingertrain::fingerprints::folded_batch(&graphs, &filter_fingerprint_config(), Exec::Parallel).stage()?;
    let clusters = butina_cluster(&fps, a.cutoff, Exec::Parallel);
    let plans = repeated_grouped_cv(&ds, &clusters, a.k, a.repeats, a.seed, Exec::Parallel).data()?;
    write_split_csv(create(&a.out)?, &plans, &ds).stage()?;
    let dropped = plans.iter().filter(|p| p.dropped_flag).count();
    eprintln!(
        "{} clusters, {} folds written ({dropped} dropped)",
        clusters.cluster_count(),
        plans.len()
    );
    Ok(())
}

fn filter(a: FilterArgs) -> CmdResult {
    let pre = read_molecules(&a.pretrain, &a.smiles_column)?;
    let pre_graphs = parse_all(&pre)?;
    let (_, bench) = load_graphs(&a.benchmark, &a.smiles_column)?;
    let fc = FilterConfig {
        threshold: a.threshold,
        target_size: a.target_size,
        seed: a.seed,
    };
    let keep = similarity_filter_graphs(&pre_graphs, &bench, &fc, Exec::Parallel).data()?;
    let mut out = create(&a.out)?;
    for &i in &keep {
        writeln!(out, "{} {}", pre[i].1, pre[i].0).stage()?;
    }
    out.flush().stage()?;
    eprintln!("kept {} of {} pre-training molecules", keep.len(), pre.len());
    Ok(())
}

fn coverage(a: CoverageArgs) -> CmdResult {
    let v = load_vocab(&a.vocab)?;
    let (_, bench) = load_graphs(&a.benchmark, &a.smiles_column)?;
    let pct = substructure_coverage(&bench, &v, a.top_n).data()?;
    println!("{pct:.4}");
    Ok(())
}

fn pretrain_cmd(a: PretrainArgs) -> CmdResult {
    let v = load_vocab(&a.vocab)?;
    let targets_fp = fp_config(&a.targets, a.target_radius, a.target_bits, false)?;
    let gin = GinConfig {
        message_layers: a.message_layers,
        hidden_dim: a.hidden,
        mlp_layers: a.mlp_layers,
        activation: a.activation.parse().map_err(|e: String| anyhow!(e)).config()?,
        pooling: a.pooling.parse().map_err(|e: String| anyhow!(e)).config()?,
        layer_agg: a.layer_agg.parse().map_err(|e: String| anyhow!(e)).config()?,
        dropout: a.dropout,
        r_max: v.r_max,
        embed_dim: a.embed_dim,
        vocab_size: v.size(),
        output_dim: a.target_bits,
        ..Default::default()
    };
    gin.validate().config()?;
    let tc = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        warmup_epochs: a.warmup_epochs,
        lr_half_life_epochs: a.half_life,
        lr_scale: a.lr_scale,
        seed: derive_seed(a.seed, "pretrain"),
        ..Default::default()
    };
    tc.validate().config()?;
    let (_, corpus) = load_graphs(&a.corpus, &a.smiles_column)?;
    let targets = fingertrain::fingerprints::folded_batch(&corpus, &targets_fp, Exec::Parallel).stage()?;
    let tokens = tokenize_batch(&corpus, &v, Exec::Parallel);
    let mut model = GinModel::new(gin, derive_seed(a.seed, "gin-init")).stage()?;
    let report = pretrain(&mut model, &tokens, &targets, &tc).stage()?;
    for (e, l) in report.loss_history.iter().enumerate() {
        eprintln!("epoch {:>3}  loss {l:.6}", e + 1);
    }
    let meta = ModelMetadata {
        vocab_fingerprint: v.corpus_fingerprint.clone(),
        seed: a.seed,
        epochs: a.epochs,
        loss_history: report.loss_history,
    };
    save_model(&model, &meta, &a.out).stage()?;
    eprintln!("d_model = {} trainable parameters", report.d_model);
    Ok(())
}

fn load_model_for(model: &Path, vocab: &Path) -> Result<(GinModel, Vocabulary), Failure> {
    let (m, meta) = load_model(model)
        .with_context(|| format!("reading {}", model.display()))
        .data()?;
    let v = load_vocab(vocab)?;
    if meta.vocab_fingerprint != v.corpus_fingerprint {
        return Err(anyhow!("model was trained against a different vocabulary")).config();
    }
    Ok((m, v))
}

fn featurise(a: FeaturiseArgs) -> CmdResult {
    let (model, v) = load_model_for(&a.model, &a.vocab)?;
    let (ids, graphs) = load_graphs(&a.input.input, &a.input.smiles_column)?;
    let tokens = tokenize_batch(&graphs, &v, Exec::Parallel);
    let rows = model.featurise(&tokens, Exec::Parallel).stage()?;
    write_embeddings(create(&a.out)?, &ids, &rows).stage()?;
    Ok(())
}

fn metric_list(spec: Option<&str>, task: TaskKind) -> Result<Vec<MetricKind>, Failure> {
    let list = match (spec, task) {
        (Some(s), _) => s
            .split(',')
            .map(|m| m.trim().parse::<MetricKind>())
            .collect::<Result<Vec<_>, _>>()
            .config()?,
        (None, TaskKind::Regression) => vec![MetricKind::R2, MetricKind::Pearson, MetricKind::Mape],
        (None, TaskKind::Binary) => vec![MetricKind::Auroc, MetricKind::Aucpr, MetricKind::Mcc],
    };
    if let Some(m) = list.iter().find(|m| m.is_classification() != (task == TaskKind::Binary)) {
        return Err(anyhow!("metric {m} does not apply to a {task:?} task")).config();
    }
    Ok(list)
}

fn predictor_config(p: &PredictorArgs) -> Result<GbdtConfig, Failure> {
    let c = GbdtConfig {
        n_estimators: p.n_estimators,
        learning_rate: p.learning_rate,
        num_leaves: p.num_leaves,
        min_data_in_leaf: p.min_data_in_leaf,
        feature_fraction: p.feature_fraction,
        bagging_fraction: p.bagging_fraction,
        reg_lambda: p.reg_lambda,
        seed: 0,
    };
    c.validate().config()?;
    Ok(c)
}

fn benchmark(a: BenchmarkArgs) -> CmdResult {
    let ds = load_dataset(&a.dataset)?;
    let metrics = metric_list(a.metrics.as_deref(), ds.task)?;
    let gbdt = predictor_config(&a.predictor)?;
    let plans = read_split_csv(File::open(&a.splits).context("opening split file").data()?, &ds).data()?;
    let (ids, table): (Vec<String>, Vec<Vec<f64>>) = match (&a.features, &a.fingerprints) {
        (Some(p), _) => read_embeddings(p).map_err(|e| anyhow!("{e:?}")).data()?,
        (None, Some(p)) => read_folded_csv(File::open(p).context("opening fingerprints").data()?)
            .data()?
            .into_iter()
            .map(|(id, f)| (id, f.to_dense()))
            .unzip(),
        (None, None) => unreachable!("clap requires one feature source"),
    };
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let features: Vec<Vec<f64>> = ds
        .records
        .iter()
        .map(|r| {
            index
                .get(r.id.as_str())
                .map(|&i| table[i].clone())
                .ok_or_else(|| anyhow!("no features for molecule '{}'", r.id))
        })
        .collect::<Result<_, _>>()
        .data()?;
    let labels = ds.labels();
    let results = Exec::Parallel.map(&plans, |plan| -> anyhow::Result<(Vec<Option<f64>>, Option<GbdtModel>)> {
        if plan.dropped_flag {
            return Ok((vec![None; metrics.len()], None));
        }
        let pick = |idx: &[usize]| idx.iter().map(|&i| features[i].clone()).collect::<Vec<_>>();
        let y: Vec<f64> = plan.train_idx.iter().map(|&i| labels[i]).collect();
        let cfg = fold_predictor_config(&gbdt, a.seed, plan);
        let model = fit(&pick(&plan.train_idx), &y, objective(ds.task), &cfg, Exec::Sequential)?;
        let pred = model.predict(&pick(&plan.test_idx))?;
        let truth: Vec<f64> = plan.test_idx.iter().map(|&i| labels[i]).collect();
        let values = metrics.iter().map(|&m| compute_metric(m, &truth, &pred).ok()).collect();
        Ok((values, Some(model)))
    });
    let mut folds = Vec::new();
    for (plan, res) in plans.iter().zip(results) {
        let (values, model) = res.stage()?;
        if let (Some(dir), Some(model)) = (&a.save_predictors, model) {
            std::fs::create_dir_all(dir).stage()?;
            let path = dir.join(format!("r{:03}_f{:02}.json", plan.repeat_id, plan.fold_id));
            model.save(&path).stage()?;
        }
        for (&metric, value) in metrics.iter().zip(values) {
            folds.push(FoldMetric {
                method: a.method.clone(),
                metric,
                repeat: plan.repeat_id,
                fold: plan.fold_id,
                value,
            });
        }
    }
    let vectors = metric_vectors(&ds.name, std::slice::from_ref(&a.method), &metrics, &folds);
    write_metric_vectors(create(&a.out)?, &vectors).stage()?;
    let fold_path = a.out.with_extension("folds.csv");
    write_fold_metrics(create(&fold_path)?, &ds.name, &folds).stage()?;
    for v in &vectors {
        let mean = v.values.iter().sum::<f64>() / v.values.len().max(1) as f64;
        println!("{}\t{}\t{mean:.4}\t({} repeats)", v.method, v.metric, v.values.len());
    }
    Ok(())
}

fn importance(a: ImportanceArgs) -> CmdResult {
    let (model, v) = load_model_for(&a.model, &a.vocab)?;
    let predictor = GbdtModel::load(&a.predictor)
        .with_context(|| format!("reading {}", a.predictor.display()))
        .data()?;
    let metric: MetricKind = a.metric.parse().config()?;
    let ds = load_dataset(&a.dataset)?;
    let graphs = parse_all(
        &ds.records
            .iter()
            .map(|r| (r.id.clone(), r.smiles.clone()))
            .collect::<Vec<_>>(),
    )?;
    let tokens = tokenize_batch(&graphs, &v, Exec::Parallel);
    let fold = gin_substructure_importance(
        &model,
        &predictor,
        &tokens,
        &ds.labels(),
        &vocabulary_tokens(&v),
        metric,
        a.iterations,
        a.seed,
        Exec::Parallel,
    )
    .stage()?;
    let report = ImportanceReport {
        metric,
        folds: vec![(0, fold)],
    };
    report.write_csv(create(&a.out)?, Some(&v)).stage()?;
    for (t, mean) in report.ranking().into_iter().take(10) {
        let id = v.entry_for_token(t).map_or_else(|| "unk".into(), |e| e.id.to_string());
        println!("{t}\t{id}\t{mean:.6}");
    }
    Ok(())
}

fn stats_compare(a: StatsCompareArgs) -> CmdResult {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(anyhow!("--alpha must lie in (0, 1)")).config();
    }
    let mut vectors = Vec::new();
    for p in &a.inputs {
        let f = File::open(p).with_context(|| format!("opening {}", p.display())).data()?;
        vectors.extend(read_metric_vectors(f).data()?);
    }
    if !a.include_tuning {
        for v in &mut vectors {
            let keep: Vec<usize> = (0..v.repeats.len()).filter(|&i| v.repeats[i] != 0).collect();
            v.values = keep.iter().map(|&i| v.values[i]).collect();
            v.folds_used = keep.iter().map(|&i| v.folds_used[i]).collect();
            v.repeats = keep.iter().map(|&i| v.repeats[i]).collect();
        }
    }
    let results = compare_all(&vectors, a.alpha, Exec::Parallel).data()?;
    write_comparisons(create(&a.out)?, &results).stage()?;
    for r in &results {
        println!(
            "{}\t{}\t{} vs {}\tp_adj={:.4}\tr_rb={:.3}\t{}",
            r.dataset,
            r.metric,
            r.method_a,
            r.method_b,
            r.p_adjusted,
            r.r_rb,
            r.stars()
        );
    }
    Ok(())
}

fn pipeline_run(a: PipelineRunArgs) -> CmdResult {
    let code = |e: fingertrain::pipeline::PipelineError| Failure {
        code: e.exit_code() as u8,
        error: e.into(),
    };
    let mut cfg = RunConfig::load(&a.config).map_err(code)?;
    if let Some(out) = &a.out {
        cfg = cfg.with_output_dir(out);
    }
    let manifest = run_pipeline_with(&cfg, Exec::Parallel, |r, _| {
        let state = if r.skipped { "skipped" } else { "done" };
        eprintln!("{:<12} {state:<8} {:>8.2}s", r.name, r.seconds);
    })
    .map_err(code)?;
    println!(
        "{} stages, {} artifacts, manifest at {}",
        manifest.stages.len(),
        manifest.artifacts.len(),
        cfg.output_dir.join(fingertrain::pipeline::MANIFEST_FILE).display()
    );
    Ok(())
}

fn toy(a: ToyArgs) -> CmdResult {
    std::fs::create_dir_all(&a.out).stage()?;
    let ds = toy_dataset(a.molecules, a.seed, TaskKind::Regression);
    ds.write_csv(&a.out.join("toy_labelled.csv")).stage()?;
    let mut w = create(&a.out.join("toy_pretrain.smi"))?;
    for s in toy_smiles(a.pretrain, a.seed + 1) {
        writeln!(w, "{s}").stage()?;
    }
    w.flush().stage()?;
    Ok(())
}
