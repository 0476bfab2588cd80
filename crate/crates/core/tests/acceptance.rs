//! Acceptance suite. Every check prints one `PASS`/`FAIL` line to stderr
//! (bypassing libtest capture) and the checks run one at a time so their
//! wall-clock limits are measured without contention.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use fingertrain::chem::{parse_smiles, to_smiles, MolecularGraph};
use fingertrain::datasets::{
    butina_cluster, filter_fingerprint_config, repeated_grouped_cv, similarity_filter_graphs, FilterConfig, LabeledDataset,
    TaskKind,
};
use fingertrain::fingerprints::{fold_hash, folded_batch, morgan_enumerate, FingerprintConfig};
use fingertrain::gin::{pretrain, GinConfig, GinModel, GraphBatch, LayerAgg, Pooling, TrainConfig};
use fingertrain::importance::{gin_substructure_importance, vocabulary_tokens, FoldImportance, ImportanceReport};
use fingertrain::metrics::{auroc, mape, r2, MetricKind};
use fingertrain::pipeline::{paths, run_pipeline, RunConfig, RunManifest, SHUFFLED_BASELINE};
use fingertrain::predictor::{fit, fit_with_report, GbdtConfig, Objective};
use fingertrain::stats::{compare_all, rank_biserial, read_metric_vectors, wilcoxon_signed_rank, MetricVector};
use fingertrain::toy::{toy_dataset, toy_molecules, toy_smiles};
use fingertrain::vocab::{build_vocabulary, tokenize, tokenize_batch, Vocabulary};
use fingertrain::Exec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

type Outcome = Result<String, String>;

fn criterion(name: &str, limit: Option<Duration>, body: impl FnOnce() -> Outcome) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let result = match (result, limit) {
        (Ok(d), Some(l)) if elapsed > l => Err(format!("{d}; took {elapsed:.1?}, limit {l:?}")),
        (r, _) => r,
    };
    let (tag, detail) = match &result {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    let line = format!("[acceptance] {tag} {name} ({:.2}s): {detail}\n", elapsed.as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(e) = result {
        panic!("{name}: {e}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ecfp4() -> FingerprintConfig {
    filter_fingerprint_config()
}

#[test]
fn fingerprint_permutation_invariance() {
    criterion("fingerprint permutation invariance", Some(Duration::from_secs(10)), || {
        let fc = ecfp4();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for (i, g) in toy_molecules(50, 3).iter().enumerate() {
            let reference = fold_hash(&morgan_enumerate(g, &fc), fc.nbits).map_err(|e| e.to_string())?;
            for _ in 0..20 {
                let mut perm: Vec<usize> = (0..g.atom_count()).collect();
                perm.shuffle(&mut rng);
                let smiles = to_smiles(&g.permuted(&perm));
                let again = parse_smiles(&smiles).map_err(|e| format!("{smiles}: {e}"))?;
                let fp = fold_hash(&morgan_enumerate(&again, &fc), fc.nbits).map_err(|e| e.to_string())?;
                ensure(fp == reference, || format!("molecule {i} differs after renumbering as {smiles}"))?;
                checked += 1;
            }
        }
        Ok(format!("{checked}/1000 renumberings identical"))
    });
}

/// Independent frequency count: set of ids per molecule (smallest radius),
/// count, order by count desc then id asc, keep k.
fn brute_force_vocab(corpus: &[MolecularGraph], fc: &FingerprintConfig, k: usize) -> Vec<(u64, u32, usize)> {
    let mut table: BTreeMap<u64, (usize, u32)> = BTreeMap::new();
    for g in corpus {
        let mut seen: BTreeMap<u64, u32> = BTreeMap::new();
        for env in &morgan_enumerate(g, fc).environments {
            let r = seen.entry(env.id).or_insert(env.radius);
            *r = (*r).min(env.radius);
        }
        for (id, r) in seen {
            let e = table.entry(id).or_insert((0, r));
            e.0 += 1;
            e.1 = e.1.min(r);
        }
    }
    let mut rows: Vec<(u64, u32, usize)> = table.into_iter().map(|(id, (c, r))| (id, r, c)).collect();
    rows.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    rows.truncate(k);
    rows
}

#[test]
fn sort_slice_matches_brute_force() {
    criterion("sort & slice vocabulary oracle", Some(Duration::from_secs(5)), || {
        let corpus = toy_molecules(200, 5);
        let mut cases = 0;
        for (radius, k) in [(0, 8), (1, 64), (2, 256), (2, 100_000)] {
            let fc = FingerprintConfig { radius, ..ecfp4() };
            let vocab = build_vocabulary(&corpus, &fc, k, Exec::Parallel).map_err(|e| e.to_string())?;
            let oracle = brute_force_vocab(&corpus, &fc, k);
            let got: Vec<(u64, u32, usize)> = vocab.entries.iter().map(|e| (e.id, e.radius, e.count)).collect();
            ensure(got == oracle, || format!("radius {radius}, k {k}: ranking differs"))?;
            ensure(vocab.entries.iter().enumerate().all(|(i, e)| e.rank == i as u32 + 1), || "ranks".into())?;
            let unk = oracle.len() as u32 + 1;
            ensure(vocab.unk_token() == unk, || format!("unk {} != {unk}", vocab.unk_token()))?;
            let rank: BTreeMap<u64, u32> = oracle.iter().enumerate().map(|(i, r)| (r.0, i as u32 + 1)).collect();
            for g in &corpus {
                let tg = tokenize(g, &vocab);
                for env in &morgan_enumerate(g, &fc).environments {
                    let want = rank.get(&env.id).copied().unwrap_or(unk);
                    let got = tg.token(env.central_atom, env.radius as usize);
                    ensure(got == want, || format!("token {got} != {want}"))?;
                }
            }
            cases += 1;
        }
        Ok(format!("{cases} (radius, k) settings match, tokens included"))
    });
}

#[test]
fn embedding_dimension_table() {
    criterion("embedding dimension table", None, || {
        let expected = [(0u32, 512usize, 2048usize), (1, 1024, 2560), (2, 1536, 3072)];
        let g = parse_smiles("CCO").map_err(|e| e.to_string())?;
        let mut rows = Vec::new();
        for (r_max, node, global) in expected {
            let cfg = GinConfig {
                r_max,
                embed_dim: 512,
                hidden_dim: 512,
                message_layers: 3,
                layer_agg: LayerAgg::Concat,
                vocab_size: 10,
                output_dim: 8,
                ..GinConfig::default()
            };
            let model = GinModel::new(cfg.clone(), 1).map_err(|e| e.to_string())?;
            let vocab = build_vocabulary(
                &[g.clone()],
                &FingerprintConfig { radius: r_max, ..ecfp4() },
                8,
                Exec::Sequential,
            )
            .map_err(|e| e.to_string())?;
            let tg = tokenize(&g, &vocab);
            let batch = GraphBatch::new(&[&tg]);
            let nf = model.node_features(&batch).map_err(|e| e.to_string())?;
            let emb = model.embed_batch(&batch).map_err(|e| e.to_string())?;
            let got = (cfg.node_input_dim(), nf.cols(), cfg.global_dim(), emb.cols());
            ensure(got == (node, node, global, global), || format!("r_max {r_max}: {got:?}"))?;
            rows.push(format!("r{r_max}: {node}->{global}"));
        }
        Ok(rows.join(", "))
    });
}

#[test]
fn gin_gradient_check() {
    criterion("gradient check", Some(Duration::from_secs(60)), || {
        let mut worst: (f64, String) = (0.0, String::new());
        for seed in 0..20u64 {
            let pooling = if seed % 2 == 0 { Pooling::Sum } else { Pooling::Mean };
            for (name, err) in common::gin_gradient_check(seed, pooling) {
                if err > worst.0 {
                    worst = (err, format!("{name} (graph {seed})"));
                }
            }
        }
        ensure(worst.0 < 1e-4, || format!("relative error {:.2e} at {}", worst.0, worst.1))?;
        Ok(format!("20 graphs, worst relative error {:.2e} at {}", worst.0, worst.1))
    });
}

#[test]
fn pretraining_smoke() {
    criterion("pre-training smoke", Some(Duration::from_secs(600)), || {
        let train_smiles = toy_smiles(500, 21);
        let known: HashSet<&String> = train_smiles.iter().collect();
        let held_smiles: Vec<String> = toy_smiles(700, 22)
            .into_iter()
            .filter(|s| !known.contains(s))
            .take(150)
            .collect();
        let parse = |v: &[String]| v.iter().map(|s| parse_smiles(s).expect("toy SMILES")).collect::<Vec<_>>();
        let (train, held) = (parse(&train_smiles), parse(&held_smiles));
        let vocab = build_vocabulary(&train, &FingerprintConfig { radius: 1, ..ecfp4() }, 2048, Exec::Parallel)
            .map_err(|e| e.to_string())?;
        let target_fp = FingerprintConfig { nbits: 256, ..ecfp4() };
        let targets = folded_batch(&train, &target_fp, Exec::Parallel).map_err(|e| e.to_string())?;
        let held_targets = folded_batch(&held, &target_fp, Exec::Parallel).map_err(|e| e.to_string())?;
        let cfg = GinConfig {
            hidden_dim: 64,
            embed_dim: 64,
            message_layers: 1,
            mlp_layers: 2,
            dropout: 0.0,
            r_max: 1,
            vocab_size: vocab.size(),
            output_dim: 256,
            ..GinConfig::default()
        };
        let mut model = GinModel::new(cfg, 5).map_err(|e| e.to_string())?;
        let tc = TrainConfig {
            epochs: 10,
            batch_size: 8,
            seed: 9,
            ..TrainConfig::default()
        };
        let tokens = tokenize_batch(&train, &vocab, Exec::Parallel);
        let report = pretrain(&mut model, &tokens, &targets, &tc).map_err(|e| e.to_string())?;
        let (first, last) = (report.loss_history[0], report.loss_history[9]);

        let held_tokens = tokenize_batch(&held, &vocab, Exec::Parallel);
        let refs: Vec<_> = held_tokens.iter().collect();
        let logits = model.logits(&refs).map_err(|e| e.to_string())?;
        let min_set = (0.05 * held.len() as f64).ceil() as usize;
        let mut aucs = Vec::new();
        for bit in 0..256 {
            let truth: Vec<f64> = held_targets.iter().map(|f| f64::from(u8::from(f.get(bit)))).collect();
            let set = truth.iter().filter(|&&t| t == 1.0).count();
            if set < min_set || set == truth.len() {
                continue;
            }
            let scores: Vec<f64> = (0..held.len()).map(|i| logits.row(i)[bit]).collect();
            aucs.push(auroc(&truth, &scores).map_err(|e| e.to_string())?);
        }
        let mean_auc = aucs.iter().sum::<f64>() / aucs.len() as f64;
        let detail = format!(
            "loss {first:.4} -> {last:.4} (ratio {:.3}), held-out AUROC {mean_auc:.3} over {} bits",
            last / first,
            aucs.len()
        );
        ensure(last < 0.5 * first && mean_auc > 0.7 && !aucs.is_empty(), || detail.clone())?;
        Ok(detail)
    });
}

fn check_split_plan(ds: &LabeledDataset, seed: u64) -> Result<(usize, usize), String> {
    let graphs: Vec<_> = ds.records.iter().map(|r| parse_smiles(&r.smiles).expect("toy")).collect();
    let fps = folded_batch(&graphs, &ecfp4(), Exec::Parallel).map_err(|e| e.to_string())?;
    let clusters = butina_cluster(&fps, 0.65, Exec::Parallel);
    let plans = repeated_grouped_cv(ds, &clusters, 5, 200, seed, Exec::Parallel).map_err(|e| e.to_string())?;
    ensure(plans.len() == 1000, || format!("{} plans", plans.len()))?;
    let labels = ds.labels();
    let (mut leaks, mut dropped) = (0, 0);
    for p in &plans {
        let train: BTreeSet<usize> = p.train_idx.iter().map(|&i| clusters.cluster_of[i]).collect();
        leaks += p.test_idx.iter().filter(|&&i| train.contains(&clusters.cluster_of[i])).count();
        let mut all: Vec<usize> = p.train_idx.iter().chain(&p.test_idx).copied().collect();
        all.sort_unstable();
        ensure(all == (0..ds.len()).collect::<Vec<_>>(), || "folds do not partition the data".into())?;
        let positives = p.test_idx.iter().filter(|&&i| labels[i] == 1.0).count();
        ensure(p.dropped_flag == (positives == 0), || {
            format!("repeat {} fold {}: dropped={} with {positives} positives", p.repeat_id, p.fold_id, p.dropped_flag)
        })?;
        dropped += usize::from(p.dropped_flag);
    }
    ensure(leaks == 0, || format!("{leaks} leakage events"))?;
    Ok((clusters.cluster_count(), dropped))
}

#[test]
fn split_hygiene() {
    criterion("split hygiene", Some(Duration::from_secs(30)), || {
        let ds = toy_dataset(200, 4, TaskKind::Binary);
        let (clusters, dropped) = check_split_plan(&ds, 17)?;
        // Three positives across five folds forces dropped folds in every repeat.
        let mut records = ds.records.clone();
        for (i, r) in records.iter_mut().enumerate() {
            r.label = f64::from(u8::from(i % 67 == 5));
        }
        let rare = LabeledDataset::new("rare", TaskKind::Binary, records).map_err(|e| e.to_string())?;
        let (_, rare_dropped) = check_split_plan(&rare, 18)?;
        ensure(rare_dropped >= 400, || format!("only {rare_dropped} dropped folds with 3 positives"))?;
        Ok(format!(
            "{clusters} clusters, 2 x 1000 folds, 0 leakage events; dropped folds {dropped} (balanced) and \
             {rare_dropped} (3 positives), each without test positives, all others with at least one"
        ))
    });
}

fn tanimoto_sets(a: &[usize], b: &[usize]) -> f64 {
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

#[test]
fn similarity_filter_correctness() {
    criterion("similarity filter correctness", None, || {
        let pre = toy_molecules(300, 31);
        let bench = toy_molecules(100, 32);
        let cfg = FilterConfig {
            threshold: 0.5,
            target_size: None,
            seed: 0,
        };
        let kept: BTreeSet<usize> = similarity_filter_graphs(&pre, &bench, &cfg, Exec::Parallel)
            .map_err(|e| e.to_string())?
            .into_iter()
            .collect();
        let bits = |g: &MolecularGraph| fold_hash(&morgan_enumerate(g, &ecfp4()), 2048).expect("fold").ones();
        let bench_bits: Vec<_> = bench.iter().map(bits).collect();
        for (i, g) in pre.iter().enumerate() {
            let b = bits(g);
            let max = bench_bits.iter().map(|o| tanimoto_sets(&b, o)).fold(0.0, f64::max);
            ensure(kept.contains(&i) == (max <= 0.5), || format!("molecule {i}: max similarity {max}"))?;
        }
        Ok(format!("{} of 300 retained, all with max similarity <= 0.5, all removed above", kept.len()))
    });
}

fn oracle_midranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if d.is_empty() {
        return 1.0;
    }
    let ranks = oracle_midranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let observed: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let (mut above, mut below) = (0u64, 0u64);
    for mask in 0..(1u64 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        above += u64::from(w >= observed - 1e-9);
        below += u64::from(w <= observed + 1e-9);
    }
    let total = (1u64 << n) as f64;
    (2.0 * (above as f64 / total).min(below as f64 / total)).min(1.0)
}

#[test]
fn wilcoxon_exactness() {
    criterion("wilcoxon exactness", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst: f64 = 0.0;
        for n in 1..=12usize {
            for case in 0..100 {
                // Half the cases draw from a coarse grid to produce ties and zero differences.
                let draw = |rng: &mut ChaCha8Rng| {
                    if case % 2 == 0 {
                        f64::from(rng.gen_range(0..6u8)) * 0.25
                    } else {
                        rng.gen_range(-1.0..1.0)
                    }
                };
                let a: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
                let b: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
                let got = wilcoxon_signed_rank(&a, &b).map_err(|e| e.to_string())?;
                let want = enumerated_p(&a, &b);
                worst = worst.max((got.p_value - want).abs());
                ensure((got.p_value - want).abs() <= 1e-12, || {
                    format!("n={n}: p {} vs enumeration {want}", got.p_value)
                })?;
                for higher in [true, false] {
                    let wins = a.iter().zip(&b).filter(|(x, y)| if higher { x > y } else { x < y }).count() as f64;
                    let losses = a.iter().zip(&b).filter(|(x, y)| if higher { x < y } else { x > y }).count() as f64;
                    let r = rank_biserial(&a, &b, higher).map_err(|e| e.to_string())?;
                    ensure(r == (wins - losses) / n as f64, || format!("n={n}: r_rb {r}"))?;
                }
            }
        }
        Ok(format!("1200 vectors (n = 1..12), max |p - enumeration| = {worst:.1e}, r_rb exact"))
    });
}

#[test]
fn statistical_pipeline() {
    criterion("statistical pipeline", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let repeats: Vec<usize> = (1..=199).collect();
        let b: Vec<f64> = repeats.iter().map(|_| rng.gen_range(0.3..0.6)).collect();
        let a: Vec<f64> = b.iter().map(|x| x + rng.gen_range(0.01..0.1)).collect();
        let c: Vec<f64> = b.iter().map(|x| x + rng.gen_range(-0.05..0.05)).collect();
        let vector = |method: &str, values: Vec<f64>| MetricVector {
            method: method.into(),
            dataset: "synthetic".into(),
            metric: MetricKind::R2,
            repeats: repeats.clone(),
            folds_used: vec![5; values.len()],
            values,
        };
        let results = compare_all(&[vector("A", a), vector("B", b), vector("C", c)], 0.05, Exec::Parallel)
            .map_err(|e| e.to_string())?;
        let ab = results
            .iter()
            .find(|r| r.method_a == "A" && r.method_b == "B")
            .ok_or("missing A vs B")?;
        ensure(ab.r_rb == 1.0 && ab.p_adjusted < 0.05 && ab.n == 199, || format!("{ab:?}"))?;
        Ok(format!(
            "A vs B over 199 repeats: r_rb = {:.2}, Bonferroni p = {:.2e} ({} comparisons)",
            ab.r_rb,
            ab.p_adjusted,
            results.len()
        ))
    });
}

#[test]
fn mape_exclusion() {
    criterion("MAPE exclusion", None, || {
        let (value, excluded) = mape(&[0.0, 2.0, 4.0], &[0.0, 1.0, 5.0]).map_err(|e| e.to_string())?;
        let hand = 100.0 * 0.5 * ((2.0f64 - 1.0).abs() / 2.0 + (4.0f64 - 5.0).abs() / 4.0);
        ensure(excluded == 1 && (value - hand).abs() <= 1e-12, || format!("{value} ({excluded} excluded)"))?;
        Ok(format!("MAPE {value} with {excluded} zero-truth record excluded"))
    });
}

/// Planted task: label = number of atoms carrying one radius-0 token.
fn planted_run(seed: u64) -> Result<(u32, u32, f64, FoldImportance), String> {
    let graphs = toy_molecules(160, 1000 + seed);
    let vocab: Vocabulary =
        build_vocabulary(&graphs, &FingerprintConfig { radius: 1, ..ecfp4() }, 64, Exec::Parallel)
            .map_err(|e| e.to_string())?;
    let tokens = tokenize_batch(&graphs, &vocab, Exec::Parallel);
    let planted = vocab
        .entries
        .iter()
        .filter(|e| e.radius == 0)
        .min_by_key(|e| (e.count as i64 - 56).abs())
        .ok_or("no radius-0 entries")?
        .rank;
    let labels: Vec<f64> = tokens
        .iter()
        .map(|tg| (0..tg.atom_count()).filter(|&a| tg.token(a, 0) == planted).count() as f64)
        .collect();
    let cfg = GinConfig {
        hidden_dim: 32,
        embed_dim: 48,
        message_layers: 2,
        mlp_layers: 2,
        r_max: 1,
        dropout: 0.0,
        vocab_size: vocab.size(),
        output_dim: 8,
        ..GinConfig::default()
    };
    let model = GinModel::new(cfg, seed).map_err(|e| e.to_string())?;
    let emb = model.featurise(&tokens, Exec::Parallel).map_err(|e| e.to_string())?;
    let (train, test) = (0..120, 120..160);
    let gbdt = GbdtConfig {
        seed,
        ..GbdtConfig::default()
    };
    let predictor = fit(&emb[train.clone()], &labels[train], Objective::SquaredError, &gbdt, Exec::Parallel)
        .map_err(|e| e.to_string())?;
    let fold = gin_substructure_importance(
        &model,
        &predictor,
        &tokens[test.clone()],
        &labels[test],
        &vocabulary_tokens(&vocab),
        MetricKind::R2,
        5,
        seed,
        Exec::Parallel,
    )
    .map_err(|e| e.to_string())?;
    let report = ImportanceReport {
        metric: MetricKind::R2,
        folds: vec![(0, fold.clone())],
    };
    let top = report.ranking()[0];
    Ok((planted, top.0, top.1, fold))
}

#[test]
fn importance_invariants() {
    criterion("importance invariants", Some(Duration::from_secs(300)), || {
        let mut hits = 0;
        let mut absent_checked = 0;
        for seed in 0..10 {
            let (planted, top, delta, fold) = planted_run(seed)?;
            hits += usize::from(planted == top);
            let _ = delta;
            // Tokens that no test molecule carries must score exactly zero.
            let graphs = toy_molecules(160, 1000 + seed);
            let vocab = build_vocabulary(&graphs, &FingerprintConfig { radius: 1, ..ecfp4() }, 64, Exec::Parallel)
                .map_err(|e| e.to_string())?;
            let test_tokens = tokenize_batch(&graphs[120..], &vocab, Exec::Sequential);
            for (t, deltas) in &fold.scores {
                if !test_tokens.iter().any(|tg| tg.contains(*t)) {
                    ensure(deltas.iter().all(|d| *d == 0.0), || format!("absent token {t}: {deltas:?}"))?;
                    absent_checked += 1;
                }
            }
        }
        ensure(absent_checked > 0, || "no absent tokens exercised".into())?;
        ensure(hits >= 9, || format!("planted token ranked first in {hits}/10 runs"))?;
        Ok(format!(
            "planted token first in {hits}/10 runs; {absent_checked} absent tokens with delta exactly 0"
        ))
    });
}

#[test]
fn predictor_sanity() {
    criterion("predictor sanity", None, || {
        let features: Vec<Vec<f64>> = (0..200).map(|i| vec![5.0, f64::from(i) / 10.0]).collect();
        let y: Vec<f64> = features.iter().map(|r| 3.0 * r[1]).collect();
        let cfg = GbdtConfig {
            bagging_fraction: 0.8,
            feature_fraction: 0.9,
            seed: 3,
            ..GbdtConfig::default()
        };
        let (model, _) =
            fit_with_report(&features, &y, Objective::SquaredError, &cfg, Exec::Parallel).map_err(|e| e.to_string())?;
        let score = r2(&y, &model.predict(&features).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(score >= 0.99, || format!("train R2 {score}"))?;
        ensure(model.kept_features == vec![1], || format!("kept {:?}", model.kept_features))?;
        let again = fit(&features, &y, Objective::SquaredError, &cfg, Exec::Sequential).map_err(|e| e.to_string())?;
        ensure(again == model, || "refit with the same seed differs".into())?;
        Ok(format!("train R2 {score:.5}, constant column excluded, refit identical"))
    });
}

fn mean(v: &MetricVector) -> f64 {
    let kept: Vec<f64> = v.repeats.iter().zip(&v.values).filter(|(r, _)| **r != 0).map(|(_, x)| *x).collect();
    kept.iter().sum::<f64>() / kept.len() as f64
}

#[test]
fn end_to_end_toy_pipeline() {
    criterion("end-to-end toy pipeline", Some(Duration::from_secs(900)), || {
        let conf = concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy.conf");
        let out = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = RunConfig::load(conf.as_ref()).map_err(|e| e.to_string())?.with_output_dir(out.path());
        let manifest = run_pipeline(&cfg, Exec::Parallel).map_err(|e| e.to_string())?;
        let metrics_file = std::fs::File::open(out.path().join(paths::METRICS)).map_err(|e| e.to_string())?;
        let vectors = read_metric_vectors(metrics_file).map_err(|e| e.to_string())?;
        let find = |method: &str, metric: MetricKind| {
            vectors
                .iter()
                .find(|v| v.method == method && v.metric == metric)
                .map(mean)
                .ok_or(format!("{method} {metric} missing"))
        };
        let gin = find("pt_gin", MetricKind::R2)?;
        let shuffled = find(SHUFFLED_BASELINE, MetricKind::R2)?;
        let shuffled_r = find(SHUFFLED_BASELINE, MetricKind::Pearson)?;
        let listed = |rel: &str| manifest.artifacts.contains_key(rel);
        let split_files = manifest.artifacts_under(paths::SPLIT_DIR).len();
        let reloaded = RunManifest::load(out.path()).ok_or("manifest.json missing")?;
        let detail = format!(
            "PT-GIN test R2 {gin:.3}; shuffled-label R2 {shuffled:.3} (pearson {shuffled_r:.3}); \
             {split_files} split files, {} artifacts",
            manifest.artifacts.len()
        );
        ensure(gin > 0.5, || detail.clone())?;
        ensure(shuffled <= 0.1 && shuffled_r.abs() <= 0.2, || detail.clone())?;
        ensure(
            listed(paths::VOCAB)
                && listed(paths::MODEL)
                && listed(paths::METRICS)
                && listed(paths::COMPARISONS)
                && split_files == 25,
            || format!("manifest incomplete: {detail}"),
        )?;
        ensure(reloaded == manifest, || "saved manifest differs".into())?;
        Ok(detail)
    });
}
