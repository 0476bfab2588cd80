//! Substructure importance. For GIN featurisers the node-embedding cells that
//! hold one token are scrambled with a shared index permutation before
//! message passing; for tabular features one column is shuffled across the
//! test rows. Importance is the drop in the test metric.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gin::{GinError, GinModel, GraphBatch, Tensor};
use crate::hash::derive_indexed;
use crate::metrics::{compute_metric, MetricError, MetricKind};
use crate::par::Exec;
use crate::predictor::{GbdtModel, PredictorError};
use crate::vocab::{TokenizedGraph, Vocabulary, PAD_TOKEN};

#[derive(Debug, Error)]
pub enum ImportanceError {
    #[error("embedding width {width} is smaller than the atom count {atoms}; chunked permutation needs width >= atoms")]
    EmbeddingTooNarrow { width: usize, atoms: usize },
    #[error("permutation has length {found}, expected {expected}")]
    BadPermutation { expected: usize, found: usize },
    #[error("{0} test rows but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("permutation importance needs at least two test rows")]
    SingleRow,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Gin(#[from] GinError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Scramble, in place, the embedding cells of `token`.
///
/// `features` holds one row per atom made of `tokens_per_atom` blocks of
/// width `l`; `tokens` is the matching row-major token grid. Locations are
/// visited in row-major order and location `k` receives indices
/// `k·chunk .. min((k+1)·chunk, l)` of `shuffled`, where
/// `chunk = floor(l / locations)`: `cell[start..end] = cell[shuffled[start..end]]`.
/// Returns the number of modified cells.
pub fn permute_graph_embeddings(
    features: &mut Tensor,
    tokens: &[u32],
    tokens_per_atom: usize,
    token: u32,
    shuffled: &[usize],
) -> Result<usize, ImportanceError> {
    let atoms = features.rows();
    let l = features.cols() / tokens_per_atom.max(1);
    if shuffled.len() != l {
        return Err(ImportanceError::BadPermutation {
            expected: l,
            found: shuffled.len(),
        });
    }
    if l < atoms {
        return Err(ImportanceError::EmbeddingTooNarrow { width: l, atoms });
    }
    let locations: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == token)
        .map(|(cell, _)| cell)
        .collect();
    if locations.is_empty() {
        return Ok(0);
    }
    let chunk = l / locations.len();
    for (k, &cell) in locations.iter().enumerate() {
        let (atom, slot) = (cell / tokens_per_atom, cell % tokens_per_atom);
        let start = (k * chunk).min(l);
        let end = (start + chunk).min(l);
        let row = &mut features.row_mut(atom)[slot * l..(slot + 1) * l];
        let original = row.to_vec();
        for idx in start..end {
            row[idx] = original[shuffled[idx]];
        }
    }
    Ok(locations.len())
}

/// Importance of a set of tokens (or columns) on one train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldImportance {
    pub base_score: f64,
    /// `(token, Δmetric per iteration)`.
    pub scores: Vec<(u32, Vec<f64>)>,
}

fn shuffled_indices(seed: u64, label: &str, iteration: usize, item: u64, len: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed(seed, label, &[iteration as u64, item]));
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut rng);
    idx
}

fn embed_single(model: &GinModel, tg: &TokenizedGraph, features: Tensor) -> Result<Vec<f64>, GinError> {
    let batch = GraphBatch::new(&[tg]);
    Ok(model.embed_from_features(&batch, features)?.row(0).to_vec())
}

/// Embedding-permutation importance of `tokens` for a GIN featuriser and a
/// predictor fitted on its frozen embeddings. A fresh permutation is drawn
/// per `(iteration, token)` and shared by every test molecule.
#[allow(clippy::too_many_arguments)]
pub fn gin_substructure_importance(
    model: &GinModel,
    predictor: &GbdtModel,
    test: &[TokenizedGraph],
    labels: &[f64],
    tokens: &[u32],
    metric: MetricKind,
    iterations: usize,
    seed: u64,
    exec: Exec,
) -> Result<FoldImportance, ImportanceError> {
    if test.len() != labels.len() {
        return Err(ImportanceError::LengthMismatch(test.len(), labels.len()));
    }
    let l = model.config.embed_dim;
    let node_features: Vec<Tensor> = test
        .iter()
        .map(|tg| model.node_features(&GraphBatch::new(&[tg])))
        .collect::<Result<_, _>>()?;
    if let Some(tg) = test.iter().find(|tg| tg.atom_count() > l) {
        return Err(ImportanceError::EmbeddingTooNarrow {
            width: l,
            atoms: tg.atom_count(),
        });
    }
    let base_rows: Vec<Vec<f64>> = exec
        .map_range(test.len(), |i| embed_single(model, &test[i], node_features[i].clone()))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let base_pred = predictor.predict(&base_rows)?;
    let base_score = compute_metric(metric, labels, &base_pred)?;

    let jobs: Vec<(usize, u32)> = tokens
        .iter()
        .flat_map(|&t| (0..iterations).map(move |it| (it, t)))
        .collect();
    let deltas = exec.map(&jobs, |&(it, token)| -> Result<f64, ImportanceError> {
        let shuffled = shuffled_indices(seed, "gin-importance", it, u64::from(token), l);
        let mut rows = base_rows.clone();
        for (i, tg) in test.iter().enumerate() {
            if !tg.contains(token) {
                continue;
            }
            let mut f = node_features[i].clone();
            permute_graph_embeddings(&mut f, &tg.tokens, tg.width, token, &shuffled)?;
            rows[i] = embed_single(model, tg, f)?;
        }
        let pred = predictor.predict(&rows)?;
        Ok(base_score - compute_metric(metric, labels, &pred)?)
    });
    let deltas: Vec<f64> = deltas.into_iter().collect::<Result<_, _>>()?;
    let scores = tokens
        .iter()
        .enumerate()
        .map(|(ti, &t)| (t, deltas[ti * iterations..(ti + 1) * iterations].to_vec()))
        .collect();
    Ok(FoldImportance { base_score, scores })
}

/// Every token a vocabulary can emit except padding: ranks then unk.
pub fn vocabulary_tokens(vocab: &Vocabulary) -> Vec<u32> {
    (PAD_TOKEN + 1..=vocab.unk_token()).collect()
}

/// Classical column-shuffle importance. Column `c` is reported as token
/// `c + 1`, matching the Sort & Slice feature order.
pub fn feature_permutation_importance(
    predictor: &GbdtModel,
    features: &[Vec<f64>],
    labels: &[f64],
    metric: MetricKind,
    iterations: usize,
    seed: u64,
    exec: Exec,
) -> Result<FoldImportance, ImportanceError> {
    if features.len() != labels.len() {
        return Err(ImportanceError::LengthMismatch(features.len(), labels.len()));
    }
    if features.len() < 2 {
        return Err(ImportanceError::SingleRow);
    }
    let width = features[0].len();
    let base_score = compute_metric(metric, labels, &predictor.predict(features)?)?;
    let jobs: Vec<(usize, usize)> = (0..width).flat_map(|c| (0..iterations).map(move |it| (it, c))).collect();
    let deltas = exec.map(&jobs, |&(it, col)| -> Result<f64, ImportanceError> {
        let order = shuffled_indices(seed, "feature-importance", it, col as u64, features.len());
        let mut rows = features.to_vec();
        for (r, &src) in order.iter().enumerate() {
            rows[r][col] = features[src][col];
        }
        Ok(base_score - compute_metric(metric, labels, &predictor.predict(&rows)?)?)
    });
    let deltas: Vec<f64> = deltas.into_iter().collect::<Result<_, _>>()?;
    let scores = (0..width)
        .map(|c| ((c + 1) as u32, deltas[c * iterations..(c + 1) * iterations].to_vec()))
        .collect();
    Ok(FoldImportance { base_score, scores })
}

/// Importance over several folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub metric: MetricKind,
    pub folds: Vec<(usize, FoldImportance)>,
}

impl ImportanceReport {
    /// Mean Δmetric per token over every fold and iteration, best first.
    pub fn ranking(&self) -> Vec<(u32, f64)> {
        let mut sums: std::collections::BTreeMap<u32, (f64, usize)> = std::collections::BTreeMap::new();
        for (_, f) in &self.folds {
            for (t, d) in &f.scores {
                let e = sums.entry(*t).or_insert((0.0, 0));
                e.0 += d.iter().sum::<f64>();
                e.1 += d.len();
            }
        }
        let mut out: Vec<(u32, f64)> = sums
            .into_iter()
            .map(|(t, (s, n))| (t, if n == 0 { 0.0 } else { s / n as f64 }))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    /// CSV: `token,substructure_id,radius,fold,iteration,delta_metric`.
    pub fn write_csv<W: Write>(&self, out: W, vocab: Option<&Vocabulary>) -> Result<(), ImportanceError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["token", "substructure_id", "radius", "fold", "iteration", "delta_metric"])?;
        for (fold, f) in &self.folds {
            for (t, d) in &f.scores {
                let entry = vocab.and_then(|v| v.entry_for_token(*t));
                let id = entry.map_or_else(String::new, |e| e.id.to_string());
                let radius = entry.map_or_else(String::new, |e| e.radius.to_string());
                for (it, delta) in d.iter().enumerate() {
                    w.write_record([
                        t.to_string(),
                        id.clone(),
                        radius.clone(),
                        fold.to_string(),
                        it.to_string(),
                        format!("{delta:?}"),
                    ])?;
                }
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
