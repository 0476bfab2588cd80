//! Gradient-boosted regression trees with exact split search and leaf-wise
//! growth, for squared-error regression and logistic classification.

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::derive_indexed;
use crate::par::Exec;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("invalid predictor configuration: {0}")]
    Config(String),
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("need at least {needed} training rows, got {rows}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("row {row} has {found} features, expected {expected}")]
    Width { row: usize, found: usize, expected: usize },
    #[error("logistic labels must be 0 or 1, found {0}")]
    NotBinary(f64),
    #[error("non-finite value in features or labels")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    SquaredError,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub min_data_in_leaf: usize,
    pub feature_fraction: f64,
    pub bagging_fraction: f64,
    pub reg_lambda: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_estimators: 200,
            learning_rate: 0.05,
            num_leaves: 31,
            min_data_in_leaf: 5,
            feature_fraction: 1.0,
            bagging_fraction: 1.0,
            reg_lambda: 0.0,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        let bad = |m: &str| Err(PredictorError::Config(m.to_string()));
        if self.num_leaves < 2 {
            return bad("num_leaves must be at least 2");
        }
        if self.min_data_in_leaf == 0 {
            return bad("min_data_in_leaf must be positive");
        }
        for (name, f) in [("feature_fraction", self.feature_fraction), ("bagging_fraction", self.bagging_fraction)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(PredictorError::Config(format!("{name} must lie in (0, 1]")));
            }
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.reg_lambda >= 0.0) {
            return bad("reg_lambda must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn eval(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    fn split_features(&self, out: &mut Vec<usize>) {
        if let TreeNode::Split { feature, left, right, .. } = self {
            out.push(*feature);
            left.split_features(out);
            right.split_features(out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub objective: Objective,
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    /// Columns that varied in the training rows.
    pub kept_features: Vec<usize>,
    pub trees: Vec<TreeNode>,
}

/// Training-time diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Predictions on the training rows as accumulated during boosting.
    pub train_predictions: Vec<f64>,
    /// Training objective after the base score and after every tree.
    pub loss_history: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn loss(objective: Objective, raw: &[f64], y: &[f64]) -> f64 {
    let n = raw.len().max(1) as f64;
    match objective {
        Objective::SquaredError => raw.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n,
        Objective::Logistic => {
            raw.iter()
                .zip(y)
                .map(|(&z, &t)| {
                    let sp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                    sp - t * z
                })
                .sum::<f64>()
                / n
        }
    }
}

impl GbdtModel {
    fn raw_score(&self, row: &[f64]) -> f64 {
        let mut s = self.base_score;
        for t in &self.trees {
            s += self.learning_rate * t.eval(row);
        }
        s
    }

    /// Regression values or positive-class probabilities.
    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<f64>, PredictorError> {
        let need = self.kept_features.iter().max().map_or(0, |&m| m + 1);
        if let Some((row, r)) = features.iter().enumerate().find(|(_, r)| r.len() < need) {
            return Err(PredictorError::Width {
                row,
                found: r.len(),
                expected: self.n_features,
            });
        }
        Ok(features
            .iter()
            .map(|r| {
                let raw = self.raw_score(r);
                match self.objective {
                    Objective::SquaredError => raw,
                    Objective::Logistic => sigmoid(raw),
                }
            })
            .collect())
    }

    /// Every feature index used by a split.
    pub fn split_features(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for t in &self.trees {
            t.split_features(&mut out);
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, PredictorError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), PredictorError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PredictorError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn fit(
    features: &[Vec<f64>],
    labels: &[f64],
    objective: Objective,
    config: &GbdtConfig,
    exec: Exec,
) -> Result<GbdtModel, PredictorError> {
    fit_with_report(features, labels, objective, config, exec).map(|(m, _)| m)
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    presorted: &'a [Vec<u32>],
    grad: &'a [f64],
    hess: &'a [f64],
    lambda: f64,
    min_leaf: usize,
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.lambda;
        if denom <= 1e-12 {
            0.0
        } else {
            -g / denom
        }
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.lambda;
        if denom <= 1e-12 {
            0.0
        } else {
            g * g / denom
        }
    }

    fn best_for_feature(&self, slot: usize, node_of: &[u32], leaf: u32, g: f64, h: f64, n: usize) -> Option<Candidate> {
        let col = &self.columns[slot];
        let parent = self.score(g, h);
        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
        let mut prev: Option<f64> = None;
        let mut best: Option<Candidate> = None;
        for &r in &self.presorted[slot] {
            let r = r as usize;
            if node_of[r] != leaf {
                continue;
            }
            let x = col[r];
            if let Some(p) = prev {
                if x > p && nl >= self.min_leaf && n - nl >= self.min_leaf {
                    let gain = self.score(gl, hl) + self.score(g - gl, h - hl) - parent;
                    if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                        let mid = p + (x - p) / 2.0;
                        let threshold = if mid < x { mid } else { p };
                        best = Some(Candidate {
                            gain,
                            feature: slot,
                            threshold,
                        });
                    }
                }
            }
            gl += self.grad[r];
            hl += self.hess[r];
            nl += 1;
            prev = Some(x);
        }
        best
    }

    fn best_split(&self, slots: &[usize], node_of: &[u32], leaf: u32, g: f64, h: f64, n: usize, exec: Exec) -> Option<Candidate> {
        if n < 2 * self.min_leaf {
            return None;
        }
        let found = exec.map(slots, |&s| self.best_for_feature(s, node_of, leaf, g, h, n));
        let mut best: Option<Candidate> = None;
        for c in found.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                best = Some(c);
            }
        }
        best
    }
}

enum Arena {
    Leaf { g: f64, h: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

fn to_tree(arena: &[Arena], at: usize, grower: &Grower, kept: &[usize]) -> TreeNode {
    match &arena[at] {
        Arena::Leaf { g, h } => TreeNode::Leaf {
            value: grower.leaf_value(*g, *h),
        },
        Arena::Split {
            feature,
            threshold,
            left,
            right,
        } => TreeNode::Split {
            feature: kept[*feature],
            threshold: *threshold,
            left: Box::new(to_tree(arena, *left, grower, kept)),
            right: Box::new(to_tree(arena, *right, grower, kept)),
        },
    }
}

/// Fit and also return training predictions and the per-round loss.
pub fn fit_with_report(
    features: &[Vec<f64>],
    labels: &[f64],
    objective: Objective,
    config: &GbdtConfig,
    exec: Exec,
) -> Result<(GbdtModel, FitReport), PredictorError> {
    config.validate()?;
    let n = features.len();
    if n != labels.len() {
        return Err(PredictorError::LengthMismatch { rows: n, labels: labels.len() });
    }
    if n < config.min_data_in_leaf.max(1) {
        return Err(PredictorError::TooFewRows {
            rows: n,
            needed: config.min_data_in_leaf.max(1),
        });
    }
    let width = features[0].len();
    for (row, r) in features.iter().enumerate() {
        if r.len() != width {
            return Err(PredictorError::Width {
                row,
                found: r.len(),
                expected: width,
            });
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(PredictorError::NonFinite);
        }
    }
    if labels.iter().any(|y| !y.is_finite()) {
        return Err(PredictorError::NonFinite);
    }
    if objective == Objective::Logistic {
        if let Some(&bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(PredictorError::NotBinary(bad));
        }
    }

    let kept: Vec<usize> = (0..width)
        .filter(|&j| {
            let first = features[0][j];
            features.iter().any(|r| r[j] != first)
        })
        .collect();
    let columns: Vec<Vec<f64>> = kept.iter().map(|&j| features.iter().map(|r| r[j]).collect()).collect();
    let presorted: Vec<Vec<u32>> = exec.map(&columns, |col| {
        let mut idx: Vec<u32> = (0..n as u32).collect();
        idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
        idx
    });

    let mean = labels.iter().sum::<f64>() / n as f64;
    let (base_score, single_class) = match objective {
        Objective::SquaredError => (mean, false),
        Objective::Logistic => {
            let p = mean.clamp(1e-15, 1.0 - 1e-15);
            ((p / (1.0 - p)).ln(), mean == 0.0 || mean == 1.0)
        }
    };
    let mut model = GbdtModel {
        objective,
        base_score,
        learning_rate: config.learning_rate,
        n_features: width,
        kept_features: kept.clone(),
        trees: Vec::new(),
    };
    let mut raw = vec![base_score; n];
    let mut history = vec![loss(objective, &raw, labels)];
    if single_class || kept.is_empty() {
        let report = finish_report(&model, raw, history);
        return Ok((model, report));
    }

    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let n_bag = ((config.bagging_fraction * n as f64).ceil() as usize).clamp(1, n);
    let n_feat = ((config.feature_fraction * kept.len() as f64).ceil() as usize).clamp(1, kept.len());
    const OUT_OF_BAG: u32 = u32::MAX;

    for round in 0..config.n_estimators {
        for i in 0..n {
            match objective {
                Objective::SquaredError => {
                    grad[i] = raw[i] - labels[i];
                    hess[i] = 1.0;
                }
                Objective::Logistic => {
                    let p = sigmoid(raw[i]);
                    grad[i] = p - labels[i];
                    hess[i] = p * (1.0 - p);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed(config.seed, "gbdt-round", &[round as u64]));
        let mut node_of = vec![OUT_OF_BAG; n];
        if n_bag == n {
            node_of.fill(0);
        } else {
            for i in sample(&mut rng, n, n_bag) {
                node_of[i] = 0;
            }
        }
        let slots: Vec<usize> = if n_feat == kept.len() {
            (0..kept.len()).collect()
        } else {
            let mut s = sample(&mut rng, kept.len(), n_feat).into_vec();
            s.sort_unstable();
            s
        };
        let grower = Grower {
            columns: &columns,
            presorted: &presorted,
            grad: &grad,
            hess: &hess,
            lambda: config.reg_lambda,
            min_leaf: config.min_data_in_leaf,
        };
        let (g0, h0) = (0..n)
            .filter(|&i| node_of[i] == 0)
            .fold((0.0, 0.0), |(g, h), i| (g + grad[i], h + hess[i]));
        let mut arena = vec![Arena::Leaf { g: g0, h: h0 }];
        let mut pending: Vec<(usize, Option<Candidate>)> = vec![(0, grower.best_split(&slots, &node_of, 0, g0, h0, n_bag, exec))];
        let mut leaves = 1;
        while leaves < config.num_leaves {
            let pick = pending
                .iter()
                .enumerate()
                .filter_map(|(i, (_, c))| c.as_ref().map(|c| (i, c.gain)))
                .fold(None::<(usize, f64)>, |best, (i, g)| match best {
                    Some((_, bg)) if bg >= g => best,
                    _ => Some((i, g)),
                });
            let Some((pi, _)) = pick else { break };
            let (leaf, cand) = pending.swap_remove(pi);
            let cand = cand.expect("picked a candidate");
            let (left, right) = (arena.len(), arena.len() + 1);
            let col = &columns[cand.feature];
            let (mut gl, mut hl, mut nl, mut gr, mut hr, mut nr) = (0.0, 0.0, 0, 0.0, 0.0, 0);
            for i in 0..n {
                if node_of[i] as usize == leaf {
                    if col[i] <= cand.threshold {
                        node_of[i] = left as u32;
                        gl += grad[i];
                        hl += hess[i];
                        nl += 1;
                    } else {
                        node_of[i] = right as u32;
                        gr += grad[i];
                        hr += hess[i];
                        nr += 1;
                    }
                }
            }
            arena[leaf] = Arena::Split {
                feature: cand.feature,
                threshold: cand.threshold,
                left,
                right,
            };
            arena.push(Arena::Leaf { g: gl, h: hl });
            arena.push(Arena::Leaf { g: gr, h: hr });
            leaves += 1;
            for (id, g, h, cnt) in [(left, gl, hl, nl), (right, gr, hr, nr)] {
                pending.push((id, grower.best_split(&slots, &node_of, id as u32, g, h, cnt, exec)));
            }
        }
        let tree = to_tree(&arena, 0, &grower, &kept);
        if let TreeNode::Leaf { value } = tree {
            if value.abs() < 1e-15 {
                if n_bag == n && n_feat == kept.len() {
                    break;
                }
                continue;
            }
        }
        for (i, r) in features.iter().enumerate() {
            raw[i] += config.learning_rate * tree.eval(r);
        }
        model.trees.push(tree);
        history.push(loss(objective, &raw, labels));
    }
    let report = finish_report(&model, raw, history);
    Ok((model, report))
}

fn finish_report(model: &GbdtModel, raw: Vec<f64>, loss_history: Vec<f64>) -> FitReport {
    let train_predictions = match model.objective {
        Objective::SquaredError => raw,
        Objective::Logistic => raw.into_iter().map(sigmoid).collect(),
    };
    FitReport {
        train_predictions,
        loss_history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64, 5.0]).collect();
        let y = x.iter().map(|r| 3.0 * r[0]).collect();
        (x, y)
    }

    fn r2(y: &[f64], p: &[f64]) -> f64 {
        let m = y.iter().sum::<f64>() / y.len() as f64;
        let ss_res: f64 = y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
        let ss_tot: f64 = y.iter().map(|a| (a - m).powi(2)).sum();
        1.0 - ss_res / ss_tot
    }

    #[test]
    fn fits_linear_function_and_drops_constant_column() {
        let (x, y) = linear(200);
        let cfg = GbdtConfig {
            n_estimators: 100,
            learning_rate: 0.1,
            ..Default::default()
        };
        let (m, rep) = fit_with_report(&x, &y, Objective::SquaredError, &cfg, Exec::Parallel).unwrap();
        assert_eq!(m.kept_features, vec![0]);
        assert!(m.split_features().iter().all(|f| m.kept_features.contains(f)));
        let p = m.predict(&x).unwrap();
        assert!(r2(&y, &p) >= 0.99);
        assert_eq!(p, rep.train_predictions);
        for w in rep.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn constant_labels_give_base_only() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y = vec![2.5; 20];
        let m = fit(&x, &y, Objective::SquaredError, &GbdtConfig::default(), Exec::Sequential).unwrap();
        assert!(m.trees.is_empty());
        assert!(m.predict(&x).unwrap().iter().all(|&p| p == 2.5));
        let zeros = vec![0.0; 20];
        let m = fit(&x, &zeros, Objective::Logistic, &GbdtConfig::default(), Exec::Sequential).unwrap();
        assert!(m.trees.is_empty());
    }

    #[test]
    fn stump_is_sign_function() {
        let m = GbdtModel {
            objective: Objective::SquaredError,
            base_score: 0.0,
            learning_rate: 1.0,
            n_features: 1,
            kept_features: vec![0],
            trees: vec![TreeNode::Split {
                feature: 0,
                threshold: -1e-300,
                left: Box::new(TreeNode::Leaf { value: -1.0 }),
                right: Box::new(TreeNode::Leaf { value: 1.0 }),
            }],
        };
        assert_eq!(m.predict(&[vec![-2.0], vec![0.0], vec![3.0]]).unwrap(), vec![-1.0, 1.0, 1.0]);
    }

    #[test]
    fn logistic_separates_and_is_deterministic() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, (i as f64).sin()]).collect();
        let y: Vec<f64> = x.iter().map(|r| f64::from(r[0] >= 3.0)).collect();
        let cfg = GbdtConfig {
            n_estimators: 50,
            bagging_fraction: 0.8,
            feature_fraction: 0.5,
            seed: 4,
            ..Default::default()
        };
        let a = fit(&x, &y, Objective::Logistic, &cfg, Exec::Parallel).unwrap();
        let b = fit(&x, &y, Objective::Logistic, &cfg, Exec::Sequential).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let p = a.predict(&x).unwrap();
        assert!(p.iter().zip(&y).all(|(p, y)| (p - y).abs() < 0.5));
        assert_eq!(GbdtModel::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn errors() {
        let x = vec![vec![1.0]; 3];
        assert!(fit(&x, &[1.0, 2.0, 3.0], Objective::SquaredError, &GbdtConfig::default(), Exec::Sequential).is_err());
        let cfg = GbdtConfig {
            num_leaves: 1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(fit(&x, &[0.0, 2.0, 1.0], Objective::Logistic, &GbdtConfig { min_data_in_leaf: 1, ..Default::default() }, Exec::Sequential).is_err());
    }
}
