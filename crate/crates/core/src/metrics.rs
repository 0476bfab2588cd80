//! Regression and classification metrics evaluated on one test fold.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("truth has {truth} values but predictions have {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("metric needs at least one record")]
    Empty,
    #[error("{metric} is undefined: {reason}")]
    Undefined { metric: String, reason: String },
    #[error("classification truth must be 0 or 1, found {0}")]
    NotBinary(f64),
    #[error("enrichment fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("unknown metric '{0}'")]
    Unknown(String),
    #[error("every fold in the repeat was dropped")]
    AllFoldsDropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "fraction", rename_all = "lowercase")]
pub enum MetricKind {
    R2,
    Pearson,
    Mape,
    Auroc,
    Aucpr,
    Mcc,
    /// Enrichment factor in the top fraction of the ranking.
    Ef(f64),
}

impl MetricKind {
    pub fn higher_is_better(self) -> bool {
        !matches!(self, MetricKind::Mape)
    }

    pub fn is_classification(self) -> bool {
        matches!(self, MetricKind::Auroc | MetricKind::Aucpr | MetricKind::Mcc | MetricKind::Ef(_))
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::R2 => write!(f, "r2"),
            MetricKind::Pearson => write!(f, "pearson"),
            MetricKind::Mape => write!(f, "mape"),
            MetricKind::Auroc => write!(f, "auroc"),
            MetricKind::Aucpr => write!(f, "aucpr"),
            MetricKind::Mcc => write!(f, "mcc"),
            MetricKind::Ef(x) => write!(f, "ef@{x}"),
        }
    }
}

impl FromStr for MetricKind {
    type Err = MetricError;
    /// Names as printed by `Display`; enrichment is written `ef@0.05`.
    fn from_str(s: &str) -> Result<Self, MetricError> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "r2" => MetricKind::R2,
            "pearson" => MetricKind::Pearson,
            "mape" => MetricKind::Mape,
            "auroc" => MetricKind::Auroc,
            "aucpr" => MetricKind::Aucpr,
            "mcc" => MetricKind::Mcc,
            other => {
                let frac = other
                    .strip_prefix("ef@")
                    .and_then(|x| x.parse::<f64>().ok())
                    .ok_or_else(|| MetricError::Unknown(s.to_string()))?;
                if !(frac > 0.0 && frac <= 1.0) {
                    return Err(MetricError::BadFraction(frac));
                }
                MetricKind::Ef(frac)
            }
        })
    }
}

fn check(truth: &[f64], pred: &[f64]) -> Result<(), MetricError> {
    if truth.len() != pred.len() {
        return Err(MetricError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn undefined(metric: &str, reason: &str) -> MetricError {
    MetricError::Undefined {
        metric: metric.into(),
        reason: reason.into(),
    }
}

fn class_counts(truth: &[f64]) -> Result<(usize, usize), MetricError> {
    let mut pos = 0;
    for &t in truth {
        if t == 1.0 {
            pos += 1;
        } else if t != 0.0 {
            return Err(MetricError::NotBinary(t));
        }
    }
    Ok((pos, truth.len() - pos))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn r2(truth: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check(truth, pred)?;
    let m = mean(truth);
    let ss_tot: f64 = truth.iter().map(|t| (t - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(undefined("r2", "truth has zero variance"));
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn pearson(truth: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check(truth, pred)?;
    let (mt, mp) = (mean(truth), mean(pred));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, p) in truth.iter().zip(pred) {
        sxy += (t - mt) * (p - mp);
        sxx += (t - mt).powi(2);
        syy += (p - mp).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(undefined("pearson", "zero variance"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Mean absolute percentage error over records with non-zero truth, together
/// with the number of excluded zero-truth records.
pub fn mape(truth: &[f64], pred: &[f64]) -> Result<(f64, usize), MetricError> {
    check(truth, pred)?;
    let mut total = 0.0;
    let mut used = 0usize;
    for (&t, &p) in truth.iter().zip(pred) {
        if t == 0.0 {
            continue;
        }
        total += ((t - p) / t).abs();
        used += 1;
    }
    if used == 0 {
        return Err(undefined("mape", "every truth value is zero"));
    }
    Ok((100.0 * total / used as f64, truth.len() - used))
}

/// Ranks starting at 1 with ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn auroc(truth: &[f64], scores: &[f64]) -> Result<f64, MetricError> {
    check(truth, scores)?;
    let (pos, neg) = class_counts(truth)?;
    if pos == 0 || neg == 0 {
        return Err(undefined("auroc", "needs both classes"));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = truth.iter().zip(&ranks).filter(|(t, _)| **t == 1.0).map(|(_, r)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

/// Average precision: precision at every distinct score threshold weighted by
/// the recall gained there.
pub fn aucpr(truth: &[f64], scores: &[f64]) -> Result<f64, MetricError> {
    check(truth, scores)?;
    let (pos, neg) = class_counts(truth)?;
    if pos == 0 || neg == 0 {
        return Err(undefined("aucpr", "needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] == 1.0 {
                tp += 1;
            }
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    Ok(ap)
}

/// Matthews correlation with scores thresholded at 0.5. A zero denominator
/// yields 0.
pub fn mcc(truth: &[f64], scores: &[f64]) -> Result<f64, MetricError> {
    check(truth, scores)?;
    class_counts(truth)?;
    let (mut tp, mut tn, mut fp, mut fn_) = (0f64, 0f64, 0f64, 0f64);
    for (&t, &s) in truth.iter().zip(scores) {
        match (t == 1.0, s >= 0.5) {
            (true, true) => tp += 1.0,
            (false, false) => tn += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
        }
    }
    let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    Ok(if denom == 0.0 { 0.0 } else { (tp * tn - fp * fn_) / denom })
}

/// Active rate among the top `ceil(fraction · n)` records, ranked by
/// descending score then ascending index, relative to the overall rate.
pub fn enrichment_factor(truth: &[f64], scores: &[f64], fraction: f64) -> Result<f64, MetricError> {
    check(truth, scores)?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(MetricError::BadFraction(fraction));
    }
    let (pos, _) = class_counts(truth)?;
    if pos == 0 {
        return Err(undefined("ef", "no actives"));
    }
    let n = truth.len();
    let top = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let hits = order[..top].iter().filter(|&&i| truth[i] == 1.0).count();
    Ok((hits as f64 / top as f64) / (pos as f64 / n as f64))
}

pub fn compute_metric(kind: MetricKind, truth: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    match kind {
        MetricKind::R2 => r2(truth, pred),
        MetricKind::Pearson => pearson(truth, pred),
        MetricKind::Mape => mape(truth, pred).map(|(v, _)| v),
        MetricKind::Auroc => auroc(truth, pred),
        MetricKind::Aucpr => aucpr(truth, pred),
        MetricKind::Mcc => mcc(truth, pred),
        MetricKind::Ef(x) => enrichment_factor(truth, pred, x),
    }
}

/// Mean over the folds whose flag is not set.
pub fn fold_mean(folds: &[(f64, bool)]) -> Result<f64, MetricError> {
    let kept: Vec<f64> = folds.iter().filter(|(_, dropped)| !dropped).map(|(v, _)| *v).collect();
    if kept.is_empty() {
        return Err(MetricError::AllFoldsDropped);
    }
    Ok(mean(&kept))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0.0, 1.0, 1.0, 0.0, 1.0];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert!((pearson(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mcc(&y, &y).unwrap(), 1.0);
        assert_eq!(auroc(&y, &y).unwrap(), 1.0);
        assert_eq!(aucpr(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn mape_hand_case() {
        let (v, excluded) = mape(&[0.0, 2.0, 4.0], &[0.0, 1.0, 5.0]).unwrap();
        assert!((v - 37.5).abs() < 1e-12);
        assert_eq!(excluded, 1);
    }

    #[test]
    fn enrichment_maximum_and_unit_fraction() {
        let truth: Vec<f64> = (0..100).map(|i| f64::from(i < 10)).collect();
        let scores: Vec<f64> = (0..100).map(|i| -(i as f64)).collect();
        assert!((enrichment_factor(&truth, &scores, 0.1).unwrap() - 10.0).abs() < 1e-12);
        assert!((enrichment_factor(&truth, &scores, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auroc_with_ties_is_half() {
        assert_eq!(auroc(&[0.0, 1.0, 0.0, 1.0], &[0.3; 4]).unwrap(), 0.5);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(r2(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(auroc(&[1.0, 1.0], &[0.1, 0.2]).is_err());
        assert!(auroc(&[2.0, 0.0], &[0.1, 0.2]).is_err());
        assert!(r2(&[1.0], &[]).is_err());
    }

    #[test]
    fn fold_means() {
        assert!((fold_mean(&[(0.5, false), (0.7, false)]).unwrap() - 0.6).abs() < 1e-15);
        assert!((fold_mean(&[(0.5, false), (9.0, true), (0.7, false)]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(fold_mean(&[(0.5, true)]), Err(MetricError::AllFoldsDropped));
    }

    #[test]
    fn parse_names() {
        for k in [MetricKind::R2, MetricKind::Mape, MetricKind::Ef(0.05), MetricKind::Aucpr] {
            assert_eq!(k.to_string().parse::<MetricKind>().unwrap(), k);
        }
        assert!("ef@2".parse::<MetricKind>().is_err());
    }
}
