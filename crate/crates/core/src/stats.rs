//! Paired non-parametric comparison of per-repeat metric vectors: Wilcoxon
//! signed-rank tests, rank-biserial effect sizes and Bonferroni adjustment.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::metrics::{midranks, MetricKind};
use crate::par::Exec;

/// Largest sample size evaluated with the exact null distribution.
pub const EXACT_LIMIT: usize = 25;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("paired vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("paired comparison needs at least one pair")]
    Empty,
    #[error("need at least two methods to compare, got {0}")]
    TooFewMethods(usize),
    #[error("method '{method}' is not aligned with the others: {reason}")]
    Misaligned { method: String, reason: String },
    #[error("metrics file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Two-sided p-value.
    pub p_value: f64,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Pairs left after discarding zero differences.
    pub n_used: usize,
    pub exact: bool,
    /// Every difference was zero; `p_value` is 1 by convention.
    pub all_zero: bool,
}

fn nonzero_differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect())
}

fn signed_rank_sum(d: &[f64]) -> (Vec<f64>, f64) {
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = midranks(&abs);
    let w = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    (ranks, w)
}

/// Exact two-sided p from the conditional null distribution of `W+` given
/// the observed (possibly tied) ranks, by dynamic programming over sums of
/// doubled ranks.
pub fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let w2 = (2.0 * w_plus).round() as usize;
    let all = 2f64.powi(ranks.len() as i32);
    let upper: f64 = counts[w2..].iter().sum::<f64>() / all;
    let lower: f64 = counts[..=w2].iter().sum::<f64>() / all;
    (2.0 * upper.min(lower)).min(1.0)
}

/// Normal approximation with tie and continuity corrections.
pub fn normal_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * (1.0 - std_normal.cdf(z))).min(1.0)
}

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are discarded; the exact distribution is used up to [`EXACT_LIMIT`] pairs.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, StatsError> {
    let d = nonzero_differences(a, b)?;
    if d.is_empty() {
        return Ok(WilcoxonResult {
            p_value: 1.0,
            w_plus: 0.0,
            n_used: 0,
            exact: true,
            all_zero: true,
        });
    }
    let (ranks, w_plus) = signed_rank_sum(&d);
    let exact = d.len() <= EXACT_LIMIT;
    let p_value = if exact { exact_p(&ranks, w_plus) } else { normal_p(&ranks, w_plus) };
    Ok(WilcoxonResult {
        p_value,
        w_plus,
        n_used: d.len(),
        exact,
        all_zero: false,
    })
}

/// `(wins − losses) / n` where a win means `a` is better than `b`.
pub fn rank_biserial(a: &[f64], b: &[f64], higher_is_better: bool) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut score = 0i64;
    for (x, y) in a.iter().zip(b) {
        let (better, worse) = if higher_is_better { (x > y, x < y) } else { (x < y, x > y) };
        score += i64::from(better) - i64::from(worse);
    }
    Ok(score as f64 / a.len() as f64)
}

pub fn bonferroni(p: f64, comparisons: usize) -> f64 {
    (p * comparisons as f64).min(1.0)
}

/// Significance stars: ns, *, **, ***, ****.
pub fn stars(p: f64) -> &'static str {
    if p < 0.0001 {
        "****"
    } else if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "ns"
    }
}

/// Per-repeat fold means of one method on one dataset and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub method: String,
    pub dataset: String,
    pub metric: MetricKind,
    /// Repeat ids aligned with `values`.
    pub repeats: Vec<usize>,
    pub values: Vec<f64>,
    pub folds_used: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub dataset: String,
    pub metric: MetricKind,
    pub method_a: String,
    pub method_b: String,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub r_rb: f64,
    pub n: usize,
    pub alpha: f64,
    pub all_zero: bool,
}

impl ComparisonResult {
    pub fn significant(&self) -> bool {
        self.p_adjusted < self.alpha
    }

    pub fn stars(&self) -> &'static str {
        stars(self.p_adjusted)
    }
}

/// Test every unordered pair of methods; p-values are Bonferroni-adjusted by
/// the number of pairs.
pub fn multiple_comparison(vectors: &[MetricVector], alpha: f64, exec: Exec) -> Result<Vec<ComparisonResult>, StatsError> {
    if vectors.len() < 2 {
        return Err(StatsError::TooFewMethods(vectors.len()));
    }
    let first = &vectors[0];
    for v in &vectors[1..] {
        let reason = if v.dataset != first.dataset {
            Some("different dataset")
        } else if v.metric != first.metric {
            Some("different metric")
        } else if v.repeats != first.repeats {
            Some("different repeats")
        } else {
            None
        };
        if let Some(r) = reason {
            return Err(StatsError::Misaligned {
                method: v.method.clone(),
                reason: r.into(),
            });
        }
    }
    let pairs: Vec<(usize, usize)> = (0..vectors.len())
        .flat_map(|i| (i + 1..vectors.len()).map(move |j| (i, j)))
        .collect();
    let m = pairs.len();
    let higher = first.metric.higher_is_better();
    exec.map(&pairs, |&(i, j)| {
        let (a, b) = (&vectors[i], &vectors[j]);
        let w = wilcoxon_signed_rank(&a.values, &b.values)?;
        Ok(ComparisonResult {
            dataset: a.dataset.clone(),
            metric: a.metric,
            method_a: a.method.clone(),
            method_b: b.method.clone(),
            p_raw: w.p_value,
            p_adjusted: bonferroni(w.p_value, m),
            r_rb: rank_biserial(&a.values, &b.values, higher)?,
            n: a.values.len(),
            alpha,
            all_zero: w.all_zero,
        })
    })
    .into_iter()
    .collect()
}

/// Metrics CSV: `method,dataset,metric,repeat,value,folds_used`.
pub fn write_metric_vectors<W: Write>(out: W, vectors: &[MetricVector]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "dataset", "metric", "repeat", "value", "folds_used"])?;
    for v in vectors {
        for ((r, val), used) in v.repeats.iter().zip(&v.values).zip(&v.folds_used) {
            w.write_record([
                v.method.clone(),
                v.dataset.clone(),
                v.metric.to_string(),
                r.to_string(),
                format!("{val:?}"),
                used.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_metric_vectors`]; vectors keep first-appearance order.
pub fn read_metric_vectors<R: Read>(input: R) -> Result<Vec<MetricVector>, StatsError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out: Vec<MetricVector> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 6 {
            return Err(StatsError::Format(format!("expected 6 fields, found {}", rec.len())));
        }
        let metric: MetricKind = rec[2].parse().map_err(|e| StatsError::Format(format!("{e}")))?;
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| StatsError::Format(format!("bad integer '{s}'")));
        let repeat = parse_usize(&rec[3])?;
        let value: f64 = rec[4].parse().map_err(|_| StatsError::Format(format!("bad value '{}'", &rec[4])))?;
        let used = parse_usize(&rec[5])?;
        let pos = out
            .iter()
            .position(|v| v.method == rec[0] && v.dataset == rec[1] && v.metric == metric);
        let v = match pos {
            Some(p) => &mut out[p],
            None => {
                out.push(MetricVector {
                    method: rec[0].to_string(),
                    dataset: rec[1].to_string(),
                    metric,
                    repeats: Vec::new(),
                    values: Vec::new(),
                    folds_used: Vec::new(),
                });
                out.last_mut().expect("just pushed")
            }
        };
        v.repeats.push(repeat);
        v.values.push(value);
        v.folds_used.push(used);
    }
    Ok(out)
}

/// Comparison CSV: `dataset,metric,method_a,method_b,p_raw,p_adjusted,r_rb,stars`.
pub fn write_comparisons<W: Write>(out: W, results: &[ComparisonResult]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "metric", "method_a", "method_b", "p_raw", "p_adjusted", "r_rb", "stars"])?;
    for r in results {
        w.write_record([
            r.dataset.clone(),
            r.metric.to_string(),
            r.method_a.clone(),
            r.method_b.clone(),
            format!("{:?}", r.p_raw),
            format!("{:?}", r.p_adjusted),
            format!("{:?}", r.r_rb),
            r.stars().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Group vectors by `(dataset, metric)` and compare the methods within each.
pub fn compare_all(vectors: &[MetricVector], alpha: f64, exec: Exec) -> Result<Vec<ComparisonResult>, StatsError> {
    let mut groups: Vec<Vec<MetricVector>> = Vec::new();
    for v in vectors {
        match groups
            .iter_mut()
            .find(|g| g[0].dataset == v.dataset && g[0].metric == v.metric)
        {
            Some(g) => g.push(v.clone()),
            None => groups.push(vec![v.clone()]),
        }
    }
    let mut out = Vec::new();
    for g in groups.iter().filter(|g| g.len() >= 2) {
        out.extend(multiple_comparison(g, alpha, exec)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_positive_six() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [0.0; 6];
        let w = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(w.exact);
        assert!((w.p_value - 0.03125).abs() < 1e-15);
    }

    #[test]
    fn identical_vectors() {
        let a = [0.3, 0.4, 0.5];
        let w = wilcoxon_signed_rank(&a, &a).unwrap();
        assert!(w.all_zero);
        assert_eq!(w.p_value, 1.0);
        assert_eq!(rank_biserial(&a, &a, true).unwrap(), 0.0);
    }

    #[test]
    fn effect_sizes() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [0.0, 0.0, 0.0, 9.0];
        assert_eq!(rank_biserial(&a, &b, true).unwrap(), 0.5);
        assert_eq!(rank_biserial(&b, &a, true).unwrap(), -0.5);
        assert_eq!(rank_biserial(&a, &b, false).unwrap(), -0.5);
    }

    #[test]
    fn bonferroni_and_stars() {
        assert_eq!(bonferroni(0.3, 10), 1.0);
        assert_eq!(bonferroni(0.01, 1), 0.01);
        assert_eq!(stars(0.05), "ns");
        assert_eq!(stars(0.01), "*");
        assert_eq!(stars(0.00005), "****");
    }

    fn vector(method: &str, values: Vec<f64>) -> MetricVector {
        MetricVector {
            method: method.into(),
            dataset: "d".into(),
            metric: MetricKind::R2,
            repeats: (1..=values.len()).collect(),
            folds_used: vec![5; values.len()],
            values,
        }
    }

    #[test]
    fn pair_counts() {
        let vs: Vec<MetricVector> = (0..5).map(|i| vector(&format!("m{i}"), vec![i as f64; 8])).collect();
        assert_eq!(multiple_comparison(&vs, 0.05, Exec::Sequential).unwrap().len(), 10);
        let two = multiple_comparison(&vs[..2], 0.05, Exec::Sequential).unwrap();
        assert_eq!(two[0].p_raw, two[0].p_adjusted);
        assert!(multiple_comparison(&vs[..1], 0.05, Exec::Sequential).is_err());
    }

    #[test]
    fn metrics_csv_round_trip() {
        let vs = vec![vector("a", vec![0.1, 0.2]), vector("b", vec![0.3, 1.0 / 3.0])];
        let mut buf = Vec::new();
        write_metric_vectors(&mut buf, &vs).unwrap();
        assert_eq!(read_metric_vectors(&buf[..]).unwrap(), vs);
    }
}
