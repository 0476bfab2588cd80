//! Labelled datasets, clustering, grouped cross-validation splits, similarity
//! filtering of pre-training corpora and unit conversion.

mod cluster;
mod filter;
mod split;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::MolecularGraph;
use crate::fingerprints::morgan_enumerate;
use crate::vocab::Vocabulary;

pub use cluster::{butina_cluster, ClusterAssignment};
pub use filter::{filter_fingerprint_config, similarity_filter, similarity_filter_graphs, FilterConfig};
pub use split::{read_split_csv, repeated_grouped_cv, write_split_csv, SplitPlan};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate molecule id '{0}'")]
    DuplicateId(String),
    #[error("binary label must be 0 or 1, found {value} for '{id}'")]
    NonBinaryLabel { id: String, value: f64 },
    #[error("unparseable label '{value}' for '{id}'")]
    BadLabel { id: String, value: String },
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("{clusters} clusters cannot fill {k} folds")]
    TooFewClusters { clusters: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("target size {target} exceeds the {survivors} molecules that passed the filter")]
    TargetTooLarge { target: usize, survivors: usize },
    #[error("threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("affinity must be strictly positive, got {0}")]
    NonPositiveAffinity(f64),
    #[error("benchmark set is empty")]
    EmptyBenchmark,
    #[error("record {record} has cluster {cluster} but only {clusters} clusters exist")]
    BadGroup { record: usize, cluster: usize, clusters: usize },
    #[error("group assignment covers {groups} records, dataset has {records}")]
    GroupLength { groups: usize, records: usize },
    #[error("malformed split file: {0}")]
    SplitFormat(String),
    #[error(transparent)]
    Fingerprint(#[from] crate::fingerprints::FingerprintError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    #[default]
    Regression,
    Binary,
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "regression" => Ok(TaskKind::Regression),
            "binary" | "classification" => Ok(TaskKind::Binary),
            other => Err(format!("unknown task kind '{other}' (expected regression or binary)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub smiles: String,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub name: String,
    pub task: TaskKind,
    pub records: Vec<Record>,
}

impl LabeledDataset {
    pub fn new(name: &str, task: TaskKind, records: Vec<Record>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(DatasetError::DuplicateId(r.id.clone()));
            }
            if task == TaskKind::Binary && r.label != 0.0 && r.label != 1.0 {
                return Err(DatasetError::NonBinaryLabel {
                    id: r.id.clone(),
                    value: r.label,
                });
            }
        }
        Ok(LabeledDataset {
            name: name.to_string(),
            task,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Read an `id,smiles,label` CSV; `smiles_column` renames the SMILES column.
    pub fn read_csv(path: &Path, name: &str, task: TaskKind, smiles_column: &str) -> Result<Self, DatasetError> {
        Self::from_reader(std::fs::File::open(path)?, name, task, smiles_column)
    }

    pub fn from_reader<R: std::io::Read>(
        input: R,
        name: &str,
        task: TaskKind,
        smiles_column: &str,
    ) -> Result<Self, DatasetError> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        let col = |n: &str| {
            headers
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| DatasetError::MissingColumn(n.to_string()))
        };
        let (ci, cs, cl) = (col("id")?, col(smiles_column)?, col("label")?);
        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let id = rec[ci].to_string();
            let raw = rec[cl].trim();
            let label = raw.parse::<f64>().map_err(|_| DatasetError::BadLabel {
                id: id.clone(),
                value: raw.to_string(),
            })?;
            records.push(Record {
                id,
                smiles: rec[cs].to_string(),
                label,
            });
        }
        Self::new(name, task, records)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["id", "smiles", "label"])?;
        for r in &self.records {
            w.write_record([r.id.as_str(), r.smiles.as_str(), &r.label.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Read one SMILES per line, or the named column of a CSV (files ending `.csv`).
pub fn read_smiles_file(path: &Path, smiles_column: &str) -> Result<Vec<String>, DatasetError> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if !is_csv {
        let text = std::fs::read_to_string(path)?;
        return Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.split_whitespace().next().unwrap_or("").to_string())
            .collect());
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h == smiles_column)
        .ok_or_else(|| DatasetError::MissingColumn(smiles_column.to_string()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        out.push(rec?[idx].to_string());
    }
    Ok(out)
}

/// `(id, smiles)` pairs from a SMILES file (`SMILES [id]` per line) or a CSV
/// with the named SMILES column and an optional `id` column. Missing ids
/// become `mol<row>`.
pub fn read_molecule_file(path: &Path, smiles_column: &str) -> Result<Vec<(String, String)>, DatasetError> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if !is_csv {
        let text = std::fs::read_to_string(path)?;
        return Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| {
                let mut parts = l.split_whitespace();
                let smiles = parts.next().unwrap_or("").to_string();
                let id = parts.next().map_or_else(|| format!("mol{i}"), str::to_string);
                (id, smiles)
            })
            .collect());
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let cs = headers
        .iter()
        .position(|h| h == smiles_column)
        .ok_or_else(|| DatasetError::MissingColumn(smiles_column.to_string()))?;
    let ci = headers.iter().position(|h| h == "id");
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = ci.map_or_else(|| format!("mol{i}"), |c| rec[c].to_string());
        out.push((id, rec[cs].to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitConversion {
    /// Affinity in nM to pKi.
    NanomolarToPki,
    /// log10 molar to log10 micromolar.
    LogMolarToLogMicromolar,
}

impl std::str::FromStr for UnitConversion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nM_to_pKi" => Ok(UnitConversion::NanomolarToPki),
            "logM_to_loguM" | "logM_to_logµM" => Ok(UnitConversion::LogMolarToLogMicromolar),
            other => Err(format!("unknown unit conversion '{other}'")),
        }
    }
}

pub fn convert_units(values: &[f64], kind: UnitConversion) -> Result<Vec<f64>, DatasetError> {
    values
        .iter()
        .map(|&v| match kind {
            UnitConversion::NanomolarToPki => {
                if v > 0.0 {
                    Ok(-(v * 1e-9).log10())
                } else {
                    Err(DatasetError::NonPositiveAffinity(v))
                }
            }
            UnitConversion::LogMolarToLogMicromolar => Ok(v + 6.0),
        })
        .collect()
}

/// Percentage of the distinct benchmark substructures that appear in the
/// vocabulary, optionally restricted to its `top_n` ranks.
pub fn substructure_coverage(
    benchmark: &[MolecularGraph],
    vocab: &Vocabulary,
    top_n: Option<usize>,
) -> Result<f64, DatasetError> {
    if benchmark.is_empty() {
        return Err(DatasetError::EmptyBenchmark);
    }
    let mut ids = HashSet::new();
    for g in benchmark {
        ids.extend(morgan_enumerate(g, &vocab.fp).ids());
    }
    if ids.is_empty() {
        return Err(DatasetError::EmptyBenchmark);
    }
    let limit = top_n.unwrap_or(usize::MAX);
    let covered = ids
        .iter()
        .filter(|&&id| vocab.rank(id).is_some_and(|r| (r as usize) <= limit))
        .count();
    Ok(covered as f64 / ids.len() as f64 * 100.0)
}
