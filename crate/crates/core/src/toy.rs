//! Deterministic synthetic molecules and labels for smoke runs and tests.
//!
//! Molecules are linear assemblies of fragment strings: a head group, one to
//! four linkers and a tail group. Labels are linear in the counts of a few
//! frequent small circular substructures.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::chem::{parse_smiles, MolecularGraph};
use crate::datasets::{LabeledDataset, Record, TaskKind};
use crate::fingerprints::{morgan_enumerate, FingerprintConfig};
use crate::hash::derive_seed;

const HEADS: &[&str] = &[
    "C", "CC", "F", "Cl", "Br", "OC", "N#C", "OC(=O)", "c1ccccc1", "FC(F)(F)", "Cl[C@H](F)", "C[C@@H](O)", "NC(=O)",
    "c1ccncc1", "CC(C)", "O=C(N)",
];
const LINKERS: &[&str] = &[
    "C", "CC", "O", "N", "C(=O)", "c1ccc(cc1)", "c1cc(ccn1)", "C1CCC(CC1)", "C(F)", "C(C)", "S", "C(=O)N", "N(C)",
    "C=C", "c1ccc2cc(ccc2c1)", "C1CN(CC1)", "c1ccc(o1)", "CO", "C(O)",
];
const TAILS: &[&str] = &[
    "C", "F", "Cl", "Br", "O", "N", "C#N", "C(=O)O", "c1ccccc1", "C(F)(F)F", "[C@@H](O)C", "[C@H](F)Cl", "C(=O)N",
    "c1ccccn1", "S(=O)(=O)N", "OC",
];

/// `count` distinct parseable SMILES drawn from the fragment grammar.
pub fn toy_smiles(count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "toy-smiles"));
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        assert!(attempts < count * 1000 + 10_000, "fragment grammar exhausted");
        let mut s = String::from(*HEADS.choose(&mut rng).expect("non-empty"));
        for _ in 0..rng.gen_range(1..=4) {
            s.push_str(LINKERS.choose(&mut rng).expect("non-empty"));
        }
        s.push_str(TAILS.choose(&mut rng).expect("non-empty"));
        if parse_smiles(&s).is_ok() && seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Parsed toy molecules.
pub fn toy_molecules(count: usize, seed: u64) -> Vec<MolecularGraph> {
    toy_smiles(count, seed)
        .iter()
        .map(|s| parse_smiles(s).expect("grammar yields valid SMILES"))
        .collect()
}

/// Substructure ids of radius ≤ 1 ranked by how many molecules contain
/// them, most frequent first, ties by ascending id.
fn frequent_small_ids(graphs: &[MolecularGraph], take: usize) -> Vec<u64> {
    let cfg = FingerprintConfig::ecfp(1, 2048);
    let mut freq: BTreeMap<u64, usize> = BTreeMap::new();
    for g in graphs {
        for (id, _) in morgan_enumerate(g, &cfg).entries() {
            *freq.entry(id).or_default() += 1;
        }
    }
    let mut ranked: Vec<(u64, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(take).map(|(id, _)| id).collect()
}

/// Substructure occurrence counts (atoms centred on the environment).
pub fn substructure_counts(graph: &MolecularGraph, ids: &[u64]) -> Vec<f64> {
    let cfg = FingerprintConfig::ecfp(1, 2048);
    let fp = morgan_enumerate(graph, &cfg);
    ids.iter()
        .map(|id| fp.environments.iter().filter(|e| e.id == *id).count() as f64)
        .collect()
}

const WEIGHTS: [f64; 6] = [0.6, -0.9, 1.2, 0.8, -0.7, 1.0];

/// Regression labels linear in substructure counts plus Gaussian noise, and
/// binary labels marking the top fifth.
pub fn toy_labels(graphs: &[MolecularGraph], noise: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let ids = frequent_small_ids(graphs, WEIGHTS.len() + 2);
    let ids = &ids[2..];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "toy-labels"));
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let y: Vec<f64> = graphs
        .iter()
        .map(|g| {
            let c = substructure_counts(g, ids);
            let signal: f64 = c.iter().zip(WEIGHTS).map(|(c, w)| c * w).sum();
            signal + if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 }
        })
        .collect();
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[(sorted.len() * 4) / 5];
    let binary = y.iter().map(|&v| f64::from(v >= cut)).collect();
    (y, binary)
}

/// Bundled benchmark dataset built from [`toy_smiles`] and [`toy_labels`].
pub fn toy_dataset(count: usize, seed: u64, task: TaskKind) -> LabeledDataset {
    let smiles = toy_smiles(count, seed);
    let graphs: Vec<MolecularGraph> = smiles.iter().map(|s| parse_smiles(s).expect("valid")).collect();
    let (reg, bin) = toy_labels(&graphs, 0.1, seed);
    let labels = if task == TaskKind::Binary { bin } else { reg };
    let records = smiles
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (smiles, label))| Record {
            id: format!("toy{i:04}"),
            smiles,
            label,
        })
        .collect();
    LabeledDataset::new("toy", task, records).expect("labels are finite")
}
