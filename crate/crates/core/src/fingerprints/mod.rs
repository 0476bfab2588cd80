//! Morgan circular substructures, bit folding and Tanimoto similarity.

mod bits;
mod invariants;
mod io;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::MolecularGraph;
use crate::hash::hash_words;
use crate::par::Exec;

pub use bits::{fold_hash, tanimoto, FoldedFingerprint};
pub use invariants::{
    atom_invariants, canonical_chirality, pharmacophore_class, refined_classes, CLASS_ACCEPTOR,
    CLASS_ACIDIC, CLASS_AROMATIC, CLASS_BASIC, CLASS_DONOR, CLASS_HALOGEN,
};
pub use io::{read_folded_csv, read_sparse_tsv, write_folded_csv, write_sparse_tsv};

pub const MAX_RADIUS: u32 = 8;
const ITERATION_SEED: u64 = 0x4D4F_5247; // "MORG"

#[derive(Debug, Error)]
pub enum FingerprintError {
    #[error("fingerprint length must be positive")]
    ZeroBits,
    #[error("fingerprint length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("radius {0} exceeds the maximum of {MAX_RADIUS}")]
    RadiusTooLarge(u32),
    #[error("fingerprint lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("malformed fingerprint record on line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InvariantKind {
    #[default]
    Ecfp,
    Fcfp,
}

impl std::str::FromStr for InvariantKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ecfp" => Ok(InvariantKind::Ecfp),
            "fcfp" => Ok(InvariantKind::Fcfp),
            other => Err(format!("unknown fingerprint kind '{other}' (expected ecfp or fcfp)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FingerprintConfig {
    pub radius: u32,
    pub nbits: usize,
    pub use_chirality: bool,
    pub kind: InvariantKind,
}

impl Default for FingerprintConfig {
    fn default() -> Self {
        FingerprintConfig {
            radius: 2,
            nbits: 2048,
            use_chirality: true,
            kind: InvariantKind::Ecfp,
        }
    }
}

impl FingerprintConfig {
    pub fn ecfp(radius: u32, nbits: usize) -> Self {
        FingerprintConfig {
            radius,
            nbits,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), FingerprintError> {
        check_nbits(self.nbits)?;
        if self.radius > MAX_RADIUS {
            return Err(FingerprintError::RadiusTooLarge(self.radius));
        }
        Ok(())
    }
}

pub(crate) fn check_nbits(nbits: usize) -> Result<(), FingerprintError> {
    if nbits == 0 {
        return Err(FingerprintError::ZeroBits);
    }
    if !nbits.is_power_of_two() {
        return Err(FingerprintError::NotPowerOfTwo(nbits));
    }
    Ok(())
}

/// One retained circular environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubstructureId {
    pub id: u64,
    pub radius: u32,
    pub central_atom: usize,
    /// Sorted indices of the atoms within `radius` bonds of the centre.
    pub atom_set: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SparseFingerprint {
    /// Retained environments after duplicate removal, ordered by radius then atom.
    pub environments: Vec<SubstructureId>,
    pub molecule_ref: String,
}

impl SparseFingerprint {
    /// Distinct `(id, radius)` pairs, sorted.
    pub fn entries(&self) -> Vec<(u64, u32)> {
        let mut v: Vec<(u64, u32)> = self.environments.iter().map(|e| (e.id, e.radius)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Distinct identifiers, sorted.
    pub fn ids(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.environments.iter().map(|e| e.id).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn is_empty(&self) -> bool {
        self.environments.is_empty()
    }
}

/// Enumerate circular environments for radii `0..=config.radius`.
///
/// Environments covering an atom set already seen are dropped; the lower
/// radius wins, then the smaller identifier, then the lower centre index.
pub fn morgan_enumerate(graph: &MolecularGraph, config: &FingerprintConfig) -> SparseFingerprint {
    let n = graph.atom_count();
    let words = n.div_ceil(64).max(1);
    let mut ids = atom_invariants(graph, config.kind, config.use_chirality);
    let mut sets: Vec<Vec<u64>> = (0..n)
        .map(|i| {
            let mut s = vec![0u64; words];
            s[i / 64] |= 1 << (i % 64);
            s
        })
        .collect();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut environments = Vec::new();

    for radius in 0..=config.radius {
        if radius > 0 {
            let next_ids: Vec<u64> = (0..n)
                .map(|i| {
                    let mut pairs: Vec<(u64, u64)> = graph
                        .neighbors(i)
                        .iter()
                        .map(|nb| (graph.bonds[nb.bond].order.code(), ids[nb.atom]))
                        .collect();
                    pairs.sort_unstable();
                    let mut w = Vec::with_capacity(2 + 2 * pairs.len());
                    w.push(radius as u64);
                    w.push(ids[i]);
                    for (b, id) in pairs {
                        w.push(b);
                        w.push(id);
                    }
                    hash_words(ITERATION_SEED, &w)
                })
                .collect();
            let next_sets: Vec<Vec<u64>> = (0..n)
                .map(|i| {
                    let mut s = sets[i].clone();
                    for nb in graph.neighbors(i) {
                        for (w, o) in s.iter_mut().zip(&sets[nb.atom]) {
                            *w |= o;
                        }
                    }
                    s
                })
                .collect();
            ids = next_ids;
            sets = next_sets;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (ids[i], i));
        let mut kept = Vec::new();
        for i in order {
            if seen.insert(sets[i].clone()) {
                kept.push(i);
            }
        }
        kept.sort_unstable();
        for i in kept {
            environments.push(SubstructureId {
                id: ids[i],
                radius,
                central_atom: i,
                atom_set: set_members(&sets[i]),
            });
        }
    }
    SparseFingerprint {
        environments,
        molecule_ref: graph.source_smiles.clone(),
    }
}

fn set_members(bits: &[u64]) -> Vec<usize> {
    let mut out = Vec::new();
    for (w, &word) in bits.iter().enumerate() {
        let mut x = word;
        while x != 0 {
            let b = x.trailing_zeros() as usize;
            out.push(w * 64 + b);
            x &= x - 1;
        }
    }
    out
}

pub fn sparse_batch(graphs: &[MolecularGraph], config: &FingerprintConfig, exec: Exec) -> Vec<SparseFingerprint> {
    exec.map(graphs, |g| morgan_enumerate(g, config))
}

/// Enumerate and fold in one pass.
pub fn folded_batch(
    graphs: &[MolecularGraph],
    config: &FingerprintConfig,
    exec: Exec,
) -> Result<Vec<FoldedFingerprint>, FingerprintError> {
    config.validate()?;
    Ok(exec.map(graphs, |g| {
        fold_hash(&morgan_enumerate(g, config), config.nbits).expect("validated length")
    }))
}
