//! Frequency-ranked substructure vocabularies ("Sort & Slice"), per-atom token
//! tensors and the sliced binary vectors used by the classical baseline.
//!
//! Token layout: 0 is padding, ranks run from 1 (most frequent) to the sliced
//! vocabulary size, and the unknown token follows the last rank.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chem::{to_smiles, MolecularGraph};
use crate::fingerprints::{morgan_enumerate, FingerprintConfig, SparseFingerprint};
use crate::par::Exec;

pub const PAD_TOKEN: u32 = 0;
pub const VOCAB_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("slice size k must be at least 1")]
    ZeroK,
    #[error("fingerprint configuration mismatch: vocabulary uses {vocab:?}, caller uses {caller:?}")]
    ConfigMismatch {
        vocab: FingerprintConfig,
        caller: FingerprintConfig,
    },
    #[error("unsupported vocabulary version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub id: u64,
    pub radius: u32,
    /// Number of corpus molecules containing the substructure.
    pub count: usize,
    pub rank: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabRecord")]
pub struct Vocabulary {
    pub version: u32,
    pub r_max: u32,
    pub k: usize,
    pub fp: FingerprintConfig,
    pub corpus_fingerprint: String,
    /// Ranked entries, rank ascending.
    pub entries: Vec<VocabEntry>,
    #[serde(skip)]
    rank_of: HashMap<u64, u32>,
}

#[derive(Deserialize)]
struct VocabRecord {
    version: u32,
    r_max: u32,
    k: usize,
    fp: FingerprintConfig,
    corpus_fingerprint: String,
    entries: Vec<VocabEntry>,
}

impl From<VocabRecord> for Vocabulary {
    fn from(r: VocabRecord) -> Self {
        let rank_of = r.entries.iter().map(|e| (e.id, e.rank)).collect();
        Vocabulary {
            version: r.version,
            r_max: r.r_max,
            k: r.k,
            fp: r.fp,
            corpus_fingerprint: r.corpus_fingerprint,
            entries: r.entries,
            rank_of,
        }
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, o: &Self) -> bool {
        self.version == o.version
            && self.r_max == o.r_max
            && self.k == o.k
            && self.fp == o.fp
            && self.corpus_fingerprint == o.corpus_fingerprint
            && self.entries == o.entries
    }
}

impl Vocabulary {
    pub fn unk_token(&self) -> u32 {
        self.entries.len() as u32 + 1
    }

    /// Embedding rows needed: pad, ranks and unk.
    pub fn size(&self) -> usize {
        self.entries.len() + 2
    }

    pub fn rank(&self, id: u64) -> Option<u32> {
        self.rank_of.get(&id).copied()
    }

    /// Rank or unk.
    pub fn token_for(&self, id: u64) -> u32 {
        self.rank(id).unwrap_or_else(|| self.unk_token())
    }

    pub fn entry_for_token(&self, token: u32) -> Option<&VocabEntry> {
        if token == PAD_TOKEN {
            return None;
        }
        self.entries.get(token as usize - 1)
    }

    pub fn check_config(&self, caller: &FingerprintConfig) -> Result<(), VocabError> {
        if *caller != self.fp {
            return Err(VocabError::ConfigMismatch {
                vocab: self.fp,
                caller: *caller,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, VocabError> {
        let v: Vocabulary = serde_json::from_str(text)?;
        if v.version != VOCAB_VERSION {
            return Err(VocabError::Version(v.version));
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// SHA-256 over the newline-joined SMILES of a corpus.
pub fn corpus_fingerprint(corpus: &[MolecularGraph]) -> String {
    let mut h = Sha256::new();
    for g in corpus {
        h.update(to_smiles(g).as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Count each substructure once per molecule, sort by descending count with
/// ascending id as the tie-break, keep the top `k`.
pub fn build_vocabulary(
    corpus: &[MolecularGraph],
    fp: &FingerprintConfig,
    k: usize,
    exec: Exec,
) -> Result<Vocabulary, VocabError> {
    if corpus.is_empty() {
        return Err(VocabError::EmptyCorpus);
    }
    if k == 0 {
        return Err(VocabError::ZeroK);
    }
    let per_molecule: Vec<Vec<(u64, u32)>> = exec.map(corpus, |g| {
        // One radius per id: the smallest radius at which it occurs.
        let mut e = morgan_enumerate(g, fp).entries();
        e.sort_unstable_by_key(|&(id, r)| (id, r));
        e.dedup_by_key(|x| x.0);
        e
    });
    let mut counts: HashMap<u64, (usize, u32)> = HashMap::new();
    for entries in &per_molecule {
        for &(id, radius) in entries {
            let slot = counts.entry(id).or_insert((0, radius));
            slot.0 += 1;
            slot.1 = slot.1.min(radius);
        }
    }
    let mut sorted: Vec<(u64, usize, u32)> = counts.into_iter().map(|(id, (c, r))| (id, c, r)).collect();
    sorted.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted.truncate(k);
    let entries: Vec<VocabEntry> = sorted
        .into_iter()
        .enumerate()
        .map(|(i, (id, count, radius))| VocabEntry {
            id,
            radius,
            count,
            rank: i as u32 + 1,
        })
        .collect();
    Ok(VocabRecord {
        version: VOCAB_VERSION,
        r_max: fp.radius,
        k,
        fp: *fp,
        corpus_fingerprint: corpus_fingerprint(corpus),
        entries,
    }
    .into())
}

/// Per-atom, per-radius token matrix of one molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedGraph {
    pub graph: MolecularGraph,
    /// Row-major `atoms × (r_max + 1)`.
    pub tokens: Vec<u32>,
    pub width: usize,
    pub vocab_ref: String,
}

impl TokenizedGraph {
    pub fn atom_count(&self) -> usize {
        self.graph.atom_count()
    }

    pub fn token(&self, atom: usize, radius: usize) -> u32 {
        self.tokens[atom * self.width + radius]
    }

    pub fn row(&self, atom: usize) -> &[u32] {
        &self.tokens[atom * self.width..(atom + 1) * self.width]
    }

    /// `(atom, radius)` cells holding `token`, in row-major order.
    pub fn locations(&self, token: u32) -> Vec<(usize, usize)> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == token)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    pub fn contains(&self, token: u32) -> bool {
        self.tokens.contains(&token)
    }
}

pub fn tokenize(graph: &MolecularGraph, vocab: &Vocabulary) -> TokenizedGraph {
    tokenize_sparse(graph, &morgan_enumerate(graph, &vocab.fp), vocab)
}

/// Tokenise with an explicit caller configuration, refusing a mismatch.
pub fn tokenize_checked(
    graph: &MolecularGraph,
    vocab: &Vocabulary,
    caller: &FingerprintConfig,
) -> Result<TokenizedGraph, VocabError> {
    vocab.check_config(caller)?;
    Ok(tokenize(graph, vocab))
}

fn tokenize_sparse(graph: &MolecularGraph, sparse: &SparseFingerprint, vocab: &Vocabulary) -> TokenizedGraph {
    let width = vocab.r_max as usize + 1;
    let mut tokens = vec![PAD_TOKEN; graph.atom_count() * width];
    for env in &sparse.environments {
        tokens[env.central_atom * width + env.radius as usize] = vocab.token_for(env.id);
    }
    TokenizedGraph {
        graph: graph.clone(),
        tokens,
        width,
        vocab_ref: vocab.corpus_fingerprint.clone(),
    }
}

pub fn tokenize_batch(graphs: &[MolecularGraph], vocab: &Vocabulary, exec: Exec) -> Vec<TokenizedGraph> {
    exec.map(graphs, |g| tokenize(g, vocab))
}

/// Length-`k` binary vector with position `rank - 1` set for every vocabulary
/// substructure present. Unknown substructures are not encoded.
pub fn sort_slice_vector(graph: &MolecularGraph, vocab: &Vocabulary) -> Vec<f64> {
    let mut v = vec![0.0; vocab.k];
    for (id, _) in morgan_enumerate(graph, &vocab.fp).entries() {
        if let Some(rank) = vocab.rank(id) {
            v[rank as usize - 1] = 1.0;
        }
    }
    v
}

pub fn sort_slice_matrix(graphs: &[MolecularGraph], vocab: &Vocabulary, exec: Exec) -> Vec<Vec<f64>> {
    exec.map(graphs, |g| sort_slice_vector(g, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn corpus(smiles: &[&str]) -> Vec<MolecularGraph> {
        smiles.iter().map(|s| parse_smiles(s).unwrap()).collect()
    }

    fn cfg(r: u32) -> FingerprintConfig {
        FingerprintConfig::ecfp(r, 2048)
    }

    #[test]
    fn methane_corpus() {
        let v = build_vocabulary(&corpus(&["C", "C", "C"]), &cfg(0), 8, Exec::Sequential).unwrap();
        assert_eq!(v.entries.len(), 1);
        assert_eq!(v.entries[0].count, 3);
        assert_eq!(v.entries[0].rank, 1);
        assert_eq!(v.unk_token(), 2);
        let t = tokenize(&parse_smiles("C").unwrap(), &v);
        assert_eq!(t.tokens, vec![1]);
        assert_eq!(sort_slice_vector(&parse_smiles("C").unwrap(), &v)[0], 1.0);
        // Methyl carbon and hydroxyl oxygen are both out of vocabulary.
        let t = tokenize(&parse_smiles("CO").unwrap(), &v);
        assert_eq!(t.tokens, vec![v.unk_token(), v.unk_token()]);
        let s = sort_slice_vector(&parse_smiles("O").unwrap(), &v);
        assert!(s.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn slicing_sends_rare_ids_to_unk() {
        let v = build_vocabulary(&corpus(&["CC", "CCO", "CO"]), &cfg(0), 1, Exec::Sequential).unwrap();
        assert_eq!(v.entries.len(), 1);
        assert_eq!(v.entries[0].count, 3);
        let t = tokenize(&parse_smiles("CO").unwrap(), &v);
        assert_eq!(t.token(0, 0), 1);
        assert_eq!(t.token(1, 0), v.unk_token());
    }

    #[test]
    fn benzene_columns_are_uniform() {
        let v = build_vocabulary(&corpus(&["c1ccccc1", "Cc1ccccc1"]), &cfg(1), 64, Exec::Sequential).unwrap();
        let t = tokenize(&parse_smiles("c1ccccc1").unwrap(), &v);
        for col in 0..2 {
            let vals: Vec<u32> = (0..6).map(|a| t.token(a, col)).collect();
            assert!(vals.iter().all(|&x| x == vals[0] && x != PAD_TOKEN));
        }
    }

    #[test]
    fn pad_marks_removed_environments() {
        let v = build_vocabulary(&corpus(&["CC"]), &cfg(1), 64, Exec::Sequential).unwrap();
        let t = tokenize(&parse_smiles("CC").unwrap(), &v);
        // Both atoms share the radius-1 atom set; only atom 0 keeps it.
        assert_ne!(t.token(0, 1), PAD_TOKEN);
        assert_eq!(t.token(1, 1), PAD_TOKEN);
    }

    #[test]
    fn json_round_trip_and_config_check() {
        let v = build_vocabulary(&corpus(&["CCO", "c1ccccc1O"]), &cfg(2), 10, Exec::Sequential).unwrap();
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.rank(v.entries[3].id), Some(4));
        assert!(v.check_config(&cfg(1)).is_err());
        assert!(tokenize_checked(&parse_smiles("C").unwrap(), &v, &cfg(2)).is_ok());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            build_vocabulary(&[], &cfg(0), 1, Exec::Sequential),
            Err(VocabError::EmptyCorpus)
        ));
        assert!(matches!(
            build_vocabulary(&corpus(&["C"]), &cfg(0), 0, Exec::Sequential),
            Err(VocabError::ZeroK)
        ));
    }
}
