use serde::{Deserialize, Serialize};

use super::{check_nbits, FingerprintError, SparseFingerprint};

/// Fixed-length bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FoldedFingerprint {
    words: Vec<u64>,
    nbits: usize,
}

impl FoldedFingerprint {
    pub fn new(nbits: usize) -> Self {
        FoldedFingerprint {
            words: vec![0; nbits.div_ceil(64)],
            nbits,
        }
    }

    pub fn from_bits(nbits: usize, on: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = FoldedFingerprint::new(nbits);
        for b in on {
            fp.set(b);
        }
        fp
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn set(&mut self, bit: usize) {
        assert!(bit < self.nbits, "bit {bit} out of range for length {}", self.nbits);
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        bit < self.nbits && self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> Vec<usize> {
        (0..self.nbits).filter(|&b| self.get(b)).collect()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Bit values as 0.0 / 1.0.
    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.nbits).map(|b| if self.get(b) { 1.0 } else { 0.0 }).collect()
    }

    /// Lowercase hex, least significant bit first within each byte,
    /// bytes in increasing bit order.
    pub fn to_hex(&self) -> String {
        let nbytes = self.nbits.div_ceil(8);
        let bytes: Vec<u8> = (0..nbytes)
            .map(|i| (self.words[i / 8] >> ((i % 8) * 8)) as u8)
            .collect();
        hex::encode(bytes)
    }

    pub fn from_hex(nbits: usize, text: &str) -> Result<Self, String> {
        let bytes = hex::decode(text.trim()).map_err(|e| e.to_string())?;
        if bytes.len() != nbits.div_ceil(8) {
            return Err(format!("expected {} hex bytes, found {}", nbits.div_ceil(8), bytes.len()));
        }
        let mut fp = FoldedFingerprint::new(nbits);
        for (i, b) in bytes.iter().enumerate() {
            fp.words[i / 8] |= (*b as u64) << ((i % 8) * 8);
        }
        if (nbits..nbits.div_ceil(8) * 8).any(|b| fp.words[b / 64] >> (b % 64) & 1 == 1) {
            return Err("bits set beyond the fingerprint length".into());
        }
        Ok(fp)
    }

    pub fn intersection_count(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn union_count(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }
}

/// Set bit `id mod nbits` for every identifier.
pub fn fold_hash(sparse: &SparseFingerprint, nbits: usize) -> Result<FoldedFingerprint, FingerprintError> {
    check_nbits(nbits)?;
    let mut fp = FoldedFingerprint::new(nbits);
    for e in &sparse.environments {
        fp.set((e.id % nbits as u64) as usize);
    }
    Ok(fp)
}

/// |a ∩ b| / |a ∪ b|, or 0 when both are empty.
pub fn tanimoto(a: &FoldedFingerprint, b: &FoldedFingerprint) -> Result<f64, FingerprintError> {
    if a.nbits != b.nbits {
        return Err(FingerprintError::LengthMismatch(a.nbits, b.nbits));
    }
    let union = a.union_count(b);
    if union == 0 {
        return Ok(0.0);
    }
    Ok(a.intersection_count(b) as f64 / union as f64)
}
