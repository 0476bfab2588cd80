use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::chem::MolecularGraph;
use crate::fingerprints::{folded_batch, tanimoto, FingerprintConfig, FoldedFingerprint, InvariantKind};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Molecules with similarity strictly above this to any benchmark molecule are removed.
    pub threshold: f64,
    pub target_size: Option<usize>,
    pub seed: u64,
}

/// Fingerprint used for all similarity filtering: ECFP, radius 2, 2048 bits, chirality on.
pub fn filter_fingerprint_config() -> FingerprintConfig {
    FingerprintConfig {
        radius: 2,
        nbits: 2048,
        use_chirality: true,
        kind: InvariantKind::Ecfp,
    }
}

/// Indices (ascending) of pre-training molecules whose maximum similarity to
/// every benchmark molecule is `<= threshold`, optionally subsampled
/// uniformly without replacement.
pub fn similarity_filter(
    pretrain: &[FoldedFingerprint],
    benchmark: &[FoldedFingerprint],
    config: &FilterConfig,
    exec: Exec,
) -> Result<Vec<usize>, DatasetError> {
    if !(config.threshold > 0.0 && config.threshold <= 1.0) {
        return Err(DatasetError::BadThreshold(config.threshold));
    }
    let keep = exec.map(pretrain, |p| {
        benchmark
            .iter()
            .all(|b| tanimoto(p, b).map(|s| s <= config.threshold).unwrap_or(false))
    });
    let survivors: Vec<usize> = keep
        .iter()
        .enumerate()
        .filter(|(_, &k)| k)
        .map(|(i, _)| i)
        .collect();
    let Some(target) = config.target_size else {
        return Ok(survivors);
    };
    if target > survivors.len() {
        return Err(DatasetError::TargetTooLarge {
            target,
            survivors: survivors.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picked: Vec<usize> = sample(&mut rng, survivors.len(), target)
        .into_iter()
        .map(|i| survivors[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

pub fn similarity_filter_graphs(
    pretrain: &[MolecularGraph],
    benchmark: &[MolecularGraph],
    config: &FilterConfig,
    exec: Exec,
) -> Result<Vec<usize>, DatasetError> {
    let fp = filter_fingerprint_config();
    let p = folded_batch(pretrain, &fp, exec)?;
    let b = folded_batch(benchmark, &fp, exec)?;
    similarity_filter(&p, &b, config, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn cfg(t: f64) -> FilterConfig {
        FilterConfig {
            threshold: t,
            target_size: None,
            seed: 1,
        }
    }

    #[test]
    fn identical_sets_are_emptied() {
        let g: Vec<_> = ["CCO", "c1ccccc1", "CC(=O)N"].iter().map(|s| parse_smiles(s).unwrap()).collect();
        assert!(similarity_filter_graphs(&g, &g, &cfg(0.5), Exec::Sequential).unwrap().is_empty());
    }

    #[test]
    fn borderline_pair_is_retained() {
        let a = FoldedFingerprint::from_bits(16, [1, 2, 3]);
        let b = FoldedFingerprint::from_bits(16, [2, 3, 4]);
        let c = FoldedFingerprint::from_bits(16, [2, 3]);
        // a~b = 0.5 exactly, c~b = 2/3.
        let kept = similarity_filter(&[a, c], &[b], &cfg(0.5), Exec::Sequential).unwrap();
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn subsampling() {
        let p: Vec<_> = (0..10).map(|i| FoldedFingerprint::from_bits(64, [i])).collect();
        let b = vec![FoldedFingerprint::from_bits(64, [63])];
        let mut c = cfg(0.5);
        c.target_size = Some(4);
        let kept = similarity_filter(&p, &b, &c, Exec::Sequential).unwrap();
        assert_eq!(kept.len(), 4);
        assert_eq!(kept, similarity_filter(&p, &b, &c, Exec::Parallel).unwrap());
        c.target_size = Some(11);
        assert!(similarity_filter(&p, &b, &c, Exec::Sequential).is_err());
        assert!(similarity_filter(&p, &b, &cfg(0.0), Exec::Sequential).is_err());
    }
}
