use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, DatasetError, LabeledDataset, TaskKind};
use crate::hash::derive_indexed;
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub repeat_id: usize,
    pub fold_id: usize,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
    /// Repeat 0 is reserved for tuning.
    pub tuning_flag: bool,
    /// Binary task whose test side has no positives.
    pub dropped_flag: bool,
}

/// Group k-fold repeated with per-repeat shuffles of the clusters.
///
/// Clusters are shuffled with a repeat-derived seed, stably sorted by
/// descending size and assigned greedily: empty folds first, then the fold
/// with the smallest normalised load. For binary tasks the load of a cluster
/// containing positives also counts positives, spreading them across folds.
pub fn repeated_grouped_cv(
    dataset: &LabeledDataset,
    groups: &ClusterAssignment,
    k: usize,
    repeats: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<SplitPlan>, DatasetError> {
    if k < 2 {
        return Err(DatasetError::TooFewFolds(k));
    }
    let n = dataset.len();
    if groups.cluster_of.len() != n {
        return Err(DatasetError::GroupLength {
            groups: groups.cluster_of.len(),
            records: n,
        });
    }
    let clusters = groups.cluster_count();
    if let Some((record, &cluster)) = groups.cluster_of.iter().enumerate().find(|(_, &c)| c >= clusters) {
        return Err(DatasetError::BadGroup {
            record,
            cluster,
            clusters,
        });
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); clusters];
    for (i, &c) in groups.cluster_of.iter().enumerate() {
        members[c].push(i);
    }
    members.retain(|m| !m.is_empty());
    if members.len() < k {
        return Err(DatasetError::TooFewClusters {
            clusters: members.len(),
            k,
        });
    }
    let binary = dataset.task == TaskKind::Binary;
    let positive: Vec<bool> = dataset.records.iter().map(|r| binary && r.label == 1.0).collect();
    let pos_of: Vec<usize> = members
        .iter()
        .map(|m| m.iter().filter(|&&i| positive[i]).count())
        .collect();
    let total_pos: usize = pos_of.iter().sum();

    let per_repeat = exec.map_range(repeats, |repeat| {
        let rseed = derive_indexed(seed, "grouped-cv", &[repeat as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(rseed);
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.shuffle(&mut rng);
        order.sort_by_key(|&c| std::cmp::Reverse(members[c].len()));

        let target_n = n as f64 / k as f64;
        let target_p = (total_pos as f64 / k as f64).max(f64::MIN_POSITIVE);
        let mut count = vec![0usize; k];
        let mut pos = vec![0usize; k];
        let mut fold_of_cluster = vec![0usize; members.len()];
        for c in order {
            let size = members[c].len();
            let p = pos_of[c];
            let fold = if let Some(empty) = count.iter().position(|&x| x == 0) {
                empty
            } else {
                let cost = |f: usize| {
                    let mut v = (count[f] + size) as f64 / target_n;
                    if p > 0 {
                        v += (pos[f] + p) as f64 / target_p;
                    }
                    v
                };
                (0..k)
                    .min_by(|&a, &b| cost(a).partial_cmp(&cost(b)).unwrap().then(a.cmp(&b)))
                    .expect("k >= 2")
            };
            count[fold] += size;
            pos[fold] += p;
            fold_of_cluster[c] = fold;
        }
        let mut record_fold = vec![0usize; n];
        for (c, m) in members.iter().enumerate() {
            for &i in m {
                record_fold[i] = fold_of_cluster[c];
            }
        }
        (0..k)
            .map(|fold| {
                let test_idx: Vec<usize> = (0..n).filter(|&i| record_fold[i] == fold).collect();
                let train_idx: Vec<usize> = (0..n).filter(|&i| record_fold[i] != fold).collect();
                let dropped_flag = binary && test_idx.iter().all(|&i| !positive[i]);
                SplitPlan {
                    repeat_id: repeat,
                    fold_id: fold,
                    train_idx,
                    test_idx,
                    seed: rseed,
                    tuning_flag: repeat == 0,
                    dropped_flag,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(per_repeat.into_iter().flatten().collect())
}

/// CSV with columns `repeat,fold,record_id,side,dropped_flag`.
pub fn write_split_csv<W: Write>(out: W, plans: &[SplitPlan], dataset: &LabeledDataset) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["repeat", "fold", "record_id", "side", "dropped_flag"])?;
    for p in plans {
        let flag = if p.dropped_flag { "1" } else { "0" };
        let (r, f) = (p.repeat_id.to_string(), p.fold_id.to_string());
        for (side, idx) in [("train", &p.train_idx), ("test", &p.test_idx)] {
            for &i in idx {
                w.write_record([r.as_str(), f.as_str(), dataset.records[i].id.as_str(), side, flag])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_split_csv`]; record ids are resolved against `dataset`.
/// Seeds are not stored in the file and come back as 0.
pub fn read_split_csv<R: Read>(input: R, dataset: &LabeledDataset) -> Result<Vec<SplitPlan>, DatasetError> {
    let index: std::collections::HashMap<&str, usize> = dataset
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let mut plans: BTreeMap<(usize, usize), SplitPlan> = BTreeMap::new();
    let mut rdr = csv::Reader::from_reader(input);
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(DatasetError::SplitFormat(format!("expected 5 fields, found {}", rec.len())));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| DatasetError::SplitFormat(format!("bad integer '{s}'")))
        };
        let (repeat, fold) = (num(&rec[0])?, num(&rec[1])?);
        let i = *index
            .get(&rec[2])
            .ok_or_else(|| DatasetError::SplitFormat(format!("unknown record id '{}'", &rec[2])))?;
        let plan = plans.entry((repeat, fold)).or_insert_with(|| SplitPlan {
            repeat_id: repeat,
            fold_id: fold,
            train_idx: Vec::new(),
            test_idx: Vec::new(),
            seed: 0,
            tuning_flag: repeat == 0,
            dropped_flag: &rec[4] == "1",
        });
        match &rec[3] {
            "train" => plan.train_idx.push(i),
            "test" => plan.test_idx.push(i),
            other => return Err(DatasetError::SplitFormat(format!("bad side '{other}'"))),
        }
    }
    Ok(plans.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Record;

    fn dataset(labels: &[f64], task: TaskKind) -> LabeledDataset {
        let records = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| Record {
                id: format!("m{i}"),
                smiles: "C".into(),
                label: l,
            })
            .collect();
        LabeledDataset::new("t", task, records).unwrap()
    }

    #[test]
    fn singletons_split_evenly() {
        let d = dataset(&[0.0; 10], TaskKind::Regression);
        let plans = repeated_grouped_cv(&d, &ClusterAssignment::singletons(10), 5, 1, 3, Exec::Sequential).unwrap();
        assert_eq!(plans.len(), 5);
        for p in &plans {
            assert_eq!(p.test_idx.len(), 2);
            assert_eq!(p.train_idx.len(), 8);
            assert!(!p.dropped_flag);
            assert!(p.tuning_flag);
        }
    }

    #[test]
    fn big_cluster_stays_whole() {
        let d = dataset(&[0.0; 20], TaskKind::Regression);
        let mut cluster_of = vec![0; 18];
        cluster_of.extend([1, 2]);
        // Need at least k clusters; add more singletons.
        let d = {
            let mut r = d.records.clone();
            for i in 20..23 {
                r.push(Record {
                    id: format!("m{i}"),
                    smiles: "C".into(),
                    label: 0.0,
                });
            }
            LabeledDataset::new("t", TaskKind::Regression, r).unwrap()
        };
        cluster_of.extend([3, 4, 5]);
        let groups = ClusterAssignment {
            cluster_of,
            centroids: vec![0, 18, 19, 20, 21, 22],
            cutoff: 0.65,
        };
        let plans = repeated_grouped_cv(&d, &groups, 5, 3, 9, Exec::Sequential).unwrap();
        for repeat in 0..3 {
            let holding: Vec<_> = plans
                .iter()
                .filter(|p| p.repeat_id == repeat && p.test_idx.contains(&0))
                .collect();
            assert_eq!(holding.len(), 1);
            assert!((0..18).all(|i| holding[0].test_idx.contains(&i)));
        }
    }

    #[test]
    fn positives_in_one_cluster_drop_four_folds() {
        let mut labels = vec![0.0; 20];
        labels[0] = 1.0;
        labels[1] = 1.0;
        labels[2] = 1.0;
        let d = dataset(&labels, TaskKind::Binary);
        let mut cluster_of: Vec<usize> = vec![0, 0, 0];
        cluster_of.extend(1..18);
        let groups = ClusterAssignment {
            cluster_of,
            centroids: (0..18).collect(),
            cutoff: 0.65,
        };
        let plans = repeated_grouped_cv(&d, &groups, 5, 1, 1, Exec::Sequential).unwrap();
        assert_eq!(plans.iter().filter(|p| p.dropped_flag).count(), 4);
    }

    #[test]
    fn errors_and_csv() {
        let d = dataset(&[0.0; 4], TaskKind::Regression);
        assert!(repeated_grouped_cv(&d, &ClusterAssignment::singletons(4), 5, 1, 0, Exec::Sequential).is_err());
        assert!(repeated_grouped_cv(&d, &ClusterAssignment::singletons(4), 1, 1, 0, Exec::Sequential).is_err());
        let plans = repeated_grouped_cv(&d, &ClusterAssignment::singletons(4), 2, 2, 0, Exec::Sequential).unwrap();
        let mut buf = Vec::new();
        write_split_csv(&mut buf, &plans, &d).unwrap();
        let back = read_split_csv(&buf[..], &d).unwrap();
        assert_eq!(back.len(), plans.len());
        for (a, b) in back.iter().zip(&plans) {
            assert_eq!(a.train_idx, b.train_idx);
            assert_eq!(a.test_idx, b.test_idx);
        }
    }
}
