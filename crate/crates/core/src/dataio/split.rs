use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::MultimodalDataset;
use crate::error::{Error, Result};
use crate::numcore::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SplitKind {
    Holdout { test_fraction: f64 },
    Kfold { k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub stratify_by_event: bool,
    pub seed: u64,
}

impl SplitSpec {
    pub fn holdout(test_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            kind: SplitKind::Holdout { test_fraction },
            stratify_by_event: true,
            seed,
        }
    }

    pub fn kfold(k: usize, seed: u64) -> Self {
        SplitSpec {
            kind: SplitKind::Kfold { k },
            stratify_by_event: true,
            seed,
        }
    }
}

/// Disjoint train/test index sets, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split over explicit event flags; see [`make_split`].
pub fn split_indices(events: &[bool], spec: &SplitSpec) -> Result<Vec<Fold>> {
    let n = events.len();
    let strata: Vec<Vec<usize>> = if spec.stratify_by_event {
        vec![
            (0..n).filter(|&i| events[i]).collect(),
            (0..n).filter(|&i| !events[i]).collect(),
        ]
    } else {
        vec![(0..n).collect()]
    };
    let mut shuffled = Vec::with_capacity(strata.len());
    for (s, members) in strata.into_iter().enumerate() {
        let mut members = members;
        let mut r = rng::stream(spec.seed, &[rng::domain::SPLIT, s as u64]);
        members.shuffle(&mut r);
        shuffled.push(members);
    }

    match spec.kind {
        SplitKind::Holdout { test_fraction } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::invalid(format!("test fraction {test_fraction} outside (0,1)")));
            }
            let mut test = Vec::new();
            let mut train = Vec::new();
            for members in &shuffled {
                if members.is_empty() {
                    continue;
                }
                if spec.stratify_by_event && members.len() < 2 {
                    return Err(Error::invalid(format!(
                        "stratum of size {} is too small for a holdout split",
                        members.len()
                    )));
                }
                let take = (members.len() as f64 * test_fraction).round() as usize;
                test.extend_from_slice(&members[..take]);
                train.extend_from_slice(&members[take..]);
            }
            if test.is_empty() || train.is_empty() {
                return Err(Error::invalid("holdout split leaves an empty side"));
            }
            test.sort_unstable();
            train.sort_unstable();
            Ok(vec![Fold { train, test }])
        }
        SplitKind::Kfold { k } => {
            if k < 2 {
                return Err(Error::invalid(format!("k-fold needs k ≥ 2, got {k}")));
            }
            if n < k {
                return Err(Error::invalid(format!("{n} patients cannot fill {k} folds")));
            }
            let mut assignment = vec![0usize; n];
            let mut offset = 0;
            for members in &shuffled {
                if spec.stratify_by_event && !members.is_empty() && members.len() < k {
                    return Err(Error::invalid(format!(
                        "stratum of size {} is smaller than k = {k}",
                        members.len()
                    )));
                }
                for (pos, &i) in members.iter().enumerate() {
                    assignment[i] = (offset + pos) % k;
                }
                offset = (offset + members.len()) % k;
            }
            Ok((0..k)
                .map(|f| Fold {
                    train: (0..n).filter(|&i| assignment[i] != f).collect(),
                    test: (0..n).filter(|&i| assignment[i] == f).collect(),
                })
                .collect())
        }
    }
}

/// Stratified (by event indicator) holdout or k-fold split.
pub fn make_split(dataset: &MultimodalDataset, spec: &SplitSpec) -> Result<Vec<Fold>> {
    let events: Vec<bool> = dataset.records().iter().map(|r| r.event).collect();
    split_indices(&events, spec)
}
