//! Cross-validation fold plans.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldScheme {
    #[serde(rename = "kfold5")]
    KFold5,
    #[serde(rename = "leave_one_out")]
    LeaveOneOut,
}

impl fmt::Display for FoldScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FoldScheme::KFold5 => "kfold5",
            FoldScheme::LeaveOneOut => "leave_one_out",
        })
    }
}

impl FromStr for FoldScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kfold5" => Ok(FoldScheme::KFold5),
            "leave_one_out" | "loo" => Ok(FoldScheme::LeaveOneOut),
            _ => Err(Error::invalid(format!("unknown fold scheme {s:?}; expected kfold5 or leave_one_out"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub scheme: FoldScheme,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Index of the fold whose test set contains `id`.
    pub fn test_fold_of(&self, id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.test.iter().any(|t| t == id))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn make_folds(ids: &[String], scheme: FoldScheme, seed: u64) -> Result<FoldPlan> {
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("duplicate video id in fold construction"));
    }
    let folds = match scheme {
        FoldScheme::KFold5 => {
            const K: usize = 5;
            if ids.len() < K {
                return Err(Error::invalid(format!("kfold5 needs at least {K} videos, got {}", ids.len())));
            }
            let mut order = ids.to_vec();
            order.shuffle(&mut rng::stream(seed, "folds"));
            let (base, extra) = (order.len() / K, order.len() % K);
            let mut start = 0;
            (0..K)
                .map(|k| {
                    let size = base + usize::from(k < extra);
                    let test = order[start..start + size].to_vec();
                    let train = order[..start].iter().chain(&order[start + size..]).cloned().collect();
                    start += size;
                    Fold { index: k, train, test }
                })
                .collect()
        }
        FoldScheme::LeaveOneOut => {
            if ids.len() < 2 {
                return Err(Error::invalid("leave-one-out needs at least 2 videos"));
            }
            (0..ids.len())
                .map(|k| Fold {
                    index: k,
                    train: ids.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, s)| s.clone()).collect(),
                    test: vec![ids[k].clone()],
                })
                .collect()
        }
    };
    Ok(FoldPlan { scheme, seed, folds })
}
