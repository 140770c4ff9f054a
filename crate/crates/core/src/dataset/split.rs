//! Train/validation/test splits and k-fold assignment over whole sequences.
//!
//! Frames of one sequence share one ground truth, so splitting happens at
//! sequence granularity to keep a specimen out of both train and test.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::config(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::domain("split ratios must be finite and >= 0"));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` items; ties go to the earlier
    /// split.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let quotas = [self.train, self.val, self.test].map(|r| r * n as f64);
        let mut sizes = quotas.map(|q| q.floor() as usize);
        let mut left = n - sizes.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        sizes
    }
}

/// Assignment of every sequence to a split and a cross-validation fold.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPlan {
    /// `None` for plans read back from disk.
    pub seed: Option<u64>,
    pub ratios: Option<SplitRatios>,
    pub assignment: BTreeMap<String, Split>,
    pub folds: BTreeMap<String, usize>,
}

// Separate streams so the split and fold shuffles are independent.
const SPLIT_STREAM: u64 = 1;
const FOLD_STREAM: u64 = 2;

fn shuffled(ids: &[String], seed: u64, stream: u64) -> Result<Vec<String>> {
    if ids.is_empty() {
        return Err(Error::domain("no sequence ids to split"));
    }
    let mut v = ids.to_vec();
    v.sort();
    if let Some(w) = v.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::domain(format!("duplicate sequence id `{}`", w[0])));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    v.shuffle(&mut rng);
    Ok(v)
}

/// Seeded shuffle, then contiguous train/val/test blocks.
pub fn split_dataset(
    ids: &[String],
    seed: u64,
    ratios: SplitRatios,
) -> Result<BTreeMap<String, Split>> {
    ratios.validate()?;
    let order = shuffled(ids, seed, SPLIT_STREAM)?;
    let [train, val, _] = ratios.sizes(order.len());
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let s = if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            };
            (id, s)
        })
        .collect())
}

/// Seeded shuffle, then `k` contiguous folds whose sizes differ by at most
/// one (the larger folds come first).
pub fn kfold(ids: &[String], k: usize, seed: u64) -> Result<BTreeMap<String, usize>> {
    if k == 0 || k > ids.len() {
        return Err(Error::domain(format!(
            "fold count {k} must be in 1..={}",
            ids.len()
        )));
    }
    let order = shuffled(ids, seed, FOLD_STREAM)?;
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut out = BTreeMap::new();
    let mut it = order.into_iter();
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for id in it.by_ref().take(size) {
            out.insert(id, fold);
        }
    }
    Ok(out)
}

impl SplitPlan {
    pub fn new(ids: &[String], seed: u64, ratios: SplitRatios, k: usize) -> Result<Self> {
        Ok(Self {
            seed: Some(seed),
            ratios: Some(ratios),
            assignment: split_dataset(ids, seed, ratios)?,
            folds: kfold(ids, k, seed)?,
        })
    }

    pub fn ids_in(&self, split: Split) -> Vec<String> {
        self.assignment
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn ids_in_fold(&self, fold: usize) -> Vec<String> {
        self.folds
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn fold_count(&self) -> usize {
        self.folds.values().max().map_or(0, |m| m + 1)
    }

    /// One `id<TAB>split<TAB>fold` line per sequence, sorted by id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, split) in &self.assignment {
            let fold = self.folds.get(id).copied().unwrap_or(0);
            out.push_str(&format!("{id}\t{split}\t{fold}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut assignment = BTreeMap::new();
        let mut folds = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let [id, split, fold] = parts[..] else {
                return Err(Error::config(format!(
                    "line {}: expected `id<TAB>split<TAB>fold`",
                    n + 1
                )));
            };
            let split: Split = split.parse()?;
            let fold: usize = fold
                .parse()
                .map_err(|_| Error::config(format!("line {}: bad fold `{fold}`", n + 1)))?;
            if assignment.insert(id.to_string(), split).is_some() {
                return Err(Error::config(format!("line {}: duplicate id `{id}`", n + 1)));
            }
            folds.insert(id.to_string(), fold);
        }
        Ok(Self {
            seed: None,
            ratios: None,
            assignment,
            folds,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::format(path, "split plan", e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
