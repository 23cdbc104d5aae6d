//! Train/test overlap via the Longest Common Sub-Trajectory.
//!
//! Each test trajectory is scored by its best LCST against the same user's
//! training trajectories, normalized by the test length, and binned.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::TileId;
use crate::model::Trajectory;

/// Length of the longest common subsequence of two tile sequences.
///
/// Rolling single-row dynamic program over the shorter sequence.
pub fn lcst<T: PartialEq>(p: &[T], r: &[T]) -> usize {
    let (long, short) = if p.len() >= r.len() { (p, r) } else { (r, p) };
    if short.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; short.len() + 1];
    for a in long {
        let mut diag = 0; // f(i-1, j-1)
        for (j, b) in short.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if a == b { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[short.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OverlapBin {
    #[serde(rename = "0-20")]
    B0_20,
    #[serde(rename = "20-40")]
    B20_40,
    #[serde(rename = "40-60")]
    B40_60,
    #[serde(rename = "60-80")]
    B60_80,
    #[serde(rename = "80-100")]
    B80_100,
    /// Exactly zero overlap; kept out of every bin.
    #[serde(rename = "excluded-0")]
    ExcludedZero,
}

impl OverlapBin {
    pub const RETAINED: [OverlapBin; 5] = [
        OverlapBin::B0_20,
        OverlapBin::B20_40,
        OverlapBin::B40_60,
        OverlapBin::B60_80,
        OverlapBin::B80_100,
    ];

    /// Half-open bins `(0, 0.2]`, `(0.2, 0.4]`, ... ; exactly 0 is excluded.
    pub fn from_normalized(x: f64) -> OverlapBin {
        if x <= 0.0 {
            OverlapBin::ExcludedZero
        } else if x <= 0.2 {
            OverlapBin::B0_20
        } else if x <= 0.4 {
            OverlapBin::B20_40
        } else if x <= 0.6 {
            OverlapBin::B40_60
        } else if x <= 0.8 {
            OverlapBin::B60_80
        } else {
            OverlapBin::B80_100
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            OverlapBin::B0_20 => "0-20",
            OverlapBin::B20_40 => "20-40",
            OverlapBin::B40_60 => "40-60",
            OverlapBin::B60_80 => "60-80",
            OverlapBin::B80_100 => "80-100",
            OverlapBin::ExcludedZero => "excluded-0",
        }
    }

    pub fn is_low(&self) -> bool {
        matches!(self, OverlapBin::B0_20 | OverlapBin::B20_40)
    }
}

impl fmt::Display for OverlapBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for OverlapBin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OverlapBin::RETAINED
            .iter()
            .chain(std::iter::once(&OverlapBin::ExcludedZero))
            .find(|b| b.label() == s)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown overlap bin '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapScore {
    pub raw: usize,
    pub normalized: f64,
    pub bin: OverlapBin,
}

impl OverlapScore {
    pub fn new(raw: usize, test_len: usize) -> Self {
        let normalized = if test_len == 0 { 0.0 } else { raw as f64 / test_len as f64 };
        OverlapScore {
            raw,
            normalized,
            bin: OverlapBin::from_normalized(normalized),
        }
    }
}

/// Best LCST of `test` against any training trajectory, normalized by the test length.
pub fn max_overlap(test: &Trajectory, training: &[Trajectory]) -> OverlapScore {
    let test_tiles = test.tiles();
    let raw = training.iter().map(|t| lcst(&t.tiles(), &test_tiles)).max().unwrap_or(0);
    OverlapScore::new(raw, test_tiles.len())
}

/// A test transition labelled with its trajectory's overlap bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedTransition {
    pub user_id: String,
    pub origin: TileId,
    pub dest: TileId,
    pub time: i64,
    pub bin: OverlapBin,
}

/// Scores for every test trajectory of one user.
pub fn score_user(test: &[Trajectory], training: &[Trajectory]) -> Vec<OverlapScore> {
    let train_tiles: Vec<Vec<TileId>> = training.iter().map(|t| t.tiles()).collect();
    test.iter()
        .map(|t| {
            let tiles = t.tiles();
            let raw = train_tiles.iter().map(|tr| lcst(tr, &tiles)).max().unwrap_or(0);
            OverlapScore::new(raw, tiles.len())
        })
        .collect()
}

/// Assigns every test transition to its trajectory's bin.
///
/// `users` pairs each user's test trajectories with their training trajectories.
/// Transitions of zero-overlap trajectories land under [`OverlapBin::ExcludedZero`].
pub fn stratify<'a>(users: impl IntoIterator<Item = (&'a [Trajectory], &'a [Trajectory])>) -> BTreeMap<OverlapBin, Vec<BinnedTransition>> {
    let mut out: BTreeMap<OverlapBin, Vec<BinnedTransition>> = BTreeMap::new();
    for (test, training) in users {
        for (traj, score) in test.iter().zip(score_user(test, training)) {
            let bucket = out.entry(score.bin).or_default();
            for w in traj.points.windows(2) {
                bucket.push(BinnedTransition {
                    user_id: traj.user_id.clone(),
                    origin: w[0].tile,
                    dest: w[1].tile,
                    time: w[1].time,
                    bin: score.bin,
                });
            }
        }
    }
    out
}
