use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{TransitionRow, Trajectory, UserHistory};
use crate::geo::TileId;

/// Origin-destination transition counts `T_ij`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OdCounts {
    rows: BTreeMap<TileId, BTreeMap<TileId, u64>>,
}

pub type RowMap = BTreeMap<TileId, TransitionRow>;

impl OdCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, origin: TileId, dest: TileId, n: u64) {
        if n == 0 {
            return;
        }
        *self.rows.entry(origin).or_default().entry(dest).or_insert(0) += n;
    }

    /// Counts consecutive pairs inside each trajectory. Pairs never span two
    /// trajectories, and same-tile pairs count as transitions.
    pub fn from_trajectories<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> Self {
        let mut c = OdCounts::new();
        for t in trajectories {
            for (o, d) in t.transitions() {
                c.add(o, d, 1);
            }
        }
        c
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (TileId, TileId)>) -> Self {
        let mut c = OdCounts::new();
        for (o, d) in pairs {
            c.add(o, d, 1);
        }
        c
    }

    pub fn merge(&mut self, other: &OdCounts) {
        for (&o, row) in &other.rows {
            for (&d, &n) in row {
                self.add(o, d, n);
            }
        }
    }

    pub fn get(&self, origin: TileId, dest: TileId) -> u64 {
        self.rows.get(&origin).and_then(|r| r.get(&dest)).copied().unwrap_or(0)
    }

    pub fn row(&self, origin: TileId) -> Option<&BTreeMap<TileId, u64>> {
        self.rows.get(&origin)
    }

    /// `T_i`, the number of transitions leaving `origin`.
    pub fn origin_total(&self, origin: TileId) -> u64 {
        self.rows.get(&origin).map_or(0, |r| r.values().sum())
    }

    pub fn total(&self) -> u64 {
        self.rows.values().flat_map(|r| r.values()).sum()
    }

    pub fn origins(&self) -> impl Iterator<Item = TileId> + '_ {
        self.rows.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TileId, &BTreeMap<TileId, u64>)> + '_ {
        self.rows.iter().map(|(&o, r)| (o, r))
    }

    /// `(origin, destination, count)` triples in origin-then-destination order.
    pub fn entries(&self) -> impl Iterator<Item = (TileId, TileId, u64)> + '_ {
        self.rows.iter().flat_map(|(&o, r)| r.iter().map(move |(&d, &n)| (o, d, n)))
    }

    /// Distinct tiles appearing as origin or destination.
    pub fn tiles(&self) -> std::collections::BTreeSet<TileId> {
        self.entries().flat_map(|(o, d, _)| [o, d]).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_rows(&self) -> RowMap {
        self.rows.iter().map(|(&o, r)| (o, TransitionRow::from_counts(o, r))).collect()
    }
}

/// Individual transition rows `I^(u)` from one user's trajectories.
pub fn build_individual(history: &UserHistory) -> RowMap {
    OdCounts::from_trajectories(&history.trajectories).to_rows()
}

/// Pooled counts over all users: per-user counts in parallel, then an ordered merge.
pub fn collective_counts(histories: &[UserHistory]) -> OdCounts {
    let per_user: Vec<OdCounts> = histories.par_iter().map(|h| OdCounts::from_trajectories(&h.trajectories)).collect();
    let mut total = OdCounts::new();
    for c in &per_user {
        total.merge(c);
    }
    total
}

/// Collective rows `C` pooled across every user's transitions.
pub fn build_collective(histories: &[UserHistory]) -> RowMap {
    collective_counts(histories).to_rows()
}
