use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geo::TileId;

/// A sparse probability distribution over destinations from one origin.
///
/// Entries are sorted by destination and carry strictly positive probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub origin: TileId,
    probs: Vec<(TileId, f64)>,
    /// Number of transitions used to estimate the row.
    pub support: u64,
}

/// Descending by score, ties broken by ascending tile.
pub(crate) fn rank_order(a: &(TileId, f64), b: &(TileId, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0))
}

/// The first `k` tiles of `scores` under [`rank_order`].
pub fn top_k_of(scores: &[(TileId, f64)], k: usize) -> Vec<TileId> {
    let mut v = scores.to_vec();
    if k < v.len() {
        v.select_nth_unstable_by(k, rank_order);
        v.truncate(k);
    }
    v.sort_by(rank_order);
    v.into_iter().map(|(t, _)| t).collect()
}

impl TransitionRow {
    /// Normalizes destination counts by their total.
    pub fn from_counts(origin: TileId, counts: &BTreeMap<TileId, u64>) -> Self {
        let total: u64 = counts.values().sum();
        let probs = counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(&d, &c)| (d, c as f64 / total as f64))
            .collect();
        TransitionRow {
            origin,
            probs,
            support: total,
        }
    }

    /// Builds a row from explicit probabilities; zero entries are dropped and
    /// entries sorted by destination. Probabilities are used as given.
    pub fn from_probs(origin: TileId, probs: impl IntoIterator<Item = (TileId, f64)>, support: u64) -> Self {
        let mut probs: Vec<(TileId, f64)> = probs.into_iter().filter(|&(_, p)| p > 0.0).collect();
        probs.sort_by_key(|&(t, _)| t);
        TransitionRow { origin, probs, support }
    }

    pub fn probs(&self) -> &[(TileId, f64)] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, dest: TileId) -> Option<f64> {
        self.probs.binary_search_by_key(&dest, |&(t, _)| t).ok().map(|i| self.probs[i].1)
    }

    pub fn contains(&self, dest: TileId) -> bool {
        self.get(dest).is_some()
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().map(|&(_, p)| p).sum()
    }

    pub fn destinations(&self) -> impl Iterator<Item = TileId> + '_ {
        self.probs.iter().map(|&(t, _)| t)
    }

    /// Destinations by descending probability, lexicographic tie-break.
    pub fn top_k(&self, k: usize) -> Vec<TileId> {
        top_k_of(&self.probs, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> TileId {
        s.parse().unwrap()
    }

    #[test]
    fn top_k_tie_break() {
        let row = TransitionRow::from_probs(t("c"), [(t("b"), 0.25), (t("t"), 0.25), (t("d"), 0.5)], 4);
        assert_eq!(row.top_k(5), vec![t("d"), t("b"), t("t")]);
        assert_eq!(row.top_k(2), vec![t("d"), t("b")]);
        assert_eq!(row.top_k(0), vec![]);
    }

    #[test]
    fn from_counts_normalizes() {
        let counts: BTreeMap<TileId, u64> = [(t("t"), 1), (t("b"), 3)].into_iter().collect();
        let row = TransitionRow::from_counts(t("x"), &counts);
        assert_eq!(row.get(t("t")), Some(0.25));
        assert_eq!(row.get(t("b")), Some(0.75));
        assert_eq!(row.support, 4);
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
}
