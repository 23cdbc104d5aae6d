//! The entropy-weighted mixture of individual and collective rows.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::counts::{OdCounts, RowMap};
use super::entropy::entropy;
use super::row::top_k_of;
use super::{TransitionRow, UserHistory};
use crate::error::{Error, Result};
use crate::geo::TileId;

/// Which predictor answers a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    /// Individual rows only.
    I,
    /// Collective rows only.
    C,
    /// Entropy-weighted mixture.
    M,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::I, ModelKind::C, ModelKind::M];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::I => "I",
            ModelKind::C => "C",
            ModelKind::M => "M",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pre-softmax mixture scores `(1 - s) I_j + s C_j`.
///
/// Only destinations with a strictly positive score are kept: with `s = 0`
/// the collective support drops out entirely and with `s = 1` the individual
/// support does. A missing individual row forces `s = 1`.
pub fn mixture_scores(individual: Option<&TransitionRow>, collective: Option<&TransitionRow>, s: f64) -> Vec<(TileId, f64)> {
    let s = if individual.is_none() { 1.0 } else { s.clamp(0.0, 1.0) };
    let mut scores: BTreeMap<TileId, f64> = BTreeMap::new();
    if let Some(i) = individual {
        for &(d, p) in i.probs() {
            *scores.entry(d).or_insert(0.0) += (1.0 - s) * p;
        }
    }
    if let Some(c) = collective {
        for &(d, p) in c.probs() {
            *scores.entry(d).or_insert(0.0) += s * p;
        }
    }
    scores.into_iter().filter(|&(_, v)| v > 0.0).collect()
}

fn softmax(scores: &[(TileId, f64)]) -> Vec<(TileId, f64)> {
    let max = scores.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&(_, v)| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    scores.iter().zip(exps).map(|(&(t, _), e)| (t, e / z)).collect()
}

/// Mixes an individual and a collective row with entropy `s`, then applies
/// softmax over the mixture's support.
pub fn mix(individual: Option<&TransitionRow>, collective: Option<&TransitionRow>, s: f64) -> Result<TransitionRow> {
    let origin = match (individual, collective) {
        (Some(r), _) | (None, Some(r)) => r.origin,
        (None, None) => return Err(Error::UnknownOrigin("<none>".into())),
    };
    let scores = mixture_scores(individual, collective, s);
    if scores.is_empty() {
        return Err(Error::UnknownOrigin(origin.to_string()));
    }
    let support = individual.map_or(0, |r| r.support) + collective.map_or(0, |r| r.support);
    Ok(TransitionRow::from_probs(origin, softmax(&scores), support))
}

/// Collective counts and their normalized rows, shared by every user's mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveModel {
    pub counts: OdCounts,
    pub rows: RowMap,
}

impl CollectiveModel {
    pub fn from_counts(counts: OdCounts) -> Self {
        let rows = counts.to_rows();
        CollectiveModel { counts, rows }
    }

    pub fn row(&self, origin: TileId) -> Option<&TransitionRow> {
        self.rows.get(&origin)
    }
}

/// One user's individual rows, their entropies, and a handle on the shared collective rows.
#[derive(Debug, Clone)]
pub struct MixedModel {
    pub user_id: String,
    pub counts: OdCounts,
    pub individual_rows: RowMap,
    /// `S_i` for origins present in `individual_rows`; absent origins are implicitly 1.
    pub entropies: BTreeMap<TileId, f64>,
    pub visited_count: usize,
    pub collective: Arc<CollectiveModel>,
}

impl MixedModel {
    /// Trains a user's rows from their history.
    pub fn train(history: &UserHistory, collective: Arc<CollectiveModel>) -> Result<Self> {
        let counts = OdCounts::from_trajectories(&history.trajectories);
        Self::from_counts(history.user_id.clone(), counts, history.visited().len(), collective)
    }

    /// Builds the model from transition counts and the user's distinct-location count.
    ///
    /// A user with a single distinct location gets `S = 0` on its lone row.
    pub fn from_counts(user_id: String, counts: OdCounts, visited_count: usize, collective: Arc<CollectiveModel>) -> Result<Self> {
        let individual_rows = counts.to_rows();
        let mut entropies = BTreeMap::new();
        for (&o, row) in &individual_rows {
            let s = match entropy(row, visited_count) {
                Ok(s) => s,
                Err(Error::Degenerate(_)) => 0.0,
                Err(e) => return Err(e),
            };
            entropies.insert(o, s);
        }
        Ok(MixedModel {
            user_id,
            counts,
            individual_rows,
            entropies,
            visited_count,
            collective,
        })
    }

    pub fn with_collective(&self, collective: Arc<CollectiveModel>) -> Self {
        MixedModel {
            collective,
            ..self.clone()
        }
    }

    /// Copy with every seen origin's entropy replaced by `s`.
    pub fn with_forced_entropy(&self, s: f64) -> Self {
        let mut m = self.clone();
        for v in m.entropies.values_mut() {
            *v = s;
        }
        m
    }

    pub fn entropy_at(&self, origin: TileId) -> f64 {
        self.entropies.get(&origin).copied().unwrap_or(1.0)
    }

    /// Confidence in the individual rows, `1 - S_i`.
    pub fn confidence(&self, origin: TileId) -> f64 {
        1.0 - self.entropy_at(origin)
    }

    pub fn individual_row(&self, origin: TileId) -> Option<&TransitionRow> {
        self.individual_rows.get(&origin)
    }

    pub fn mixed_row(&self, origin: TileId) -> Result<TransitionRow> {
        mix(self.individual_row(origin), self.collective.row(origin), self.entropy_at(origin))
            .map_err(|_| Error::UnknownOrigin(origin.to_string()))
    }

    /// Top-`k` next locations from the mixed model.
    pub fn predict_topk(&self, origin: TileId, k: usize) -> Result<Vec<TileId>> {
        self.predict(ModelKind::M, origin, k)
    }

    /// Top-`k` next locations from the chosen predictor. An origin unknown to
    /// the predictor yields an empty list.
    pub fn predict(&self, kind: ModelKind, origin: TileId, k: usize) -> Result<Vec<TileId>> {
        if k < 1 {
            return Err(Error::invalid("k must be at least 1"));
        }
        Ok(match kind {
            ModelKind::I => self.individual_row(origin).map(|r| r.top_k(k)).unwrap_or_default(),
            ModelKind::C => self.collective.row(origin).map(|r| r.top_k(k)).unwrap_or_default(),
            ModelKind::M => match self.mixed_row(origin) {
                Ok(row) => row.top_k(k),
                Err(Error::UnknownOrigin(_)) => Vec::new(),
                Err(e) => return Err(e),
            },
        })
    }
}

/// Top-`k` straight from pre-softmax scores; the reference ordering for the mixture.
pub fn topk_from_scores(individual: Option<&TransitionRow>, collective: Option<&TransitionRow>, s: f64, k: usize) -> Vec<TileId> {
    top_k_of(&mixture_scores(individual, collective, s), k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> TileId {
        s.parse().unwrap()
    }

    fn row(o: &str, entries: &[(&str, f64)]) -> TransitionRow {
        TransitionRow::from_probs(t(o), entries.iter().map(|&(d, p)| (t(d), p)), 10)
    }

    #[test]
    fn hand_evaluated_mixture() {
        let i = row("s", &[("t", 1.0)]);
        let c = row("s", &[("t", 0.2), ("b", 0.8)]);
        let scores = mixture_scores(Some(&i), Some(&c), 0.5);
        let score = |d: &str| scores.iter().find(|e| e.0 == t(d)).unwrap().1;
        assert!((score("t") - 0.6).abs() < 1e-15);
        assert!((score("b") - 0.4).abs() < 1e-15);
        let m = mix(Some(&i), Some(&c), 0.5).unwrap();
        assert_eq!(m.top_k(1), vec![t("t")]);
        assert!((m.sum() - 1.0).abs() < 1e-12);
        // softmax of (0.6, 0.4)
        let expected = 1.0 / (1.0 + (-0.2f64).exp());
        assert!((m.get(t("t")).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn absent_individual_uses_collective() {
        let c = row("s", &[("b", 0.9), ("c", 0.1)]);
        let m = mix(None, Some(&c), 0.0).unwrap();
        assert_eq!(m.top_k(1), vec![t("b")]);
        assert_eq!(m.len(), 2);
        assert!(mix(None, None, 0.3).is_err());
    }

    #[test]
    fn zero_entropy_keeps_individual_ranking() {
        let i = row("s", &[("x", 0.7), ("y", 0.3)]);
        let c = row("s", &[("z", 0.9), ("y", 0.1)]);
        let m = mix(Some(&i), Some(&c), 0.0).unwrap();
        assert_eq!(m.top_k(5), vec![t("x"), t("y")]);
        assert_eq!(m.top_k(5), i.top_k(5));
    }

    fn model() -> MixedModel {
        let mut ic = OdCounts::new();
        ic.add(t("t"), t("b"), 3);
        ic.add(t("t"), t("c"), 1);
        let mut cc = ic.clone();
        cc.add(t("t"), t("d"), 10);
        cc.add(t("e"), t("t"), 2);
        MixedModel::from_counts("u".into(), ic, 3, Arc::new(CollectiveModel::from_counts(cc))).unwrap()
    }

    #[test]
    fn prediction_paths() {
        let m = model();
        assert!(m.predict_topk(t("t"), 0).is_err());
        assert_eq!(m.predict_topk(t("t"), 5).unwrap().len(), 3);
        assert_eq!(m.predict_topk(t("t"), 5).unwrap(), m.predict_topk(t("t"), 5).unwrap());
        assert_eq!(m.predict(ModelKind::I, t("e"), 5).unwrap(), vec![]);
        assert_eq!(m.predict(ModelKind::M, t("e"), 5).unwrap(), vec![t("t")]);
        assert_eq!(m.predict(ModelKind::M, t("zz"), 5).unwrap(), vec![]);
        assert_eq!(m.entropy_at(t("e")), 1.0);
        assert_eq!(m.confidence(t("e")), 0.0);
    }

    #[test]
    fn single_location_user_has_zero_entropy() {
        let mut ic = OdCounts::new();
        ic.add(t("t"), t("t"), 4);
        let c = Arc::new(CollectiveModel::from_counts(ic.clone()));
        let m = MixedModel::from_counts("u".into(), ic, 1, c).unwrap();
        assert_eq!(m.entropy_at(t("t")), 0.0);
    }

    fn random_row(origin: &'static str) -> impl Strategy<Value = Option<TransitionRow>> {
        prop::option::of(prop::collection::btree_map(0u8..12, 1u32..20, 1..8)).prop_map(move |m| {
            m.map(|m| {
                let total: u32 = m.values().sum();
                let names = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "b", "c"];
                TransitionRow::from_probs(t(origin), m.into_iter().map(|(k, v)| (t(names[k as usize]), v as f64 / total as f64)), total as u64)
            })
        })
    }

    proptest! {
        #[test]
        fn softmax_preserves_ranking(i in random_row("s"), c in random_row("s"), s in 0.0f64..=1.0, k in 1usize..8) {
            match mix(i.as_ref(), c.as_ref(), s) {
                Ok(m) => {
                    prop_assert!((m.sum() - 1.0).abs() <= 1e-9);
                    prop_assert_eq!(m.top_k(k), topk_from_scores(i.as_ref(), c.as_ref(), s, k));
                }
                Err(_) => prop_assert!(mixture_scores(i.as_ref(), c.as_ref(), s).is_empty()),
            }
        }
    }
}
