use std::collections::BTreeMap;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::TileId;

/// Hit/total tally behind an ACC@k value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub hits: u64,
    pub total: u64,
}

impl Accuracy {
    pub fn record(&mut self, hit: bool) {
        self.hits += hit as u64;
        self.total += 1;
    }

    /// `hits / total`, or `None` when nothing was counted.
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }
}

impl AddAssign for Accuracy {
    fn add_assign(&mut self, rhs: Self) {
        self.hits += rhs.hits;
        self.total += rhs.total;
    }
}

/// Fraction of cases whose truth appears among the first `k` predictions.
pub fn acc_at_k(predictions: &[Vec<TileId>], truths: &[TileId], k: usize) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} prediction lists for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let hits = predictions.iter().zip(truths).filter(|(p, t)| p.iter().take(k).any(|x| x == *t)).count();
    Ok(hits as f64 / truths.len() as f64)
}

/// ACC@k grouped by a key (origin or destination tile).
pub fn grouped_accuracy<K: Ord + Copy>(cases: impl IntoIterator<Item = (K, bool)>) -> BTreeMap<K, Accuracy> {
    let mut out: BTreeMap<K, Accuracy> = BTreeMap::new();
    for (key, hit) in cases {
        out.entry(key).or_default().record(hit);
    }
    out
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid("pearson: length mismatch"));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedStatistic("pearson: zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
