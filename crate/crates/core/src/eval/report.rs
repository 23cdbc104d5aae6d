use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{grouped_accuracy, Accuracy};
use crate::geo::TileId;
use crate::model::{MixedModel, ModelKind};
use crate::overlap::{BinnedTransition, OverlapBin};

/// Outcome of predicting one test transition with every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub user_id: String,
    pub origin: TileId,
    pub dest: TileId,
    pub bin: OverlapBin,
    /// `1 - S_i` of the user's model at the origin.
    pub confidence: f64,
    /// Destination never followed the origin in the user's training data.
    pub novel: bool,
    /// Hit flags indexed like [`ModelKind::ALL`].
    pub hits: [bool; 3],
}

impl PredictionRecord {
    pub fn hit(&self, kind: ModelKind) -> bool {
        self.hits[kind_index(kind)]
    }
}

pub(crate) fn kind_index(kind: ModelKind) -> usize {
    match kind {
        ModelKind::I => 0,
        ModelKind::C => 1,
        ModelKind::M => 2,
    }
}

/// Runs the three predictors of one user model on one transition.
pub fn predict_one(model: &MixedModel, origin: TileId, dest: TileId, k: usize) -> Result<[bool; 3]> {
    let mut hits = [false; 3];
    for kind in ModelKind::ALL {
        hits[kind_index(kind)] = model.predict(kind, origin, k)?.contains(&dest);
    }
    Ok(hits)
}

/// Predicts every transition with its user's model, in input order.
///
/// Transitions of users without a model are reported as misses for all models.
pub fn predict_transitions(models: &BTreeMap<String, MixedModel>, transitions: &[BinnedTransition], k: usize) -> Result<Vec<PredictionRecord>> {
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    transitions
        .par_iter()
        .map(|t| {
            let (confidence, novel, hits) = match models.get(&t.user_id) {
                Some(m) => (
                    m.confidence(t.origin),
                    !m.individual_row(t.origin).is_some_and(|r| r.contains(t.dest)),
                    predict_one(m, t.origin, t.dest, k)?,
                ),
                None => (0.0, true, [false; 3]),
            };
            Ok(PredictionRecord {
                user_id: t.user_id.clone(),
                origin: t.origin,
                dest: t.dest,
                bin: t.bin,
                confidence,
                novel,
                hits,
            })
        })
        .collect()
}

/// Per-tile accuracy with its sample size; tiles under the minimum are flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileAccuracy {
    pub acc: f64,
    pub n: u64,
    pub below_min: bool,
}

/// ACC@k per origin tile for one model.
pub fn per_origin_accuracy<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    kind: ModelKind,
    min_transitions: u64,
) -> BTreeMap<TileId, TileAccuracy> {
    tile_accuracy(grouped_accuracy(records.into_iter().map(|r| (r.origin, r.hit(kind)))), min_transitions)
}

/// ACC@k per destination tile for one model.
pub fn per_destination_accuracy<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    kind: ModelKind,
    min_transitions: u64,
) -> BTreeMap<TileId, TileAccuracy> {
    tile_accuracy(grouped_accuracy(records.into_iter().map(|r| (r.dest, r.hit(kind)))), min_transitions)
}

fn tile_accuracy(groups: BTreeMap<TileId, Accuracy>, min_transitions: u64) -> BTreeMap<TileId, TileAccuracy> {
    groups
        .into_iter()
        .map(|(t, a)| {
            (
                t,
                TileAccuracy {
                    acc: a.value().unwrap_or(0.0),
                    n: a.total,
                    below_min: a.total < min_transitions,
                },
            )
        })
        .collect()
}

pub const DEFAULT_MIN_TILE_TRANSITIONS: u64 = 5;

/// Accuracy of all three models, overall and per overlap bin, plus the
/// per-tile maps and confidence samples.
///
/// `overall` covers the retained bins only; zero-overlap transitions are
/// reported under their own bin in `per_bin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub overall: BTreeMap<ModelKind, Accuracy>,
    pub per_bin: BTreeMap<OverlapBin, BTreeMap<ModelKind, Accuracy>>,
    pub per_origin: BTreeMap<ModelKind, BTreeMap<TileId, TileAccuracy>>,
    pub per_destination: BTreeMap<ModelKind, BTreeMap<TileId, TileAccuracy>>,
    pub confidence: BTreeMap<OverlapBin, Vec<f64>>,
}

impl EvalReport {
    pub fn from_records(records: &[PredictionRecord], k: usize, min_tile_transitions: u64) -> Self {
        let mut overall: BTreeMap<ModelKind, Accuracy> = ModelKind::ALL.iter().map(|&m| (m, Accuracy::default())).collect();
        let mut per_bin: BTreeMap<OverlapBin, BTreeMap<ModelKind, Accuracy>> = BTreeMap::new();
        let mut confidence: BTreeMap<OverlapBin, Vec<f64>> = BTreeMap::new();
        for r in records {
            let bin = per_bin.entry(r.bin).or_default();
            for kind in ModelKind::ALL {
                bin.entry(kind).or_default().record(r.hit(kind));
                if r.bin != OverlapBin::ExcludedZero {
                    overall.get_mut(&kind).unwrap().record(r.hit(kind));
                }
            }
            confidence.entry(r.bin).or_default().push(r.confidence);
        }
        let retained = || records.iter().filter(|r| r.bin != OverlapBin::ExcludedZero);
        let per_origin = ModelKind::ALL
            .iter()
            .map(|&m| (m, per_origin_accuracy(retained(), m, min_tile_transitions)))
            .collect();
        let per_destination = ModelKind::ALL
            .iter()
            .map(|&m| (m, per_destination_accuracy(retained(), m, min_tile_transitions)))
            .collect();
        EvalReport {
            k,
            overall,
            per_bin,
            per_origin,
            per_destination,
            confidence,
        }
    }

    pub fn overall_acc(&self, kind: ModelKind) -> Option<f64> {
        self.overall.get(&kind).and_then(Accuracy::value)
    }

    pub fn bin_acc(&self, bin: OverlapBin, kind: ModelKind) -> Option<f64> {
        self.per_bin.get(&bin).and_then(|m| m.get(&kind)).and_then(Accuracy::value)
    }

    /// Largest gap between the overall accuracy and the transition-weighted
    /// mean of the retained bins' accuracies, across models.
    pub fn bin_consistency_gap(&self) -> f64 {
        ModelKind::ALL
            .iter()
            .map(|&kind| {
                let (mut weighted, mut n) = (0.0, 0u64);
                for bin in OverlapBin::RETAINED {
                    if let Some(a) = self.per_bin.get(&bin).and_then(|m| m.get(&kind)) {
                        weighted += a.value().unwrap_or(0.0) * a.total as f64;
                        n += a.total;
                    }
                }
                match (self.overall_acc(kind), n) {
                    (Some(o), n) if n > 0 => (weighted / n as f64 - o).abs(),
                    _ => 0.0,
                }
            })
            .fold(0.0, f64::max)
    }
}
