//! In-memory evaluation pipeline: split, train, stratify, predict, analyse.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    collective_entropy, distance_distribution, moran_test, pearson, per_origin_accuracy, poi_split, power_law_fit,
    predict_transitions, transition_distances, DistanceHistogram, EvalReport, MoranResult, PoiSplit, PowerLawConfig,
    PowerLawFit, PredictionRecord, SpatialWeights, TileAccuracy, WeightScheme, DEFAULT_MIN_TILE_TRANSITIONS,
};
use crate::geo::TileId;
use crate::model::{collective_counts, train_test_split, CollectiveModel, MixedModel, ModelKind, UserHistory};
use crate::overlap::{score_user, BinnedTransition, OverlapBin, OverlapScore};

/// Per-user chronological split; `train[i]` and `test[i]` belong to the same user.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<UserHistory>,
    pub test: Vec<UserHistory>,
}

pub fn split_users(histories: &[UserHistory], test_fraction: f64) -> Result<Split> {
    let pairs: Vec<(UserHistory, UserHistory)> = histories.iter().map(|h| train_test_split(h, test_fraction)).collect::<Result<_>>()?;
    let (train, test) = pairs.into_iter().unzip();
    Ok(Split { train, test })
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub collective: Arc<CollectiveModel>,
    pub models: BTreeMap<String, MixedModel>,
}

/// Builds the collective model, then every user's mixed model against it.
pub fn train_models(train: &[UserHistory]) -> Result<Trained> {
    if train.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let collective = Arc::new(CollectiveModel::from_counts(collective_counts(train)));
    let models: Vec<MixedModel> = train.par_iter().map(|h| MixedModel::train(h, collective.clone())).collect::<Result<_>>()?;
    Ok(Trained {
        collective,
        models: models.into_iter().map(|m| (m.user_id.clone(), m)).collect(),
    })
}

/// Overlap score of every test trajectory, in split order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOverlap {
    pub user_id: String,
    pub day: chrono::NaiveDate,
    pub score: OverlapScore,
}

pub fn overlap_scores(split: &Split) -> Vec<TrajectoryOverlap> {
    split
        .test
        .par_iter()
        .zip(&split.train)
        .map(|(test, train)| {
            score_user(&test.trajectories, &train.trajectories)
                .into_iter()
                .zip(&test.trajectories)
                .map(|(score, t)| TrajectoryOverlap {
                    user_id: t.user_id.clone(),
                    day: t.day,
                    score,
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Every test transition tagged with its trajectory's overlap bin, in split order.
pub fn binned_transitions(split: &Split, scores: &[TrajectoryOverlap]) -> Vec<BinnedTransition> {
    let trajectories = split.test.iter().flat_map(|h| &h.trajectories);
    let mut out = Vec::new();
    for (t, s) in trajectories.zip(scores) {
        for w in t.points.windows(2) {
            out.push(BinnedTransition {
                user_id: t.user_id.clone(),
                origin: w[0].tile,
                dest: w[1].tile,
                time: w[1].time,
                bin: s.score.bin,
            });
        }
    }
    out
}

/// Everything the figure analyses need from one evaluation run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub split: Split,
    pub trained: Trained,
    pub overlaps: Vec<TrajectoryOverlap>,
    pub transitions: Vec<BinnedTransition>,
    pub records: Vec<PredictionRecord>,
    pub report: EvalReport,
}

pub fn run_experiment(histories: &[UserHistory], test_fraction: f64, k: usize) -> Result<Experiment> {
    let split = split_users(histories, test_fraction)?;
    let trained = train_models(&split.train)?;
    let overlaps = overlap_scores(&split);
    let transitions = binned_transitions(&split, &overlaps);
    let records = predict_transitions(&trained.models, &transitions, k)?;
    let report = EvalReport::from_records(&records, k, DEFAULT_MIN_TILE_TRANSITIONS);
    Ok(Experiment {
        split,
        trained,
        overlaps,
        transitions,
        records,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpatialConfig {
    pub scheme: WeightScheme,
    pub row_standardize: bool,
    pub permutations: usize,
    pub min_transitions: u64,
    pub seed: u64,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        SpatialConfig {
            scheme: WeightScheme::Queen,
            row_standardize: true,
            permutations: 999,
            min_transitions: DEFAULT_MIN_TILE_TRANSITIONS,
            seed: 0,
        }
    }
}

/// Per-tile accuracy of one model and the Moran test over the reportable tiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialModelStats {
    pub tiles: BTreeMap<TileId, TileAccuracy>,
    pub moran: Option<MoranResult>,
    /// Why the Moran statistic is missing, when it is.
    pub moran_error: Option<String>,
}

/// Moran's I of `values` over their tiles with the configured weights.
pub fn tile_moran(values: &BTreeMap<TileId, f64>, cfg: &SpatialConfig) -> Result<MoranResult> {
    let tiles: Vec<TileId> = values.keys().copied().collect();
    let v: Vec<f64> = values.values().copied().collect();
    let mut w = SpatialWeights::for_tiles(&tiles, cfg.scheme);
    if cfg.row_standardize {
        w = w.row_standardized();
    }
    moran_test(&v, &w, cfg.permutations, cfg.seed)
}

/// Spatial accuracy of each model over the retained transitions.
pub fn spatial_analysis(records: &[PredictionRecord], cfg: &SpatialConfig) -> BTreeMap<ModelKind, SpatialModelStats> {
    let retained: Vec<&PredictionRecord> = records.iter().filter(|r| r.bin != OverlapBin::ExcludedZero).collect();
    ModelKind::ALL
        .par_iter()
        .map(|&kind| {
            let tiles = per_origin_accuracy(retained.iter().copied(), kind, cfg.min_transitions);
            let values: BTreeMap<TileId, f64> = tiles.iter().filter(|(_, a)| !a.below_min).map(|(&t, a)| (t, a.acc)).collect();
            let (moran, moran_error) = match tile_moran(&values, cfg) {
                Ok(m) => (Some(m), None),
                Err(e) => (None, Some(e.to_string())),
            };
            (
                kind,
                SpatialModelStats {
                    tiles,
                    moran,
                    moran_error,
                },
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// [`spatial_analysis`] over all retained transitions (`all`), the low-overlap
/// bins together (`0-40`) and each retained bin on its own.
pub fn spatial_groups(records: &[PredictionRecord], cfg: &SpatialConfig) -> Vec<(String, BTreeMap<ModelKind, SpatialModelStats>)> {
    let mut out = vec![("all".to_string(), spatial_analysis(records, cfg))];
    let low: Vec<PredictionRecord> = records.iter().filter(|r| r.bin.is_low()).cloned().collect();
    out.push(("0-40".to_string(), spatial_analysis(&low, cfg)));
    for bin in OverlapBin::RETAINED {
        let subset: Vec<PredictionRecord> = records.iter().filter(|r| r.bin == bin).cloned().collect();
        out.push((bin.label().to_string(), spatial_analysis(&subset, cfg)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoiAnalysisConfig {
    pub d_km: f64,
    pub histogram_bins: usize,
    pub min_transitions: u64,
    pub fit: PowerLawConfig,
}

impl Default for PoiAnalysisConfig {
    fn default() -> Self {
        PoiAnalysisConfig {
            d_km: 2.0,
            histogram_bins: 20,
            min_transitions: DEFAULT_MIN_TILE_TRANSITIONS,
            fit: PowerLawConfig::default(),
        }
    }
}

/// Collective entropy against collective accuracy, and the travel-distance
/// split around the POI anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiAnalysis {
    pub collective_entropy: BTreeMap<TileId, f64>,
    /// ACC@k of C per origin on low-overlap transitions.
    pub low_overlap_acc: BTreeMap<TileId, TileAccuracy>,
    pub pearson_entropy_acc: Option<f64>,
    pub split: PoiSplit,
    pub near_histogram: DistanceHistogram,
    pub far_histogram: DistanceHistogram,
    pub gamma_near: Option<PowerLawFit>,
    pub gamma_far: Option<PowerLawFit>,
}

impl PoiAnalysis {
    /// `(tile, S^C_i, ACC_i)` for tiles with enough low-overlap transitions.
    pub fn entropy_accuracy_pairs(&self) -> Vec<(TileId, f64, f64)> {
        self.low_overlap_acc
            .iter()
            .filter(|(_, a)| !a.below_min)
            .filter_map(|(t, a)| self.collective_entropy.get(t).map(|&s| (*t, s, a.acc)))
            .collect()
    }
}

pub fn poi_analysis(
    collective: &CollectiveModel,
    records: &[PredictionRecord],
    poi: &BTreeMap<TileId, u64>,
    cfg: &PoiAnalysisConfig,
) -> Result<PoiAnalysis> {
    let entropy = collective_entropy(collective)?;
    let low = records.iter().filter(|r| r.bin.is_low());
    let low_overlap_acc = per_origin_accuracy(low, ModelKind::C, cfg.min_transitions);
    let split = poi_split(poi, collective.counts.tiles(), cfg.d_km)?;
    let (near_histogram, far_histogram) = distance_distribution(&collective.counts, &split, cfg.histogram_bins);
    let near = transition_distances(&collective.counts, |o| split.is_near(o));
    let far = transition_distances(&collective.counts, |o| !split.is_near(o));
    let mut out = PoiAnalysis {
        collective_entropy: entropy,
        low_overlap_acc,
        pearson_entropy_acc: None,
        split,
        near_histogram,
        far_histogram,
        gamma_near: power_law_fit(&near, &cfg.fit).ok(),
        gamma_far: power_law_fit(&far, &cfg.fit).ok(),
    };
    let pairs = out.entropy_accuracy_pairs();
    let (s, a): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(_, s, a)| (s, a)).unzip();
    out.pearson_entropy_acc = pearson(&s, &a).ok();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{filter_dataset, group_by_user, FilterConfig};
    use crate::synth::{generate, GridConfig, SynthConfig};

    fn small_run() -> Experiment {
        let cfg = SynthConfig {
            n_users: 40,
            n_days: 40,
            grid: GridConfig {
                rows: 10,
                cols: 10,
                ..GridConfig::default()
            },
            ..SynthConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let histories = filter_dataset(group_by_user(data.trajectories), &FilterConfig::default());
        run_experiment(&histories, 0.2, 5).unwrap()
    }

    #[test]
    fn experiment_is_consistent() {
        let e = small_run();
        assert_eq!(e.split.train.len(), e.split.test.len());
        assert_eq!(e.transitions.len(), e.records.len());
        let n_test: usize = e.split.test.iter().map(|h| h.transition_count()).sum();
        assert_eq!(n_test, e.records.len());
        assert!(e.report.bin_consistency_gap() <= 1e-9);
        let spatial = spatial_analysis(&e.records, &SpatialConfig::default());
        assert_eq!(spatial.len(), 3);
        let groups = spatial_groups(&e.records, &SpatialConfig::default());
        assert_eq!(groups.len(), 7);
        assert_eq!(groups[0].1, spatial);
    }
}
