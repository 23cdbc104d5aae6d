//! Accuracy metrics, spatial statistics and the figure-level analyses.

mod distance;
mod entropy;
mod metrics;
mod report;
mod shift;
mod spatial;

pub use distance::{
    distance_distribution, fit_log_log, log_histogram, poi_split, power_law_fit, tile_diagonal_km, transition_distances,
    truncated_pareto_quantile, DistanceHistogram, FitMethod, PoiSplit, PowerLawConfig, PowerLawFit, MIN_FIT_SAMPLES,
};
pub use entropy::collective_entropy;
pub use metrics::{acc_at_k, grouped_accuracy, pearson, Accuracy};
pub use report::{
    per_destination_accuracy, per_origin_accuracy, predict_one, predict_transitions, EvalReport, PredictionRecord,
    TileAccuracy, DEFAULT_MIN_TILE_TRANSITIONS,
};
pub use shift::{shift_evaluate, MonthAccuracy, ShiftReport};
pub use spatial::{moran_i, moran_test, MoranResult, SpatialWeights, WeightScheme};
