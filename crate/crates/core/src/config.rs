//! Pipeline configuration, read from TOML with one table per stage.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{PowerLawConfig, WeightScheme, DEFAULT_MIN_TILE_TRANSITIONS};
use crate::experiment::{PoiAnalysisConfig, SpatialConfig};
use crate::geo::StopParams;
use crate::model::FilterConfig;
use crate::robustness::PruneConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Raw input for `ingest`.
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub model_store: PathBuf,
    /// POI field, CSV or JSON map features.
    pub poi: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            input: None,
            output_dir: PathBuf::from("out"),
            model_store: PathBuf::from("out/model"),
            poi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeoConfig {
    pub precision: u8,
    pub stay_radius_m: f64,
    pub min_stay_s: i64,
    pub max_gap_s: i64,
    /// Fixed offset from UTC used to cut trajectories into local days.
    pub utc_offset_s: i32,
    /// `ingest` fails when a larger share of input rows is malformed.
    pub max_malformed_fraction: f64,
}

impl Default for GeoConfig {
    fn default() -> Self {
        let stops = StopParams::default();
        GeoConfig {
            precision: stops.precision,
            stay_radius_m: stops.radius_m,
            min_stay_s: stops.min_duration_s,
            max_gap_s: stops.max_gap_s,
            utc_offset_s: 0,
            max_malformed_fraction: 0.01,
        }
    }
}

impl GeoConfig {
    pub fn stop_params(&self) -> StopParams {
        StopParams {
            min_duration_s: self.min_stay_s,
            max_gap_s: self.max_gap_s,
            precision: self.precision,
            ..StopParams::with_radius(self.stay_radius_m)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Share of each user's most recent trajectories held out for testing.
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    /// Tiles with fewer test transitions are flagged in per-tile tables.
    pub min_tile_transitions: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 5,
            min_tile_transitions: DEFAULT_MIN_TILE_TRANSITIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialSection {
    pub scheme: WeightScheme,
    pub row_standardize: bool,
    pub permutations: usize,
}

impl Default for SpatialSection {
    fn default() -> Self {
        let d = SpatialConfig::default();
        SpatialSection {
            scheme: d.scheme,
            row_standardize: d.row_standardize,
            permutations: d.permutations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoiSection {
    /// Radius around the POI anchor that counts as near.
    pub d_km: f64,
    pub histogram_bins: usize,
    pub fit: PowerLawConfig,
}

impl Default for PoiSection {
    fn default() -> Self {
        let d = PoiAnalysisConfig::default();
        PoiSection {
            d_km: d.d_km,
            histogram_bins: d.histogram_bins,
            fit: d.fit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruningSection {
    pub user_percentile: f64,
    pub origin_percentile: f64,
    pub test_user_percentile: f64,
    pub n_samples: usize,
    /// Ensemble accuracy only over test transitions unseen in the user's training data.
    pub novel_only: bool,
}

impl Default for PruningSection {
    fn default() -> Self {
        let d = PruneConfig::default();
        PruningSection {
            user_percentile: d.user_percentile,
            origin_percentile: d.origin_percentile,
            test_user_percentile: d.test_user_percentile,
            n_samples: d.n_samples,
            novel_only: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftSection {
    /// Training uses days before the cutoff, testing the months from it on.
    pub cutoff: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds every random step: permutation tests and pruning draws.
    pub seed: u64,
    pub paths: PathsConfig,
    pub geo: GeoConfig,
    pub filter: FilterConfig,
    pub split: SplitConfig,
    pub eval: EvalConfig,
    pub spatial: SpatialSection,
    pub poi: PoiSection,
    pub pruning: PruningSection,
    pub shift: ShiftSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            paths: PathsConfig::default(),
            geo: GeoConfig::default(),
            filter: FilterConfig::default(),
            split: SplitConfig::default(),
            eval: EvalConfig::default(),
            spatial: SpatialSection::default(),
            poi: PoiSection::default(),
            pruning: PruningSection::default(),
            shift: ShiftSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(5..=8).contains(&self.geo.precision) {
            return Err(Error::Config(format!("geo.precision = {} must be one of 5, 6, 7, 8", self.geo.precision)));
        }
        if !(self.geo.stay_radius_m > 5.0) {
            return Err(Error::Config("geo.stay_radius_m must exceed 5 m".into()));
        }
        if self.geo.min_stay_s < 0 || self.geo.max_gap_s < 0 {
            return Err(Error::Config("geo durations must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.geo.max_malformed_fraction) {
            return Err(Error::Config("geo.max_malformed_fraction must lie in [0, 1]".into()));
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::Config("split.test_fraction must lie in (0, 1)".into()));
        }
        if self.eval.k == 0 {
            return Err(Error::Config("eval.k must be at least 1".into()));
        }
        if !(self.filter.max_user_percentile > 0.0 && self.filter.max_user_percentile <= 100.0) {
            return Err(Error::Config("filter.max_user_percentile must lie in (0, 100]".into()));
        }
        if self.spatial.permutations == 0 {
            return Err(Error::Config("spatial.permutations must be at least 1".into()));
        }
        if !(self.poi.d_km > 0.0) {
            return Err(Error::Config("poi.d_km must be positive".into()));
        }
        self.prune_config().validate()
    }

    /// Checks that the paths a command reads exist.
    pub fn require_file(path: &Path, what: &str) -> Result<()> {
        if path.is_file() {
            Ok(())
        } else {
            Err(Error::Usage(format!("{what} {} does not exist", path.display())))
        }
    }

    pub fn spatial_config(&self) -> SpatialConfig {
        SpatialConfig {
            scheme: self.spatial.scheme,
            row_standardize: self.spatial.row_standardize,
            permutations: self.spatial.permutations,
            min_transitions: self.eval.min_tile_transitions,
            seed: self.seed,
        }
    }

    pub fn poi_config(&self) -> PoiAnalysisConfig {
        PoiAnalysisConfig {
            d_km: self.poi.d_km,
            histogram_bins: self.poi.histogram_bins,
            min_transitions: self.eval.min_tile_transitions,
            fit: self.poi.fit,
        }
    }

    pub fn prune_config(&self) -> PruneConfig {
        PruneConfig {
            user_percentile: self.pruning.user_percentile,
            origin_percentile: self.pruning.origin_percentile,
            test_user_percentile: self.pruning.test_user_percentile,
            n_samples: self.pruning.n_samples,
            seed: self.seed,
        }
    }
}
