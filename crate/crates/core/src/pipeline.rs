//! File-level commands: each reads its inputs from disk, runs one stage and
//! writes its outputs into the configured directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{predict_transitions, shift_evaluate, EvalReport, MoranResult, PowerLawFit, PredictionRecord, ShiftReport};
use crate::experiment::{binned_transitions, overlap_scores, poi_analysis, spatial_groups, split_users, train_models, Split, TrajectoryOverlap};
use crate::geo::{detect_stops, to_daily_trajectories, Stop, TileId};
use crate::io::{self, ModelMeta, ModelStore, RawInput};
use crate::model::{filter_dataset, group_by_user, ModelKind, Trajectory, UserHistory};
use crate::overlap::{BinnedTransition, OverlapBin};
use crate::robustness::{ensemble_seeds, ensemble_spatial_accuracy, prune_test_users, pruned_collective, tagged_transitions, EnsembleTile};
use crate::stats::median;
use crate::synth::{generate, scatter_pings, PingConfig, SynthConfig};

pub const STOPS_FILE: &str = "stops.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";

fn check_precision<'a>(tiles: impl IntoIterator<Item = &'a TileId>, precision: u8, what: &str) -> Result<()> {
    match tiles.into_iter().find(|t| t.precision() != precision) {
        Some(t) => Err(Error::data(format!("{what}: tile {t} has precision {}, configured {precision}", t.precision()))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub malformed: usize,
    pub users: usize,
    /// Stop detection is skipped for pre-tessellated input.
    pub stop_detection: bool,
    pub stops: usize,
    pub trajectories: usize,
}

/// Raw pings or tile points to `stops.csv` and `trajectories.csv` in the output directory.
///
/// Malformed rows are skipped and counted; above the configured share the
/// command fails before writing anything.
pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<IngestSummary> {
    let input = cfg.paths.input.as_deref().ok_or_else(|| Error::Usage("no input file configured".into()))?;
    PipelineConfig::require_file(input, "input")?;
    let (raw, stats) = io::read_raw_input(input)?;
    if stats.malformed > 0 {
        warn!("{}: skipped {} malformed of {} rows", input.display(), stats.malformed, stats.rows);
    }
    if stats.malformed_fraction() > cfg.geo.max_malformed_fraction {
        return Err(Error::data(format!(
            "{}: {} of {} rows malformed ({:.2}%), limit {:.2}%",
            input.display(),
            stats.malformed,
            stats.rows,
            100.0 * stats.malformed_fraction(),
            100.0 * cfg.geo.max_malformed_fraction
        )));
    }

    let params = cfg.geo.stop_params();
    let stop_detection = matches!(raw, RawInput::Pings(_));
    let per_user: Vec<(String, Vec<Stop>, Vec<Trajectory>)> = match raw {
        RawInput::Pings(users) => users
            .into_par_iter()
            .map(|(user, pings)| {
                let stops = detect_stops(&pings, &params)?;
                let points: Vec<_> = stops.iter().map(Stop::point).collect();
                let trajectories = to_daily_trajectories(&user, &points, cfg.geo.utc_offset_s)?;
                Ok((user, stops, trajectories))
            })
            .collect::<Result<_>>()?,
        RawInput::Points(users) => {
            check_precision(users.values().flatten().map(|p| &p.tile), cfg.geo.precision, &input.display().to_string())?;
            users
                .into_iter()
                .map(|(user, points)| {
                    let trajectories = to_daily_trajectories(&user, &points, cfg.geo.utc_offset_s)?;
                    Ok((user, Vec::new(), trajectories))
                })
                .collect::<Result<_>>()?
        }
    };

    let out = &cfg.paths.output_dir;
    io::write_stops_csv(&out.join(STOPS_FILE), per_user.iter().flat_map(|(u, stops, _)| stops.iter().map(move |s| (u.as_str(), s))))?;
    let trajectories: Vec<Trajectory> = per_user.iter().flat_map(|(_, _, t)| t.iter().cloned()).collect();
    io::write_trajectories_csv(&out.join(TRAJECTORIES_FILE), &trajectories)?;
    Ok(IngestSummary {
        rows: stats.rows,
        malformed: stats.malformed,
        users: per_user.len(),
        stop_detection,
        stops: per_user.iter().map(|(_, s, _)| s.len()).sum(),
        trajectories: trajectories.len(),
    })
}

fn load_histories(path: &Path, cfg: &PipelineConfig) -> Result<(usize, Vec<UserHistory>)> {
    PipelineConfig::require_file(path, "trajectory store")?;
    let trajectories = io::read_trajectories_csv(path)?;
    check_precision(trajectories.iter().flat_map(|t| t.points.iter().map(|p| &p.tile)), cfg.geo.precision, &path.display().to_string())?;
    let grouped = group_by_user(trajectories);
    let n_in = grouped.len();
    let kept = filter_dataset(grouped, &cfg.filter);
    if kept.is_empty() {
        return Err(Error::data(format!("no users survive filtering ({n_in} before)")));
    }
    Ok((n_in, kept))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub users_before_filter: usize,
    pub users: usize,
    pub train_trajectories: usize,
    pub test_trajectories: usize,
    pub collective_origins: usize,
}

/// Filters, splits and trains, then writes the model store.
pub fn cmd_train(cfg: &PipelineConfig, trajectories: &Path) -> Result<TrainSummary> {
    let (n_in, histories) = load_histories(trajectories, cfg)?;
    let split = split_users(&histories, cfg.split.test_fraction)?;
    let trained = train_models(&split.train)?;
    let meta = ModelMeta::describe(&split, cfg.geo.precision, &cfg.filter, cfg.split.test_fraction);
    io::write_store(&cfg.paths.model_store, &meta, &split, &trained)?;
    Ok(TrainSummary {
        users_before_filter: n_in,
        users: meta.n_users,
        train_trajectories: meta.n_train_trajectories,
        test_trajectories: meta.n_test_trajectories,
        collective_origins: trained.collective.counts.origins().count(),
    })
}

fn bin_counts(overlaps: &[TrajectoryOverlap]) -> BTreeMap<OverlapBin, usize> {
    let mut out = BTreeMap::new();
    for o in overlaps {
        *out.entry(o.score.bin).or_insert(0) += 1;
    }
    out
}

/// Overlap score of every test trajectory against its user's training set,
/// written to `overlap.csv`.
pub fn cmd_stratify(cfg: &PipelineConfig) -> Result<BTreeMap<OverlapBin, usize>> {
    let store = io::read_store(&cfg.paths.model_store)?;
    let overlaps = overlap_scores(&store.split);
    io::write_overlap_csv(&cfg.paths.output_dir.join("overlap.csv"), &overlaps)?;
    Ok(bin_counts(&overlaps))
}

/// Optional analyses of [`cmd_evaluate`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalFlags {
    pub stratify: bool,
    pub spatial: bool,
    pub prune: bool,
    pub pois: bool,
    pub shift: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub acc: Option<f64>,
    pub hits: u64,
    pub total: u64,
}

fn metrics(m: &BTreeMap<ModelKind, crate::eval::Accuracy>) -> BTreeMap<ModelKind, Metric> {
    m.iter()
        .map(|(&k, a)| {
            (
                k,
                Metric {
                    acc: a.value(),
                    hits: a.hits,
                    total: a.total,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranSummary {
    pub moran: Option<MoranResult>,
    pub note: Option<String>,
    /// Tiles with enough transitions to enter the statistic.
    pub reported_tiles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub test_transitions_before: usize,
    pub test_transitions_after: usize,
    pub members: usize,
    pub novel_only: bool,
    pub tiles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiSummary {
    pub anchor: TileId,
    pub d_km: f64,
    pub near_tiles: usize,
    pub far_tiles: usize,
    pub pearson_entropy_acc: Option<f64>,
    pub gamma_near: Option<PowerLawFit>,
    pub gamma_far: Option<PowerLawFit>,
}

/// The JSON summary of one evaluation, all three models side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub k: usize,
    pub users: usize,
    pub test_transitions: usize,
    /// ACC@k over transitions with a non-zero overlap score.
    pub overall: BTreeMap<ModelKind, Metric>,
    pub per_bin: BTreeMap<OverlapBin, BTreeMap<ModelKind, Metric>>,
    /// Median of `1 - S` per bin.
    pub median_confidence: BTreeMap<OverlapBin, Option<f64>>,
    /// Largest gap between overall accuracy and the count-weighted bin average.
    pub consistency_gap: f64,
    pub spatial: Option<BTreeMap<String, BTreeMap<ModelKind, MoranSummary>>>,
    pub ensemble: Option<EnsembleSummary>,
    pub poi: Option<PoiSummary>,
    pub shift: Option<ShiftReport>,
}

pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;

fn all_histories(split: &Split) -> Vec<UserHistory> {
    split
        .train
        .iter()
        .zip(&split.test)
        .map(|(a, b)| UserHistory::new(a.user_id.clone(), a.trajectories.iter().chain(&b.trajectories).cloned().collect()))
        .collect()
}

fn ensemble(cfg: &PipelineConfig, store: &ModelStore, transitions: &[BinnedTransition]) -> Result<(BTreeMap<TileId, EnsembleTile>, EnsembleSummary)> {
    let prune = cfg.prune_config();
    let retained: Vec<BinnedTransition> = transitions.iter().filter(|t| t.bin != OverlapBin::ExcludedZero).cloned().collect();
    let test = prune_test_users(&retained, prune.test_user_percentile, cfg.seed)?;
    let training = tagged_transitions(&store.split.train);
    let seeds = ensemble_seeds(cfg.seed, prune.n_samples);
    let tiles = ensemble_spatial_accuracy(&store.trained.models, &training, &test, &prune, &seeds, cfg.eval.k, cfg.pruning.novel_only)?;
    let summary = EnsembleSummary {
        test_transitions_before: retained.len(),
        test_transitions_after: test.len(),
        members: seeds.len(),
        novel_only: cfg.pruning.novel_only,
        tiles: tiles.len(),
    };
    Ok((tiles, summary))
}

fn require_cutoff(cfg: &PipelineConfig) -> Result<NaiveDate> {
    cfg.shift.cutoff.ok_or_else(|| Error::Usage("shift evaluation needs shift.cutoff".into()))
}

fn require_poi(cfg: &PipelineConfig) -> Result<PathBuf> {
    let path = cfg.paths.poi.clone().ok_or_else(|| Error::Usage("POI analysis needs paths.poi".into()))?;
    PipelineConfig::require_file(&path, "POI file")?;
    Ok(path)
}

/// Scores the stored model on its test set and writes the requested tables
/// plus `summary.json` to the output directory.
pub fn cmd_evaluate(cfg: &PipelineConfig, flags: EvalFlags) -> Result<EvalSummary> {
    let cutoff = if flags.shift { Some(require_cutoff(cfg)?) } else { None };
    let poi_path = if flags.pois { Some(require_poi(cfg)?) } else { None };
    let store = io::read_store(&cfg.paths.model_store)?;
    let out = &cfg.paths.output_dir;
    let k = cfg.eval.k;

    let overlaps = overlap_scores(&store.split);
    let transitions = binned_transitions(&store.split, &overlaps);
    let records: Vec<PredictionRecord> = predict_transitions(&store.trained.models, &transitions, k)?;
    let report = EvalReport::from_records(&records, k, cfg.eval.min_tile_transitions);
    let gap = report.bin_consistency_gap();
    info!("bin-weighted consistency gap {gap:.3e}");
    if !(gap <= CONSISTENCY_TOLERANCE) {
        return Err(Error::Invariant(format!("overall accuracy differs from the bin-weighted average by {gap:e}")));
    }
    for (kind, a) in &report.overall {
        if let Some(v) = a.value().filter(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invariant(format!("ACC@{k} of {kind} = {v} outside [0, 1]")));
        }
    }

    io::write_fig2a(&out.join("fig2a.csv"), &report)?;
    if flags.stratify {
        io::write_fig2b(&out.join("fig2b.csv"), &report)?;
        io::write_fig2c(&out.join("fig2c.csv"), &records)?;
        io::write_overlap_csv(&out.join("overlap.csv"), &overlaps)?;
    }

    let spatial = if flags.spatial {
        let groups = spatial_groups(&records, &cfg.spatial_config());
        let rows = groups.iter().flat_map(|(g, stats)| stats.iter().map(move |(&kind, s)| (g.as_str(), kind, &s.tiles)));
        io::write_fig3(&out.join("fig3.csv"), rows)?;
        let rows = groups
            .iter()
            .flat_map(|(g, stats)| stats.iter().map(move |(&kind, s)| (g.as_str(), kind, s.moran.as_ref(), s.moran_error.as_deref())));
        io::write_fig3_moran(&out.join("fig3_moran.csv"), rows)?;
        Some(
            groups
                .into_iter()
                .map(|(g, stats)| {
                    let per_model = stats
                        .into_iter()
                        .map(|(kind, s)| {
                            let reported_tiles = s.tiles.values().filter(|a| !a.below_min).count();
                            (
                                kind,
                                MoranSummary {
                                    moran: s.moran,
                                    note: s.moran_error,
                                    reported_tiles,
                                },
                            )
                        })
                        .collect();
                    (g, per_model)
                })
                .collect(),
        )
    } else {
        None
    };

    let ensemble_summary = if flags.prune {
        let (tiles, summary) = ensemble(cfg, &store, &transitions)?;
        io::write_ensemble_csv(&out.join("ensemble.csv"), &tiles)?;
        Some(summary)
    } else {
        None
    };

    let poi = match poi_path {
        Some(path) => {
            let counts = io::read_poi(&path, store.meta.precision)?;
            let analysis = poi_analysis(&store.trained.collective, &records, &counts, &cfg.poi_config())?;
            io::write_fig4a(&out.join("fig4a.csv"), &analysis, &counts)?;
            io::write_fig4c(&out.join("fig4c.csv"), &analysis)?;
            Some(PoiSummary {
                anchor: analysis.split.anchor,
                d_km: analysis.split.d_km,
                near_tiles: analysis.split.near.len(),
                far_tiles: analysis.split.far.len(),
                pearson_entropy_acc: analysis.pearson_entropy_acc,
                gamma_near: analysis.gamma_near,
                gamma_far: analysis.gamma_far,
            })
        }
        None => None,
    };

    let shift = match cutoff {
        Some(cutoff) => {
            let report = shift_evaluate(&all_histories(&store.split), cutoff, k)?;
            io::write_table3(&out.join("table3.csv"), &report)?;
            Some(report)
        }
        None => None,
    };

    let summary = EvalSummary {
        k,
        users: store.meta.n_users,
        test_transitions: records.len(),
        overall: metrics(&report.overall),
        per_bin: report.per_bin.iter().map(|(&b, m)| (b, metrics(m))).collect(),
        median_confidence: report.confidence.iter().map(|(&b, v)| (b, median(v))).collect(),
        consistency_gap: gap,
        spatial,
        ensemble: ensemble_summary,
        poi,
        shift,
    };
    io::write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Trains on everything before the cutoff and scores each later month;
/// writes `table3.csv` and `shift.json`.
pub fn cmd_shift_eval(cfg: &PipelineConfig, trajectories: &Path) -> Result<ShiftReport> {
    let cutoff = require_cutoff(cfg)?;
    let (_, histories) = load_histories(trajectories, cfg)?;
    let report = shift_evaluate(&histories, cutoff, cfg.eval.k)?;
    if report.months.len() < 2 {
        warn!("only {} month(s) after {cutoff}; the relative drop needs two", report.months.len());
    }
    io::write_table3(&cfg.paths.output_dir.join("table3.csv"), &report)?;
    io::write_json(&cfg.paths.output_dir.join("shift.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub seed: u64,
    pub training_transitions: usize,
    pub pruned_transitions: u64,
    /// Cap applied to every origin total.
    pub origin_threshold: u64,
    pub ensemble: EnsembleSummary,
}

/// Writes the pruned collective model (`collective_pruned.csv`), the
/// ensemble accuracy per tile (`ensemble.csv`) and `prune.json`.
pub fn cmd_prune(cfg: &PipelineConfig) -> Result<PruneSummary> {
    let store = io::read_store(&cfg.paths.model_store)?;
    let out = &cfg.paths.output_dir;
    let training = tagged_transitions(&store.split.train);
    let pruned = pruned_collective(&training, &cfg.prune_config(), cfg.seed)?;
    io::write_od_csv(&out.join("collective_pruned.csv"), &pruned.counts)?;

    let overlaps = overlap_scores(&store.split);
    let transitions = binned_transitions(&store.split, &overlaps);
    let (tiles, ensemble) = ensemble(cfg, &store, &transitions)?;
    io::write_ensemble_csv(&out.join("ensemble.csv"), &tiles)?;
    let summary = PruneSummary {
        seed: cfg.seed,
        training_transitions: training.len(),
        pruned_transitions: pruned.counts.total(),
        origin_threshold: pruned.threshold,
        ensemble,
    };
    io::write_json(&out.join("prune.json"), &summary)?;
    Ok(summary)
}

pub fn load_scenario(path: &Path) -> Result<SynthConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg: SynthConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub users: usize,
    pub trajectories: usize,
    pub points: usize,
    pub redrawn_users: usize,
    pub poi_tiles: usize,
    pub pings: Option<usize>,
}

/// Generates a dataset into `out_dir`: `trajectories.csv`, `poi.csv`, the
/// scenario echo `scenario.toml` and, when asked, `pings.csv`.
pub fn cmd_synth(scenario: &SynthConfig, out_dir: &Path, pings: Option<&PingConfig>) -> Result<SynthSummary> {
    scenario.validate().map_err(|e| Error::Config(e.to_string()))?;
    let data = generate(scenario)?;
    std::fs::create_dir_all(out_dir)?;
    io::write_trajectories_csv(&out_dir.join(TRAJECTORIES_FILE), &data.trajectories)?;
    io::write_poi_csv(&out_dir.join("poi.csv"), &data.poi)?;
    let echo = toml::to_string(scenario).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(out_dir.join("scenario.toml"), echo)?;
    let n_pings = match pings {
        Some(p) => {
            let pings = scatter_pings(&data.trajectories, p, scenario.seed);
            io::write_pings_csv(&out_dir.join("pings.csv"), &pings)?;
            Some(pings.len())
        }
        None => None,
    };
    Ok(SynthSummary {
        users: data.profiles.len(),
        trajectories: data.trajectories.len(),
        points: data.trajectories.iter().map(Trajectory::len).sum(),
        redrawn_users: data.redrawn().len(),
        poi_tiles: data.poi.len(),
        pings: n_pings,
    })
}
