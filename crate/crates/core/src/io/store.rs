//! On-disk model store: one directory holding
//!
//! - `collective.csv`: `origin,destination,probability,count`
//! - `individual.csv`: `user_id,origin,destination,probability,count`
//! - `entropy.csv`: `user_id,origin,entropy`
//! - `model.json`: metadata sidecar
//! - `train.csv`, `test.csv`: the split, in the trajectory store format
//!
//! Rows are rebuilt from the counts on load, so a reloaded model predicts
//! exactly like the one that was written.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{create_writer, read_json, read_trajectories_csv, write_json, write_trajectories_csv};
use crate::error::{Error, Result};
use crate::experiment::{Split, Trained};
use crate::geo::TileId;
use crate::model::{group_by_user, CollectiveModel, FilterConfig, MixedModel, OdCounts, UserHistory};

pub const STORE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format_version: u32,
    pub precision: u8,
    pub filter: FilterConfig,
    pub test_fraction: f64,
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    pub n_users: usize,
    pub n_train_trajectories: usize,
    pub n_test_trajectories: usize,
    /// Distinct training locations per user, the entropy normalizer.
    pub visited: BTreeMap<String, usize>,
}

impl ModelMeta {
    pub fn describe(split: &Split, precision: u8, filter: &FilterConfig, test_fraction: f64) -> Self {
        let days = split.train.iter().flat_map(|h| h.trajectories.iter().map(|t| t.day));
        let (lo, hi) = days.fold((None, None), |(lo, hi): (Option<NaiveDate>, Option<NaiveDate>), d| {
            (Some(lo.map_or(d, |x| x.min(d))), Some(hi.map_or(d, |x| x.max(d))))
        });
        ModelMeta {
            format_version: STORE_FORMAT_VERSION,
            precision,
            filter: filter.clone(),
            test_fraction,
            train_start: lo,
            train_end: hi,
            n_users: split.train.len(),
            n_train_trajectories: split.train.iter().map(|h| h.trajectories.len()).sum(),
            n_test_trajectories: split.test.iter().map(|h| h.trajectories.len()).sum(),
            visited: split.train.iter().map(|h| (h.user_id.clone(), h.visited().len())).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelStore {
    pub meta: ModelMeta,
    pub split: Split,
    pub trained: Trained,
}

#[derive(Debug, Serialize, Deserialize)]
struct CollectiveRow {
    origin: TileId,
    destination: TileId,
    probability: f64,
    count: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndividualRow {
    user_id: String,
    origin: TileId,
    destination: TileId,
    probability: f64,
    count: u64,
}

fn probability(counts: &OdCounts, o: TileId, n: u64) -> f64 {
    n as f64 / counts.origin_total(o) as f64
}

/// `origin,destination,probability,count`, the layout of `collective.csv`.
pub fn write_od_csv(path: &Path, c: &OdCounts) -> Result<()> {
    let mut w = create_writer(path)?;
    w.write_record(["origin", "destination", "probability", "count"])?;
    for (origin, destination, count) in c.entries() {
        w.serialize(CollectiveRow {
            origin,
            destination,
            probability: probability(c, origin, count),
            count,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_store(dir: &Path, meta: &ModelMeta, split: &Split, trained: &Trained) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_od_csv(&dir.join("collective.csv"), &trained.collective.counts)?;

    let mut w = create_writer(&dir.join("individual.csv"))?;
    w.write_record(["user_id", "origin", "destination", "probability", "count"])?;
    for (user, m) in &trained.models {
        for (origin, destination, count) in m.counts.entries() {
            w.serialize(IndividualRow {
                user_id: user.clone(),
                origin,
                destination,
                probability: probability(&m.counts, origin, count),
                count,
            })?;
        }
    }
    w.flush()?;

    let mut w = create_writer(&dir.join("entropy.csv"))?;
    w.write_record(["user_id", "origin", "entropy"])?;
    for (user, m) in &trained.models {
        for (origin, s) in &m.entropies {
            w.write_record([user.as_str(), &origin.to_string(), &s.to_string()])?;
        }
    }
    w.flush()?;

    write_json(&dir.join("model.json"), meta)?;
    let flat = |hs: &[UserHistory]| hs.iter().flat_map(|h| h.trajectories.iter().cloned()).collect::<Vec<_>>();
    write_trajectories_csv(&dir.join("train.csv"), &flat(&split.train))?;
    write_trajectories_csv(&dir.join("test.csv"), &flat(&split.test))?;
    Ok(())
}

fn histories_for(users: &[&String], trajectories: Vec<crate::model::Trajectory>, what: &str) -> Result<Vec<UserHistory>> {
    let mut by_user: BTreeMap<String, UserHistory> = group_by_user(trajectories).into_iter().map(|h| (h.user_id.clone(), h)).collect();
    let out = users
        .iter()
        .map(|u| by_user.remove(*u).unwrap_or_else(|| UserHistory::new((*u).clone(), Vec::new())))
        .collect();
    if let Some(extra) = by_user.keys().next() {
        return Err(Error::data(format!("{what} lists user '{extra}' missing from model.json")));
    }
    Ok(out)
}

pub fn read_store(dir: &Path) -> Result<ModelStore> {
    let meta_path = dir.join("model.json");
    if !meta_path.is_file() {
        return Err(Error::data(format!("no model store at {}", dir.display())));
    }
    let meta: ModelMeta = read_json(&meta_path)?;
    if meta.format_version != STORE_FORMAT_VERSION {
        return Err(Error::data(format!("unsupported model store version {}", meta.format_version)));
    }

    let mut collective = OdCounts::new();
    for row in csv::Reader::from_path(dir.join("collective.csv"))?.deserialize::<CollectiveRow>() {
        let row = row?;
        collective.add(row.origin, row.destination, row.count);
    }
    let collective = Arc::new(CollectiveModel::from_counts(collective));

    let mut individual: BTreeMap<String, OdCounts> = BTreeMap::new();
    for row in csv::Reader::from_path(dir.join("individual.csv"))?.deserialize::<IndividualRow>() {
        let row = row?;
        if !meta.visited.contains_key(&row.user_id) {
            return Err(Error::data(format!("individual.csv lists unknown user '{}'", row.user_id)));
        }
        individual.entry(row.user_id).or_default().add(row.origin, row.destination, row.count);
    }
    let mut models = BTreeMap::new();
    for (user, &visited) in &meta.visited {
        let counts = individual.remove(user).unwrap_or_default();
        models.insert(user.clone(), MixedModel::from_counts(user.clone(), counts, visited, collective.clone())?);
    }

    let users: Vec<&String> = meta.visited.keys().collect();
    let train = histories_for(&users, read_trajectories_csv(&dir.join("train.csv"))?, "train.csv")?;
    let test = histories_for(&users, read_trajectories_csv(&dir.join("test.csv"))?, "test.csv")?;
    Ok(ModelStore {
        meta,
        split: Split { train, test },
        trained: Trained { collective, models },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{split_users, train_models};
    use crate::model::{filter_dataset, ModelKind};
    use crate::synth::{generate, GridConfig, SynthConfig};

    #[test]
    fn reload_predicts_identically() {
        let cfg = SynthConfig {
            n_users: 20,
            n_days: 20,
            grid: GridConfig { rows: 8, cols: 8, ..GridConfig::default() },
            ..SynthConfig::default()
        };
        let histories = filter_dataset(group_by_user(generate(&cfg).unwrap().trajectories), &FilterConfig::default());
        let split = split_users(&histories, 0.2).unwrap();
        let trained = train_models(&split.train).unwrap();
        let meta = ModelMeta::describe(&split, 6, &FilterConfig::default(), 0.2);
        let dir = tempfile::tempdir().unwrap();
        write_store(dir.path(), &meta, &split, &trained).unwrap();
        let back = read_store(dir.path()).unwrap();
        assert_eq!(back.meta, meta);
        assert_eq!(back.split, split);
        assert_eq!(*back.trained.collective, *trained.collective);
        for (user, m) in &trained.models {
            let r = &back.trained.models[user];
            assert_eq!(r.entropies, m.entropies);
            for origin in m.collective.counts.tiles() {
                for kind in ModelKind::ALL {
                    assert_eq!(r.predict(kind, origin, 5).unwrap(), m.predict(kind, origin, 5).unwrap());
                }
            }
        }
    }

    #[test]
    fn missing_store_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_store(dir.path()), Err(Error::Data(_))));
    }
}
