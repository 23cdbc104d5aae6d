//! Bias controls: test-user capping, per-origin user pruning, collective OD
//! sub-sampling, and the ensemble of pruned collective models.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{per_origin_accuracy, predict_transitions, PredictionRecord};
use crate::geo::TileId;
use crate::model::{CollectiveModel, MixedModel, ModelKind, OdCounts, UserHistory};
use crate::overlap::BinnedTransition;
use crate::rng::rng_for;
use crate::stats::{mean, percentile_nearest_rank, std_dev};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneConfig {
    /// Per-origin cap on each user's transitions, as a percentile of users' counts.
    pub user_percentile: f64,
    /// Cap on each origin's total, as a percentile of origin totals.
    pub origin_percentile: f64,
    /// Cap on each user's test transitions.
    pub test_user_percentile: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            user_percentile: 50.0,
            origin_percentile: 50.0,
            test_user_percentile: 95.0,
            n_samples: 10,
            seed: 0,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("user_percentile", self.user_percentile),
            ("origin_percentile", self.origin_percentile),
            ("test_user_percentile", self.test_user_percentile),
        ] {
            if !(p > 0.0 && p < 100.0) {
                return Err(Error::Config(format!("pruning.{name} = {p} must lie in (0, 100)")));
            }
        }
        if self.n_samples == 0 {
            return Err(Error::Config("pruning.n_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// A training transition tagged with the index of its user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaggedTransition {
    pub user: u32,
    pub origin: TileId,
    pub dest: TileId,
}

/// All transitions of `histories`, users numbered by position.
pub fn tagged_transitions(histories: &[UserHistory]) -> Vec<TaggedTransition> {
    histories
        .iter()
        .enumerate()
        .flat_map(|(u, h)| {
            h.trajectories
                .iter()
                .flat_map(|t| t.transitions())
                .map(move |(origin, dest)| TaggedTransition {
                    user: u as u32,
                    origin,
                    dest,
                })
        })
        .collect()
}

/// Keeps a uniform random subset of `cap` indices out of `n`, in ascending order.
fn keep_indices(n: usize, cap: usize, key: &[u8], seed: u64) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut rng = rng_for(seed, key);
    let mut idx = sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    idx
}

/// Caps every user's test transitions at `threshold`, sampling uniformly without replacement.
pub fn cap_user_transitions(test: &[BinnedTransition], threshold: usize, seed: u64) -> Vec<BinnedTransition> {
    let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in test.iter().enumerate() {
        by_user.entry(t.user_id.as_str()).or_default().push(i);
    }
    let mut keep = vec![false; test.len()];
    for (user, idx) in by_user {
        for k in keep_indices(idx.len(), threshold, user.as_bytes(), seed) {
            keep[idx[k]] = true;
        }
    }
    test.iter().zip(keep).filter(|(_, k)| *k).map(|(t, _)| t.clone()).collect()
}

/// Caps users above the `percentile` of per-user test transition counts.
pub fn prune_test_users(test: &[BinnedTransition], percentile: f64, seed: u64) -> Result<Vec<BinnedTransition>> {
    if test.is_empty() {
        return Ok(Vec::new());
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in test {
        *counts.entry(t.user_id.as_str()).or_default() += 1;
    }
    let values: Vec<usize> = counts.values().copied().collect();
    let threshold = percentile_nearest_rank(&values, percentile)?;
    Ok(cap_user_transitions(test, threshold, seed))
}

fn group_by_origin(transitions: &[TaggedTransition]) -> BTreeMap<TileId, Vec<TaggedTransition>> {
    let mut out: BTreeMap<TileId, Vec<TaggedTransition>> = BTreeMap::new();
    for &t in transitions {
        out.entry(t.origin).or_default().push(t);
    }
    out
}

fn origin_key(origin: TileId, salt: &str) -> Vec<u8> {
    format!("{salt}:{origin}").into_bytes()
}

/// Per origin, down-samples users whose transition count from that origin
/// exceeds the `percentile` of users' counts there.
///
/// Output is grouped by origin; within an origin, input order is kept.
pub fn prune_user_origins(transitions: &[TaggedTransition], percentile: f64, seed: u64) -> Result<Vec<TaggedTransition>> {
    let mut out = Vec::with_capacity(transitions.len());
    for (origin, group) in group_by_origin(transitions) {
        let mut by_user: BTreeMap<u32, Vec<TaggedTransition>> = BTreeMap::new();
        for t in group {
            by_user.entry(t.user).or_default().push(t);
        }
        let counts: Vec<usize> = by_user.values().map(Vec::len).collect();
        let threshold = percentile_nearest_rank(&counts, percentile)?;
        let mut kept: Vec<(usize, TaggedTransition)> = Vec::new();
        for (user, ts) in by_user {
            let key = origin_key(origin, &format!("user-{user}"));
            kept.extend(keep_indices(ts.len(), threshold, &key, seed).into_iter().map(|i| (i, ts[i])));
        }
        out.extend(kept.into_iter().map(|(_, t)| t));
    }
    Ok(out)
}

/// Collective counts after capping each origin at `threshold` transitions.
pub fn prune_collective_with_threshold(transitions: &[TaggedTransition], threshold: usize, seed: u64) -> OdCounts {
    let mut counts = OdCounts::new();
    for (origin, group) in group_by_origin(transitions) {
        for i in keep_indices(group.len(), threshold, &origin_key(origin, "od"), seed) {
            counts.add(origin, group[i].dest, 1);
        }
    }
    counts
}

/// Pruned collective counts and the cap that was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedCollective {
    pub counts: OdCounts,
    pub threshold: u64,
}

/// Caps every origin total at the `x`-th percentile of origin totals by
/// sampling without replacement; origins at or below it are untouched.
pub fn prune_collective_od(transitions: &[TaggedTransition], x: f64, seed: u64) -> Result<PrunedCollective> {
    let totals: Vec<usize> = group_by_origin(transitions).values().map(Vec::len).collect();
    if totals.is_empty() {
        return Ok(PrunedCollective {
            counts: OdCounts::new(),
            threshold: 0,
        });
    }
    let threshold = percentile_nearest_rank(&totals, x)?;
    Ok(PrunedCollective {
        counts: prune_collective_with_threshold(transitions, threshold, seed),
        threshold: threshold as u64,
    })
}

/// Per-user then per-origin pruning with the configured percentiles.
pub fn pruned_collective(transitions: &[TaggedTransition], cfg: &PruneConfig, seed: u64) -> Result<PrunedCollective> {
    let users = prune_user_origins(transitions, cfg.user_percentile, seed)?;
    prune_collective_od(&users, cfg.origin_percentile, seed)
}

/// Test transitions whose destination never followed the origin in the user's
/// own training data.
pub fn novel_transitions(models: &BTreeMap<String, MixedModel>, test: &[BinnedTransition]) -> Vec<BinnedTransition> {
    test.iter()
        .filter(|t| {
            !models
                .get(&t.user_id)
                .and_then(|m| m.individual_row(t.origin))
                .is_some_and(|r| r.contains(t.dest))
        })
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleTile {
    pub mean_acc: f64,
    pub std_acc: f64,
    pub n_samples: usize,
}

/// Per-origin ACC@k of M averaged over collective models pruned with each seed.
///
/// Individual rows stay as trained; only the collective rows are rebuilt.
pub fn ensemble_spatial_accuracy(
    models: &BTreeMap<String, MixedModel>,
    training: &[TaggedTransition],
    test: &[BinnedTransition],
    cfg: &PruneConfig,
    seeds: &[u64],
    k: usize,
    novel_only: bool,
) -> Result<BTreeMap<TileId, EnsembleTile>> {
    let test: Vec<BinnedTransition> = if novel_only {
        novel_transitions(models, test)
    } else {
        test.to_vec()
    };
    let members: Vec<BTreeMap<TileId, f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let pruned = pruned_collective(training, cfg, seed)?;
            let collective = Arc::new(CollectiveModel::from_counts(pruned.counts));
            let swapped: BTreeMap<String, MixedModel> = models.iter().map(|(u, m)| (u.clone(), m.with_collective(collective.clone()))).collect();
            let records: Vec<PredictionRecord> = predict_transitions(&swapped, &test, k)?;
            Ok(per_origin_accuracy(&records, ModelKind::M, 0).into_iter().map(|(t, a)| (t, a.acc)).collect())
        })
        .collect::<Result<_>>()?;

    let mut samples: BTreeMap<TileId, Vec<f64>> = BTreeMap::new();
    for member in members {
        for (t, acc) in member {
            samples.entry(t).or_default().push(acc);
        }
    }
    Ok(samples
        .into_iter()
        .map(|(t, v)| {
            (
                t,
                EnsembleTile {
                    mean_acc: mean(&v).unwrap_or(0.0),
                    std_acc: std_dev(&v).unwrap_or(0.0),
                    n_samples: v.len(),
                },
            )
        })
        .collect())
}

/// Seeds for `n` ensemble members derived from one base seed.
pub fn ensemble_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_add(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlap::OverlapBin;

    fn tile(i: usize) -> TileId {
        let alphabet = b"0123456789bcdefghjkmnpqrstuvwxyz";
        let s = format!("{}{}", alphabet[i / 32] as char, alphabet[i % 32] as char);
        s.parse().unwrap()
    }

    fn test_tx(user: &str, n: usize) -> Vec<BinnedTransition> {
        (0..n)
            .map(|i| BinnedTransition {
                user_id: user.into(),
                origin: tile(i % 7),
                dest: tile(i % 5),
                time: i as i64,
                bin: OverlapBin::B40_60,
            })
            .collect()
    }

    #[test]
    fn test_user_cap() {
        let mut test = test_tx("heavy", 100);
        test.extend(test_tx("light", 10));
        let capped = cap_user_transitions(&test, 60, 3);
        assert_eq!(capped.iter().filter(|t| t.user_id == "heavy").count(), 60);
        assert_eq!(capped.iter().filter(|t| t.user_id == "light").count(), 10);
        assert_eq!(capped, cap_user_transitions(&test, 60, 3));
        assert_ne!(capped, cap_user_transitions(&test, 60, 4));
        // order preserved
        assert!(capped.windows(2).filter(|w| w[0].user_id == w[1].user_id).all(|w| w[0].time < w[1].time));
        let small = test_tx("a", 5);
        assert_eq!(prune_test_users(&small, 95.0, 1).unwrap(), small);
    }

    fn tagged(user: u32, origin: usize, dest: usize, n: usize) -> Vec<TaggedTransition> {
        vec![
            TaggedTransition {
                user,
                origin: tile(origin),
                dest: tile(dest),
            };
            n
        ]
    }

    #[test]
    fn user_origin_pruning() {
        let mut tx = tagged(0, 1, 2, 1);
        tx.extend(tagged(1, 1, 3, 3));
        tx.extend(tagged(2, 1, 4, 10));
        let pruned = prune_user_origins(&tx, 50.0, 9).unwrap();
        let count = |u: u32| pruned.iter().filter(|t| t.user == u).count();
        assert_eq!((count(0), count(1), count(2)), (1, 3, 3));

        let single = tagged(5, 1, 2, 7);
        assert_eq!(prune_user_origins(&single, 50.0, 9).unwrap(), single);
    }

    #[test]
    fn collective_threshold_is_exact() {
        let mut tx = Vec::new();
        for d in 0..20 {
            tx.extend(tagged(d as u32, 0, d, 50));
        }
        let pruned = prune_collective_with_threshold(&tx, 418, 1);
        assert_eq!(pruned.origin_total(tile(0)), 418);

        // equal totals are left alone
        let mut even = tagged(0, 1, 2, 4);
        even.extend(tagged(0, 2, 1, 4));
        let p = prune_collective_od(&even, 50.0, 1).unwrap();
        assert_eq!(p.threshold, 4);
        assert_eq!(p.counts, OdCounts::from_pairs(even.iter().map(|t| (t.origin, t.dest))));
    }

    #[test]
    fn pruning_is_deterministic() {
        let mut tx = Vec::new();
        for o in 0..6 {
            tx.extend(tagged(o as u32, o, (o + 1) % 6, 10 * (o + 1)));
        }
        let a = prune_collective_od(&tx, 50.0, 42).unwrap();
        let b = prune_collective_od(&tx, 50.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.counts.iter().all(|(o, _)| a.counts.origin_total(o) <= a.threshold));
    }
}
