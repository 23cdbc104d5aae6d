use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{Datelike, NaiveDate};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::Accuracy;
use crate::eval::report::{kind_index, predict_one};
use crate::model::{collective_counts, CollectiveModel, MixedModel, ModelKind, Trajectory, UserHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthAccuracy {
    /// `YYYY-MM`
    pub month: String,
    pub accuracy: BTreeMap<ModelKind, Accuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub cutoff: NaiveDate,
    pub k: usize,
    pub months: Vec<MonthAccuracy>,
    /// `(first - last) / first` per model over the post-cutoff months.
    pub relative_drop: BTreeMap<ModelKind, f64>,
}

fn month_key(day: NaiveDate) -> (i32, u32) {
    (day.year(), day.month())
}

/// Trains on trajectories before `cutoff` and scores each later calendar month.
///
/// Users without pre-cutoff data contribute no test transitions.
pub fn shift_evaluate(histories: &[UserHistory], cutoff: NaiveDate, k: usize) -> Result<ShiftReport> {
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let split: Vec<(UserHistory, Vec<&Trajectory>)> = histories
        .iter()
        .map(|h| {
            let train = h.trajectories.iter().filter(|t| t.day < cutoff).cloned().collect();
            let test = h.trajectories.iter().filter(|t| t.day >= cutoff).collect();
            (UserHistory::new(h.user_id.clone(), train), test)
        })
        .filter(|(train, _)| !train.trajectories.is_empty())
        .collect();
    let train: Vec<UserHistory> = split.iter().map(|(h, _)| h.clone()).collect();
    if train.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let collective = Arc::new(CollectiveModel::from_counts(collective_counts(&train)));

    let per_user: Vec<BTreeMap<(i32, u32), [Accuracy; 3]>> = split
        .par_iter()
        .map(|(h, test)| {
            let model = MixedModel::train(h, collective.clone())?;
            let mut out: BTreeMap<(i32, u32), [Accuracy; 3]> = BTreeMap::new();
            for traj in test {
                let slot = out.entry(month_key(traj.day)).or_default();
                for (o, d) in traj.transitions() {
                    let hits = predict_one(&model, o, d, k)?;
                    for kind in ModelKind::ALL {
                        let i = kind_index(kind);
                        slot[i].record(hits[i]);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut merged: BTreeMap<(i32, u32), [Accuracy; 3]> = BTreeMap::new();
    for user in per_user {
        for (m, accs) in user {
            let slot = merged.entry(m).or_default();
            for i in 0..3 {
                slot[i] += accs[i];
            }
        }
    }

    let mut months = Vec::new();
    for ((y, m), accs) in merged {
        let label = format!("{y:04}-{m:02}");
        if accs[0].total == 0 {
            warn!("no test transitions in {label}; skipped");
            continue;
        }
        months.push(MonthAccuracy {
            month: label,
            accuracy: ModelKind::ALL.iter().map(|&kind| (kind, accs[kind_index(kind)])).collect(),
        });
    }

    let mut relative_drop = BTreeMap::new();
    if let (Some(first), Some(last)) = (months.first(), months.last()) {
        for kind in ModelKind::ALL {
            if let (Some(a), Some(b)) = (first.accuracy[&kind].value(), last.accuracy[&kind].value()) {
                if a > 0.0 {
                    relative_drop.insert(kind, (a - b) / a);
                }
            }
        }
    }
    Ok(ShiftReport {
        cutoff,
        k,
        months,
        relative_drop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::SpatioTemporalPoint;
    use crate::TileId;

    fn traj(user: &str, day: NaiveDate, tiles: &[&str]) -> Trajectory {
        let points = tiles
            .iter()
            .enumerate()
            .map(|(i, s)| SpatioTemporalPoint {
                tile: s.parse::<TileId>().unwrap(),
                time: i as i64,
            })
            .collect();
        Trajectory::new(user, day, points)
    }

    #[test]
    fn stationary_user_is_flat() {
        let d = |m: u32, day: u32| NaiveDate::from_ymd_opt(2020, m, day).unwrap();
        let days = [d(1, 5), d(2, 5), d(3, 5), d(3, 20), d(4, 5)];
        let trajs = days.iter().map(|&day| traj("u", day, &["b", "c", "d", "b"])).collect();
        let h = UserHistory::new("u", trajs);
        let r = shift_evaluate(&[h], d(3, 1), 5).unwrap();
        assert_eq!(r.months.len(), 2);
        assert_eq!(r.months[0].month, "2020-03");
        for kind in ModelKind::ALL {
            assert_eq!(r.relative_drop[&kind], 0.0);
            assert_eq!(r.months[0].accuracy[&kind].value(), Some(1.0));
        }
    }

    #[test]
    fn no_training_data() {
        let h = UserHistory::new("u", vec![traj("u", NaiveDate::from_ymd_opt(2020, 5, 1).unwrap(), &["b", "c"])]);
        assert!(shift_evaluate(&[h], NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 5).is_err());
    }
}
