use serde::{Deserialize, Serialize};

use super::UserHistory;
use crate::error::{Error, Result};
use crate::stats::percentile_nearest_rank;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Trajectories with fewer points are dropped.
    pub min_points: usize,
    /// Users with fewer surviving trajectories are dropped.
    pub min_trajectories: usize,
    /// Users whose trajectory count exceeds this percentile are dropped.
    pub max_user_percentile: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_points: 4,
            min_trajectories: 2,
            max_user_percentile: 95.0,
        }
    }
}

/// Drops short trajectories, users with too few trajectories, then the most
/// represented users (count above the nearest-rank percentile of the
/// remaining users' trajectory counts).
pub fn filter_dataset(histories: Vec<UserHistory>, cfg: &FilterConfig) -> Vec<UserHistory> {
    let kept: Vec<UserHistory> = histories
        .into_iter()
        .map(|h| {
            let trajs = h.trajectories.into_iter().filter(|t| t.len() >= cfg.min_points).collect();
            UserHistory::new(h.user_id, trajs)
        })
        .filter(|h| h.trajectories.len() >= cfg.min_trajectories)
        .collect();
    let counts: Vec<usize> = kept.iter().map(|h| h.trajectories.len()).collect();
    let Ok(threshold) = percentile_nearest_rank(&counts, cfg.max_user_percentile) else {
        return kept;
    };
    kept.into_iter().filter(|h| h.trajectories.len() <= threshold).collect()
}

/// Chronological split: the most recent `floor(test_fraction * n)` trajectories
/// (at least one) form the test set; training keeps at least one.
pub fn train_test_split(history: &UserHistory, test_fraction: f64) -> Result<(UserHistory, UserHistory)> {
    let n = history.trajectories.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let n_test = ((test_fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let (train, test) = history.trajectories.split_at(n - n_test);
    Ok((
        UserHistory::new(history.user_id.clone(), train.to_vec()),
        UserHistory::new(history.user_id.clone(), test.to_vec()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{SpatioTemporalPoint, TileId};
    use crate::model::Trajectory;
    use chrono::NaiveDate;

    fn traj(user: &str, day: u64, n_points: usize) -> Trajectory {
        let tile: TileId = "s00000".parse().unwrap();
        let date = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(day);
        let points = (0..n_points)
            .map(|i| SpatioTemporalPoint {
                tile,
                time: i as i64,
            })
            .collect();
        Trajectory::new(user, date, points)
    }

    fn user(name: &str, n_traj: usize) -> UserHistory {
        UserHistory::new(name, (0..n_traj as u64).map(|d| traj(name, d, 4)).collect())
    }

    #[test]
    fn drops_short_trajectories_and_thin_users() {
        let h = UserHistory::new("u", vec![traj("u", 0, 3), traj("u", 1, 4), traj("u", 2, 5)]);
        let out = filter_dataset(vec![h], &FilterConfig::default());
        assert_eq!(out[0].trajectories.len(), 2);

        let h = UserHistory::new("u", vec![traj("u", 0, 3), traj("u", 1, 4)]);
        assert!(filter_dataset(vec![h], &FilterConfig::default()).is_empty());
    }

    #[test]
    fn drops_most_represented_users() {
        let users: Vec<UserHistory> = (1..=100).map(|c| user(&format!("u{c:03}"), c)).collect();
        let out = filter_dataset(users, &FilterConfig::default());
        // oracle: users 2..=100 survive the minimum; nearest rank of p95 over 99 values
        let survivors: Vec<usize> = (2..=100).collect();
        let rank = (0.95f64 * survivors.len() as f64).ceil() as usize;
        let threshold = survivors[rank - 1];
        assert_eq!(threshold, 96);
        let expected: Vec<usize> = survivors.iter().copied().filter(|&c| c <= threshold).collect();
        let got: Vec<usize> = out.iter().map(|h| h.trajectories.len()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn chronological_split() {
        let (train, test) = train_test_split(&user("u", 10), 0.2).unwrap();
        assert_eq!((train.trajectories.len(), test.trajectories.len()), (8, 2));
        assert!(train.trajectories.iter().all(|a| test.trajectories.iter().all(|b| a.day < b.day)));

        let (train, test) = train_test_split(&user("u", 2), 0.2).unwrap();
        assert_eq!((train.trajectories.len(), test.trajectories.len()), (1, 1));
        let (train, test) = train_test_split(&user("u", 5), 0.2).unwrap();
        assert_eq!((train.trajectories.len(), test.trajectories.len()), (4, 1));
        assert!(train_test_split(&user("u", 1), 0.2).is_err());
    }
}
