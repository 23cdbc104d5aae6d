use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::geo::{SpatioTemporalPoint, TileId};

/// One user's time-ordered visits during a single calendar day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: String,
    pub day: NaiveDate,
    pub points: Vec<SpatioTemporalPoint>,
}

impl Trajectory {
    pub fn new(user_id: impl Into<String>, day: NaiveDate, points: Vec<SpatioTemporalPoint>) -> Self {
        Trajectory {
            user_id: user_id.into(),
            day,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn tiles(&self) -> Vec<TileId> {
        self.points.iter().map(|p| p.tile).collect()
    }

    /// Consecutive `(origin, destination)` pairs.
    pub fn transitions(&self) -> impl Iterator<Item = (TileId, TileId)> + '_ {
        self.points.windows(2).map(|w| (w[0].tile, w[1].tile))
    }
}

/// A user's trajectories together with the set of distinct tiles they visit.
#[derive(Debug, Clone, PartialEq)]
pub struct UserHistory {
    pub user_id: String,
    pub trajectories: Vec<Trajectory>,
    visited: BTreeSet<TileId>,
}

impl UserHistory {
    pub fn new(user_id: impl Into<String>, mut trajectories: Vec<Trajectory>) -> Self {
        trajectories.sort_by(|a, b| a.day.cmp(&b.day).then_with(|| first_time(a).cmp(&first_time(b))));
        let visited = trajectories.iter().flat_map(|t| t.points.iter().map(|p| p.tile)).collect();
        UserHistory {
            user_id: user_id.into(),
            trajectories,
            visited,
        }
    }

    /// Distinct tiles appearing in the trajectories.
    pub fn visited(&self) -> &BTreeSet<TileId> {
        &self.visited
    }

    pub fn transition_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.len().saturating_sub(1)).sum()
    }
}

fn first_time(t: &Trajectory) -> i64 {
    t.points.first().map_or(i64::MIN, |p| p.time)
}

/// Groups trajectories into histories by user id, in user-id order.
pub fn group_by_user(trajectories: impl IntoIterator<Item = Trajectory>) -> Vec<UserHistory> {
    let mut map: std::collections::BTreeMap<String, Vec<Trajectory>> = Default::default();
    for t in trajectories {
        map.entry(t.user_id.clone()).or_default().push(t);
    }
    map.into_iter().map(|(u, ts)| UserHistory::new(u, ts)).collect()
}
