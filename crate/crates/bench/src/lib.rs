//! Shared fixtures for the benchmarks.

use mobmix::experiment::{split_users, Split};
use mobmix::model::{filter_dataset, group_by_user, FilterConfig, UserHistory};
use mobmix::synth::{generate, SynthConfig};

/// Filtered histories of a synthetic run with `n_users` users.
pub fn histories(n_users: usize, n_days: usize) -> Vec<UserHistory> {
    let cfg = SynthConfig {
        n_users,
        n_days,
        ..SynthConfig::default()
    };
    let data = generate(&cfg).expect("valid synthetic config");
    filter_dataset(group_by_user(data.trajectories), &FilterConfig::default())
}

pub fn split(n_users: usize, n_days: usize) -> Split {
    split_users(&histories(n_users, n_days), 0.2).expect("filtered users have two trajectories")
}
