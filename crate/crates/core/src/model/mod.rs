//! Individual and collective Markov transition rows, their entropies, and the
//! mixed next-location predictor.

mod counts;
mod dataset;
mod entropy;
mod mixed;
mod row;
mod trajectory;

pub use counts::{build_collective, build_individual, collective_counts, OdCounts, RowMap};
pub use dataset::{filter_dataset, train_test_split, FilterConfig};
pub use entropy::{entropy, normalized_entropy, normalized_entropy_base};
pub use mixed::{mix, mixture_scores, topk_from_scores, CollectiveModel, MixedModel, ModelKind};
pub use row::{top_k_of, TransitionRow};
pub use trajectory::{group_by_user, Trajectory, UserHistory};
