//! Next-location prediction by mixing individual and collective Markov
//! mobility models, with the evaluation and robustness tooling around it.

pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geo;
pub mod io;
pub mod model;
pub mod overlap;
pub mod pipeline;
pub mod robustness;
pub mod rng;
pub mod stats;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use geo::{LatLon, SpatioTemporalPoint, TileId};
pub use model::{CollectiveModel, MixedModel, ModelKind, Trajectory, TransitionRow, UserHistory};
pub use overlap::{OverlapBin, OverlapScore};
