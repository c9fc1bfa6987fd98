//! Physics-informed neural networks for the axially vibrating bar and the
//! geometrically exact Kirchhoff rod, written without an ML framework.
//!
//! The pieces are a dense tanh network ([`network`]), Taylor jets of its
//! outputs with reverse accumulation to the parameters ([`jets`]), residual
//! systems and constraints ([`problems`]), collocation grids ([`sampling`]),
//! Adam with cyclic learning-rate schedules ([`training`]), barrier terms that
//! repel static solutions ([`barriers`]), and diagnostics against an exact
//! modal solution ([`analysis`]).

pub mod analysis;
pub mod barriers;
pub mod dual;
pub mod error;
pub mod jets;
pub mod network;
pub mod problems;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
pub use jets::{
    jet_batch, jet_forward, loss_gradient, Component, Evaluator, Jet2, JetBatch, JetLoss, Tape,
};
pub use network::{init_params, param_count, Checkpoint, InitKind, Initializer, MlpNetwork};
pub use problems::{FormId, Load, Location, Preset, Problem};
pub use sampling::{random_grid, regular_grid, Grid, GridKind, GridLayout};
pub use training::{train, RunRecord, Schedule, ScheduleKind, TrainConfig};
