//! Discrete-event laboratory for admission control in an overloaded
//! two-class loss system: a replayable sample-path simulator, offline and
//! windowed lookahead policies, exact birth-death solvers for trunk
//! reservation, and regenerative gap estimators.

pub mod analytic;
pub mod coupling;
pub mod engine;
pub mod estimators;
pub mod history;
pub mod lookahead;
pub mod model;
pub mod policy;
pub mod samplepath;

pub use analytic::{fluid_reward, threshold_reward, window_constant, AnalyticError};
pub use coupling::{coupled_run, CouplingStats};
pub use engine::{run, run_observed, Action, ActionKind, EngineError, RunConfig, SystemState, TrajectoryStats};
pub use estimators::{EpochRecord, EpochRule, EstimateError, GapEstimate, GapMethod};
pub use lookahead::{LookaheadError, LookaheadTrace, RaceOutcome, Verdict};
pub use model::{JobClass, ModelParams, ParamError, Rates};
pub use policy::{Decision, PolicyKind, PolicySpec, WindowSpec};
pub use samplepath::{Cursor, SamplePath, StreamId};
