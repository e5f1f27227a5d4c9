//! Online estimation of unknown time-varying parameters with real-time
//! nonlinear receding horizon control.
//!
//! A response system with adjustable parameters is synchronized to a measured
//! drive system by minimizing a finite-horizon cost on the synchronization
//! error. The optimal parameter at each instant follows from the costate,
//! which is tracked in real time by stabilized continuation and a backward
//! sweep of a Riccati equation, so no iterative optimizer runs online.

pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod hamiltonian;
pub mod model;
pub mod numerics;
pub mod sweep;
pub mod trace;

pub use config::{dump_config, load_config, preset, PRESETS};
pub use error::{NrhcError, Result};
pub use estimator::{run, run_with_model, step, tail_metrics, DriveMode, EstimatorConfig, EstimatorState, TailMetrics, TraceRecord};
pub use hamiltonian::CostWeights;
pub use model::{guay_model, lorenz_model, Dynamics, ModelRegistry, ParameterTrajectory, SystemModel};
