//! Direct-transcription optimal control of a seasonal dengue epidemic.
//!
//! The continuous problem is to steer mosquito, infection, and goodwill
//! dynamics with insecticide and education spending so that the accumulated
//! social cost at the final week is minimal. It is discretized on a uniform
//! mesh by either an explicit Euler or an implicit trapezoidal rule,
//! producing a sparse equality-constrained NLP with box bounds on the
//! controls. A self-contained augmented-Lagrangian solver with projected
//! L-BFGS inner iterations drives it to a KKT point.
//!
//! Crate layout:
//!
//! * [`model`]: dynamics, cost integrand, and their analytic Jacobians
//! * [`config`]: `key=value` parameter files with normalized weekly defaults
//! * [`grid`]: uniform mesh and scheme selection
//! * [`simulate`](mod@simulate): forward integration, initial guesses, CSV export
//! * [`transcription`]: decision-vector packing, defect constraints,
//!   sparse constraint Jacobian, terminal objective
//! * [`solver`]: augmented-Lagrangian outer loop and KKT certificates
//! * [`cli`]: simulate / solve / bench batch runners and their artifacts

pub mod cli;
pub mod config;
pub mod grid;
pub mod model;
pub mod simulate;
pub mod solver;
pub mod transcription;

pub use config::{load_config, parse_config, ModelConfig};
pub use grid::{Grid, Scheme};
pub use model::{ControlVec, ModelParams, StateVec};
pub use simulate::{simulate, ControlSchedule, Trajectory};
pub use solver::{kkt_residuals, solve, SolveReport, SolveStatus, SolverOptions};
pub use transcription::{ControlBounds, NlpProblem};
