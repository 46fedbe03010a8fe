//! Monotone-operator splitting: the four-operator primal-dual half-forward
//! method, its reductions, and block, saddle-point and deblurring drivers.

pub mod config;
pub mod deblur;
pub mod error;
pub mod linops;
pub mod method;
pub mod multivariate;
pub mod ops;
pub mod pgm;
pub mod probe;
pub mod problem;
pub mod saddle;
pub mod solver;

pub use error::{Error, Result};
pub use linops::{LinearMap, SharedMap, Vector};
pub use method::{auto_method, ActivationCounts, IterState, MethodRegistry, SplittingMethod};
pub use ops::{ForwardKind, ForwardOp, ResolventOp, SharedForward, SharedResolvent};
pub use problem::{suggest_steps, validate_steps, ProblemSpec, StepSizes, StepVerdict};
pub use solver::{run, OracleSolution, RunReport, Solver, StopRule, Termination};
