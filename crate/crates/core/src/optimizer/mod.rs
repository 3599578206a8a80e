//! Quasi-Newton shape optimization driven by the Steklov-Poincaré gradient.

pub mod lbfgs;
pub mod linesearch;
pub mod run;

pub use lbfgs::{DirectionKind, Lbfgs};
pub use linesearch::{line_search, Evaluator, LineSearchOutcome, LineSearchParams, ParamError, StepCheck};
pub use run::{
    optimize, run, History, IterationRecord, OptimizeError, OptimizerOptions, RunFailure, RunResult, StopReason,
    WarmStart, HISTORY_HEADER,
};
