//! Detectors for the real-valued model: linear initial filters, likelihood
//! ascent search, and an exhaustive ML oracle.

mod filter;
mod las;
mod ml;

pub use filter::{filter_output, initial_filter, Initializer};
pub use las::{
    cost_delta, default_max_iters, l_opt, las_detect, las_search, las_step, DetectionResult, GramMatrix, LasProblem,
    LasState, StepLength, StepOutcome, CONSISTENCY_TOL,
};
pub use ml::{
    ml_bruteforce, ml_search, quadratic_cost, residual_norm_sq, signal_space_size, MlSolution, DEFAULT_ML_CAP,
};
