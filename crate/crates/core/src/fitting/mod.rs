//! Nonlinear least squares (Levenberg–Marquardt) and the model functions the
//! protocols fit: Lorentzian, exponential decay and the joint two-state
//! Stark-phase line shape.

mod linalg;
mod lm;
mod models;

pub use lm::{lm_fit, numeric_jacobian, FitError, FitProblem, FitResult, LmOptions, Termination};
pub use models::{
    lorentzian, exp_decay, two_state_phase, ExpDecay, FitModel, LineTiming, Lorentzian, StraightLine, TwoStateLines,
};
