//! Characterization protocols run against an [`ExperimentBackend`].
//!
//! * [`run_chi_kappa_power`]: Stark-phase sweeps of both qubit states fitted
//!   jointly for ω_r, χ, κ and drive strength.
//! * [`run_ringdown`]: κ from the decay of the Stark phase after switch-off.
//! * [`run_efficiency`]: η from the contrast loss and the IQ separation
//!   produced by one and the same pulse.
//! * [`validate_snr`]: SNR predicted from the extracted parameters against
//!   the directly measured SNR.

use alloc::string::String;
use core::fmt;

mod backend;
mod chi_kappa;
mod efficiency;
mod pipeline;
mod ringdown;
mod validate;

pub use backend::{BackendError, ExperimentBackend, IqRequest, RamseyProbe, RamseyRequest, SimulatorBackend};
pub use chi_kappa::{run_chi_kappa_power, ChiKappaPowerResult, ContrastCheck, OperatingPoint, SweepPoint, SweepSpec};
pub use efficiency::{eta_from_statistics, run_efficiency, EfficiencyResult, EfficiencySpec, DEFAULT_CONTRAST_BAND};
pub use pipeline::{
    characterize_channel, plan_efficiency, plan_readout, plan_ringdown, plan_sweep, CharacterizationReport, DesignParams,
    KappaAgreement, PlanOptions, ProtocolFailure,
};
pub use ringdown::{run_ringdown, slice_photons, RingdownPoint, RingdownResult, RingdownSpec};
pub use validate::{model_weights, validate_snr, ReadoutSpec, SnrValidation, DEFAULT_TOLERANCE};

use crate::fitting::FitError;
use crate::model::ModelError;
use crate::signal::SignalError;

/// Value with one-sigma standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Estimate { value, stderr }
    }

    /// `|value/truth - 1|`.
    pub fn relative_error(&self, truth: f64) -> f64 {
        (self.value / truth - 1.0).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum FlagKind {
    /// Estimate reported but weakly constrained by the data.
    LowConfidence,
    /// The two pulled lines are not resolved.
    Unresolved,
    NotConverged,
    /// Statistically outside the physical range.
    Unphysical,
    ToleranceExceeded,
}

/// A non-fatal finding attached to a protocol result.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Flag {
    pub kind: FlagKind,
    pub detail: String,
}

impl Flag {
    pub fn new(kind: FlagKind, detail: impl Into<String>) -> Self {
        Flag { kind, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolError {
    InvalidInput(String),
    Backend(BackendError),
    /// Contrast collapsed somewhere in the sweep; lower the drive amplitude.
    Overdrive { min_contrast: f64 },
    /// No measurable signal above noise.
    NoSignal(&'static str),
    /// Efficiency pulse outside the contrast guard band.
    PulsePower { contrast: f64, low: f64, high: f64 },
    /// The pulse carries no which-state information (χ = 0 or no drive).
    NoInformation,
    Fit(FitError),
    MissingDependency(&'static str),
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolError::InvalidInput(why) => write!(f, "invalid protocol input: {why}"),
            ProtocolError::Backend(e) => write!(f, "backend error: {e}"),
            ProtocolError::Overdrive { min_contrast } => write!(
                f,
                "Ramsey contrast fell to {min_contrast:.3} (< 0.05): drive too strong, lower the amplitude"
            ),
            ProtocolError::NoSignal(what) => write!(f, "no signal: {what}"),
            ProtocolError::PulsePower { contrast, low, high } => write!(
                f,
                "contrast {contrast:.3} outside [{low}, {high}]: {} the pulse power or duration",
                if *contrast > *high { "raise" } else { "lower" }
            ),
            ProtocolError::NoInformation => {
                f.write_str("pulse carries no which-state information (chi = 0 or zero drive)")
            }
            ProtocolError::Fit(e) => write!(f, "{e}"),
            ProtocolError::MissingDependency(p) => write!(f, "missing upstream estimates from protocol '{p}'"),
        }
    }
}

impl core::error::Error for ProtocolError {}

impl From<BackendError> for ProtocolError {
    fn from(e: BackendError) -> Self {
        ProtocolError::Backend(e)
    }
}

impl From<FitError> for ProtocolError {
    fn from(e: FitError) -> Self {
        ProtocolError::Fit(e)
    }
}

impl From<ModelError> for ProtocolError {
    fn from(e: ModelError) -> Self {
        ProtocolError::InvalidInput(alloc::format!("{e}"))
    }
}

impl From<SignalError> for ProtocolError {
    fn from(e: SignalError) -> Self {
        ProtocolError::InvalidInput(alloc::format!("{e}"))
    }
}

impl ProtocolError {
    /// Stable machine-readable reason code.
    pub fn reason(&self) -> &'static str {
        match self {
            ProtocolError::InvalidInput(_) => "invalid-input",
            ProtocolError::Backend(BackendError::Unavailable(_)) => "backend-unavailable",
            ProtocolError::Backend(_) => "backend-error",
            ProtocolError::Overdrive { .. } => "overdrive",
            ProtocolError::NoSignal(_) => "no-signal",
            ProtocolError::PulsePower { .. } => "pulse-power",
            ProtocolError::NoInformation => "no-information",
            ProtocolError::Fit(FitError::Degenerate { .. }) => "degenerate-fit",
            ProtocolError::Fit(_) => "fit-error",
            ProtocolError::MissingDependency(_) => "missing-dependency",
        }
    }
}
