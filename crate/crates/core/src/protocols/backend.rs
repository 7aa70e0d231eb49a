use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::model::{DeviceParams, DrivePulse, PulseTrain, QubitState, Window};
use crate::rng::NoiseKey;
use crate::signal::{sample_iq, simulate_ramsey, simulate_stark_ramsey, FilterWeights, IqCloud, RamseyResult};

/// What the Ramsey sequence around the resonator drive measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum RamseyProbe {
    /// Qubit in (|0⟩+|1⟩)/√2: phase Φ and contrast exp(-D).
    Superposition,
    /// Stark phase with the resonator following the branch of the given state.
    StarkBranch(QubitState),
}

/// Pulse amplitudes are in commanded units; the backend maps them to the
/// physical drive.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RamseyRequest {
    pub pulses: Vec<DrivePulse>,
    pub window: Window,
    pub probe: RamseyProbe,
    pub shots: u64,
    pub key: NoiseKey,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IqRequest {
    pub pulses: Vec<DrivePulse>,
    pub state: QubitState,
    pub weights: FilterWeights,
    pub shots: u64,
    pub key: NoiseKey,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "message", rename_all = "kebab-case"))]
pub enum BackendError {
    InvalidRequest(String),
    /// Remote end unreachable or timed out.
    Unavailable(String),
    /// Malformed exchange on the wire.
    Protocol(String),
}

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendError::InvalidRequest(m) => write!(f, "invalid request: {m}"),
            BackendError::Unavailable(m) => write!(f, "backend unavailable: {m}"),
            BackendError::Protocol(m) => write!(f, "protocol error: {m}"),
        }
    }
}

impl core::error::Error for BackendError {}

/// The measurement primitives the protocols need. Implementations must be
/// callable concurrently; the in-process simulator is pure.
pub trait ExperimentBackend {
    fn ramsey_under_drive(&self, request: &RamseyRequest) -> Result<RamseyResult, BackendError>;
    fn acquire_iq(&self, request: &IqRequest) -> Result<IqCloud, BackendError>;
}

impl<B: ExperimentBackend + ?Sized> ExperimentBackend for &B {
    fn ramsey_under_drive(&self, request: &RamseyRequest) -> Result<RamseyResult, BackendError> {
        (**self).ramsey_under_drive(request)
    }

    fn acquire_iq(&self, request: &IqRequest) -> Result<IqCloud, BackendError> {
        (**self).acquire_iq(request)
    }
}

/// In-process simulator of one readout channel. Commanded amplitudes are
/// multiplied by `drive_gain` to give the physical ε.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulatorBackend {
    pub device: DeviceParams,
    pub drive_gain: f64,
}

impl SimulatorBackend {
    pub fn new(device: DeviceParams) -> Self {
        SimulatorBackend { device, drive_gain: 1.0 }
    }

    pub fn with_gain(device: DeviceParams, drive_gain: f64) -> Self {
        SimulatorBackend { device, drive_gain }
    }

    pub fn physical_train(&self, pulses: &[DrivePulse]) -> Result<PulseTrain, BackendError> {
        let scaled: Vec<DrivePulse> = pulses.iter().map(|p| p.with_amplitude(p.eps * self.drive_gain)).collect();
        PulseTrain::new(&scaled).map_err(|e| BackendError::InvalidRequest(alloc::format!("{e}")))
    }
}

fn invalid(e: impl fmt::Display) -> BackendError {
    BackendError::InvalidRequest(alloc::format!("{e}"))
}

impl ExperimentBackend for SimulatorBackend {
    fn ramsey_under_drive(&self, req: &RamseyRequest) -> Result<RamseyResult, BackendError> {
        let train = self.physical_train(&req.pulses)?;
        req.window.validate().map_err(invalid)?;
        match req.probe {
            RamseyProbe::Superposition => simulate_ramsey(&self.device, &train, &req.window, req.shots, req.key),
            RamseyProbe::StarkBranch(q) => {
                simulate_stark_ramsey(&self.device, &train, &req.window, q, req.shots, req.key)
            }
        }
        .map_err(invalid)
    }

    fn acquire_iq(&self, req: &IqRequest) -> Result<IqCloud, BackendError> {
        let train = self.physical_train(&req.pulses)?;
        sample_iq(&self.device, &train, req.state, &req.weights, req.shots, req.key).map_err(invalid)
    }
}
