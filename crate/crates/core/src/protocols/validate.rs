use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::backend::{ExperimentBackend, IqRequest};
use super::efficiency::snr_stderr;
use super::pipeline::{CharacterizationReport, DesignParams};
use super::{Estimate, Flag, FlagKind, ProtocolError};
use crate::model::{DeviceParams, DrivePulse, PulseTrain, QubitState, Response, Window};
use crate::rng::NoiseKey;
use crate::signal::{snr_statistics, FilterWeights};
use crate::snr::{predict_snr, SnrPrediction};

pub const DEFAULT_TOLERANCE: f64 = 0.10;

/// The readout whose SNR is predicted and measured.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReadoutSpec {
    /// Commanded amplitude.
    pub pulse: DrivePulse,
    pub window: Window,
    pub bins: usize,
    pub shots: u64,
    pub key: NoiseKey,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SnrValidation {
    pub snr_predicted: f64,
    pub snr_measured: Estimate,
    /// Predicted over measured.
    pub ratio: Estimate,
    pub tolerance: f64,
    pub pass: bool,
    pub prediction: SnrPrediction,
    /// Parameters the prediction used: `[ω_r, χ, κ, ε, η]`.
    pub inputs: [f64; 5],
    pub flags: Vec<Flag>,
}

fn hat_model(report: &CharacterizationReport) -> Result<(DesignParams, f64), ProtocolError> {
    let ck = report.chi_kappa.as_ref().filter(|c| c.fit.converged);
    let ck = ck.ok_or(ProtocolError::MissingDependency("chi-kappa-power"))?;
    let eff = report.efficiency.as_ref().ok_or(ProtocolError::MissingDependency("efficiency"))?;
    Ok((DesignParams::from_estimates(ck), eff.eta.value))
}

/// Matched weights `∝ conj(∫_bin (α_0 - α_1) dt)` from a model response.
pub fn model_weights(response: &Response, window: &Window, bins: usize) -> Result<FilterWeights, ProtocolError> {
    let dt = window.length() / bins as f64;
    let raw: Vec<Complex64> = (0..bins)
        .map(|k| {
            let bin = Window { start: window.start + k as f64 * dt, end: window.start + (k + 1) as f64 * dt };
            (response.field_integral(QubitState::Zero, &bin) - response.field_integral(QubitState::One, &bin)).conj()
        })
        .collect();
    Ok(FilterWeights::from_bins(window, raw)?)
}

/// Predict the readout SNR from the extracted parameters and compare it with
/// the SNR measured directly on the backend.
pub fn validate_snr<B: ExperimentBackend + ?Sized>(
    backend: &B,
    report: &CharacterizationReport,
    readout: &ReadoutSpec,
    tolerance: f64,
) -> Result<SnrValidation, ProtocolError> {
    if !(tolerance > 0.0) {
        return Err(ProtocolError::InvalidInput("tolerance must be > 0".into()));
    }
    if readout.bins == 0 || readout.shots < 2 {
        return Err(ProtocolError::InvalidInput("readout needs >= 1 bin and >= 2 shots".into()));
    }
    readout.pulse.validate()?;
    readout.window.validate()?;
    let (design, eta) = hat_model(report)?;
    // η̂ may sit statistically above 1, so the device is not range-checked
    let device = DeviceParams { omega_r: design.omega_r, chi: design.chi, kappa: design.kappa, eta };
    let physical = readout.pulse.with_amplitude(readout.pulse.eps * design.drive_gain);
    let train = PulseTrain::from(physical);
    let prediction = predict_snr(&device, &train, &readout.window);

    let weights = model_weights(&Response::new(&device, &train), &readout.window, readout.bins)?;
    let clouds = QubitState::BOTH.map(|q| {
        backend.acquire_iq(&IqRequest {
            pulses: alloc::vec![readout.pulse],
            state: q,
            weights: weights.clone(),
            shots: readout.shots,
            key: readout.key.child(q.index() as u64),
        })
    });
    let [c0, c1] = clouds;
    let measured = snr_statistics(&c0?, &c1?)?.snr;
    let snr_measured = Estimate::new(measured, snr_stderr(measured, readout.shots as f64));
    let r = prediction.snr / measured;
    let ratio = Estimate::new(r, r * snr_measured.stderr / measured);
    let pass = (r - 1.0).abs() < tolerance;
    let mut flags = Vec::new();
    if !pass {
        flags.push(Flag::new(
            FlagKind::ToleranceExceeded,
            format!("|ratio - 1| = {:.4} exceeds tolerance {tolerance}", (r - 1.0).abs()),
        ));
    }
    Ok(SnrValidation {
        snr_predicted: prediction.snr,
        snr_measured,
        ratio,
        tolerance,
        pass,
        prediction,
        inputs: [design.omega_r, design.chi, design.kappa, physical.eps, eta],
        flags,
    })
}
