use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::backend::{ExperimentBackend, IqRequest, RamseyProbe, RamseyRequest};
use super::{Estimate, Flag, FlagKind, ProtocolError};
use crate::model::{DrivePulse, QubitState, Window};
use crate::rng::NoiseKey;
use crate::signal::{snr_statistics, FilterWeights, SnrEstimate, MIN_RAMSEY_SHOTS};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EfficiencySpec {
    pub pulse: DrivePulse,
    /// Shared by the Ramsey and the IQ integration.
    pub window: Window,
    /// Bins of the empirical matched filter.
    pub bins: usize,
    pub shots: u64,
    /// Accepted Ramsey contrast range.
    pub contrast_band: [f64; 2],
    pub key: NoiseKey,
}

pub const DEFAULT_CONTRAST_BAND: [f64; 2] = [0.1, 0.8];

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EfficiencyResult {
    pub eta: Estimate,
    pub contrast: Estimate,
    pub dephasing: Estimate,
    /// SNR with the empirical weights, corrected for their noise.
    pub snr: Estimate,
    pub snr_raw: f64,
    /// Factor applied to SNR² for the noise in the estimated weights.
    pub weight_noise_correction: f64,
    /// Raw (unnormalized) empirical weights per bin.
    pub weights: Vec<Complex64>,
    pub flags: Vec<Flag>,
}

/// `η = SNR² / (4·D)` with first-order error propagation.
pub fn eta_from_statistics(snr: Estimate, dephasing: Estimate) -> Estimate {
    let eta = snr.value * snr.value / (4.0 * dephasing.value);
    let rel = libm::hypot(2.0 * snr.stderr / snr.value, dephasing.stderr / dephasing.value);
    Estimate::new(eta, (eta * rel).abs())
}

/// One-sigma error of an SNR estimated from two clouds of `m` points each.
pub(crate) fn snr_stderr(snr: f64, m: f64) -> f64 {
    libm::sqrt(2.0 / m + snr * snr / (4.0 * m))
}

fn validate(spec: &EfficiencySpec) -> Result<(), ProtocolError> {
    let bad = |why: &str| Err(ProtocolError::InvalidInput(why.into()));
    spec.pulse.validate()?;
    spec.window.validate()?;
    if spec.bins == 0 {
        return bad("efficiency needs at least one weight bin");
    }
    if spec.shots < MIN_RAMSEY_SHOTS {
        return bad("efficiency needs at least 100 shots");
    }
    let [lo, hi] = spec.contrast_band;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return bad("contrast band must satisfy 0 < low < high < 1");
    }
    Ok(())
}

/// η from one pulse: its dephasing `D = -ln C` and the IQ separation it
/// produces with empirically matched weights.
pub fn run_efficiency<B: ExperimentBackend + ?Sized>(
    backend: &B,
    spec: &EfficiencySpec,
) -> Result<EfficiencyResult, ProtocolError> {
    validate(spec)?;
    let pulses = alloc::vec![spec.pulse];
    let ramsey = backend.ramsey_under_drive(&RamseyRequest {
        pulses: pulses.clone(),
        window: spec.window,
        probe: RamseyProbe::Superposition,
        shots: spec.shots,
        key: spec.key.child(0),
    })?;
    let contrast = Estimate::new(ramsey.contrast, ramsey.contrast_stderr);
    let dephasing = Estimate::new(-libm::log(contrast.value), contrast.stderr / contrast.value);
    if !(dephasing.value > 3.0 * dephasing.stderr) {
        return Err(ProtocolError::NoInformation);
    }
    let [lo, hi] = spec.contrast_band;
    if contrast.value < lo || contrast.value > hi {
        return Err(ProtocolError::PulsePower { contrast: contrast.value, low: lo, high: hi });
    }

    let m = spec.shots as f64;
    let mut raw = Vec::with_capacity(spec.bins);
    let mut noise_energy = 0.0;
    for k in 0..spec.bins {
        let mut mean = [Complex64::new(0.0, 0.0); 2];
        for q in QubitState::BOTH {
            let cloud = backend.acquire_iq(&IqRequest {
                pulses: pulses.clone(),
                state: q,
                weights: FilterWeights::bin_indicator(&spec.window, spec.bins, k),
                shots: spec.shots,
                key: spec.key.child(1).child(k as u64).child(q.index() as u64),
            })?;
            mean[q.index()] = cloud.mean();
            // complex variance of the cloud mean
            noise_energy += 2.0 * cloud.quadrature_variance() / m;
        }
        raw.push((mean[0] - mean[1]).conj());
    }
    let total_energy: f64 = raw.iter().map(|w| w.norm_sqr()).sum();
    if !(total_energy > 2.0 * noise_energy) {
        return Err(ProtocolError::NoInformation);
    }
    let correction = total_energy / (total_energy - noise_energy);
    let weights = FilterWeights::from_bins(&spec.window, raw.clone())?;

    let clouds = QubitState::BOTH.map(|q| {
        backend.acquire_iq(&IqRequest {
            pulses: pulses.clone(),
            state: q,
            weights: weights.clone(),
            shots: spec.shots,
            key: spec.key.child(2).child(q.index() as u64),
        })
    });
    let [c0, c1] = clouds;
    let SnrEstimate { snr: snr_raw, .. } = snr_statistics(&c0?, &c1?)?;
    let snr_value = snr_raw * libm::sqrt(correction);
    let snr = Estimate::new(snr_value, snr_stderr(snr_value, m));
    let eta = eta_from_statistics(snr, dephasing);

    let mut flags = Vec::new();
    if eta.value > 1.0 + 3.0 * eta.stderr {
        flags.push(Flag::new(
            FlagKind::Unphysical,
            format!("eta = {:.4} +/- {:.4} exceeds the quantum limit", eta.value, eta.stderr),
        ));
    }
    Ok(EfficiencyResult {
        eta,
        contrast,
        dephasing,
        snr,
        snr_raw,
        weight_noise_correction: correction,
        weights: raw,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DeviceParams, Response};
    use crate::protocols::{BackendError, SimulatorBackend};
    use crate::signal::{IqCloud, RamseyResult};
    use core::cell::RefCell;

    fn spec_for(device: &DeviceParams, target_d: f64, shots: u64) -> EfficiencySpec {
        // ω_d = ω_r, τ = 10/κ; scale ε so that D = target_d
        let k = device.kappa;
        let window = Window::until(18.0 / k);
        let unit = DrivePulse::new(device.omega_r, 1.0, 0.0, 10.0 / k).unwrap();
        let d1 = Response::from_pulse(device, &unit).dephasing(&window);
        EfficiencySpec {
            pulse: unit.with_amplitude((target_d / d1).sqrt()),
            window,
            bins: 48,
            shots,
            contrast_band: DEFAULT_CONTRAST_BAND,
            key: NoiseKey::new(21),
        }
    }

    #[test]
    fn exact_statistics() {
        let e = eta_from_statistics(Estimate::new(2.0, 0.0), Estimate::new(1.0, 0.0));
        assert_eq!(e.value, 1.0);
        let e = eta_from_statistics(Estimate::new(2f64.sqrt(), 0.0), Estimate::new(-libm::log(libm::exp(-1.0)), 0.0));
        assert!((e.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn recovers_eta() {
        let device = DeviceParams::new(50.0, 2.0, 4.0, 0.5).unwrap();
        let r = run_efficiency(&SimulatorBackend::new(device), &spec_for(&device, 1.0, 100_000)).unwrap();
        assert!((r.eta.value - 0.5).abs() < 0.02, "{:?}", r.eta);
        assert!(r.eta.stderr < 0.02);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn guard_band_and_no_information() {
        let device = DeviceParams::new(50.0, 2.0, 4.0, 0.5).unwrap();
        let backend = SimulatorBackend::new(device);
        for d in [0.05, 4.0] {
            let err = run_efficiency(&backend, &spec_for(&device, d, 10_000)).unwrap_err();
            assert_eq!(err.reason(), "pulse-power", "D = {d}");
        }
        let blind = DeviceParams::new(50.0, 0.0, 4.0, 0.5).unwrap();
        let mut s = spec_for(&device, 1.0, 10_000);
        s.key = NoiseKey::new(3);
        let err = run_efficiency(&SimulatorBackend::new(blind), &s).unwrap_err();
        assert_eq!(err, ProtocolError::NoInformation);
    }

    /// Records every call and forwards to the simulator.
    struct Recording {
        inner: SimulatorBackend,
        calls: RefCell<Vec<(&'static str, DrivePulse)>>,
    }

    impl ExperimentBackend for Recording {
        fn ramsey_under_drive(&self, r: &RamseyRequest) -> Result<RamseyResult, BackendError> {
            assert_eq!(r.probe, RamseyProbe::Superposition);
            self.calls.borrow_mut().push(("ramsey", r.pulses[0]));
            self.inner.ramsey_under_drive(r)
        }

        fn acquire_iq(&self, r: &IqRequest) -> Result<IqCloud, BackendError> {
            self.calls.borrow_mut().push(("iq", r.pulses[0]));
            self.inner.acquire_iq(r)
        }
    }

    #[test]
    fn uses_only_one_pulse_contrast_and_iq() {
        let device = DeviceParams::new(50.0, 2.0, 4.0, 0.5).unwrap();
        let spec = spec_for(&device, 1.0, 1_000);
        let backend = Recording { inner: SimulatorBackend::new(device), calls: RefCell::new(Vec::new()) };
        run_efficiency(&backend, &spec).unwrap();
        let calls = backend.calls.into_inner();
        assert_eq!(calls.iter().filter(|c| c.0 == "ramsey").count(), 1);
        assert_eq!(calls.iter().filter(|c| c.0 == "iq").count(), 2 * spec.bins + 2);
        assert!(calls.iter().all(|c| c.1 == spec.pulse));
    }
}
