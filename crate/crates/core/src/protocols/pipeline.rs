use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;


use super::backend::ExperimentBackend;
use super::chi_kappa::{run_chi_kappa_power, ChiKappaPowerResult, OperatingPoint, SweepSpec};
use super::efficiency::{run_efficiency, EfficiencyResult, EfficiencySpec, DEFAULT_CONTRAST_BAND};
use super::ringdown::{run_ringdown, RingdownResult, RingdownSpec};
use super::validate::{validate_snr, ReadoutSpec, SnrValidation, DEFAULT_TOLERANCE};
use super::{Estimate, Flag, FlagKind, ProtocolError};
use crate::fitting::{two_state_phase, LineTiming};
use crate::model::{DeviceParams, DrivePulse, QubitState, Response, Window};
use crate::rng::NoiseKey;

/// Channel parameters used to design experiments: nominal values before
/// characterization, estimates afterwards.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DesignParams {
    pub omega_r: f64,
    pub chi: f64,
    pub kappa: f64,
    /// Physical ε per unit commanded amplitude.
    pub drive_gain: f64,
}

impl DesignParams {
    pub fn from_estimates(ck: &ChiKappaPowerResult) -> Self {
        DesignParams {
            omega_r: ck.omega_r.value,
            chi: ck.chi.value,
            kappa: ck.kappa.value,
            drive_gain: ck.drive_gain2.value.max(0.0).sqrt(),
        }
    }

    fn device(&self) -> DeviceParams {
        DeviceParams { omega_r: self.omega_r, chi: self.chi, kappa: self.kappa, eta: 1.0 }
    }
}

/// Experiment-design knobs. Durations and spans are in units of `1/κ` and
/// `κ` of the design parameters.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PlanOptions {
    pub sweep_points: usize,
    pub sweep_half_span: f64,
    pub sweep_duration: f64,
    pub sweep_shots: u64,
    /// Largest Stark phase (rad) allowed anywhere in the sweep.
    pub sweep_max_phase: f64,
    /// Largest dephasing exponent allowed anywhere in the sweep.
    pub sweep_max_dephasing: f64,
    /// Acquisition tail after the pulse.
    pub tail: f64,
    pub ringdown_delays: usize,
    pub ringdown_span: f64,
    pub ringdown_slice: f64,
    pub ringdown_fill: f64,
    pub ringdown_phase: f64,
    pub ringdown_shots: u64,
    pub efficiency_dephasing: f64,
    pub efficiency_max_duration: f64,
    pub efficiency_bins: usize,
    pub efficiency_shots: u64,
    pub contrast_band: [f64; 2],
    pub readout_bins: usize,
    pub readout_shots: u64,
    pub tolerance: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            sweep_points: 41,
            sweep_half_span: 3.0,
            sweep_duration: 12.0,
            sweep_shots: 100_000,
            sweep_max_phase: 1.0,
            sweep_max_dephasing: 1.5,
            tail: 8.0,
            ringdown_delays: 11,
            ringdown_span: 3.0,
            ringdown_slice: 0.25,
            ringdown_fill: 12.0,
            ringdown_phase: 1.0,
            ringdown_shots: 100_000,
            efficiency_dephasing: 1.0,
            efficiency_max_duration: 50.0,
            efficiency_bins: 48,
            efficiency_shots: 100_000,
            contrast_band: DEFAULT_CONTRAST_BAND,
            readout_bins: 400,
            readout_shots: 100_000,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Frequencies over `±max(h·κ, |χ| + 2κ)` around ω_r; the amplitude keeps the
/// largest Stark phase and dephasing below the configured limits.
pub fn plan_sweep(d: &DesignParams, op: &OperatingPoint, o: &PlanOptions, key: NoiseKey) -> SweepSpec {
    let k = d.kappa;
    let half = (o.sweep_half_span * k).max(d.chi.abs() + 2.0 * k);
    let omega_d_values = linspace(d.omega_r - half, d.omega_r + half, o.sweep_points);
    let template = DrivePulse { omega_d: d.omega_r, eps: 1.0, t_on: 0.0, t_off: o.sweep_duration / k };
    let window = Window { start: 0.0, end: (o.sweep_duration + o.tail) / k };
    let timing = LineTiming::Exact { t_on: template.t_on, t_off: template.t_off, window };
    let g2 = d.drive_gain * d.drive_gain;
    let device = d.device();
    let (mut max_phase, mut max_d) = (0.0f64, 0.0f64);
    for &w in &omega_d_values {
        for q in QubitState::BOTH {
            max_phase = max_phase.max(two_state_phase(w, &[d.omega_r, d.chi, k, g2], q, &timing).abs());
        }
        let pulse = template.with_frequency(w).with_amplitude(d.drive_gain);
        max_d = max_d.max(Response::from_pulse(&device, &pulse).dephasing(&window));
    }
    let a2 = (o.sweep_max_phase / max_phase).min(o.sweep_max_dephasing / max_d);
    let amplitude = if a2.is_finite() && a2 > 0.0 {
        a2.sqrt()
    } else if op.amplitude > 0.0 {
        op.amplitude
    } else {
        1.0
    };
    SweepSpec {
        omega_d_values,
        pulse_template: template.with_amplitude(amplitude),
        window,
        shots: o.sweep_shots,
        prepared_states: QubitState::BOTH.to_vec(),
        operating: *op,
        key,
    }
}

/// Fill on the `|0⟩` line, then slices over `span/κ` of ring-down. The fill
/// amplitude puts the first slice phase at the configured value.
pub fn plan_ringdown(d: &DesignParams, chi: Option<Estimate>, o: &PlanOptions, key: NoiseKey) -> RingdownSpec {
    let k = d.kappa;
    let fill = DrivePulse { omega_d: d.omega_r + d.chi, eps: d.drive_gain, t_on: 0.0, t_off: o.ringdown_fill / k };
    let slice = o.ringdown_slice / k;
    let first = Window { start: fill.t_off, end: fill.t_off + slice };
    let response = Response::from_pulse(&d.device(), &fill);
    let phase = response.stark_phase(QubitState::Zero, &first).abs();
    let a2 = o.ringdown_phase / phase;
    let amplitude = if a2.is_finite() && a2 > 0.0 { a2.sqrt() } else { 1.0 };
    RingdownSpec {
        fill: fill.with_amplitude(amplitude),
        delays: linspace(0.0, o.ringdown_span / k, o.ringdown_delays),
        slice,
        probe: QubitState::Zero,
        shots: o.ringdown_shots,
        chi,
        key,
    }
}

/// Readout-power pulse whose duration gives the configured dephasing.
pub fn plan_efficiency(d: &DesignParams, op: &OperatingPoint, o: &PlanOptions, key: NoiseKey) -> EfficiencySpec {
    let k = d.kappa;
    let device = d.device();
    let pulse = |tau: f64| DrivePulse { omega_d: op.omega_d, eps: op.amplitude, t_on: 0.0, t_off: tau };
    let window = |tau: f64| Window { start: 0.0, end: tau + o.tail / k };
    let dephasing = |tau: f64| {
        let physical = pulse(tau).with_amplitude(op.amplitude * d.drive_gain);
        Response::from_pulse(&device, &physical).dephasing(&window(tau))
    };
    let (mut lo, mut hi) = (0.1 / k, o.efficiency_max_duration / k);
    let tau = if dephasing(hi) <= o.efficiency_dephasing {
        hi
    } else if dephasing(lo) >= o.efficiency_dephasing {
        lo
    } else {
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if dephasing(mid) < o.efficiency_dephasing {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    EfficiencySpec {
        pulse: pulse(tau),
        window: window(tau),
        bins: o.efficiency_bins,
        shots: o.efficiency_shots,
        contrast_band: o.contrast_band,
        key,
    }
}

pub fn plan_readout(d: &DesignParams, op: &OperatingPoint, duration: f64, o: &PlanOptions, key: NoiseKey) -> ReadoutSpec {
    ReadoutSpec {
        pulse: DrivePulse { omega_d: op.omega_d, eps: op.amplitude, t_on: 0.0, t_off: duration },
        window: Window { start: 0.0, end: duration + o.tail / d.kappa },
        bins: o.readout_bins,
        shots: o.readout_shots,
        key,
    }
}

/// κ from the sweep fit against κ from ring-down.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KappaAgreement {
    pub difference: f64,
    pub sigma: f64,
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProtocolFailure {
    pub protocol: String,
    pub reason: String,
    pub message: String,
}

impl ProtocolFailure {
    pub fn new(protocol: &str, e: &ProtocolError) -> Self {
        ProtocolFailure { protocol: protocol.to_string(), reason: e.reason().to_string(), message: format!("{e}") }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CharacterizationReport {
    pub chi_kappa: Option<ChiKappaPowerResult>,
    pub ringdown: Option<RingdownResult>,
    pub efficiency: Option<EfficiencyResult>,
    pub validation: Option<SnrValidation>,
    pub kappa_agreement: Option<KappaAgreement>,
    pub failures: Vec<ProtocolFailure>,
    /// Cross-protocol findings.
    pub flags: Vec<Flag>,
}

impl CharacterizationReport {
    pub fn chi_hat(&self) -> Option<Estimate> {
        self.chi_kappa.as_ref().map(|c| c.chi)
    }

    pub fn kappa_hat(&self) -> Option<Estimate> {
        self.chi_kappa.as_ref().map(|c| c.kappa)
    }

    pub fn nbar_hat(&self, q: QubitState) -> Option<Estimate> {
        self.chi_kappa.as_ref().map(|c| c.nbar_op(q))
    }

    pub fn eta_hat(&self) -> Option<Estimate> {
        self.efficiency.as_ref().map(|e| e.eta)
    }

    /// Every flag from every protocol, in pipeline order.
    pub fn all_flags(&self) -> Vec<&Flag> {
        let mut all: Vec<&Flag> = Vec::new();
        if let Some(c) = &self.chi_kappa {
            all.extend(&c.flags);
        }
        if let Some(r) = &self.ringdown {
            all.extend(&r.flags);
        }
        if let Some(e) = &self.efficiency {
            all.extend(&e.flags);
        }
        if let Some(v) = &self.validation {
            all.extend(&v.flags);
        }
        all.extend(&self.flags);
        all
    }

    pub fn is_flagged(&self) -> bool {
        !self.failures.is_empty() || !self.all_flags().is_empty()
    }

    fn record<T>(&mut self, protocol: &str, r: Result<T, ProtocolError>) -> Option<T> {
        r.map_err(|e| self.failures.push(ProtocolFailure::new(protocol, &e))).ok()
    }
}

/// Run the full characterization of one channel: χ/κ/power sweep,
/// ring-down, efficiency, then SNR validation of the readout pulse of the
/// given duration. Each stage is designed from the best parameters known at
/// that point; a failing stage is recorded and the rest still run where
/// their inputs exist.
pub fn characterize_channel<B: ExperimentBackend + ?Sized>(
    backend: &B,
    nominal: &DesignParams,
    operating: &OperatingPoint,
    readout_duration: f64,
    options: &PlanOptions,
    key: NoiseKey,
) -> CharacterizationReport {
    let mut report = CharacterizationReport::default();
    let sweep = plan_sweep(nominal, operating, options, key.child(1));
    report.chi_kappa = report.record("chi-kappa-power", run_chi_kappa_power(backend, &sweep));
    let design = report.chi_kappa.as_ref().map(DesignParams::from_estimates).unwrap_or(*nominal);

    let chi_prior = report.chi_hat().or(Some(Estimate::new(nominal.chi, 0.0)));
    let ringdown = plan_ringdown(&design, chi_prior, options, key.child(2));
    report.ringdown = report.record("ringdown", run_ringdown(backend, &ringdown));

    let efficiency = plan_efficiency(&design, operating, options, key.child(3));
    report.efficiency = report.record("efficiency", run_efficiency(backend, &efficiency));

    let readout = plan_readout(&design, operating, readout_duration, options, key.child(4));
    let validation = validate_snr(backend, &report, &readout, options.tolerance);
    report.validation = report.record("validate-snr", validation);

    if let (Some(a), Some(b)) = (report.kappa_hat(), report.ringdown.as_ref().map(|r| r.kappa)) {
        let difference = a.value - b.value;
        let sigma = libm::hypot(a.stderr, b.stderr);
        let consistent = difference.abs() <= 3.0 * sigma;
        if !consistent {
            report.flags.push(Flag::new(
                FlagKind::LowConfidence,
                format!("sweep and ring-down kappa differ by {difference:.4} (> 3 sigma = {:.4})", 3.0 * sigma),
            ));
        }
        report.kappa_agreement = Some(KappaAgreement { difference, sigma, consistent });
    }
    report
}
