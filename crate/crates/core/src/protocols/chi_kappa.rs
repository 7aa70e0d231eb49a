use alloc::format;
use alloc::vec::Vec;


use super::backend::{ExperimentBackend, RamseyProbe, RamseyRequest};
use super::{Estimate, Flag, FlagKind, ProtocolError};
use crate::fitting::{lm_fit, two_state_phase, FitError, FitProblem, FitResult, LineTiming, LmOptions, TwoStateLines};
use crate::model::{DeviceParams, DrivePulse, QubitState, Response, Window};
use crate::rng::NoiseKey;
use crate::signal::MIN_RAMSEY_SHOTS;

/// Drive frequency and commanded amplitude used for readout.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OperatingPoint {
    pub omega_d: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepSpec {
    pub omega_d_values: Vec<f64>,
    /// Frequency is overridden per point; `eps` is the commanded amplitude.
    pub pulse_template: DrivePulse,
    pub window: Window,
    pub shots: u64,
    pub prepared_states: Vec<QubitState>,
    pub operating: OperatingPoint,
    pub key: NoiseKey,
}

pub const MIN_SWEEP_POINTS: usize = 8;
pub const MIN_SPAN_KAPPAS: f64 = 3.0;
pub const OVERDRIVE_CONTRAST: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepPoint {
    pub omega_d: f64,
    pub state: QubitState,
    pub phase: f64,
    pub phase_stderr: f64,
    pub contrast: f64,
    pub contrast_stderr: f64,
}

/// Measured contrast against `exp(-D)` from the fitted parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContrastCheck {
    pub rms_z: f64,
    pub max_abs_z: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChiKappaPowerResult {
    pub omega_r: Estimate,
    pub chi: Estimate,
    pub kappa: Estimate,
    /// ε² at the sweep amplitude.
    pub eps2: Estimate,
    /// ε² per unit commanded amplitude squared.
    pub drive_gain2: Estimate,
    /// Steady-state photon number at the operating point, indexed by state.
    pub nbar: [Estimate; 2],
    pub operating: OperatingPoint,
    pub sweep_amplitude: f64,
    pub points: Vec<SweepPoint>,
    pub fit: FitResult,
    pub contrast_check: ContrastCheck,
    pub flags: Vec<Flag>,
}

impl ChiKappaPowerResult {
    pub fn nbar_op(&self, q: QubitState) -> Estimate {
        self.nbar[q.index()]
    }
}

fn validate(spec: &SweepSpec) -> Result<(), ProtocolError> {
    let bad = |why: &str| Err(ProtocolError::InvalidInput(why.into()));
    if spec.omega_d_values.len() < MIN_SWEEP_POINTS {
        return bad("sweep needs at least 8 frequency points");
    }
    if spec.omega_d_values.iter().any(|w| !w.is_finite()) {
        return bad("sweep frequencies must be finite");
    }
    if spec.shots < MIN_RAMSEY_SHOTS {
        return bad("sweep needs at least 100 shots per point");
    }
    if !QubitState::BOTH.iter().all(|q| spec.prepared_states.contains(q)) {
        return bad("both prepared states are required for the joint two-line fit");
    }
    spec.pulse_template.validate()?;
    spec.window.validate()?;
    if !(spec.operating.amplitude >= 0.0) || !spec.operating.omega_d.is_finite() {
        return bad("operating point must have finite frequency and amplitude >= 0");
    }
    if spec.pulse_template.eps == 0.0 {
        return Err(ProtocolError::NoSignal("sweep amplitude is zero"));
    }
    Ok(())
}

/// Argmax of `|y|` and the interpolated full width at half maximum around it.
fn peak_and_width(x: &[f64], y: &[f64]) -> (usize, f64) {
    let (imax, ymax) = y
        .iter()
        .map(|v| v.abs())
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let half = 0.5 * ymax;
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imax;
        for i in range {
            if y[i].abs() < half {
                let (a, b) = (y[prev].abs(), y[i].abs());
                let t = (a - half) / (a - b);
                return Some(x[prev] + t * (x[i] - x[prev]));
            }
            prev = i;
        }
        None
    };
    let left = crossing(&mut (0..imax).rev());
    let right = crossing(&mut (imax + 1..x.len()));
    let width = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (x[imax] - l),
        (None, Some(r)) => 2.0 * (r - x[imax]),
        (None, None) => x[x.len() - 1] - x[0],
    };
    (imax, width.abs())
}

fn initial_guess(freqs: &[f64], phase0: &[f64], phase1: &[f64], timing: &LineTiming) -> [f64; 4] {
    let step = (freqs[freqs.len() - 1] - freqs[0]).abs() / (freqs.len() - 1) as f64;
    let (i0, w0) = peak_and_width(freqs, phase0);
    let (i1, w1) = peak_and_width(freqs, phase1);
    let (c0, c1) = (freqs[i0], freqs[i1]);
    let omega_r = 0.5 * (c0 + c1);
    // the two curves include each other's shoulder when the lines overlap
    let kappa = (0.5 * (w0 + w1) - (c0 - c1).abs()).max(0.5 * w0.min(w1)).max(2.0 * step);
    // positive Stark phase belongs to state 0 when χ > 0
    let sign = if phase0[i0] >= 0.0 { 1.0 } else { -1.0 };
    let chi = sign * (0.5 * (c0 - c1).abs()).max(kappa / 8.0);
    let unit = two_state_phase(c0, &[omega_r, chi, kappa, 1.0], QubitState::Zero, timing);
    let eps2 = if unit.abs() > 0.0 { (phase0[i0] / unit).abs() } else { 1.0 };
    [omega_r, chi, kappa, eps2]
}

fn nbar_with_error(fit: &FitResult, gain2: f64, gain2_factor: f64, op: &OperatingPoint, q: QubitState) -> Estimate {
    let [omega_r, chi, kappa, _] = [fit.params[0], fit.params[1], fit.params[2], fit.params[3]];
    let s = q.sign();
    let delta = op.omega_d - omega_r - s * chi;
    let den = delta * delta + 0.25 * kappa * kappa;
    let a2 = op.amplitude * op.amplitude;
    let n = gain2 * a2 / den;
    let grad = [
        n * 2.0 * delta / den,
        n * 2.0 * s * delta / den,
        -n * 0.5 * kappa / den,
        gain2_factor * a2 / den,
    ];
    let mut var = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            var += grad[i] * fit.covariance[i][j] * grad[j];
        }
    }
    Estimate::new(n, var.max(0.0).sqrt())
}

/// Stark-phase sweep of both states across the pulled lines, fitted jointly
/// for `[ω_r, χ, κ, ε²]`.
pub fn run_chi_kappa_power<B: ExperimentBackend + ?Sized>(
    backend: &B,
    spec: &SweepSpec,
) -> Result<ChiKappaPowerResult, ProtocolError> {
    validate(spec)?;
    let template = spec.pulse_template;
    let mut points = Vec::with_capacity(2 * spec.omega_d_values.len());
    for (i, &w) in spec.omega_d_values.iter().enumerate() {
        for q in QubitState::BOTH {
            let request = RamseyRequest {
                pulses: alloc::vec![template.with_frequency(w)],
                window: spec.window,
                probe: RamseyProbe::StarkBranch(q),
                shots: spec.shots,
                key: spec.key.child(i as u64).child(q.index() as u64),
            };
            let r = backend.ramsey_under_drive(&request)?;
            points.push(SweepPoint {
                omega_d: w,
                state: q,
                phase: r.phase,
                phase_stderr: r.phase_stderr,
                contrast: r.contrast,
                contrast_stderr: r.contrast_stderr,
            });
        }
    }

    let min_contrast = points.iter().map(|p| p.contrast).fold(f64::INFINITY, f64::min);
    if min_contrast < OVERDRIVE_CONTRAST {
        return Err(ProtocolError::Overdrive { min_contrast });
    }
    let significance = points.iter().map(|p| (p.phase / p.phase_stderr).abs()).fold(0.0, f64::max);
    if significance < 5.0 {
        // no Stark phase above noise: a single unshifted line or no drive
        return Err(ProtocolError::Fit(FitError::Degenerate { parameter: "chi".into() }));
    }

    let timing = LineTiming::Exact { t_on: template.t_on, t_off: template.t_off, window: spec.window };
    let phases = |q: QubitState| -> Vec<f64> { points.iter().filter(|p| p.state == q).map(|p| p.phase).collect() };
    let p0 = initial_guess(&spec.omega_d_values, &phases(QubitState::Zero), &phases(QubitState::One), &timing);
    let model = TwoStateLines { states: points.iter().map(|p| p.state).collect(), timing };
    let problem = FitProblem::new(
        model,
        points.iter().map(|p| p.omega_d).collect(),
        points.iter().map(|p| p.phase).collect(),
        points.iter().map(|p| p.phase_stderr).collect(),
        p0.to_vec(),
    );
    let fit = lm_fit(&problem, &LmOptions::default())?;

    let est = |i: usize| Estimate::new(fit.params[i], fit.stderr[i]);
    let (omega_r, chi, mut kappa, eps2) = (est(0), est(1), est(2), est(3));
    // κ enters only squared
    kappa.value = kappa.value.abs();
    let a2 = template.eps * template.eps;
    let drive_gain2 = Estimate::new(eps2.value / a2, eps2.stderr / a2);
    let nbar = QubitState::BOTH.map(|q| nbar_with_error(&fit, drive_gain2.value, 1.0 / a2, &spec.operating, q));

    let contrast_check = contrast_residuals(&fit, &template, &spec.window, &points, spec.shots);
    let mut flags = Vec::new();
    if !fit.converged {
        flags.push(Flag::new(FlagKind::NotConverged, format!("fit stopped after {} iterations", fit.iterations)));
    }
    if chi.value.abs() < 3.0 * chi.stderr {
        flags.push(Flag::new(
            FlagKind::Unresolved,
            format!("chi = {:.4} +/- {:.4} is not significant", chi.value, chi.stderr),
        ));
    }
    if 2.0 * chi.value.abs() < 0.25 * kappa.value {
        flags.push(Flag::new(
            FlagKind::Unresolved,
            format!("line splitting 2|chi| = {:.4} is below kappa/4 = {:.4}", 2.0 * chi.value.abs(), 0.25 * kappa.value),
        ));
    }
    let span = spec.omega_d_values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - spec.omega_d_values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if span < MIN_SPAN_KAPPAS * kappa.value {
        flags.push(Flag::new(
            FlagKind::LowConfidence,
            format!("sweep span {span:.4} is below 3 kappa = {:.4}", MIN_SPAN_KAPPAS * kappa.value),
        ));
    }
    if contrast_check.rms_z > 5.0 {
        flags.push(Flag::new(
            FlagKind::LowConfidence,
            format!("contrast disagrees with the phase fit (rms z = {:.2})", contrast_check.rms_z),
        ));
    }

    Ok(ChiKappaPowerResult {
        omega_r,
        chi,
        kappa,
        eps2,
        drive_gain2,
        nbar,
        operating: spec.operating,
        sweep_amplitude: template.eps,
        points,
        fit,
        contrast_check,
        flags,
    })
}

fn contrast_residuals(
    fit: &FitResult,
    template: &DrivePulse,
    window: &Window,
    points: &[SweepPoint],
    shots: u64,
) -> ContrastCheck {
    let device = DeviceParams { omega_r: fit.params[0], chi: fit.params[1], kappa: fit.params[2].abs(), eta: 1.0 };
    let eps = fit.params[3].max(0.0).sqrt();
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    // binomial stderr vanishes as C -> 1
    let floor = 1.0 / libm::sqrt(shots as f64);
    for p in points {
        let pulse = template.with_frequency(p.omega_d).with_amplitude(eps);
        let predicted = libm::exp(-Response::from_pulse(&device, &pulse).dephasing(window));
        let z = (p.contrast - predicted) / p.contrast_stderr.max(floor);
        sum += z * z;
        max = max.max(z.abs());
    }
    ContrastCheck { rms_z: libm::sqrt(sum / points.len() as f64), max_abs_z: max }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::SimulatorBackend;

    fn spec(device: &DeviceParams, eps: f64, shots: u64) -> SweepSpec {
        let k = device.kappa;
        let half = (3.0 * k).max(device.chi.abs() + 2.0 * k);
        let n = 41;
        SweepSpec {
            omega_d_values: (0..n).map(|i| device.omega_r - half + 2.0 * half * i as f64 / (n - 1) as f64).collect(),
            pulse_template: DrivePulse::new(device.omega_r, eps, 0.0, 12.0 / k).unwrap(),
            window: Window::until(20.0 / k),
            shots,
            prepared_states: QubitState::BOTH.to_vec(),
            operating: OperatingPoint { omega_d: device.omega_r, amplitude: 1.0 },
            key: NoiseKey::new(11),
        }
    }

    #[test]
    fn recovers_simulator_truth() {
        let device = DeviceParams::new(50.0, 1.0, 4.0, 0.5).unwrap();
        let backend = SimulatorBackend::new(device);
        let r = run_chi_kappa_power(&backend, &spec(&device, 1.0, 10_000)).unwrap();
        assert!(r.chi.relative_error(1.0) < 0.02, "chi {:?}", r.chi);
        assert!(r.kappa.relative_error(4.0) < 0.02, "kappa {:?}", r.kappa);
        assert!(r.omega_r.value.is_finite());
        // ε = 1 at the operating point, drive at ω_r: n̄ = 1/(χ² + κ²/4)
        for q in QubitState::BOTH {
            assert!(r.nbar_op(q).relative_error(1.0 / 5.0) < 0.05, "{:?}", r.nbar_op(q));
        }
        assert!(r.fit.converged);
        assert!(r.flags.is_empty(), "{:?}", r.flags);
    }

    #[test]
    fn line_centres_split_by_two_chi() {
        let device = DeviceParams::new(50.0, -1.5, 4.0, 0.5).unwrap();
        let r = run_chi_kappa_power(&SimulatorBackend::new(device), &spec(&device, 1.0, 10_000)).unwrap();
        assert!(r.chi.value < 0.0);
        assert!(r.chi.relative_error(-1.5) < 0.02);
    }

    #[test]
    fn zero_chi_is_degenerate() {
        let device = DeviceParams::new(50.0, 0.0, 4.0, 0.5).unwrap();
        let err = run_chi_kappa_power(&SimulatorBackend::new(device), &spec(&device, 0.5, 10_000)).unwrap_err();
        assert_eq!(err.reason(), "degenerate-fit");
    }

    #[test]
    fn overdrive_is_reported() {
        let device = DeviceParams::new(50.0, 2.0, 4.0, 0.5).unwrap();
        let err = run_chi_kappa_power(&SimulatorBackend::new(device), &spec(&device, 5.0, 1_000)).unwrap_err();
        assert!(matches!(err, ProtocolError::Overdrive { .. }), "{err:?}");
    }

    #[test]
    fn doubling_amplitude_quadruples_eps2() {
        let device = DeviceParams::new(50.0, 1.0, 4.0, 0.5).unwrap();
        let backend = SimulatorBackend::new(device);
        let a = run_chi_kappa_power(&backend, &spec(&device, 0.5, 10_000)).unwrap();
        let b = run_chi_kappa_power(&backend, &spec(&device, 1.0, 10_000)).unwrap();
        let ratio = b.eps2.value / a.eps2.value;
        let sigma = ratio * ((a.eps2.stderr / a.eps2.value).powi(2) + (b.eps2.stderr / b.eps2.value).powi(2)).sqrt();
        assert!((ratio - 4.0).abs() < 3.0 * sigma.max(1e-3), "ratio {ratio} +/- {sigma}");
    }

    #[test]
    fn rejects_short_sweeps_and_missing_states() {
        let device = DeviceParams::new(50.0, 1.0, 4.0, 0.5).unwrap();
        let backend = SimulatorBackend::new(device);
        let mut s = spec(&device, 0.25, 1_000);
        s.omega_d_values.truncate(7);
        assert_eq!(run_chi_kappa_power(&backend, &s).unwrap_err().reason(), "invalid-input");
        let mut s = spec(&device, 0.25, 1_000);
        s.prepared_states = alloc::vec![QubitState::Zero];
        assert_eq!(run_chi_kappa_power(&backend, &s).unwrap_err().reason(), "invalid-input");
        let mut s = spec(&device, 0.25, 1_000);
        s.shots = 99;
        assert_eq!(run_chi_kappa_power(&backend, &s).unwrap_err().reason(), "invalid-input");
    }

    #[test]
    fn half_max_width_of_sampled_lorentzian() {
        let x: Vec<f64> = (0..201).map(|i| -10.0 + 0.1 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| -3.0 / (1.0 + (v - 1.0) * (v - 1.0))).collect();
        let (i, w) = peak_and_width(&x, &y);
        assert!((x[i] - 1.0).abs() < 1e-9);
        assert!((w - 2.0).abs() < 0.01, "{w}");
    }
}
