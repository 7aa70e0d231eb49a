use alloc::format;
use alloc::vec::Vec;

use super::backend::{ExperimentBackend, RamseyProbe, RamseyRequest};
use super::{Estimate, Flag, FlagKind, ProtocolError};
use crate::fitting::{lm_fit, ExpDecay, FitProblem, FitResult, LmOptions};
use crate::model::{DrivePulse, QubitState, Window};
use crate::rng::NoiseKey;
use crate::signal::MIN_RAMSEY_SHOTS;

pub const MIN_DELAYS: usize = 6;
/// Delay span, in units of 1/κ̂, below which the decay is poorly resolved.
pub const MIN_SPAN_KAPPA_TIMES: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RingdownSpec {
    pub fill: DrivePulse,
    /// Probe delays after switch-off, ascending.
    pub delays: Vec<f64>,
    /// Length of each Ramsey phase slice.
    pub slice: f64,
    pub probe: QubitState,
    pub shots: u64,
    /// Prior χ estimate, used only to express slice phases as photon numbers.
    pub chi: Option<Estimate>,
    pub key: NoiseKey,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RingdownPoint {
    pub delay: f64,
    pub phase: f64,
    pub phase_stderr: f64,
    /// Photon number at the start of the slice, when a χ prior was supplied.
    pub photons: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RingdownResult {
    pub kappa: Estimate,
    /// Slice phase extrapolated to zero delay.
    pub amplitude: Estimate,
    /// Photon number at switch-off, when a χ prior was supplied.
    pub photons_at_off: Option<Estimate>,
    pub points: Vec<RingdownPoint>,
    pub fit: FitResult,
    pub flags: Vec<Flag>,
}

/// Photon number at the start of a slice of length `slice` that accumulated
/// Stark phase `phase` while decaying at rate `kappa`.
pub fn slice_photons(phase: f64, chi: f64, kappa: f64, slice: f64, probe: QubitState) -> f64 {
    phase * kappa / (2.0 * probe.sign() * chi * -libm::expm1(-kappa * slice))
}

fn validate(spec: &RingdownSpec) -> Result<(), ProtocolError> {
    let bad = |why: &str| Err(ProtocolError::InvalidInput(why.into()));
    spec.fill.validate()?;
    if spec.delays.len() < MIN_DELAYS {
        return bad("ring-down needs at least 6 delays");
    }
    if spec.delays.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) || spec.delays.windows(2).any(|w| w[1] <= w[0]) {
        return bad("delays must be finite, >= 0 and strictly ascending");
    }
    if !(spec.slice > 0.0) || !spec.slice.is_finite() {
        return bad("slice length must be > 0");
    }
    if spec.shots < MIN_RAMSEY_SHOTS {
        return bad("ring-down needs at least 100 shots per delay");
    }
    if spec.fill.eps == 0.0 {
        return Err(ProtocolError::NoSignal("fill amplitude is zero"));
    }
    Ok(())
}

fn initial_guess(points: &[RingdownPoint]) -> [f64; 3] {
    let first = points[0];
    let span = points[points.len() - 1].delay - first.delay;
    // log-ratio against the last point still clearly above noise with the same sign
    let rate = points
        .iter()
        .skip(1)
        .filter(|p| p.phase * first.phase > 0.0 && p.phase.abs() > 3.0 * p.phase_stderr)
        .last()
        .map(|p| libm::log(first.phase / p.phase) / (p.delay - first.delay))
        .filter(|k| *k > 0.0 && k.is_finite())
        .unwrap_or(1.0 / span);
    [first.phase * libm::exp(rate * first.delay), rate, 0.0]
}

/// Fill the resonator, switch off, and fit the decay of Stark-phase slices
/// taken at increasing delays.
pub fn run_ringdown<B: ExperimentBackend + ?Sized>(backend: &B, spec: &RingdownSpec) -> Result<RingdownResult, ProtocolError> {
    validate(spec)?;
    let t_off = spec.fill.t_off;
    let mut points = Vec::with_capacity(spec.delays.len());
    for (i, &delay) in spec.delays.iter().enumerate() {
        let request = RamseyRequest {
            pulses: alloc::vec![spec.fill],
            window: Window { start: t_off + delay, end: t_off + delay + spec.slice },
            probe: RamseyProbe::StarkBranch(spec.probe),
            shots: spec.shots,
            key: spec.key.child(i as u64),
        };
        let r = backend.ramsey_under_drive(&request)?;
        points.push(RingdownPoint { delay, phase: r.phase, phase_stderr: r.phase_stderr, photons: None });
    }
    let significance = points.iter().map(|p| (p.phase / p.phase_stderr).abs()).fold(0.0, f64::max);
    if significance < 5.0 {
        return Err(ProtocolError::NoSignal("no Stark phase after switch-off"));
    }

    let problem = FitProblem::new(
        ExpDecay,
        points.iter().map(|p| p.delay).collect(),
        points.iter().map(|p| p.phase).collect(),
        points.iter().map(|p| p.phase_stderr).collect(),
        initial_guess(&points).to_vec(),
    )
    .fix("B");
    let fit = lm_fit(&problem, &LmOptions::default())?;
    let amplitude = Estimate::new(fit.params[0], fit.stderr[0]);
    let kappa = Estimate::new(fit.params[1], fit.stderr[1]);

    let mut photons_at_off = None;
    if let Some(chi) = spec.chi.filter(|c| c.value != 0.0) {
        let n = |phase: f64| slice_photons(phase, chi.value, kappa.value, spec.slice, spec.probe);
        for p in &mut points {
            p.photons = Some(n(p.phase));
        }
        let n0 = n(amplitude.value);
        let rel = libm::hypot(amplitude.stderr / amplitude.value, chi.stderr / chi.value);
        photons_at_off = Some(Estimate::new(n0, (n0 * rel).abs()));
    }

    let mut flags = Vec::new();
    if !fit.converged {
        flags.push(Flag::new(FlagKind::NotConverged, format!("fit stopped after {} iterations", fit.iterations)));
    }
    if !(kappa.value > 0.0) {
        flags.push(Flag::new(FlagKind::Unphysical, format!("decay rate {:.4} is not positive", kappa.value)));
    }
    let span = points[points.len() - 1].delay - points[0].delay;
    if span * kappa.value < MIN_SPAN_KAPPA_TIMES {
        flags.push(Flag::new(
            FlagKind::LowConfidence,
            format!("delays span {:.3}/kappa, too short to resolve the decay", span * kappa.value),
        ));
    }
    Ok(RingdownResult { kappa, amplitude, photons_at_off, points, fit, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DeviceParams;
    use crate::protocols::SimulatorBackend;

    fn spec(kappa: f64, eps: f64, delays: Vec<f64>) -> RingdownSpec {
        RingdownSpec {
            fill: DrivePulse::new(51.0, eps, 0.0, 12.0 / kappa).unwrap(),
            delays,
            slice: 0.25 / kappa,
            probe: QubitState::Zero,
            shots: 10_000,
            chi: Some(Estimate::new(1.0, 0.0)),
            key: NoiseKey::new(5),
        }
    }

    #[test]
    fn recovers_kappa() {
        let device = DeviceParams::new(50.0, 1.0, 4.0, 0.5).unwrap();
        let delays: Vec<f64> = (0..11).map(|i| 0.1 * i as f64).collect();
        let r = run_ringdown(&SimulatorBackend::new(device), &spec(4.0, 6.0, delays)).unwrap();
        assert!(r.kappa.relative_error(4.0) < 0.03, "{:?}", r.kappa);
        assert!(r.flags.is_empty(), "{:?}", r.flags);
        // fill on the |0> line: n = 4ε²/κ² at switch-off
        let n0 = r.photons_at_off.unwrap();
        assert!(n0.relative_error(4.0 * 36.0 / 16.0) < 0.05, "{n0:?}");
    }

    #[test]
    fn detuned_fill_gives_same_kappa() {
        let device = DeviceParams::new(50.0, 1.0, 4.0, 0.5).unwrap();
        let delays: Vec<f64> = (0..11).map(|i| 0.1 * i as f64).collect();
        let mut s = spec(4.0, 12.0, delays);
        s.fill = s.fill.with_frequency(55.0);
        let r = run_ringdown(&SimulatorBackend::new(device), &s).unwrap();
        assert!(r.kappa.relative_error(4.0) < 0.03, "{:?}", r.kappa);
    }

    #[test]
    fn zero_fill_is_no_signal() {
        let device = DeviceParams::new(50.0, 1.0, 4.0, 0.5).unwrap();
        let delays: Vec<f64> = (0..11).map(|i| 0.1 * i as f64).collect();
        let err = run_ringdown(&SimulatorBackend::new(device), &spec(4.0, 0.0, delays)).unwrap_err();
        assert_eq!(err.reason(), "no-signal");
    }

    #[test]
    fn short_delays_are_flagged() {
        let device = DeviceParams::new(50.0, 1.0, 4.0, 0.5).unwrap();
        let delays: Vec<f64> = (0..8).map(|i| 0.02 * i as f64).collect();
        let r = run_ringdown(&SimulatorBackend::new(device), &spec(4.0, 3.0, delays)).unwrap();
        assert!(r.flags.iter().any(|f| f.kind == FlagKind::LowConfidence));
    }

    #[test]
    fn half_life() {
        // a slice phase halves after ln 2 / κ
        let n0 = slice_photons(1.0, 1.0, 4.0, 0.1, QubitState::Zero);
        let n1 = slice_photons(0.5, 1.0, 4.0, 0.1, QubitState::Zero);
        assert!((n1 / n0 - 0.5).abs() < 1e-15);
        assert!(slice_photons(1.0, 1.0, 4.0, 0.1, QubitState::One) < 0.0);
    }
}
