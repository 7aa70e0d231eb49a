use alloc::vec::Vec;

use crate::model::{DeviceParams, DrivePulse, ModelError, QubitState, Response, Window};

/// A parametric curve `y = f(x; p)` for [`lm_fit`](super::lm_fit). The
/// sample index is passed along so models can carry per-point metadata.
pub trait FitModel {
    fn param_names(&self) -> &'static [&'static str];

    /// Model value; non-finite results make the optimizer reject the step.
    fn eval(&self, index: usize, x: f64, params: &[f64]) -> f64;

    fn residual(&self, index: usize, x: f64, y: f64, params: &[f64]) -> f64 {
        y - self.eval(index, x, params)
    }
}

/// `A·(w/2)² / ((x - x0)² + (w/2)²) + B`, with `w` the full width at half
/// maximum.
pub fn lorentzian(x: f64, amplitude: f64, center: f64, fwhm: f64, offset: f64) -> Result<f64, ModelError> {
    if !(fwhm > 0.0) {
        return Err(ModelError::InvalidParameter { name: "w", reason: "Lorentzian width must be > 0" });
    }
    let hw2 = 0.25 * fwhm * fwhm;
    let dx = x - center;
    Ok(amplitude * hw2 / (dx * dx + hw2) + offset)
}

/// `A·exp(-k·t) + B`.
pub fn exp_decay(t: f64, amplitude: f64, rate: f64, offset: f64) -> f64 {
    amplitude * libm::exp(-rate * t) + offset
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Lorentzian;

impl FitModel for Lorentzian {
    fn param_names(&self) -> &'static [&'static str] {
        &["A", "x0", "w", "B"]
    }

    fn eval(&self, _: usize, x: f64, p: &[f64]) -> f64 {
        lorentzian(x, p[0], p[1], p[2], p[3]).unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExpDecay;

impl FitModel for ExpDecay {
    fn param_names(&self) -> &'static [&'static str] {
        &["A", "k", "B"]
    }

    fn eval(&self, _: usize, t: f64, p: &[f64]) -> f64 {
        exp_decay(t, p[0], p[1], p[2])
    }
}

/// `slope·x + intercept`.
#[derive(Clone, Copy, Debug, Default)]
pub struct StraightLine;

impl FitModel for StraightLine {
    fn param_names(&self) -> &'static [&'static str] {
        &["slope", "intercept"]
    }

    fn eval(&self, _: usize, x: f64, p: &[f64]) -> f64 {
        p[0] * x + p[1]
    }
}

/// How the Stark phase accumulated during a sweep pulse is converted from
/// photon number.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LineTiming {
    /// Steady-state photon number times `τ_eff = duration - 2/κ`.
    SteadyState { duration: f64 },
    /// Closed-form photon integral for a square pulse `[t_on, t_off)` over the
    /// Ramsey window, including fill and ring-down transients.
    Exact { t_on: f64, t_off: f64, window: Window },
}

/// Predicted Stark phase `φ_q(ω_d)` for parameters `[ω_r, χ, κ, ε²]`.
pub fn two_state_phase(omega_d: f64, params: &[f64; 4], q: QubitState, timing: &LineTiming) -> f64 {
    let [omega_r, chi, kappa, eps2] = *params;
    if !(kappa > 0.0) {
        return f64::NAN;
    }
    match *timing {
        LineTiming::SteadyState { duration } => {
            let delta = omega_d - omega_r - q.sign() * chi;
            let nbar = eps2 / (delta * delta + 0.25 * kappa * kappa);
            2.0 * q.sign() * chi * nbar * (duration - 2.0 / kappa)
        }
        LineTiming::Exact { t_on, t_off, window } => {
            let device = DeviceParams { omega_r, chi, kappa, eta: 1.0 };
            let pulse = DrivePulse { omega_d, eps: 1.0, t_on, t_off };
            eps2 * Response::from_pulse(&device, &pulse).stark_phase(q, &window)
        }
    }
}

/// Joint model for Stark-phase sweeps of both qubit states sharing
/// `[ω_r, χ, κ, ε²]`. Residuals are wrapped to `(-π, π]`.
#[derive(Clone, Debug)]
pub struct TwoStateLines {
    pub states: Vec<QubitState>,
    pub timing: LineTiming,
}

impl FitModel for TwoStateLines {
    fn param_names(&self) -> &'static [&'static str] {
        &["omega_r", "chi", "kappa", "eps2"]
    }

    fn eval(&self, index: usize, x: f64, p: &[f64]) -> f64 {
        two_state_phase(x, &[p[0], p[1], p[2], p[3]], self.states[index], &self.timing)
    }

    fn residual(&self, index: usize, x: f64, y: f64, p: &[f64]) -> f64 {
        wrap_angle(y - self.eval(index, x, p))
    }
}

/// Map an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use core::f64::consts::{PI, TAU};
    if a.is_nan() {
        return a;
    }
    let r = a - TAU * libm::floor((a + PI) / TAU);
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lorentzian_landmarks() {
        assert_relative_eq!(lorentzian(1.5, 2.0, 1.5, 3.0, 0.5).unwrap(), 2.5);
        assert_relative_eq!(lorentzian(3.0, 2.0, 1.5, 3.0, 0.5).unwrap(), 1.5);
        assert_relative_eq!(lorentzian(0.0, 2.0, 1.5, 3.0, 0.5).unwrap(), 1.5);
        assert_eq!(lorentzian(7.0, 0.0, 1.5, 3.0, 0.5).unwrap(), 0.5);
        assert!(lorentzian(0.0, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(lorentzian(0.0, 1.0, 0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn exp_decay_landmarks() {
        assert_eq!(exp_decay(0.0, 2.0, 3.0, 1.0), 3.0);
        assert_eq!(exp_decay(5.0, 2.0, 0.0, 1.0), 3.0);
        assert_relative_eq!(exp_decay(core::f64::consts::LN_2 / 3.0, 2.0, 3.0, 1.0), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn two_state_lines_mirror() {
        let timing = LineTiming::SteadyState { duration: 5.0 };
        let p = [10.0, 1.0, 4.0, 0.3];
        // on the |0> line centre: 2χ·(4ε²/κ²)·τ_eff
        let peak = two_state_phase(11.0, &p, QubitState::Zero, &timing);
        assert_relative_eq!(peak, 2.0 * 1.0 * (4.0 * 0.3 / 16.0) * (5.0 - 0.5), max_relative = 1e-14);
        let mirrored = two_state_phase(9.0, &p, QubitState::One, &timing);
        assert_relative_eq!(mirrored, -peak, max_relative = 1e-14);
        for w in [5.0, 9.5, 10.0, 13.0] {
            for q in QubitState::BOTH {
                assert_eq!(two_state_phase(w, &[10.0, 0.0, 4.0, 0.3], q, &timing), 0.0);
            }
        }
    }

    #[test]
    fn exact_timing_approaches_steady_state() {
        // long pulse, window through ring-down: ∫n dt = n̄(τ - 2/κ) on a line centre
        let p = [10.0, 1.0, 4.0, 0.3];
        let exact = LineTiming::Exact { t_on: 0.0, t_off: 20.0, window: Window::until(40.0) };
        let ss = LineTiming::SteadyState { duration: 20.0 };
        let a = two_state_phase(11.0, &p, QubitState::Zero, &exact);
        let b = two_state_phase(11.0, &p, QubitState::Zero, &ss);
        assert_relative_eq!(a, b, max_relative = 1e-10);
    }

    #[test]
    fn wrap() {
        use core::f64::consts::PI;
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_relative_eq!(wrap_angle(-3.0 * PI / 2.0), PI / 2.0, epsilon = 1e-15);
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(0.3), 0.3);
    }
}
