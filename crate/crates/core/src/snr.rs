//! SNR model: the matched-filter SNR of a readout pulse follows from the
//! measurement-induced dephasing it causes, `SNR² = 4·η·D`.


use crate::model::{DeviceParams, PulseTrain, Response, Window};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SnrRegime {
    /// `ω_d = ω_r`, `τ ≫ 1/κ` closed form.
    SteadyState,
    /// Exact piecewise field integrals for the given pulses and window.
    Transient,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SnrPrediction {
    pub snr: f64,
    /// SNR with constant (boxcar) weights over the same window; never above `snr`.
    pub snr_boxcar: Option<f64>,
    pub d_exponent: f64,
    pub eta: f64,
    pub window: Window,
    pub regime: SnrRegime,
}

/// Matched-filter SNR `sqrt(4·η·D)` for the given pulses over `window`.
pub fn predict_snr(params: &DeviceParams, train: &PulseTrain, window: &Window) -> SnrPrediction {
    let response = Response::new(params, train);
    let d = response.dephasing(window);
    // boxcar: |√κ ∫Δα dt| / sqrt(τ) over per-quadrature σ = 1/sqrt(2η)
    let mean_diff =
        response.field_integral(crate::QubitState::Zero, window) - response.field_integral(crate::QubitState::One, window);
    let boxcar = (params.kappa / window.length()).sqrt() * mean_diff.norm() * (2.0 * params.eta).sqrt();
    SnrPrediction {
        snr: (4.0 * params.eta * d).sqrt(),
        snr_boxcar: Some(boxcar),
        d_exponent: d,
        eta: params.eta,
        window: *window,
        regime: SnrRegime::Transient,
    }
}

/// `SNR² = 8·η·κ·τ·n̄·χ² / (χ² + κ²/4)` for a long drive at `ω_d = ω_r`.
pub fn steady_state_snr(chi: f64, kappa: f64, nbar: f64, eta: f64, tau: f64) -> f64 {
    let chi2 = chi * chi;
    (8.0 * eta * kappa * tau * nbar * chi2 / (chi2 + 0.25 * kappa * kappa)).sqrt()
}

/// Steady-state pointer separation `|α_0 - α_1|²` at `ω_d = ω_r` and fixed
/// drive amplitude: `4ε²χ² / (χ² + κ²/4)²`.
pub fn steady_state_separation(chi: f64, kappa: f64, eps: f64) -> f64 {
    let denom = chi * chi + 0.25 * kappa * kappa;
    4.0 * eps * eps * chi * chi / (denom * denom)
}

/// χ maximizing the fixed-drive steady-state separation: `κ/2`.
pub fn optimal_chi_fixed_drive(kappa: f64) -> f64 {
    0.5 * kappa
}

/// Per-state assignment error of two equal Gaussian clouds with a midpoint
/// threshold: `½·erfc(SNR / (2√2))`.
pub fn separation_error(snr: f64) -> f64 {
    0.5 * libm::erfc(snr / (2.0 * core::f64::consts::SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DrivePulse;
    use approx::assert_relative_eq;

    #[test]
    fn no_coupling_no_snr() {
        let p = DeviceParams::new(10.0, 0.0, 4.0, 0.7).unwrap();
        let pulse = DrivePulse::new(10.0, 1.0, 0.0, 3.0).unwrap();
        let s = predict_snr(&p, &pulse.into(), &Window::until(5.0));
        assert_eq!(s.snr, 0.0);
        assert_eq!(s.d_exponent, 0.0);
    }

    #[test]
    fn identity_holds_exactly() {
        let p = DeviceParams::new(10.0, 2.0, 4.0, 0.5).unwrap();
        let pulse = DrivePulse::new(10.0, 1.0, 0.0, 10.0).unwrap();
        let s = predict_snr(&p, &pulse.into(), &Window::until(10.0));
        assert_eq!(s.snr * s.snr / (4.0 * s.eta), s.d_exponent);
        // D frozen from an independent adaptive ODE solve
        assert_relative_eq!(s.snr, (2.0f64 * 4.6875).sqrt(), max_relative = 1e-10);
        assert!(s.snr_boxcar.unwrap() <= s.snr);
    }

    #[test]
    fn steady_state_closed_form() {
        // χ = κ/2: SNR² = 4ηκτn̄
        assert_relative_eq!(steady_state_snr(2.0, 4.0, 0.3, 0.6, 5.0).powi(2), 4.0 * 0.6 * 4.0 * 5.0 * 0.3, max_relative = 1e-14);
        let base = steady_state_snr(1.0, 4.0, 0.5, 0.2, 3.0);
        assert_relative_eq!(steady_state_snr(1.0, 4.0, 0.5, 0.4, 3.0) / base, 2f64.sqrt(), max_relative = 1e-14);
        assert_eq!(optimal_chi_fixed_drive(4.0), 2.0);
        assert_eq!(optimal_chi_fixed_drive(1.0), 0.5);
    }

    #[test]
    fn assignment_error_limits() {
        assert_eq!(separation_error(0.0), 0.5);
        assert!(separation_error(40.0) < 1e-80);
        assert!(separation_error(2.0) < separation_error(1.0));
        // erfc(1/√2)/2 = 0.158655253931457...
        assert_relative_eq!(separation_error(2.0), 0.158_655_253_931_457_05, max_relative = 1e-14);
    }
}
