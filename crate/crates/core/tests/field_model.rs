use proptest::prelude::*;
use readout_core::model::{
    analytic_trajectory, integrate_alpha_ode, steady_state_photons, transient_alpha, uniform_grid, Response,
};
use readout_core::{Complex64, DeviceParams, DrivePulse, PulseTrain, QubitState, Window};

fn device(chi: f64, kappa: f64) -> DeviceParams {
    DeviceParams::new(100.0, chi, kappa, 1.0).unwrap()
}

/// Independent quadrature of `∫|α_0 - α_1|²` with Simpson's rule on the
/// pointwise analytic field.
fn simpson_separation(r: &Response, window: &Window, n: usize) -> f64 {
    let h = window.length() / n as f64;
    let f = |t: f64| (r.alpha(QubitState::Zero, t) - r.alpha(QubitState::One, t)).norm_sqr();
    let mut acc = f(window.start) + f(window.end);
    for k in 1..n {
        acc += f(window.start + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn frozen_dephasing_oracle() {
    // resonant drive, κ = 4, χ = 2, ε = 1 on [0, 10]:
    // D = (κ/2)·|Δα_ss|²·τ minus the fill transient, computed by hand
    let d = device(2.0, 4.0);
    let pulse = DrivePulse::new(100.0, 1.0, 0.0, 10.0).unwrap();
    let r = Response::from_pulse(&d, &pulse);
    assert!((r.dephasing(&Window::until(10.0)) - 4.6875).abs() < 1e-9);
    let quad = 2.0 * simpson_separation(&r, &Window::until(10.0), 20_000);
    assert!((quad - 4.6875).abs() < 1e-9, "{quad}");
}

#[test]
fn frozen_phase_oracle() {
    let d = device(0.2, 4.0);
    let pulse = DrivePulse::new(100.0, 1.0, 0.0, 10.0).unwrap();
    let r = Response::from_pulse(&d, &pulse);
    let w = Window::until(10.0);
    assert!((r.differential_phase(&w) - 0.899882655515971).abs() < 1e-12);
    assert!((r.dephasing(&w) - 0.16939224589395).abs() < 1e-12);
}

#[test]
fn ringdown_half_life() {
    let d = device(1.0, 3.0);
    let off = DrivePulse::new(100.0, 0.0, 0.0, 1.0).unwrap();
    let a0 = Complex64::new(0.7, -1.1);
    let t_half = core::f64::consts::LN_2 / d.kappa;
    for q in QubitState::BOTH {
        let a = transient_alpha(&d, &off, q, t_half, a0);
        assert!((a.norm_sqr() / a0.norm_sqr() - 0.5).abs() < 1e-9);
    }
}

fn pulse_strategy() -> impl Strategy<Value = (f64, f64, f64, f64, f64, f64)> {
    // κ, χ, ω_d - ω_r, ε, t_on·κ, duration·κ
    (0.5..10.0f64, -5.0..5.0f64, -10.0..10.0f64, 0.1..5.0f64, 0.0..1.0f64, 0.5..10.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rk4_matches_closed_form((kappa, chi, det, eps, on, dur) in pulse_strategy()) {
        let d = device(chi, kappa);
        let pulse = DrivePulse::new(100.0 + det, eps, on / kappa, (on + dur) / kappa).unwrap();
        let train = PulseTrain::from(pulse);
        let t_end = pulse.t_off + 4.0 / kappa;
        let rate = [chi - det, -chi - det].iter().fold(kappa.max(1.0), |m, x| m.max(x.abs()));
        let steps = (t_end * rate / 0.005).ceil() as usize;
        let grid = uniform_grid(t_end, steps);
        let rk = integrate_alpha_ode(&d, &train, &grid).unwrap();
        let exact = analytic_trajectory(&d, &train, &grid);
        for q in QubitState::BOTH {
            let scale = exact.alpha(q).iter().fold(0.0f64, |m, a| m.max(a.norm()));
            let dev = rk.alpha(q).iter().zip(exact.alpha(q)).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
            prop_assert!(dev / scale < 1e-9, "relative deviation {}", dev / scale);
        }
    }

    #[test]
    fn field_is_linear_in_drive((kappa, chi, det, eps, on, dur) in pulse_strategy(), k in 0.1..10.0f64) {
        let d = device(chi, kappa);
        let p = DrivePulse::new(100.0 + det, eps, on / kappa, (on + dur) / kappa).unwrap();
        let w = Window::until(p.t_off + 3.0 / kappa);
        let r1 = Response::from_pulse(&d, &p);
        let rk = Response::from_pulse(&d, &p.with_amplitude(k * eps));
        for t in [0.3 * p.t_off, p.t_off, w.end] {
            for q in QubitState::BOTH {
                let (a, b) = (r1.alpha(q, t) * k, rk.alpha(q, t));
                prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-300));
            }
        }
        let ratio = rk.dephasing(&w) / r1.dephasing(&w);
        prop_assert!((ratio / (k * k) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn photon_line_fwhm_is_kappa(kappa in 0.1..20.0f64, chi in -10.0..10.0f64, eps in 0.1..5.0f64) {
        let d = device(chi, kappa);
        for q in QubitState::BOTH {
            let centre = d.pulled_frequency(q);
            let n = |w: f64| steady_state_photons(&d, &DrivePulse::new(w, eps, 0.0, 1.0).unwrap(), q);
            let peak = n(centre);
            for w in [centre - 0.5 * kappa, centre + 0.5 * kappa] {
                prop_assert!((n(w) / peak - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn swapping_states_flips_chi((kappa, chi, det, eps, on, dur) in pulse_strategy(), t in 0.0..20.0f64) {
        let p = DrivePulse::new(100.0 + det, eps, on / kappa, (on + dur) / kappa).unwrap();
        let plus = Response::from_pulse(&device(chi, kappa), &p);
        let minus = Response::from_pulse(&device(-chi, kappa), &p);
        let t = t / kappa;
        prop_assert!((plus.alpha(QubitState::One, t) - minus.alpha(QubitState::Zero, t)).norm() < 1e-12);
        prop_assert!((plus.alpha(QubitState::Zero, t) - minus.alpha(QubitState::One, t)).norm() < 1e-12);
        let w = Window::until(p.t_off + 2.0 / kappa);
        prop_assert!((plus.dephasing(&w) - minus.dephasing(&w)).abs() <= 1e-12 * plus.dephasing(&w).max(1e-12));
    }

    #[test]
    fn time_shift_invariance((kappa, chi, det, eps, on, dur) in pulse_strategy(), shift in 0.0..5.0f64) {
        let d = device(chi, kappa);
        let p = DrivePulse::new(100.0 + det, eps, on / kappa, (on + dur) / kappa).unwrap();
        let w = Window::until(p.t_off + 3.0 / kappa);
        let a = Response::from_pulse(&d, &p);
        let b = Response::from_pulse(&d, &p.shifted(shift));
        let ws = w.shifted(shift);
        let tol = |x: f64| 1e-10 * x.abs().max(1e-6);
        prop_assert!((a.dephasing(&w) - b.dephasing(&ws)).abs() < tol(a.dephasing(&w)));
        prop_assert!((a.differential_phase(&w) - b.differential_phase(&ws)).abs() < tol(a.differential_phase(&w)));
    }

    #[test]
    fn closed_form_integrals_match_quadrature((kappa, chi, det, eps, on, dur) in pulse_strategy()) {
        let d = device(chi, kappa);
        let p = DrivePulse::new(100.0 + det, eps, on / kappa, (on + dur) / kappa).unwrap();
        let w = Window::until(p.t_off + 3.0 / kappa);
        let r = Response::from_pulse(&d, &p);
        let rate = [chi - det, -chi - det].iter().fold(kappa, |m, x| m.max(x.abs()));
        // Simpson across the pulse edges converges at first order, so only
        // a loose check here
        let quad = simpson_separation(&r, &w, ((w.end * rate * 400.0) as usize).max(2000) * 2);
        let exact = r.separation_integral(&w);
        prop_assert!((quad - exact).abs() <= 1e-3 * exact.max(1e-12), "{} vs {}", quad, exact);
    }
}
