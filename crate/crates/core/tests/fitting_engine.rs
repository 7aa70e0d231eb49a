use proptest::prelude::*;
use rand::Rng;
use readout_core::fitting::{
    lm_fit, numeric_jacobian, two_state_phase, ExpDecay, FitModel, FitProblem, FitResult, LineTiming, LmOptions,
    Lorentzian, StraightLine, TwoStateLines,
};
use readout_core::rng::normal_pair;
use readout_core::{NoiseKey, QubitState, Window};

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn fit<M: FitModel>(model: M, x: Vec<f64>, y: Vec<f64>, p0: Vec<f64>) -> FitResult {
    let sigma = vec![1.0; x.len()];
    lm_fit(&FitProblem::new(model, x, y, sigma, p0), &LmOptions::default()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Hand-derived partials of the Lorentzian `[A, x0, w, B]`.
fn lorentzian_gradient(x: f64, p: &[f64]) -> [f64; 4] {
    let (a, x0, w) = (p[0], p[1], p[2]);
    let h = 0.25 * w * w;
    let dx = x - x0;
    let den = dx * dx + h;
    [h / den, a * h * 2.0 * dx / (den * den), a * 0.5 * w * dx * dx / (den * den), 1.0]
}

fn exp_gradient(t: f64, p: &[f64]) -> [f64; 3] {
    let e = (-p[1] * t).exp();
    [e, -p[0] * t * e, 1.0]
}

fn monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0])
}

#[test]
fn straight_line_matches_closed_form() {
    let x = linspace(-2.0, 5.0, 30);
    let mut rng = NoiseKey::new(8).rng();
    let sigma: Vec<f64> = x.iter().map(|_| rng.random_range(0.1..1.0)).collect();
    let y: Vec<f64> = x.iter().zip(&sigma).map(|(x, s)| 1.7 * x - 0.4 + s * normal_pair(&mut rng).0).collect();
    let r = lm_fit(&FitProblem::new(StraightLine, x.clone(), y.clone(), sigma.clone(), vec![0.0, 0.0]), &LmOptions::default())
        .unwrap();
    // weighted normal equations
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let w = 1.0 / (sigma[i] * sigma[i]);
        s += w;
        sx += w * x[i];
        sy += w * y[i];
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    let det = s * sxx - sx * sx;
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    assert!(rel(r.params[0], slope) < 1e-8);
    assert!(rel(r.params[1], intercept) < 1e-8);
    // covariance is scaled by the reduced χ²
    let scale = r.chi2_reduced.sqrt();
    assert!(rel(r.stderr[0], scale * (s / det).sqrt()) < 1e-8);
    assert!(rel(r.stderr[1], scale * (sxx / det).sqrt()) < 1e-8);
}

#[test]
fn noiseless_two_state_recovery() {
    let truth = [50.0, 1.3, 4.0, 2.5];
    let window = Window::until(5.0);
    let timing = LineTiming::Exact { t_on: 0.0, t_off: 3.0, window };
    let x = linspace(40.0, 60.0, 25);
    let states: Vec<QubitState> = QubitState::BOTH.iter().flat_map(|&q| x.iter().map(move |_| q)).collect();
    let xs: Vec<f64> = x.iter().chain(&x).copied().collect();
    let y: Vec<f64> = xs.iter().zip(&states).map(|(&w, &q)| two_state_phase(w, &truth, q, &timing)).collect();
    let model = TwoStateLines { states, timing };
    let r = fit(model, xs, y, vec![50.4, 1.1, 4.5, 2.0]);
    for (p, t) in r.params.iter().zip(truth) {
        assert!(rel(*p, t) < 1e-8, "{p} vs {t}");
    }
    assert!(monotone(&r.trace));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jacobian_matches_analytic(a in 0.1..10.0f64, x0 in -5.0..5.0f64, w in 0.2..5.0f64, b in -1.0..1.0f64, k in 0.1..5.0f64) {
        let xs = linspace(-8.0, 8.0, 33);
        let p = [a, x0, w, b];
        let jac = numeric_jacobian(&Lorentzian, &xs, &p);
        for (row, &x) in jac.iter().zip(&xs) {
            let g = lorentzian_gradient(x, &p);
            for j in 0..4 {
                prop_assert!((row[j] - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "d/dp{} at {}", j, x);
            }
        }
        let ts = linspace(0.0, 3.0, 20);
        let q = [a, k, b];
        for (row, &t) in numeric_jacobian(&ExpDecay, &ts, &q).iter().zip(&ts) {
            let g = exp_gradient(t, &q);
            for j in 0..3 {
                prop_assert!((row[j] - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0));
            }
        }
    }

    #[test]
    fn noiseless_lorentzian_and_exp(a in 0.5..10.0f64, x0 in -2.0..2.0f64, w in 0.5..3.0f64, b in -1.0..1.0f64, k in 0.3..3.0f64) {
        let xs = linspace(-8.0, 8.0, 41);
        let y: Vec<f64> = xs.iter().map(|&x| Lorentzian.eval(0, x, &[a, x0, w, b])).collect();
        let r = fit(Lorentzian, xs, y, vec![0.8 * a, x0 + 0.2 * w, 1.3 * w, b + 0.1]);
        for (p, t) in r.params.iter().zip([a, x0, w, b]) {
            prop_assert!((p - t).abs() <= 1e-8 * t.abs().max(1.0));
        }
        prop_assert!(monotone(&r.trace));

        let ts = linspace(0.0, 4.0 / k, 30);
        let y: Vec<f64> = ts.iter().map(|&t| ExpDecay.eval(0, t, &[a, k, b])).collect();
        let r = fit(ExpDecay, ts, y, vec![1.2 * a, 0.7 * k, b - 0.2]);
        for (p, t) in r.params.iter().zip([a, k, b]) {
            prop_assert!((p - t).abs() <= 1e-8 * t.abs().max(1.0));
        }
        prop_assert!(monotone(&r.trace));
    }

    #[test]
    fn noisy_fits_are_monotone_and_equivariant(seed in 0u64..1_000_000, shift in -20.0..20.0f64) {
        let xs = linspace(-6.0, 6.0, 41);
        let mut rng = NoiseKey::new(seed).rng();
        let y: Vec<f64> = xs.iter().map(|&x| Lorentzian.eval(0, x, &[2.0, 0.3, 1.5, 0.1]) + 0.05 * normal_pair(&mut rng).0).collect();
        let p0 = vec![1.5, 0.0, 1.0, 0.0];
        let r = fit(Lorentzian, xs.clone(), y.clone(), p0.clone());
        prop_assert!(monotone(&r.trace));
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let rs = fit(Lorentzian, shifted, y, vec![p0[0], p0[1] + shift, p0[2], p0[3]]);
        prop_assert!((rs.params[1] - shift - r.params[1]).abs() < 1e-7);
        for j in [0, 2, 3] {
            prop_assert!((rs.params[j] - r.params[j]).abs() < 1e-7 * r.params[j].abs().max(1.0));
            prop_assert!(rel(rs.stderr[j], r.stderr[j]) < 1e-5);
        }
    }
}

#[test]
fn stderr_scales_with_noise() {
    // mean reported stderr over repeated trials, injected noise σ and k·σ
    let ts = linspace(0.0, 3.0, 25);
    let mean_stderr = |level: f64, seed: u64| {
        let mut acc = [0.0; 3];
        for trial in 0..200 {
            let mut rng = NoiseKey::new(seed).child(trial).rng();
            let y: Vec<f64> =
                ts.iter().map(|&t| ExpDecay.eval(0, t, &[1.0, 1.2, 0.0]) + level * normal_pair(&mut rng).0).collect();
            let r = fit(ExpDecay, ts.clone(), y, vec![0.8, 1.0, 0.0]);
            for j in 0..3 {
                acc[j] += r.stderr[j] / 200.0;
            }
        }
        acc
    };
    let base = mean_stderr(0.01, 1);
    for (k, seed) in [(2.0, 2), (4.0, 3)] {
        let scaled = mean_stderr(0.01 * k, seed);
        for j in 0..3 {
            let ratio = scaled[j] / base[j];
            println!("k = {k}, parameter {j}: stderr ratio {ratio:.4}");
            assert!((ratio / k - 1.0).abs() < 0.05);
        }
    }
}
