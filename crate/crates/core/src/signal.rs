//! Detection-chain simulator: demodulation weights, single-shot IQ clouds,
//! SNR estimation, and Ramsey fringes under a resonator drive.
//!
//! Noise enters once per shot at the demodulated level: with unit-norm
//! weights each quadrature carries Gaussian noise of variance `1/(2η)`.

use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};

use crate::model::{DeviceParams, FieldTrajectory, PulseTrain, QubitState, Response, Window};
use crate::rng::{normal_pair, NoiseKey};

#[derive(Clone, Debug, PartialEq)]
pub enum SignalError {
    /// The two pointer trajectories coincide, no weights can separate them.
    DegenerateSeparation,
    /// Means coincide and both clouds have zero spread.
    UndefinedSnr,
    TooFewPoints { state: QubitState, points: usize },
    InvalidWeights(&'static str),
    InvalidShots { shots: u64, minimum: u64 },
}

impl fmt::Display for SignalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalError::DegenerateSeparation => f.write_str("trajectories for |0> and |1> are identical"),
            SignalError::UndefinedSnr => f.write_str("SNR undefined: coincident means and zero variance"),
            SignalError::TooFewPoints { state, points } => {
                write!(f, "cloud for state {state} has {points} points, need at least 2")
            }
            SignalError::InvalidWeights(why) => write!(f, "invalid filter weights: {why}"),
            SignalError::InvalidShots { shots, minimum } => write!(f, "{shots} shots requested, minimum is {minimum}"),
        }
    }
}

impl core::error::Error for SignalError {}

/// Piecewise-constant demodulation weights: bin `k` covers
/// `[start + k·dt, start + (k+1)·dt)` with weight `w[k]`. Unit norm means
/// `Σ|w|²·dt = 1`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FilterWeights {
    pub start: f64,
    pub dt: f64,
    pub w: Vec<Complex64>,
}

impl FilterWeights {
    /// Normalize raw bin values to unit norm.
    pub fn from_bins(window: &Window, raw: Vec<Complex64>) -> Result<Self, SignalError> {
        if raw.is_empty() {
            return Err(SignalError::InvalidWeights("no bins"));
        }
        let dt = window.length() / raw.len() as f64;
        let energy: f64 = raw.iter().map(|w| w.norm_sqr()).sum::<f64>() * dt;
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(SignalError::InvalidWeights("zero or non-finite norm"));
        }
        let scale = 1.0 / energy.sqrt();
        Ok(FilterWeights { start: window.start, dt, w: raw.into_iter().map(|w| w * scale).collect() })
    }

    /// Constant weights `1/sqrt(τ)` over the window.
    pub fn boxcar(window: &Window, bins: usize) -> Self {
        let dt = window.length() / bins as f64;
        let v = Complex64::new(1.0 / window.length().sqrt(), 0.0);
        FilterWeights { start: window.start, dt, w: alloc::vec![v; bins] }
    }

    /// Unit-norm indicator of a single bin.
    pub fn bin_indicator(window: &Window, bins: usize, k: usize) -> Self {
        let dt = window.length() / bins as f64;
        let mut w = alloc::vec![Complex64::new(0.0, 0.0); bins];
        w[k] = Complex64::new(1.0 / dt.sqrt(), 0.0);
        FilterWeights { start: window.start, dt, w }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if self.w.is_empty() {
            return Err(SignalError::InvalidWeights("no bins"));
        }
        if !(self.dt > 0.0) || !self.start.is_finite() || self.start < 0.0 {
            return Err(SignalError::InvalidWeights("bins must have positive width and start at t >= 0"));
        }
        if (self.norm() - 1.0).abs() > 1e-9 {
            return Err(SignalError::InvalidWeights("weights are not unit norm"));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        (self.w.iter().map(|w| w.norm_sqr()).sum::<f64>() * self.dt).sqrt()
    }

    pub fn bins(&self) -> usize {
        self.w.len()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.w.len()).map(|k| self.start + k as f64 * self.dt).collect()
    }

    pub fn bin(&self, k: usize) -> Window {
        let a = self.start + k as f64 * self.dt;
        Window { start: a, end: a + self.dt }
    }

    pub fn window(&self) -> Window {
        Window { start: self.start, end: self.start + self.dt * self.w.len() as f64 }
    }
}

/// Matched filter `w ∝ conj(α_0 - α_1)` built from a uniformly sampled
/// trajectory; each bin spans two consecutive samples and carries their mean.
pub fn matched_filter(traj: &FieldTrajectory) -> Result<FilterWeights, SignalError> {
    let n = traj.times.len();
    if n < 2 || traj.alpha0.len() != n || traj.alpha1.len() != n {
        return Err(SignalError::InvalidWeights("trajectory needs >= 2 samples per state"));
    }
    let dt = (traj.times[n - 1] - traj.times[0]) / (n - 1) as f64;
    if traj.times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt) {
        return Err(SignalError::InvalidWeights("trajectory grid must be uniform"));
    }
    let diff: Vec<Complex64> = traj.alpha0.iter().zip(&traj.alpha1).map(|(a, b)| a - b).collect();
    let raw: Vec<Complex64> = diff.windows(2).map(|d| ((d[0] + d[1]) * 0.5).conj()).collect();
    if raw.iter().all(|w| w.norm_sqr() == 0.0) {
        return Err(SignalError::DegenerateSeparation);
    }
    let window = Window { start: traj.times[0], end: traj.times[n - 1] };
    FilterWeights::from_bins(&window, raw)
}

/// Single-shot outcomes for one prepared state.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IqCloud {
    pub state: QubitState,
    pub points: Vec<Complex64>,
    pub key: NoiseKey,
}

impl IqCloud {
    pub fn mean(&self) -> Complex64 {
        self.points.iter().sum::<Complex64>() / self.points.len() as f64
    }

    /// Per-quadrature sample variance (mean of the I and Q variances).
    pub fn quadrature_variance(&self) -> f64 {
        let m = self.mean();
        let ss: f64 = self.points.iter().map(|z| (z - m).norm_sqr()).sum();
        ss / (2.0 * (self.points.len() as f64 - 1.0))
    }
}

/// Noise-free demodulated value `√κ·Σ_k w_k ∫_bin α_q dt`.
pub fn mean_response(response: &Response, kappa: f64, q: QubitState, weights: &FilterWeights) -> Complex64 {
    let acc: Complex64 = weights
        .w
        .iter()
        .enumerate()
        .filter(|(_, w)| w.norm_sqr() > 0.0)
        .map(|(k, w)| w * response.field_integral(q, &weights.bin(k)))
        .sum();
    acc * kappa.sqrt()
}

/// Draw `shots` demodulated outcomes for prepared state `q`.
pub fn sample_iq(
    params: &DeviceParams,
    train: &PulseTrain,
    q: QubitState,
    weights: &FilterWeights,
    shots: u64,
    key: NoiseKey,
) -> Result<IqCloud, SignalError> {
    if shots < 1 {
        return Err(SignalError::InvalidShots { shots, minimum: 1 });
    }
    weights.validate()?;
    let response = Response::new(params, train);
    let mu = mean_response(&response, params.kappa, q, weights);
    let sigma = (0.5 / params.eta).sqrt();
    let mut rng = key.rng();
    let points = (0..shots)
        .map(|_| {
            let (a, b) = normal_pair(&mut rng);
            mu + Complex64::new(a, b) * sigma
        })
        .collect();
    Ok(IqCloud { state: q, points, key })
}

/// Separation statistics of two clouds along the axis joining their means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrEstimate {
    pub snr: f64,
    pub separation: f64,
    pub sigma_pooled: f64,
}

/// `SNR = |μ_0 - μ_1| / σ_pooled`, with σ_pooled the pooled standard
/// deviation of both clouds projected on the axis through the two means.
pub fn measure_snr(cloud0: &IqCloud, cloud1: &IqCloud) -> Result<f64, SignalError> {
    snr_statistics(cloud0, cloud1).map(|s| s.snr)
}

pub fn snr_statistics(cloud0: &IqCloud, cloud1: &IqCloud) -> Result<SnrEstimate, SignalError> {
    for c in [cloud0, cloud1] {
        if c.points.len() < 2 {
            return Err(SignalError::TooFewPoints { state: c.state, points: c.points.len() });
        }
    }
    let (m0, m1) = (cloud0.mean(), cloud1.mean());
    let sep = (m1 - m0).norm();
    let axis = if sep > 0.0 { (m1 - m0) / sep } else { Complex64::new(1.0, 0.0) };
    let projected_ss = |c: &IqCloud, m: Complex64| -> f64 {
        c.points.iter().map(|z| ((z - m) * axis.conj()).re.powi(2)).sum()
    };
    let n0 = cloud0.points.len() as f64;
    let n1 = cloud1.points.len() as f64;
    let var = (projected_ss(cloud0, m0) + projected_ss(cloud1, m1)) / (n0 + n1 - 2.0);
    let sigma = var.sqrt();
    if sigma == 0.0 {
        return Err(SignalError::UndefinedSnr);
    }
    Ok(SnrEstimate { snr: sep / sigma, separation: sep, sigma_pooled: sigma })
}

/// Ramsey fringe summary: phase and contrast of the qubit coherence.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RamseyResult {
    pub phase: f64,
    pub contrast: f64,
    pub shots: u64,
    pub phase_stderr: f64,
    pub contrast_stderr: f64,
}

/// Shot floor for Ramsey estimates.
pub const MIN_RAMSEY_SHOTS: u64 = 100;

/// Estimate the complex coherence `c` from `shots` projective measurements
/// of each of ⟨σx⟩ and ⟨σy⟩.
pub fn sample_fringe(coherence: Complex64, shots: u64, key: NoiseKey) -> Result<RamseyResult, SignalError> {
    if shots < MIN_RAMSEY_SHOTS {
        return Err(SignalError::InvalidShots { shots, minimum: MIN_RAMSEY_SHOTS });
    }
    let n = shots as f64;
    let mut rng = key.rng();
    let mut estimate = |expectation: f64| {
        let p = (0.5 * (1.0 + expectation)).clamp(0.0, 1.0);
        let k = Binomial::new(shots, p).expect("valid binomial").sample(&mut rng);
        2.0 * k as f64 / n - 1.0
    };
    let x = estimate(coherence.re);
    let y = estimate(coherence.im);
    let vx = ((1.0 - x * x) / n).max(1.0 / (n * n));
    let vy = ((1.0 - y * y) / n).max(1.0 / (n * n));
    let r2 = x * x + y * y;
    let r = r2.sqrt();
    let (phase_stderr, contrast_stderr) = if r2 > 0.0 {
        (((y * y * vx + x * x * vy) / (r2 * r2)).sqrt(), ((x * x * vx + y * y * vy) / r2).sqrt())
    } else {
        (core::f64::consts::PI, vx.max(vy).sqrt())
    };
    Ok(RamseyResult {
        phase: libm::atan2(y, x),
        contrast: r.min(1.0),
        shots,
        phase_stderr,
        contrast_stderr,
    })
}

/// Ramsey on a superposition: π/2, resonator drive, π/2. The coherence after
/// the window is `exp(-D + iΦ)`.
pub fn simulate_ramsey(
    params: &DeviceParams,
    train: &PulseTrain,
    window: &Window,
    shots: u64,
    key: NoiseKey,
) -> Result<RamseyResult, SignalError> {
    let r = Response::new(params, train);
    let c = Complex64::from_polar((-r.dephasing(window)).exp(), r.differential_phase(window));
    sample_fringe(c, shots, key)
}

/// Stark-phase probe with the resonator in the branch of state `q`: the
/// fringe phase is `2·s_q·χ·∫|α_q|² dt` and the contrast `exp(-D)`.
pub fn simulate_stark_ramsey(
    params: &DeviceParams,
    train: &PulseTrain,
    window: &Window,
    q: QubitState,
    shots: u64,
    key: NoiseKey,
) -> Result<RamseyResult, SignalError> {
    let r = Response::new(params, train);
    let c = Complex64::from_polar((-r.dephasing(window)).exp(), r.stark_phase(q, window));
    sample_fringe(c, shots, key)
}
