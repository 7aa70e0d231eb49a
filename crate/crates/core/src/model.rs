//! Qubit-state-dependent resonator dynamics.
//!
//! In the frame rotating at the drive frequency the resonator field obeys
//!
//! ```text
//! dα_q/dt = -(iΔ_q + κ/2)·α_q - iε(t),    Δ_q = ω_d - ω_r - s_q·χ
//! ```
//!
//! with `s_0 = +1`, `s_1 = -1`. The drive envelope is piecewise constant, so
//! on every interval between pulse edges the field is `ss + c·exp(-λt)` and all
//! time integrals (photon number, dephasing, differential phase, demodulated
//! signal) have closed forms. [`integrate_alpha_ode`] provides an independent
//! fixed-step RK4 route used as an oracle for the closed forms.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Computational basis state of the qubit being read out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(into = "u8", try_from = "u8")
)]
pub enum QubitState {
    Zero,
    One,
}

impl QubitState {
    pub const BOTH: [QubitState; 2] = [QubitState::Zero, QubitState::One];

    /// Pull direction: the resonator sits at `ω_r + sign·χ`.
    pub fn sign(self) -> f64 {
        match self {
            QubitState::Zero => 1.0,
            QubitState::One => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            QubitState::Zero => 0,
            QubitState::One => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            QubitState::Zero => QubitState::One,
            QubitState::One => QubitState::Zero,
        }
    }
}

impl From<QubitState> for u8 {
    fn from(q: QubitState) -> u8 {
        q.index() as u8
    }
}

impl TryFrom<u8> for QubitState {
    type Error = ModelError;

    fn try_from(v: u8) -> Result<Self, ModelError> {
        match v {
            0 => Ok(QubitState::Zero),
            1 => Ok(QubitState::One),
            _ => Err(ModelError::InvalidParameter {
                name: "state",
                reason: "qubit state must be 0 or 1",
            }),
        }
    }
}

impl fmt::Display for QubitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    InvalidParameter { name: &'static str, reason: &'static str },
    InvalidGrid(&'static str),
    /// RK4 step larger than `0.05 / max(κ, |Δ_q|, 1)`.
    ResolutionGuard { step: f64, limit: f64, at: f64 },
    MixedDriveFrequencies,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            ModelError::InvalidGrid(why) => write!(f, "invalid time grid: {why}"),
            ModelError::ResolutionGuard { step, limit, at } => write!(
                f,
                "time step {step:e} µs at t = {at} exceeds the resolution limit {limit:e} µs"
            ),
            ModelError::MixedDriveFrequencies => {
                f.write_str("all pulses of a train must share one drive frequency")
            }
        }
    }
}

impl core::error::Error for ModelError {}

fn check(ok: bool, name: &'static str, reason: &'static str) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, reason })
    }
}

/// Physical parameters of one readout channel.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviceParams {
    /// Mean resonator frequency, rad/µs.
    pub omega_r: f64,
    /// Dispersive half-shift, rad/µs. The two pulled lines are `2·chi` apart.
    pub chi: f64,
    /// Resonator energy decay rate, rad/µs.
    pub kappa: f64,
    /// Measurement efficiency in (0, 1].
    pub eta: f64,
}

impl DeviceParams {
    pub fn new(omega_r: f64, chi: f64, kappa: f64, eta: f64) -> Result<Self, ModelError> {
        let p = DeviceParams { omega_r, chi, kappa, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.omega_r.is_finite() && self.omega_r > 0.0, "omega_r", "must be finite and > 0")?;
        check(self.chi.is_finite(), "chi", "must be finite")?;
        check(self.kappa.is_finite() && self.kappa > 0.0, "kappa", "must be finite and > 0")?;
        check(self.eta.is_finite() && self.eta > 0.0 && self.eta <= 1.0, "eta", "must lie in (0, 1]")
    }

    /// Pulled resonator frequency for qubit state `q`.
    pub fn pulled_frequency(&self, q: QubitState) -> f64 {
        self.omega_r + q.sign() * self.chi
    }

    /// `Δ_q = ω_d - ω_r - s_q·χ`.
    pub fn detuning(&self, omega_d: f64, q: QubitState) -> f64 {
        omega_d - self.pulled_frequency(q)
    }

    fn decay_pole(&self, omega_d: f64, q: QubitState) -> Complex64 {
        Complex64::new(0.5 * self.kappa, self.detuning(omega_d, q))
    }
}

/// Square resonator drive: amplitude `eps` on `[t_on, t_off)`, zero elsewhere.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DrivePulse {
    pub omega_d: f64,
    /// sqrt(photons)/µs.
    pub eps: f64,
    pub t_on: f64,
    pub t_off: f64,
}

impl DrivePulse {
    pub fn new(omega_d: f64, eps: f64, t_on: f64, t_off: f64) -> Result<Self, ModelError> {
        let p = DrivePulse { omega_d, eps, t_on, t_off };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.omega_d.is_finite(), "omega_d", "must be finite")?;
        check(self.eps.is_finite() && self.eps >= 0.0, "eps", "must be finite and >= 0")?;
        check(self.t_on.is_finite() && self.t_on >= 0.0, "t_on", "must be finite and >= 0")?;
        check(self.t_off.is_finite() && self.t_off >= self.t_on, "t_off", "must be >= t_on")
    }

    pub fn duration(&self) -> f64 {
        self.t_off - self.t_on
    }

    pub fn with_frequency(self, omega_d: f64) -> Self {
        DrivePulse { omega_d, ..self }
    }

    pub fn with_amplitude(self, eps: f64) -> Self {
        DrivePulse { eps, ..self }
    }

    pub fn shifted(self, dt: f64) -> Self {
        DrivePulse { t_on: self.t_on + dt, t_off: self.t_off + dt, ..self }
    }
}

/// Time interval `[start, end]` over which the qubit or the detector
/// integrates.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Result<Self, ModelError> {
        let w = Window { start, end };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.start.is_finite() && self.start >= 0.0, "window.start", "must be finite and >= 0")?;
        check(self.end.is_finite() && self.end > self.start, "window.end", "must exceed window.start")
    }

    pub fn until(end: f64) -> Self {
        Window { start: 0.0, end }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn shifted(self, dt: f64) -> Self {
        Window { start: self.start + dt, end: self.end + dt }
    }
}

/// One or more square pulses sharing a drive frequency. Overlapping pulses
/// add their amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseTrain {
    omega_d: f64,
    pulses: Vec<DrivePulse>,
}

impl PulseTrain {
    pub fn new(pulses: &[DrivePulse]) -> Result<Self, ModelError> {
        let first = pulses.first().ok_or(ModelError::InvalidParameter {
            name: "pulses",
            reason: "a pulse train needs at least one pulse",
        })?;
        for p in pulses {
            p.validate()?;
            if p.omega_d != first.omega_d {
                return Err(ModelError::MixedDriveFrequencies);
            }
        }
        Ok(PulseTrain { omega_d: first.omega_d, pulses: pulses.to_vec() })
    }

    pub fn omega_d(&self) -> f64 {
        self.omega_d
    }

    pub fn pulses(&self) -> &[DrivePulse] {
        &self.pulses
    }

    /// Drive amplitude at `t` (pulses are closed on the left, open on the right).
    pub fn eps_at(&self, t: f64) -> f64 {
        self.pulses.iter().filter(|p| p.t_on <= t && t < p.t_off).map(|p| p.eps).sum()
    }

    /// Sorted, deduplicated pulse edges.
    pub fn edges(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.pulses.iter().flat_map(|p| [p.t_on, p.t_off]).collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e.dedup();
        e
    }

    pub fn end(&self) -> f64 {
        self.pulses.iter().map(|p| p.t_off).fold(0.0, f64::max)
    }
}

impl From<DrivePulse> for PulseTrain {
    fn from(p: DrivePulse) -> Self {
        PulseTrain { omega_d: p.omega_d, pulses: vec![p] }
    }
}

/// Time-sampled fields for both qubit states on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldTrajectory {
    pub times: Vec<f64>,
    pub alpha0: Vec<Complex64>,
    pub alpha1: Vec<Complex64>,
}

impl FieldTrajectory {
    pub fn alpha(&self, q: QubitState) -> &[Complex64] {
        match q {
            QubitState::Zero => &self.alpha0,
            QubitState::One => &self.alpha1,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Steady-state field `α_ss,q = -iε / (iΔ_q + κ/2)`.
pub fn steady_state_alpha(params: &DeviceParams, pulse: &DrivePulse, q: QubitState) -> Complex64 {
    -I * pulse.eps / params.decay_pole(pulse.omega_d, q)
}

/// Steady-state photon number `ε² / (Δ_q² + κ²/4)`.
pub fn steady_state_photons(params: &DeviceParams, pulse: &DrivePulse, q: QubitState) -> f64 {
    let delta = params.detuning(pulse.omega_d, q);
    pulse.eps * pulse.eps / (delta * delta + 0.25 * params.kappa * params.kappa)
}

/// Field after driving at constant amplitude `pulse.eps` for a time `t`
/// starting from `alpha_init`. The pulse timing fields are ignored; with
/// `eps = 0` this is a pure ring-down.
pub fn transient_alpha(
    params: &DeviceParams,
    pulse: &DrivePulse,
    q: QubitState,
    t: f64,
    alpha_init: Complex64,
) -> Complex64 {
    if t == 0.0 {
        return alpha_init;
    }
    let ss = steady_state_alpha(params, pulse, q);
    ss + (alpha_init - ss) * (-params.decay_pole(pulse.omega_d, q) * t).exp()
}

/// AC Stark shift of the qubit, `2·s_q·χ·n`.
pub fn stark_shift(params: &DeviceParams, q: QubitState, n: f64) -> f64 {
    2.0 * q.sign() * params.chi * n
}

/// `(1 - e^{-z}) / z`, accurate for small `|z|`.
pub(crate) fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-3 {
        // 1 - z/2 + z²/6 - z³/24 + z⁴/120
        let z2 = z * z;
        return Complex64::new(1.0, 0.0) - z * 0.5 + z2 / 6.0 - z2 * z / 24.0 + z2 * z2 / 120.0;
    }
    -expm1c(-z) / z
}

fn expm1c(w: Complex64) -> Complex64 {
    let (a, b) = (w.re, w.im);
    let half_sin = libm::sin(0.5 * b);
    let re = libm::expm1(a) * libm::cos(b) - 2.0 * half_sin * half_sin;
    let im = libm::exp(a) * libm::sin(b);
    Complex64::new(re, im)
}

/// `Σ c_j·exp(-μ_j·τ)` on a local time axis `τ ≥ 0`.
#[derive(Clone, Copy, Debug)]
struct ExpSum {
    terms: [(Complex64, Complex64); 3],
    len: usize,
}

impl ExpSum {
    fn new() -> Self {
        ExpSum { terms: [(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); 3], len: 0 }
    }

    fn push(mut self, c: Complex64, mu: Complex64) -> Self {
        if let Some(t) = self.terms[..self.len].iter_mut().find(|t| t.1 == mu) {
            t.0 += c;
        } else {
            self.terms[self.len] = (c, mu);
            self.len += 1;
        }
        self
    }

    fn terms(&self) -> &[(Complex64, Complex64)] {
        &self.terms[..self.len]
    }

    /// `∫_0^L f dτ`.
    fn integral(&self, len: f64) -> Complex64 {
        self.terms().iter().map(|&(c, mu)| c * len * phi1(mu * len)).sum()
    }

    /// `∫_0^L f·conj(g) dτ`.
    fn cross_integral(&self, other: &ExpSum, len: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(c, mu) in self.terms() {
            for &(d, nu) in other.terms() {
                acc += c * d.conj() * len * phi1((mu + nu.conj()) * len);
            }
        }
        acc
    }
}

/// Interval of constant drive: `α_q(t) = ss_q + amp_q·exp(-λ_q (t - start))`.
#[derive(Clone, Copy, Debug)]
struct Piece {
    start: f64,
    end: f64,
    ss: [Complex64; 2],
    amp: [Complex64; 2],
    pole: [Complex64; 2],
}

impl Piece {
    fn local(&self, q: usize, offset: f64) -> ExpSum {
        let a = self.amp[q] * (-self.pole[q] * offset).exp();
        ExpSum::new().push(self.ss[q], Complex64::new(0.0, 0.0)).push(a, self.pole[q])
    }

    fn local_difference(&self, offset: f64) -> ExpSum {
        let a0 = self.amp[0] * (-self.pole[0] * offset).exp();
        let a1 = self.amp[1] * (-self.pole[1] * offset).exp();
        ExpSum::new()
            .push(self.ss[0] - self.ss[1], Complex64::new(0.0, 0.0))
            .push(a0, self.pole[0])
            .push(-a1, self.pole[1])
    }
}

/// Closed-form response of the resonator (both qubit states) to a pulse
/// train, starting empty at `t = 0`.
#[derive(Clone, Debug)]
pub struct Response {
    kappa: f64,
    chi: f64,
    pieces: Vec<Piece>,
}

impl Response {
    pub fn new(params: &DeviceParams, train: &PulseTrain) -> Self {
        let mut bounds = vec![0.0];
        bounds.extend(train.edges().into_iter().filter(|&t| t > 0.0));
        bounds.push(f64::INFINITY);
        let pole = QubitState::BOTH.map(|q| params.decay_pole(train.omega_d(), q));
        let mut alpha = [Complex64::new(0.0, 0.0); 2];
        let mut pieces = Vec::with_capacity(bounds.len() - 1);
        for w in bounds.windows(2) {
            let (start, end) = (w[0], w[1]);
            let probe = if end.is_finite() { 0.5 * (start + end) } else { start };
            let eps = train.eps_at(probe);
            let ss = pole.map(|p| -I * eps / p);
            let amp = [alpha[0] - ss[0], alpha[1] - ss[1]];
            if end.is_finite() {
                for q in 0..2 {
                    alpha[q] = ss[q] + amp[q] * (-pole[q] * (end - start)).exp();
                }
            }
            pieces.push(Piece { start, end, ss, amp, pole });
        }
        Response { kappa: params.kappa, chi: params.chi, pieces }
    }

    pub fn from_pulse(params: &DeviceParams, pulse: &DrivePulse) -> Self {
        Self::new(params, &PulseTrain::from(*pulse))
    }

    /// Field at time `t` (zero before `t = 0`).
    pub fn alpha(&self, q: QubitState, t: f64) -> Complex64 {
        if t < 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let idx = self.pieces.partition_point(|p| p.end <= t).min(self.pieces.len() - 1);
        let p = &self.pieces[idx];
        p.ss[q.index()] + p.amp[q.index()] * (-p.pole[q.index()] * (t - p.start)).exp()
    }

    pub fn trajectory(&self, times: &[f64]) -> FieldTrajectory {
        FieldTrajectory {
            times: times.to_vec(),
            alpha0: times.iter().map(|&t| self.alpha(QubitState::Zero, t)).collect(),
            alpha1: times.iter().map(|&t| self.alpha(QubitState::One, t)).collect(),
        }
    }

    fn fold<F: FnMut(&Piece, f64, f64)>(&self, window: &Window, mut f: F) {
        let (lo, hi) = (window.start.max(0.0), window.end);
        for p in &self.pieces {
            let u = p.start.max(lo);
            let v = p.end.min(hi);
            if v > u {
                f(p, u - p.start, v - u);
            }
        }
    }

    /// `∫ α_q dt` over the window.
    pub fn field_integral(&self, q: QubitState, window: &Window) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        self.fold(window, |p, off, len| acc += p.local(q.index(), off).integral(len));
        acc
    }

    /// `∫ |α_q|² dt` over the window (photon-number integral).
    pub fn photon_integral(&self, q: QubitState, window: &Window) -> f64 {
        let mut acc = 0.0;
        self.fold(window, |p, off, len| {
            let f = p.local(q.index(), off);
            acc += f.cross_integral(&f, len).re;
        });
        acc
    }

    /// `∫ |α_0 - α_1|² dt` over the window.
    pub fn separation_integral(&self, window: &Window) -> f64 {
        let mut acc = 0.0;
        self.fold(window, |p, off, len| {
            let f = p.local_difference(off);
            acc += f.cross_integral(&f, len).re;
        });
        acc.max(0.0)
    }

    /// `∫ α_0·conj(α_1) dt` over the window.
    pub fn overlap_integral(&self, window: &Window) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        self.fold(window, |p, off, len| {
            acc += p.local(0, off).cross_integral(&p.local(1, off), len);
        });
        acc
    }

    /// Measurement-induced dephasing exponent `D = (κ/2)∫|α_0 - α_1|² dt`.
    pub fn dephasing(&self, window: &Window) -> f64 {
        0.5 * self.kappa * self.separation_integral(window)
    }

    /// Differential qubit phase `Φ = 2χ ∫ Re[α_0·conj(α_1)] dt`.
    pub fn differential_phase(&self, window: &Window) -> f64 {
        2.0 * self.chi * self.overlap_integral(window).re
    }

    /// Stark phase accumulated with the resonator in the branch of state `q`:
    /// `2·s_q·χ·∫|α_q|² dt`.
    pub fn stark_phase(&self, q: QubitState, window: &Window) -> f64 {
        2.0 * q.sign() * self.chi * self.photon_integral(q, window)
    }
}

/// Field trajectory from the closed-form solution, resonator empty at `t = 0`.
pub fn analytic_trajectory(params: &DeviceParams, train: &PulseTrain, grid: &[f64]) -> FieldTrajectory {
    Response::new(params, train).trajectory(grid)
}

/// `D = ∫ Γ_m dt` with `Γ_m = (κ/2)|α_0 - α_1|²`.
pub fn dephasing_exponent(params: &DeviceParams, train: &PulseTrain, window: &Window) -> f64 {
    Response::new(params, train).dephasing(window)
}

/// `Φ = 2χ ∫ Re[α_0·conj(α_1)] dt`.
pub fn differential_phase(params: &DeviceParams, train: &PulseTrain, window: &Window) -> f64 {
    Response::new(params, train).differential_phase(window)
}

/// Largest RK4 step accepted by [`integrate_alpha_ode`].
pub fn max_ode_step(params: &DeviceParams, omega_d: f64) -> f64 {
    let rate = QubitState::BOTH
        .iter()
        .map(|&q| params.detuning(omega_d, q).abs())
        .fold(params.kappa.max(1.0), f64::max);
    0.05 / rate
}

/// Classical RK4 integration of the field equation on `grid`, resonator
/// empty at `grid[0] = 0`. Steps straddling a pulse edge are split at the
/// edge so the piecewise-constant drive is integrated exactly.
pub fn integrate_alpha_ode(
    params: &DeviceParams,
    train: &PulseTrain,
    grid: &[f64],
) -> Result<FieldTrajectory, ModelError> {
    params.validate()?;
    match grid.first() {
        None => return Err(ModelError::InvalidGrid("grid is empty")),
        Some(&t0) if t0 != 0.0 => return Err(ModelError::InvalidGrid("grid must start at t = 0")),
        _ => {}
    }
    let limit = max_ode_step(params, train.omega_d());
    for w in grid.windows(2) {
        let h = w[1] - w[0];
        if !(h > 0.0) {
            return Err(ModelError::InvalidGrid("grid must be strictly increasing"));
        }
        if h > limit * (1.0 + 1e-12) {
            return Err(ModelError::ResolutionGuard { step: h, limit, at: w[0] });
        }
    }

    let edges = train.edges();
    let pole = QubitState::BOTH.map(|q| params.decay_pole(train.omega_d(), q));
    let mut traj = FieldTrajectory {
        times: grid.to_vec(),
        alpha0: Vec::with_capacity(grid.len()),
        alpha1: Vec::with_capacity(grid.len()),
    };
    let mut alpha = [Complex64::new(0.0, 0.0); 2];
    traj.alpha0.push(alpha[0]);
    traj.alpha1.push(alpha[1]);

    for w in grid.windows(2) {
        let mut t = w[0];
        let mut cuts: Vec<f64> = edges.iter().copied().filter(|&e| e > w[0] && e < w[1]).collect();
        cuts.push(w[1]);
        for &next in &cuts {
            let h = next - t;
            let drive = -I * train.eps_at(0.5 * (t + next));
            for q in 0..2 {
                alpha[q] = rk4_step(alpha[q], pole[q], drive, h);
            }
            t = next;
        }
        traj.alpha0.push(alpha[0]);
        traj.alpha1.push(alpha[1]);
    }
    Ok(traj)
}

fn rk4_step(a: Complex64, pole: Complex64, drive: Complex64, h: f64) -> Complex64 {
    let f = |x: Complex64| -pole * x + drive;
    let k1 = f(a);
    let k2 = f(a + k1 * (0.5 * h));
    let k3 = f(a + k2 * (0.5 * h));
    let k4 = f(a + k3 * h);
    a + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Uniform grid `0, dt, ..., n·dt`.
pub fn uniform_grid(t_end: f64, steps: usize) -> Vec<f64> {
    let dt = t_end / steps as f64;
    (0..=steps).map(|k| if k == steps { t_end } else { k as f64 * dt }).collect()
}
