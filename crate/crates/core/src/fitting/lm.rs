use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use core::fmt;

use super::linalg::{cholesky, cholesky_inverse, cholesky_solve, Matrix};
use super::models::FitModel;

/// Weighted data, model and starting point. Parameters flagged in `fixed`
/// stay at their `p0` value.
#[derive(Clone, Debug)]
pub struct FitProblem<M> {
    pub model: M,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
    pub p0: Vec<f64>,
    pub fixed: Vec<bool>,
}

impl<M: FitModel> FitProblem<M> {
    pub fn new(model: M, x: Vec<f64>, y: Vec<f64>, sigma: Vec<f64>, p0: Vec<f64>) -> Self {
        let n = p0.len();
        FitProblem { model, x, y, sigma, p0, fixed: vec![false; n] }
    }

    /// Hold parameter `name` at its starting value.
    pub fn fix(mut self, name: &str) -> Self {
        if let Some(i) = self.model.param_names().iter().position(|n| *n == name) {
            self.fixed[i] = true;
        }
        self
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let m = self.x.len();
        if self.y.len() != m || self.sigma.len() != m {
            return Err(FitError::InvalidProblem("x, y and sigma must have equal lengths"));
        }
        if self.p0.len() != self.model.param_names().len() || self.fixed.len() != self.p0.len() {
            return Err(FitError::InvalidProblem("parameter vector does not match the model"));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(FitError::InvalidProblem("sigma must be finite and > 0"));
        }
        if self.p0.iter().any(|p| !p.is_finite()) || self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(FitError::InvalidProblem("non-finite data or starting point"));
        }
        let free = self.fixed.iter().filter(|f| !**f).count();
        if free == 0 || free >= m {
            return Err(FitError::InvalidProblem("need 0 < free parameters < data points"));
        }
        Ok(())
    }

    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        (0..self.x.len())
            .map(|i| self.model.residual(i, self.x[i], self.y[i], p) / self.sigma[i])
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Bound on the scaled gradient `max_j |J_jᵀr| / (‖J_j‖·‖r‖)`.
    pub gtol: f64,
    /// Relative parameter step.
    pub xtol: f64,
    /// Relative χ² decrease.
    pub ftol: f64,
    pub lambda0: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 200, gtol: 1e-10, xtol: 1e-13, ftol: 1e-15, lambda0: 1e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Termination {
    ZeroResidual,
    Gradient,
    StepSize,
    Objective,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Full-size covariance; rows and columns of fixed parameters are zero.
    pub covariance: Vec<Vec<f64>>,
    pub fixed: Vec<bool>,
    pub chi2: f64,
    pub chi2_reduced: f64,
    pub dof: usize,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// χ² at the start and after every accepted step.
    pub trace: Vec<f64>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.params[i], self.stderr[i]))
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FitError {
    InvalidProblem(&'static str),
    NonFiniteStart,
    /// Normal matrix singular: the named parameter is not identifiable from
    /// the data (or is a linear combination of the others).
    Degenerate { parameter: String },
}

impl fmt::Display for FitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitError::InvalidProblem(why) => write!(f, "invalid fit problem: {why}"),
            FitError::NonFiniteStart => f.write_str("model is not finite at the starting point"),
            FitError::Degenerate { parameter } => {
                write!(f, "degenerate fit: parameter '{parameter}' is not identifiable (singular normal matrix)")
            }
        }
    }
}

impl core::error::Error for FitError {}

fn fd_step(p: f64) -> f64 {
    (1e-7 * p.abs()).max(1e-7)
}

/// Central-difference Jacobian `∂f(x_i)/∂p_j` of the model (all parameters).
pub fn numeric_jacobian<M: FitModel>(model: &M, x: &[f64], p: &[f64]) -> Vec<Vec<f64>> {
    let mut jac = vec![vec![0.0; p.len()]; x.len()];
    let mut work = p.to_vec();
    for j in 0..p.len() {
        let h = fd_step(p[j]);
        work[j] = p[j] + h;
        let up: Vec<f64> = x.iter().enumerate().map(|(i, &xi)| model.eval(i, xi, &work)).collect();
        work[j] = p[j] - h;
        for (i, &xi) in x.iter().enumerate() {
            jac[i][j] = (up[i] - model.eval(i, xi, &work)) / (2.0 * h);
        }
        work[j] = p[j];
    }
    jac
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Levenberg–Marquardt with Marquardt diagonal scaling: `λ₀ = 1e-3`,
/// `λ ÷ 10` after an accepted step and `λ × 10` after a rejected one.
/// Steps are accepted only if χ² does not increase.
pub fn lm_fit<M: FitModel>(problem: &FitProblem<M>, opts: &LmOptions) -> Result<FitResult, FitError> {
    problem.validate()?;
    let names = problem.model.param_names();
    let free: Vec<usize> = (0..problem.p0.len()).filter(|&j| !problem.fixed[j]).collect();
    let nf = free.len();
    let m = problem.x.len();
    let dof = m - nf;

    let mut p = problem.p0.clone();
    let mut r = problem.residuals(&p);
    let mut chi2 = sum_sq(&r);
    if !chi2.is_finite() {
        return Err(FitError::NonFiniteStart);
    }
    let mut trace = vec![chi2];
    let mut lambda = opts.lambda0;
    let mut iterations = 0;
    let mut termination = if chi2 == 0.0 { Some(Termination::ZeroResidual) } else { None };

    let normal = |p: &[f64], r: &[f64]| -> (Matrix, Vec<f64>) {
        let jf = numeric_jacobian(&problem.model, &problem.x, p);
        let mut a = Matrix::zeros(nf);
        let mut g = vec![0.0; nf];
        for i in 0..m {
            let s = problem.sigma[i];
            for (a_idx, &ja) in free.iter().enumerate() {
                let da = -jf[i][ja] / s;
                g[a_idx] += da * r[i];
                for (b_idx, &jb) in free.iter().enumerate().take(a_idx + 1) {
                    *a.at_mut(a_idx, b_idx) += da * (-jf[i][jb] / s);
                }
            }
        }
        for a_idx in 0..nf {
            for b_idx in 0..a_idx {
                *a.at_mut(b_idx, a_idx) = a.at(a_idx, b_idx);
            }
        }
        (a, g)
    };

    while termination.is_none() {
        if iterations >= opts.max_iterations {
            termination = Some(Termination::MaxIterations);
            break;
        }
        iterations += 1;
        let (a, g) = normal(&p, &r);
        if let Some(k) = (0..nf).find(|&k| !(a.at(k, k) > 0.0)) {
            return Err(FitError::Degenerate { parameter: names[free[k]].to_string() });
        }
        let cosine = (0..nf).map(|k| g[k].abs() / (a.at(k, k) * chi2).sqrt()).fold(0.0, f64::max);
        if cosine <= opts.gtol {
            termination = Some(Termination::Gradient);
            break;
        }
        loop {
            let mut damped = a.clone();
            for k in 0..nf {
                *damped.at_mut(k, k) += lambda * a.at(k, k);
            }
            let step = match cholesky(&damped) {
                Ok(l) => cholesky_solve(&l, &g.iter().map(|v| -v).collect::<Vec<_>>()),
                Err(_) => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        termination = Some(Termination::Objective);
                        break;
                    }
                    continue;
                }
            };
            let mut trial = p.clone();
            for (k, &j) in free.iter().enumerate() {
                trial[j] += step[k];
            }
            let r_trial = problem.residuals(&trial);
            let chi2_trial = sum_sq(&r_trial);
            if chi2_trial.is_finite() && chi2_trial <= chi2 {
                let small_step = free
                    .iter()
                    .enumerate()
                    .all(|(k, &j)| step[k].abs() <= opts.xtol * (p[j].abs() + opts.xtol));
                let small_gain = chi2 - chi2_trial <= opts.ftol * chi2;
                p = trial;
                r = r_trial;
                chi2 = chi2_trial;
                trace.push(chi2);
                lambda = (lambda / 10.0).max(1e-12);
                if chi2 == 0.0 {
                    termination = Some(Termination::ZeroResidual);
                } else if small_step {
                    termination = Some(Termination::StepSize);
                } else if small_gain {
                    termination = Some(Termination::Objective);
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // no descent direction left at working precision
                termination = Some(Termination::Objective);
                break;
            }
        }
    }
    let termination = termination.unwrap_or(Termination::MaxIterations);

    let (a, _) = normal(&p, &r);
    let l = cholesky(&a).map_err(|k| FitError::Degenerate { parameter: names[free[k]].to_string() })?;
    let inv = cholesky_inverse(&l);
    let chi2_reduced = chi2 / dof as f64;
    let n = p.len();
    let mut covariance = vec![vec![0.0; n]; n];
    for (a_idx, &ja) in free.iter().enumerate() {
        for (b_idx, &jb) in free.iter().enumerate() {
            covariance[ja][jb] = inv.at(a_idx, b_idx) * chi2_reduced;
        }
    }
    let stderr = (0..n).map(|j| libm::sqrt(covariance[j][j].max(0.0))).collect();

    Ok(FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        params: p,
        stderr,
        covariance,
        fixed: problem.fixed.clone(),
        chi2,
        chi2_reduced,
        dof,
        iterations,
        converged: termination != Termination::MaxIterations,
        termination,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::{ExpDecay, Lorentzian, StraightLine};
    use approx::assert_relative_eq;

    fn lorentz_data(p: &[f64; 4]) -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..61).map(|i| -6.0 + 0.2 * i as f64).collect();
        let y = x.iter().map(|&v| Lorentzian.eval(0, v, p)).collect();
        (x, y)
    }

    #[test]
    fn noiseless_lorentzian_recovered() {
        let truth = [1.0, 0.0, 2.0, 0.0];
        let (x, y) = lorentz_data(&truth);
        let n = x.len();
        let prob = FitProblem::new(Lorentzian, x, y, vec![1.0; n], vec![1.2, 0.2, 2.4, 0.2]);
        let fit = lm_fit(&prob, &LmOptions::default()).unwrap();
        assert!(fit.converged);
        for (est, t) in fit.params.iter().zip(truth) {
            assert!((est - t).abs() <= 1e-8 * t.abs().max(1.0), "{est} vs {t}");
        }
    }

    #[test]
    fn exact_start_converges_immediately() {
        let truth = [1.0, 0.5, 2.0, 0.1];
        let (x, y) = lorentz_data(&truth);
        let n = x.len();
        let fit = lm_fit(&FitProblem::new(Lorentzian, x, y, vec![1.0; n], truth.to_vec()), &LmOptions::default()).unwrap();
        assert!(fit.iterations <= 2);
        assert!(fit.chi2 < 1e-20);
        assert!(fit.converged);
    }

    #[test]
    fn fixed_parameter_stays_put() {
        let x: Vec<f64> = (0..20).map(|i| 0.1 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&t| 3.0 * libm::exp(-2.0 * t)).collect();
        let prob = FitProblem::new(ExpDecay, x, y, vec![0.01; 20], vec![2.5, 1.5, 0.0]).fix("B");
        let fit = lm_fit(&prob, &LmOptions::default()).unwrap();
        assert_eq!(fit.params[2], 0.0);
        assert_eq!(fit.stderr[2], 0.0);
        assert_relative_eq!(fit.params[1], 2.0, max_relative = 1e-9);
    }

    #[test]
    fn too_many_parameters_rejected() {
        let prob = FitProblem::new(StraightLine, vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0; 2], vec![0.0, 0.0]);
        assert!(matches!(lm_fit(&prob, &LmOptions::default()), Err(FitError::InvalidProblem(_))));
        let prob = FitProblem::new(StraightLine, vec![1.0, 2.0], vec![1.0, 2.0], vec![0.0; 2], vec![0.0, 0.0]);
        assert!(matches!(lm_fit(&prob, &LmOptions::default()), Err(FitError::InvalidProblem(_))));
    }

    #[test]
    fn unidentifiable_parameter_reported() {
        // A = 0 makes the centre and the width invisible
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let prob = FitProblem::new(Lorentzian, x, vec![0.0; 10], vec![1.0; 10], vec![0.0, 1.0, 1.0, 0.0]);
        match lm_fit(&prob, &LmOptions::default()) {
            Err(FitError::Degenerate { parameter }) => assert!(parameter == "x0" || parameter == "w"),
            other => panic!("expected degenerate fit, got {other:?}"),
        }
    }

    #[test]
    fn max_iterations_is_flagged_not_thrown() {
        let (x, y) = lorentz_data(&[1.0, 0.0, 2.0, 0.0]);
        let n = x.len();
        let opts = LmOptions { max_iterations: 1, ..LmOptions::default() };
        let fit = lm_fit(&FitProblem::new(Lorentzian, x, y, vec![1.0; n], vec![1.5, 0.7, 3.0, 0.3]), &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.termination, Termination::MaxIterations);
    }
}
