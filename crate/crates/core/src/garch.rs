//! GARCH(1,1) with unit-variance Student-t innovations.
//!
//! `r_t = mu + a_t`, `a_t = sigma_t z_t`,
//! `sigma_t^2 = omega + alpha a_{t-1}^2 + beta sigma_{t-1}^2`, started from
//! `a_0 = 0` and `sigma_0^2` equal to the sample variance.

use alloc::vec::Vec;
use alloc::{format, string::String};

use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sandwich, spd_inverse};
use crate::math::{exp, fabs, ln, ln_gamma, log1p, logistic, logit, norm_cdf, sqrt, PI};
use crate::optim::{central_gradient, central_hessian, central_jacobian, minimize_bfgs, BfgsOptions};
use crate::rng::{self, StreamRng};
use crate::stats::{mean, variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub mu: f64,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Student-t degrees of freedom.
    pub shape: f64,
    pub loglik: f64,
    /// `(mu, omega, alpha, beta, shape)`; absent when the Hessian was unusable.
    pub std_errors: Option<[f64; 5]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl GarchParams {
    pub fn new(mu: f64, omega: f64, alpha: f64, beta: f64, shape: f64) -> Result<Self> {
        let p = Self { mu, omega, alpha, beta, shape, loglik: f64::NAN, std_errors: None, warnings: Vec::new() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::invalid("mu must be finite"));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::OutOfRange { name: "omega", value: self.omega, admissible: "(0, inf)" });
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::OutOfRange { name: "alpha", value: self.alpha, admissible: "[0, 1)" });
        }
        if !(self.beta >= 0.0) {
            return Err(Error::OutOfRange { name: "beta", value: self.beta, admissible: "[0, 1)" });
        }
        if !(self.alpha + self.beta < 1.0) {
            return Err(Error::OutOfRange { name: "alpha + beta", value: self.alpha + self.beta, admissible: "[0, 1)" });
        }
        if !(self.shape > 2.0) {
            return Err(Error::OutOfRange { name: "shape", value: self.shape, admissible: "(2, inf]" });
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 5] {
        [self.mu, self.omega, self.alpha, self.beta, self.shape]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMode {
    /// `mu` estimated jointly with the other parameters.
    #[default]
    Mle,
    /// `mu` fixed at the sample mean.
    SampleMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GarchOptions {
    pub mean: MeanMode,
    /// Jittered restarts after the first start.
    pub restarts: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for GarchOptions {
    fn default() -> Self {
        Self { mean: MeanMode::Mle, restarts: 3, grad_tol: 1e-6, rel_tol: 1e-12, max_iter: 500, seed: 0 }
    }
}

pub const MIN_SAMPLE: usize = 100;
pub const SMALL_SAMPLE: usize = 500;

/// Log-density constant of the unit-variance Student-t.
fn t_const(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * ln(PI * (nu - 2.0))
}

fn loglik(x: &[f64], p: &[f64; 5], s0: f64) -> f64 {
    let [mu, omega, alpha, beta, nu] = *p;
    let c = t_const(nu);
    let (mut a_prev, mut s2) = (0.0, s0);
    let mut ll = 0.0;
    for &r in x {
        s2 = omega + alpha * a_prev * a_prev + beta * s2;
        let a = r - mu;
        ll += c - 0.5 * ln(s2) - 0.5 * (nu + 1.0) * log1p(a * a / ((nu - 2.0) * s2));
        a_prev = a;
    }
    ll
}

/// `(mu, ln omega, logit(alpha + beta), logit(alpha / (alpha + beta)), ln(shape - 2))`.
fn to_working(p: &[f64; 5]) -> [f64; 5] {
    let persistence = p[2] + p[3];
    [p[0], ln(p[1]), logit(persistence), logit(p[2] / persistence), ln(p[4] - 2.0)]
}

fn from_working(w: &[f64]) -> [f64; 5] {
    let persistence = logistic(w[2]);
    let share = logistic(w[3]);
    [w[0], exp(w[1]), persistence * share, persistence * (1.0 - share), 2.0 + exp(w[4])]
}

fn neg_loglik_working(x: &[f64], w: &[f64], s0: f64) -> f64 {
    let p = from_working(w);
    let v = -loglik(x, &p, s0);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Maximum-likelihood fit of GARCH(1,1)-t.
pub fn fit_garch(x: &[f64], opts: &GarchOptions) -> Result<GarchParams> {
    let n = x.len();
    if n < MIN_SAMPLE {
        return Err(Error::invalid(format!("GARCH fit needs at least {MIN_SAMPLE} observations, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("sample contains non-finite values"));
    }
    let s0 = variance(x);
    if !(s0 > 0.0) {
        return Err(Error::invalid("sample has zero variance"));
    }
    let mut warnings = Vec::new();
    if n < SMALL_SAMPLE {
        warnings.push(format!("GARCH fit on only {n} observations; estimates may be unreliable"));
    }
    let m = mean(x);
    let fixed_mu = opts.mean == MeanMode::SampleMean;
    // free working coordinates exclude mu when it is fixed
    let offset = usize::from(fixed_mu);
    let full = |v: &[f64]| -> [f64; 5] {
        if fixed_mu {
            [m, v[0], v[1], v[2], v[3]]
        } else {
            [v[0], v[1], v[2], v[3], v[4]]
        }
    };
    let mut f = |v: &[f64]| neg_loglik_working(x, &full(v), s0);

    let base = to_working(&[m, 0.05 * s0, 0.08, 0.9, 8.0]);
    let mut starts: Vec<Vec<f64>> = alloc::vec![base[offset..].to_vec()];
    let mut rng = rng::stream(opts.seed, 0);
    for _ in 0..opts.restarts {
        let mut w = base;
        let z: [f64; 5] = core::array::from_fn(|_| rand_distr::StandardNormal.sample(&mut rng));
        w[0] += 0.1 * sqrt(s0) * z[0];
        for k in 1..5 {
            w[k] += 0.5 * z[k];
        }
        starts.push(w[offset..].to_vec());
    }
    let bfgs = BfgsOptions { max_iter: opts.max_iter, grad_tol: opts.grad_tol, rel_tol: opts.rel_tol };
    let mut best: Option<(Vec<f64>, f64, f64, bool)> = None;
    for w0 in &starts {
        let r = minimize_bfgs(|v, g| central_gradient(&mut f, v, g), w0, &bfgs);
        if !r.value.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, v, _, conv)) => (r.converged && !conv) || (r.converged == *conv && r.value < *v),
        };
        if better {
            let gn = r.grad_norm();
            best = Some((r.x, r.value, gn, r.converged));
        }
    }
    let (w, value, grad_norm, converged) = best.ok_or_else(|| Error::numerical("GARCH likelihood is not finite at any start"))?;
    let wf = full(&w);
    let p = from_working(&wf);
    if !converged {
        return Err(Error::NotConverged { stage: "garch", best: p.to_vec(), best_value: value, grad_norm });
    }
    if p[2] + p[3] >= 1.0 - 1e-8 {
        return Err(Error::numerical(format!(
            "fitted alpha + beta = {} violates covariance stationarity; re-inspect the data",
            p[2] + p[3]
        )));
    }

    let std_errors = standard_errors(&mut f, &w, &full, fixed_mu);
    if std_errors.is_none() {
        warnings.push("Hessian not positive definite; standard errors unavailable".into());
    }
    Ok(GarchParams { mu: p[0], omega: p[1], alpha: p[2], beta: p[3], shape: p[4], loglik: -value, std_errors, warnings })
}

fn standard_errors(f: &mut impl FnMut(&[f64]) -> f64, w: &[f64], full: &impl Fn(&[f64]) -> [f64; 5], fixed_mu: bool) -> Option<[f64; 5]> {
    let k = w.len();
    let h = central_hessian(f, w);
    let cov_w = spd_inverse(&h, k)?;
    let mut g = |v: &[f64]| from_working(&full(v)).to_vec();
    let jac = central_jacobian(&mut g, w, 5);
    let cov = sandwich(&jac, &cov_w, 5, k);
    let mut se = [0.0; 5];
    for i in 0..5 {
        se[i] = sqrt(cov[i * 5 + i].max(0.0));
    }
    if fixed_mu {
        se[0] = 0.0;
    }
    se.iter().all(|v| v.is_finite()).then_some(se)
}

/// Conditional standard deviations `sigma_t`.
pub fn conditional_sd(x: &[f64], p: &GarchParams) -> Result<Vec<f64>> {
    p.validate()?;
    if x.len() < 2 {
        return Err(Error::invalid("need at least 2 observations"));
    }
    let s0 = variance(x);
    let (mut a_prev, mut s2) = (0.0, s0);
    let mut out = Vec::with_capacity(x.len());
    for (t, &r) in x.iter().enumerate() {
        s2 = p.omega + p.alpha * a_prev * a_prev + p.beta * s2;
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(Error::numerical(format!("conditional variance is not positive and finite at t = {t}")));
        }
        out.push(sqrt(s2));
        a_prev = r - p.mu;
    }
    Ok(out)
}

/// `(x_t - mu) / sigma_t`.
pub fn standardized_residuals(x: &[f64], p: &GarchParams) -> Result<Vec<f64>> {
    let sd = conditional_sd(x, p)?;
    Ok(x.iter().zip(&sd).map(|(r, s)| (r - p.mu) / s).collect())
}

/// Simulated path `(returns, innovations z_t)`, started from the
/// unconditional variance.
pub fn simulate(p: &GarchParams, n: usize, rng: &mut StreamRng) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    let t = StudentT::new(p.shape).map_err(|_| Error::invalid("invalid Student-t shape"))?;
    let scale = sqrt((p.shape - 2.0) / p.shape);
    let mut s2 = p.omega / (1.0 - p.alpha - p.beta);
    let mut a_prev: f64 = 0.0;
    let mut x = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for step in 0..n {
        if step > 0 {
            s2 = p.omega + p.alpha * a_prev * a_prev + p.beta * s2;
        }
        let e = scale * t.sample(rng);
        let a = sqrt(s2) * e;
        x.push(p.mu + a);
        z.push(e);
        a_prev = a;
    }
    Ok((x, z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    /// Two-sided normal-approximation p-value of `t_value`.
    pub p_value: f64,
}

/// Estimate, standard error, t value and p-value per parameter.
pub fn parameter_table(p: &GarchParams) -> Vec<TableRow> {
    let names = ["mu", "omega", "alpha", "beta", "shape"];
    let est = p.as_array();
    let se = p.std_errors.unwrap_or([f64::NAN; 5]);
    (0..5)
        .map(|i| {
            let t = est[i] / se[i];
            TableRow { name: names[i].into(), estimate: est[i], std_error: se[i], t_value: t, p_value: 2.0 * norm_cdf(-fabs(t)) }
        })
        .collect()
}
