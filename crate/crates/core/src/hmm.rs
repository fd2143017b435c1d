//! Bivariate Gaussian hidden Markov models fitted by direct numerical
//! maximization of the scaled forward likelihood.
//!
//! Working parameters, in order: the `2C` means, three log-Cholesky entries
//! per covariance (`L11 = e^w1`, `L21 = w2`, `L22 = e^w3`), the `C(C-1)`
//! off-diagonal `tau_ij = ln(gamma_ij / gamma_ii)`, and optionally `C - 1`
//! values `ln(delta_i / delta_1)` when the initial distribution is free.
//!
//! Rows flagged missing contribute an identity emission matrix.

use alloc::vec;
use alloc::vec::Vec;
use alloc::{format, string::String};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{Executor, Sequential};
use crate::linalg::{sandwich, solve, spd_inverse};
use crate::math::{exp, fabs, ln, sqrt, LN_2PI};
use crate::optim::{central_gradient, central_hessian, central_jacobian, minimize_bfgs, BfgsOptions};
use crate::rng::{self, StreamRng};

pub type Cov2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    pub n_regimes: usize,
    pub means: Vec<[f64; 2]>,
    pub covariances: Vec<Cov2>,
    /// Row-stochastic, `tpm[i][j] = P(S_t = j | S_{t-1} = i)`.
    pub tpm: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
    /// Distribution of the first state; equals `stationary` unless it was
    /// estimated freely.
    pub initial: Vec<f64>,
    /// Maximized log-likelihood; NaN for a model that was not fitted.
    pub loglik: f64,
    pub n_params: usize,
    pub std_errors: Option<StdErrors>,
    pub diagnostics: Option<FitDiagnostics>,
}

/// Standard errors laid out like the natural parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub means: Vec<[f64; 2]>,
    pub covariances: Vec<Cov2>,
    pub tpm: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged_restarts: usize,
    pub restarts: usize,
    /// Final log-likelihood per restart (NaN when the restart was rejected).
    pub restart_logliks: Vec<f64>,
    /// Log-likelihood at each restart's starting point.
    pub initial_logliks: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub warnings: Vec<String>,
}

/// `2C + 3C + C(C-1)`; the free initial distribution adds `C - 1`.
pub fn n_params(c: usize, free_initial: bool) -> usize {
    5 * c + c * (c - 1) + if free_initial { c - 1 } else { 0 }
}

fn validate_tpm(tpm: &[Vec<f64>]) -> Result<()> {
    let c = tpm.len();
    if c == 0 {
        return Err(Error::invalid("transition matrix is empty"));
    }
    for (i, row) in tpm.iter().enumerate() {
        if row.len() != c {
            return Err(Error::invalid(format!("transition matrix row {i} has {} entries, expected {c}", row.len())));
        }
        if row.iter().any(|&g| !(0.0..=1.0).contains(&g)) {
            return Err(Error::invalid(format!("transition matrix row {i} has entries outside [0, 1]")));
        }
        let s: f64 = row.iter().sum();
        if fabs(s - 1.0) > 1e-12 {
            return Err(Error::invalid(format!("transition matrix row {i} sums to {s}")));
        }
    }
    Ok(())
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let c = a.len();
    (0..c).map(|i| (0..c).map(|j| (0..c).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

/// True when some power `Gamma^k` with `k = (C-1)^2 + 1` is strictly positive,
/// i.e. the chain is irreducible and aperiodic.
pub fn is_primitive(tpm: &[Vec<f64>]) -> bool {
    let c = tpm.len();
    let k = (c - 1) * (c - 1) + 1;
    // only the zero pattern matters
    let pattern: Vec<Vec<f64>> = tpm.iter().map(|r| r.iter().map(|&g| if g > 0.0 { 1.0 } else { 0.0 }).collect()).collect();
    let mut p = pattern.clone();
    for _ in 1..k {
        p = mat_mul(&p, &pattern);
        for row in p.iter_mut() {
            for v in row.iter_mut() {
                *v = if *v > 0.0 { 1.0 } else { 0.0 };
            }
        }
    }
    p.iter().all(|r| r.iter().all(|&v| v > 0.0))
}

/// Stationary distribution `delta Gamma = delta` by a linear solve.
pub fn stationary_distribution(tpm: &[Vec<f64>]) -> Result<Vec<f64>> {
    validate_tpm(tpm)?;
    if !is_primitive(tpm) {
        return Err(Error::invalid("transition matrix is reducible or periodic"));
    }
    let c = tpm.len();
    // (I - Gamma + U)^T delta = 1, with U all ones
    let mut a = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            a[j * c + i] = (i == j) as u8 as f64 - tpm[i][j] + 1.0;
        }
    }
    let d = solve(&a, &vec![1.0; c], c).ok_or_else(|| Error::numerical("stationary system is singular"))?;
    let s: f64 = d.iter().sum();
    Ok(d.iter().map(|v| (v / s).max(0.0)).collect())
}

/// Stationary distribution by power iteration from the uniform vector.
pub fn stationary_by_power_iteration(tpm: &[Vec<f64>]) -> Result<Vec<f64>> {
    validate_tpm(tpm)?;
    if !is_primitive(tpm) {
        return Err(Error::invalid("transition matrix is reducible or periodic"));
    }
    let c = tpm.len();
    // square the matrix repeatedly: Gamma^(2^k) rows converge to delta
    let mut p = tpm.to_vec();
    for _ in 0..64 {
        let mut next = mat_mul(&p, &p);
        // rounding would otherwise compound through the squarings
        for row in next.iter_mut() {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let diff = next.iter().flatten().zip(p.iter().flatten()).fold(0.0f64, |m, (a, b)| m.max(fabs(a - b)));
        p = next;
        if diff < 1e-16 {
            break;
        }
    }
    let mut d: Vec<f64> = (0..c).map(|j| p.iter().map(|r| r[j]).sum::<f64>() / c as f64).collect();
    // polish: a few plain iterations of delta <- delta Gamma
    for _ in 0..10 {
        d = (0..c).map(|j| (0..c).map(|i| d[i] * tpm[i][j]).sum()).collect();
    }
    let s: f64 = d.iter().sum();
    Ok(d.iter().map(|v| v / s).collect())
}

fn check_cov(s: &Cov2) -> bool {
    let sym = fabs(s[0][1] - s[1][0]) <= 1e-12 * (fabs(s[0][1]) + 1.0);
    sym && s[0][0] > 0.0 && s[0][0] * s[1][1] - s[0][1] * s[0][1] > 0.0 && s.iter().flatten().all(|v| v.is_finite())
}

impl HmmModel {
    /// A model with the stationary distribution as initial distribution.
    pub fn new(means: Vec<[f64; 2]>, covariances: Vec<Cov2>, tpm: Vec<Vec<f64>>) -> Result<Self> {
        let c = means.len();
        if c == 0 || covariances.len() != c || tpm.len() != c {
            return Err(Error::invalid(format!(
                "inconsistent regime counts: {} means, {} covariances, {} TPM rows",
                c,
                covariances.len(),
                tpm.len()
            )));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::invalid("means must be finite"));
        }
        if let Some(i) = covariances.iter().position(|s| !check_cov(s)) {
            return Err(Error::invalid(format!("covariance of regime {} is not symmetric positive definite", i + 1)));
        }
        let stationary = stationary_distribution(&tpm)?;
        Ok(Self {
            n_regimes: c,
            means,
            covariances,
            tpm,
            initial: stationary.clone(),
            stationary,
            loglik: f64::NAN,
            n_params: n_params(c, false),
            std_errors: None,
            diagnostics: None,
        })
    }

    /// Replaces the initial distribution (for freely estimated starts).
    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self> {
        if initial.len() != self.n_regimes
            || initial.iter().any(|&d| !(0.0..=1.0).contains(&d))
            || fabs(initial.iter().sum::<f64>() - 1.0) > 1e-10
        {
            return Err(Error::invalid("initial distribution must be a probability vector of length C"));
        }
        self.initial = initial;
        self.n_params = n_params(self.n_regimes, true);
        Ok(self)
    }

    fn free_initial(&self) -> bool {
        self.n_params == n_params(self.n_regimes, true) && self.n_regimes > 1
    }
}

/// `(aic, bic)` with `p = n_params`.
pub fn information_criteria(model: &HmmModel, t: usize) -> Result<(f64, f64)> {
    if !model.loglik.is_finite() {
        return Err(Error::invalid("model log-likelihood is not finite"));
    }
    let p = model.n_params as f64;
    Ok((-2.0 * model.loglik + 2.0 * p, -2.0 * model.loglik + p * ln(t as f64)))
}

/// Observations with an optional missing-row mask.
#[derive(Debug, Clone, Copy)]
pub struct Observations<'a> {
    pub points: &'a [[f64; 2]],
    pub missing: Option<&'a [bool]>,
}

impl<'a> Observations<'a> {
    pub fn new(points: &'a [[f64; 2]]) -> Self {
        Self { points, missing: None }
    }

    pub fn with_missing(points: &'a [[f64; 2]], missing: &'a [bool]) -> Self {
        Self { points, missing: Some(missing) }
    }

    fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    fn is_missing(&self, t: usize) -> bool {
        self.missing.is_some_and(|m| m[t])
    }

    fn validate(&self) -> Result<()> {
        if let Some(m) = self.missing {
            if m.len() != self.points.len() {
                return Err(Error::invalid("missing mask and data differ in length"));
            }
        }
        for (t, p) in self.points.iter().enumerate() {
            if !self.is_missing(t) && !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::invalid(format!("non-finite observation at row {t} is not flagged missing")));
            }
        }
        Ok(())
    }

    fn observed(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.points.iter().enumerate().filter(|(t, _)| !self.is_missing(*t)).map(|(_, p)| *p)
    }
}

impl<'a> From<&'a [[f64; 2]]> for Observations<'a> {
    fn from(points: &'a [[f64; 2]]) -> Self {
        Self::new(points)
    }
}

impl<'a> From<&'a Vec<[f64; 2]>> for Observations<'a> {
    fn from(points: &'a Vec<[f64; 2]>) -> Self {
        Self::new(points)
    }
}

/// Emission log-densities via the Cholesky factor of each covariance.
#[derive(Debug, Clone, Copy)]
struct Emission {
    mu: [f64; 2],
    l11: f64,
    l21: f64,
    l22: f64,
    log_norm: f64,
}

impl Emission {
    fn from_cov(mu: [f64; 2], s: &Cov2) -> Self {
        let l11 = sqrt(s[0][0]);
        let l21 = s[1][0] / l11;
        let l22 = sqrt(s[1][1] - l21 * l21);
        Self { mu, l11, l21, l22, log_norm: -LN_2PI - ln(l11) - ln(l22) }
    }

    #[inline]
    fn log_pdf(&self, r: [f64; 2]) -> f64 {
        let z1 = (r[0] - self.mu[0]) / self.l11;
        let z2 = (r[1] - self.mu[1] - self.l21 * z1) / self.l22;
        self.log_norm - 0.5 * (z1 * z1 + z2 * z2)
    }
}

/// Row-major `T x C` log emission densities (zero on missing rows).
fn log_emissions(em: &[Emission], obs: &Observations) -> Vec<f64> {
    let c = em.len();
    let mut out = vec![0.0; obs.len() * c];
    for (t, &r) in obs.points.iter().enumerate() {
        if !obs.is_missing(t) {
            for (i, e) in em.iter().enumerate() {
                out[t * c + i] = e.log_pdf(r);
            }
        }
    }
    out
}

/// Scaled forward recursion on a flat TPM. Returns the log-likelihood; when
/// `store` is given, writes the scaled forward vectors and log scale
/// offsets `ln(alpha_t) = ln(phi_t) + offset_t`.
fn forward_pass(initial: &[f64], tpm: &[f64], em: &[Emission], obs: &Observations, mut store: Option<(&mut [f64], &mut [f64])>) -> f64 {
    let c = em.len();
    let mut phi = vec![0.0; c];
    let mut next = vec![0.0; c];
    let mut lp = vec![0.0; c];
    let mut ll = 0.0;
    for t in 0..obs.len() {
        let mut m = 0.0;
        if !obs.is_missing(t) {
            let r = obs.points[t];
            m = f64::NEG_INFINITY;
            for i in 0..c {
                lp[i] = em[i].log_pdf(r);
                m = m.max(lp[i]);
            }
            if !m.is_finite() {
                return f64::NEG_INFINITY;
            }
        }
        let mut s = 0.0;
        for i in 0..c {
            let prior = if t == 0 { initial[i] } else { (0..c).map(|j| phi[j] * tpm[j * c + i]).sum() };
            let e = if obs.is_missing(t) { 1.0 } else { exp(lp[i] - m) };
            next[i] = prior * e;
            s += next[i];
        }
        if !(s > 0.0) || !s.is_finite() {
            return f64::NEG_INFINITY;
        }
        for i in 0..c {
            phi[i] = next[i] / s;
        }
        // a missing row leaves the (stochastic) prediction with unit mass
        if !obs.is_missing(t) {
            ll += ln(s) + m;
        }
        if let Some((ref mut f, ref mut off)) = store {
            f[t * c..(t + 1) * c].copy_from_slice(&phi);
            off[t] = ll;
        }
    }
    ll
}

fn flat_tpm(tpm: &[Vec<f64>]) -> Vec<f64> {
    tpm.iter().flatten().copied().collect()
}

fn emissions(model: &HmmModel) -> Vec<Emission> {
    model.means.iter().zip(&model.covariances).map(|(&m, s)| Emission::from_cov(m, s)).collect()
}

/// Log-likelihood by the scaled forward algorithm.
pub fn log_likelihood<'a>(model: &HmmModel, data: impl Into<Observations<'a>>) -> Result<f64> {
    let obs = data.into();
    obs.validate()?;
    let ll = forward_pass(&model.initial, &flat_tpm(&model.tpm), &emissions(model), &obs, None);
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::numerical("log-likelihood underflowed"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardBackwardTables {
    /// `ln alpha_t(i)`, `alpha_t(i) = P(r_1..r_t, S_t = i)`.
    pub log_forward: Vec<Vec<f64>>,
    /// `ln beta_t(i)`, `beta_t(i) = P(r_{t+1}..r_T | S_t = i)`.
    pub log_backward: Vec<Vec<f64>>,
    pub loglik: f64,
}

impl ForwardBackwardTables {
    /// Likelihood assembled at the start of the backward pass,
    /// `ln sum_i delta_i p_i(r_1) beta_1(i)`.
    pub fn backward_loglik(&self, model: &HmmModel, data: &Observations) -> f64 {
        let em = emissions(model);
        let terms: Vec<f64> = (0..model.n_regimes)
            .map(|i| {
                let e = if data.is_missing(0) { 0.0 } else { em[i].log_pdf(data.points[0]) };
                ln(model.initial[i]) + e + self.log_backward[0][i]
            })
            .collect();
        crate::math::log_sum_exp(&terms)
    }
}

pub fn forward_backward<'a>(model: &HmmModel, data: impl Into<Observations<'a>>) -> Result<ForwardBackwardTables> {
    let obs = data.into();
    obs.validate()?;
    let n = obs.len();
    if n == 0 {
        return Err(Error::invalid("empty sample"));
    }
    let c = model.n_regimes;
    let em = emissions(model);
    let tpm = flat_tpm(&model.tpm);
    let mut phi = vec![0.0; n * c];
    let mut off = vec![0.0; n];
    let ll = forward_pass(&model.initial, &tpm, &em, &obs, Some((&mut phi, &mut off)));
    if !ll.is_finite() {
        return Err(Error::numerical("log-likelihood underflowed"));
    }
    let lp = log_emissions(&em, &obs);
    // scaled backward: psi_t = beta_t / exp(boff_t)
    let mut log_backward = vec![vec![0.0; c]; n];
    let mut psi = vec![1.0; c];
    let mut boff = 0.0;
    let mut tmp = vec![0.0; c];
    for t in (0..n - 1).rev() {
        let row = &lp[(t + 1) * c..(t + 2) * c];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..c {
            tmp[i] = (0..c).map(|j| tpm[i * c + j] * exp(row[j] - m) * psi[j]).sum();
        }
        let s: f64 = tmp.iter().sum();
        if !(s > 0.0) {
            return Err(Error::numerical("backward recursion underflowed"));
        }
        for i in 0..c {
            psi[i] = tmp[i] / s;
        }
        boff += ln(s) + m;
        for i in 0..c {
            log_backward[t][i] = ln(psi[i]) + boff;
        }
    }
    let log_forward = (0..n).map(|t| (0..c).map(|i| ln(phi[t * c + i]) + off[t]).collect()).collect();
    Ok(ForwardBackwardTables { log_forward, log_backward, loglik: ll })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimePath {
    /// Most probable regime per observation, 1-based.
    pub labels: Vec<usize>,
    /// `T x C` smoothing probabilities `P(S_t = i | all observations)`.
    pub smoothing: Vec<Vec<f64>>,
}

/// Local decoding: smoothing probabilities and their row-wise argmax.
pub fn decode<'a>(model: &HmmModel, data: impl Into<Observations<'a>>) -> Result<RegimePath> {
    let fb = forward_backward(model, data)?;
    let mut smoothing = Vec::with_capacity(fb.log_forward.len());
    let mut labels = Vec::with_capacity(fb.log_forward.len());
    for (a, b) in fb.log_forward.iter().zip(&fb.log_backward) {
        let logs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
        let lse = crate::math::log_sum_exp(&logs);
        let mut row: Vec<f64> = logs.iter().map(|v| exp(v - lse)).collect();
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
        let mut best = 0;
        for i in 1..row.len() {
            if row[i] > row[best] {
                best = i;
            }
        }
        labels.push(best + 1);
        smoothing.push(row);
    }
    Ok(RegimePath { labels, smoothing })
}

/// Draws a state path and observations; states are 1-based.
pub fn simulate(model: &HmmModel, t: usize, rng: &mut StreamRng) -> (Vec<[f64; 2]>, Vec<usize>) {
    let em = emissions(model);
    let mut points = Vec::with_capacity(t);
    let mut states = Vec::with_capacity(t);
    let draw = |p: &[f64], rng: &mut StreamRng| -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    };
    let mut s = draw(&model.initial, rng);
    for step in 0..t {
        if step > 0 {
            s = draw(&model.tpm[s], rng);
        }
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let e = &em[s];
        points.push([e.mu[0] + e.l11 * z1, e.mu[1] + e.l21 * z1 + e.l22 * z2]);
        states.push(s + 1);
    }
    (points, states)
}

/// Natural → working parameters.
pub fn to_working(model: &HmmModel) -> Vec<f64> {
    let c = model.n_regimes;
    let mut w = Vec::with_capacity(model.n_params);
    for m in &model.means {
        w.extend_from_slice(m);
    }
    for s in &model.covariances {
        let e = Emission::from_cov([0.0; 2], s);
        w.extend_from_slice(&[ln(e.l11), e.l21, ln(e.l22)]);
    }
    for i in 0..c {
        for j in 0..c {
            if i != j {
                w.push(ln(model.tpm[i][j] / model.tpm[i][i]));
            }
        }
    }
    if model.free_initial() {
        for i in 1..c {
            w.push(ln(model.initial[i] / model.initial[0]));
        }
    }
    w
}

/// Working → natural parts `(means, covariances, tpm, initial)`; `initial`
/// is `None` unless free initial parameters are present.
type Natural = (Vec<[f64; 2]>, Vec<Cov2>, Vec<f64>, Option<Vec<f64>>);

fn natural_parts(w: &[f64], c: usize, free_initial: bool) -> Natural {
    let means = (0..c).map(|i| [w[2 * i], w[2 * i + 1]]).collect();
    let covs = (0..c)
        .map(|i| {
            let k = 2 * c + 3 * i;
            let (l11, l21, l22) = (exp(w[k]), w[k + 1], exp(w[k + 2]));
            [[l11 * l11, l11 * l21], [l11 * l21, l21 * l21 + l22 * l22]]
        })
        .collect();
    let mut tpm = vec![0.0; c * c];
    let mut k = 5 * c;
    for i in 0..c {
        // normalize in log space against the largest entry
        let mut row = vec![0.0; c];
        for (j, v) in row.iter_mut().enumerate() {
            if j != i {
                *v = w[k];
                k += 1;
            }
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|v| exp(v - m)).sum();
        for j in 0..c {
            tpm[i * c + j] = exp(row[j] - m) / s;
        }
    }
    let initial = free_initial.then(|| {
        let mut l = vec![0.0; c];
        l[1..].copy_from_slice(&w[k..k + c - 1]);
        let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = l.iter().map(|v| exp(v - m)).sum();
        l.iter().map(|v| exp(v - m) / s).collect()
    });
    (means, covs, tpm, initial)
}

/// Working → natural model (stationary initial distribution unless free).
pub fn from_working(w: &[f64], c: usize, free_initial: bool) -> Result<HmmModel> {
    if w.len() != n_params(c, free_initial) {
        return Err(Error::invalid(format!("expected {} working parameters, got {}", n_params(c, free_initial), w.len())));
    }
    let (means, covs, tpm, initial) = natural_parts(w, c, free_initial);
    let tpm = tpm.chunks(c).map(|r| r.to_vec()).collect();
    let model = HmmModel::new(means, covs, tpm)?;
    match initial {
        Some(d) if c > 1 => model.with_initial(d),
        _ => Ok(model),
    }
}

/// Negative log-likelihood of working parameters; `inf` when invalid.
fn neg_loglik(w: &[f64], c: usize, free_initial: bool, obs: &Observations) -> f64 {
    let (means, covs, tpm, initial) = natural_parts(w, c, free_initial);
    let em: Vec<Emission> = (0..c)
        .map(|i| {
            let k = 2 * c + 3 * i;
            Emission { mu: means[i], l11: exp(w[k]), l21: w[k + 1], l22: exp(w[k + 2]), log_norm: -LN_2PI - w[k] - w[k + 2] }
        })
        .collect();
    let _ = covs;
    let delta = match initial {
        Some(d) => d,
        None => {
            let rows: Vec<Vec<f64>> = tpm.chunks(c).map(|r| r.to_vec()).collect();
            match stationary_distribution(&rows) {
                Ok(d) => d,
                Err(_) => return f64::INFINITY,
            }
        }
    };
    let ll = forward_pass(&delta, &tpm, &em, obs, None);
    if ll.is_finite() {
        -ll
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmOptions {
    pub restarts: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub std_errors: bool,
    /// Estimate the initial distribution instead of fixing it at stationarity.
    pub free_initial: bool,
}

impl Default for HmmOptions {
    fn default() -> Self {
        Self { restarts: 5, grad_tol: 1e-6, rel_tol: 1e-10, max_iter: 1000, seed: 0, std_errors: true, free_initial: false }
    }
}

fn moments(points: &[[f64; 2]]) -> ([f64; 2], Cov2) {
    let n = points.len() as f64;
    let m = [points.iter().map(|p| p[0]).sum::<f64>() / n, points.iter().map(|p| p[1]).sum::<f64>() / n];
    let mut s = [[0.0; 2]; 2];
    for p in points {
        let d = [p[0] - m[0], p[1] - m[1]];
        for a in 0..2 {
            for b in 0..2 {
                s[a][b] += d[a] * d[b] / n;
            }
        }
    }
    (m, s)
}

fn start_model(groups: &[Vec<[f64; 2]>], pooled: &Cov2) -> Option<HmmModel> {
    let c = groups.len();
    let mut means = Vec::with_capacity(c);
    let mut covs = Vec::with_capacity(c);
    for g in groups {
        if g.len() < 3 {
            return None;
        }
        let (m, mut s) = moments(g);
        if c > 1 {
            // keep starting covariances comfortably positive definite
            s[0][0] += 1e-3 * pooled[0][0];
            s[1][1] += 1e-3 * pooled[1][1];
        }
        means.push(m);
        covs.push(s);
    }
    let off = if c > 1 { 0.1 / (c - 1) as f64 } else { 0.0 };
    let tpm = (0..c).map(|i| (0..c).map(|j| if i == j { 1.0 - off * (c - 1) as f64 } else { off }).collect()).collect();
    HmmModel::new(means, covs, tpm).ok()
}

/// Split by Mahalanobis distance from the pooled mean into `C` quantile groups.
fn volatility_split(points: &[[f64; 2]], c: usize) -> Vec<Vec<[f64; 2]>> {
    let (m, s) = moments(points);
    let e = Emission::from_cov(m, &s);
    let mut keyed: Vec<(f64, [f64; 2])> = points.iter().map(|&p| (-e.log_pdf(p), p)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = keyed.len();
    (0..c).map(|g| keyed[g * n / c..(g + 1) * n / c].iter().map(|k| k.1).collect()).collect()
}

/// Lloyd's k-means on standardized coordinates, seeded at marginal quantiles.
fn kmeans_split(points: &[[f64; 2]], c: usize) -> Vec<Vec<[f64; 2]>> {
    let (m, s) = moments(points);
    let sd = [sqrt(s[0][0]), sqrt(s[1][1])];
    let z: Vec<[f64; 2]> = points.iter().map(|p| [(p[0] - m[0]) / sd[0], (p[1] - m[1]) / sd[1]]).collect();
    let mut sorted: Vec<[f64; 2]> = z.clone();
    sorted.sort_by(|a, b| (a[0] + a[1]).total_cmp(&(b[0] + b[1])));
    let n = z.len();
    let mut centres: Vec<[f64; 2]> = (0..c).map(|g| sorted[((2 * g + 1) * n) / (2 * c)]).collect();
    let mut assign = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (t, p) in z.iter().enumerate() {
            let d = |q: &[f64; 2]| (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]);
            let mut best = 0;
            for g in 1..c {
                if d(&centres[g]) < d(&centres[best]) {
                    best = g;
                }
            }
            if assign[t] != best {
                assign[t] = best;
                changed = true;
            }
        }
        let mut sums = vec![[0.0; 3]; c];
        for (t, p) in z.iter().enumerate() {
            sums[assign[t]][0] += p[0];
            sums[assign[t]][1] += p[1];
            sums[assign[t]][2] += 1.0;
        }
        for g in 0..c {
            if sums[g][2] > 0.0 {
                centres[g] = [sums[g][0] / sums[g][2], sums[g][1] / sums[g][2]];
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups = vec![Vec::new(); c];
    for (t, &g) in assign.iter().enumerate() {
        groups[g].push(points[t]);
    }
    groups
}

fn jitter(w: &[f64], c: usize, sd: [f64; 2], rng: &mut StreamRng) -> Vec<f64> {
    let mut out = w.to_vec();
    for (k, v) in out.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(rng);
        let scale = if k < 2 * c {
            0.25 * sd[k % 2]
        } else if k < 5 * c {
            0.2
        } else {
            0.5
        };
        *v += scale * z;
    }
    out
}

/// Reorders regimes by ascending `trace(Sigma_i)`.
fn sort_regimes(model: &HmmModel) -> Result<HmmModel> {
    let c = model.n_regimes;
    let mut order: Vec<usize> = (0..c).collect();
    let trace = |i: usize| model.covariances[i][0][0] + model.covariances[i][1][1];
    order.sort_by(|&a, &b| trace(a).total_cmp(&trace(b)));
    let means = order.iter().map(|&i| model.means[i]).collect();
    let covs = order.iter().map(|&i| model.covariances[i]).collect();
    let tpm = order.iter().map(|&i| order.iter().map(|&j| model.tpm[i][j]).collect()).collect();
    let sorted = HmmModel::new(means, covs, tpm)?;
    if model.free_initial() {
        sorted.with_initial(order.iter().map(|&i| model.initial[i]).collect())
    } else {
        Ok(sorted)
    }
}

/// Natural parameter vector: per regime `(mu1, mu2, s11, s12, s22)`, then
/// the full TPM row-major, then the stationary distribution.
fn natural_vector(w: &[f64], c: usize, free_initial: bool) -> Vec<f64> {
    let (means, covs, tpm, _) = natural_parts(w, c, free_initial);
    let mut v = Vec::with_capacity(5 * c + c * c + c);
    for i in 0..c {
        v.extend_from_slice(&[means[i][0], means[i][1], covs[i][0][0], covs[i][0][1], covs[i][1][1]]);
    }
    v.extend_from_slice(&tpm);
    let rows: Vec<Vec<f64>> = tpm.chunks(c).map(|r| r.to_vec()).collect();
    match stationary_distribution(&rows) {
        Ok(d) => v.extend(d),
        Err(_) => v.extend(core::iter::repeat_n(f64::NAN, c)),
    }
    v
}

fn standard_errors(w: &[f64], c: usize, free_initial: bool, obs: &Observations) -> Result<StdErrors> {
    let n = w.len();
    let mut f = |x: &[f64]| neg_loglik(x, c, free_initial, obs);
    let h = central_hessian(&mut f, w);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("Hessian is not finite"));
    }
    let cov_w = spd_inverse(&h, n).ok_or_else(|| Error::numerical("Hessian is not positive definite"))?;
    let m = 5 * c + c * c + c;
    let mut g = |x: &[f64]| natural_vector(x, c, free_initial);
    let jac = central_jacobian(&mut g, w, m);
    let cov_n = sandwich(&jac, &cov_w, m, n);
    let se: Vec<f64> = (0..m).map(|k| sqrt(cov_n[k * m + k].max(0.0))).collect();
    Ok(StdErrors {
        means: (0..c).map(|i| [se[5 * i], se[5 * i + 1]]).collect(),
        covariances: (0..c).map(|i| [[se[5 * i + 2], se[5 * i + 3]], [se[5 * i + 3], se[5 * i + 4]]]).collect(),
        tpm: (0..c).map(|i| se[5 * c + i * c..5 * c + (i + 1) * c].to_vec()).collect(),
        stationary: se[5 * c + c * c..].to_vec(),
    })
}

/// A regime whose covariance collapsed is a spurious likelihood spike.
fn degenerate(model: &HmmModel, pooled: &Cov2) -> bool {
    let pooled_det = pooled[0][0] * pooled[1][1] - pooled[0][1] * pooled[0][1];
    model.covariances.iter().any(|s| s[0][0] * s[1][1] - s[0][1] * s[0][1] < 1e-8 * pooled_det)
}

struct RestartResult {
    w: Vec<f64>,
    start_ll: f64,
    ll: f64,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
}

pub fn fit_hmm<'a>(data: impl Into<Observations<'a>>, c: usize, opts: &HmmOptions) -> Result<HmmModel> {
    fit_hmm_with(data, c, opts, &Sequential)
}

/// Fits a `C`-regime model; restarts run on `exec`.
pub fn fit_hmm_with<'a, E: Executor>(data: impl Into<Observations<'a>>, c: usize, opts: &HmmOptions, exec: &E) -> Result<HmmModel> {
    let obs = data.into();
    obs.validate()?;
    if c == 0 {
        return Err(Error::invalid("the number of regimes must be at least 1"));
    }
    let observed: Vec<[f64; 2]> = obs.observed().collect();
    if observed.len() < 10 * c {
        return Err(Error::invalid(format!("fitting {c} regimes needs at least {} observed rows, got {}", 10 * c, observed.len())));
    }
    let free_initial = opts.free_initial && c > 1;
    let (_, pooled) = moments(&observed);
    let sd = [sqrt(pooled[0][0]), sqrt(pooled[1][1])];
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let push = |groups: Vec<Vec<[f64; 2]>>, starts: &mut Vec<Vec<f64>>| {
        if let Some(mut m) = start_model(&groups, &pooled) {
            if free_initial {
                m = m.clone().with_initial(m.stationary.clone()).unwrap_or(m);
            }
            starts.push(to_working(&m));
        }
    };
    push(volatility_split(&observed, c), &mut starts);
    if c > 1 {
        push(kmeans_split(&observed, c), &mut starts);
    }
    let base = starts.first().cloned().ok_or_else(|| Error::numerical("no valid starting point"))?;
    let n_starts = if c == 1 { 1 } else { opts.restarts.max(1) };
    let mut k = 0;
    while starts.len() < n_starts {
        let mut r = rng::stream(opts.seed, k as u64);
        starts.push(jitter(&base, c, sd, &mut r));
        k += 1;
    }
    starts.truncate(n_starts);

    let bfgs = BfgsOptions { max_iter: opts.max_iter, grad_tol: opts.grad_tol, rel_tol: opts.rel_tol };
    let results: Vec<RestartResult> = exec.map(starts.len(), |s| {
        let w0 = &starts[s];
        let mut f = |x: &[f64]| neg_loglik(x, c, free_initial, &obs);
        let start_ll = -f(w0);
        let m = minimize_bfgs(|x, g| central_gradient(&mut f, x, g), w0, &bfgs);
        let grad_norm = m.grad_norm();
        RestartResult { w: m.x, start_ll, ll: -m.value, converged: m.converged, iterations: m.iterations, grad_norm }
    });

    let mut warnings = Vec::new();
    let mut best: Option<(usize, HmmModel)> = None;
    let mut restart_lls = vec![f64::NAN; results.len()];
    let mut converged_restarts = 0;
    for (s, r) in results.iter().enumerate() {
        if !r.converged || !r.ll.is_finite() {
            continue;
        }
        let Ok(model) = from_working(&r.w, c, free_initial) else { continue };
        if degenerate(&model, &pooled) {
            warnings.push(format!("restart {s} collapsed onto a degenerate covariance; discarded"));
            continue;
        }
        converged_restarts += 1;
        restart_lls[s] = r.ll;
        if best.as_ref().is_none_or(|(b, _)| r.ll > results[*b].ll) {
            best = Some((s, model));
        }
    }
    let Some((b, model)) = best else {
        let (s, r) = results
            .iter()
            .enumerate()
            .filter(|(_, r)| r.ll.is_finite())
            .max_by(|a, b| a.1.ll.total_cmp(&b.1.ll))
            .ok_or_else(|| Error::numerical("every restart produced a non-finite likelihood"))?;
        let _ = s;
        return Err(Error::NotConverged { stage: "hmm", best: r.w.clone(), best_value: -r.ll, grad_norm: r.grad_norm });
    };
    let r = &results[b];
    let mut model = sort_regimes(&model)?;
    model.loglik = r.ll;
    if opts.std_errors {
        let w = to_working(&model);
        match standard_errors(&w, c, free_initial, &obs) {
            Ok(se) => model.std_errors = Some(se),
            Err(e) => warnings.push(format!("standard errors unavailable: {e}")),
        }
    }
    model.diagnostics = Some(FitDiagnostics {
        converged_restarts,
        restarts: results.len(),
        restart_logliks: restart_lls,
        initial_logliks: results.iter().map(|r| r.start_ll).collect(),
        iterations: r.iterations,
        grad_norm: r.grad_norm,
        warnings,
    });
    Ok(model)
}
