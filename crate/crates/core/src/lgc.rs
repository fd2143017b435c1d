//! Local Gaussian correlation maps.
//!
//! At a gridpoint `x` the local parameters `(mu1, mu2, sigma1, sigma2, rho)`
//! maximize the local log-likelihood
//!
//! ```text
//! L(theta) = T^-1 sum_t K_b(R_t - x) log psi(R_t; theta) - integral K_b(v - x) psi(v; theta) dv
//! ```
//!
//! with a product Gaussian kernel `K_b(v) = exp(-v1^2 / 2b1^2 - v2^2 / 2b2^2)`
//! (unit height, so the integral tends to one as the bandwidths grow) and
//! `psi` the bivariate normal density. The integral has the closed form
//! `2 pi b1 b2 N(x; mu, Sigma + diag(b1^2, b2^2))`.
//!
//! Because `log psi` is quadratic in the observation, the data term depends
//! on the sample only through six kernel-weighted moments. Fits work in
//! coordinates standardized by the gridpoint and the bandwidths, which
//! makes them invariant to per-coordinate affine maps of the data.

use alloc::vec;
use alloc::vec::Vec;
use alloc::{format, string::String};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::math::{atanh, exp, ln, sqrt, tanh, LN_2PI, PI};
use crate::optim::{inf_norm, minimize_bfgs, BfgsOptions};
use crate::stats::{mean, pearson, quantile_sorted, std_dev};

/// Bandwidth multiplier of the rule of thumb `b_k = 1.1 * sd_k`.
pub const RULE_OF_THUMB_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub b1: f64,
    pub b2: f64,
}

impl Bandwidths {
    pub fn new(b1: f64, b2: f64) -> Result<Self> {
        for (name, b) in [("b1", b1), ("b2", b2)] {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::OutOfRange { name, value: b, admissible: "(0, inf)" });
            }
        }
        Ok(Self { b1, b2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandwidthSpec {
    Explicit {
        b1: f64,
        b2: f64,
    },
    /// `factor` times the marginal sample standard deviation.
    RuleOfThumb {
        factor: f64,
    },
}

impl Default for BandwidthSpec {
    fn default() -> Self {
        BandwidthSpec::RuleOfThumb { factor: RULE_OF_THUMB_FACTOR }
    }
}

impl BandwidthSpec {
    pub fn resolve(&self, points: &[[f64; 2]]) -> Result<Bandwidths> {
        match *self {
            BandwidthSpec::Explicit { b1, b2 } => Bandwidths::new(b1, b2),
            BandwidthSpec::RuleOfThumb { factor } => {
                if points.len() < 2 {
                    return Err(Error::invalid("rule-of-thumb bandwidth needs at least 2 observations"));
                }
                let (a, b) = split(points);
                Bandwidths::new(factor * std_dev(&a), factor * std_dev(&b))
            }
        }
    }
}

fn split(points: &[[f64; 2]]) -> (Vec<f64>, Vec<f64>) {
    points.iter().map(|p| (p[0], p[1])).unzip()
}

/// Rectangular grid `(xs[i], ys[j])` with weights stored row-major,
/// `weights[i * ys.len() + j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    xs: Vec<f64>,
    ys: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        for (name, axis) in [("xs", &xs), ("ys", &ys)] {
            if axis.is_empty() || axis.windows(2).any(|w| !(w[1] > w[0])) || axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("grid axis {name} must be finite and strictly increasing")));
            }
        }
        if weights.len() != xs.len() * ys.len() {
            return Err(Error::invalid(format!("grid weights have {} entries, expected {}", weights.len(), xs.len() * ys.len())));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invalid("grid weights must lie in [0, 1]"));
        }
        Ok(Self { xs, ys, weights })
    }

    /// Grid with unit weight everywhere.
    pub fn uniform(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let w = vec![1.0; xs.len() * ys.len()];
        Self::new(xs, ys, w)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        let ny = self.ys.len();
        [self.xs[idx / ny], self.ys[idx % ny]]
    }

    /// The grid with the two coordinates exchanged.
    pub fn transpose(&self) -> Grid {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        let mut w = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                w[j * nx + i] = self.weights[i * ny + j];
            }
        }
        Grid { xs: self.ys.clone(), ys: self.xs.clone(), weights: w }
    }
}

/// `n x n` equally spaced grid between the `lo` and `hi` percentiles of each
/// marginal. Every gridpoint lies inside the percentile box and gets weight 1.
pub fn default_grid(points: &[[f64; 2]], n: usize, lo: f64, hi: f64) -> Result<Grid> {
    if n < 2 {
        return Err(Error::invalid("a grid needs at least 2 points per axis"));
    }
    if !(0.0 <= lo && lo < hi && hi <= 100.0) {
        return Err(Error::invalid(format!("percentiles must satisfy 0 <= lo < hi <= 100, got {lo}, {hi}")));
    }
    if points.is_empty() {
        return Err(Error::invalid("cannot build a grid from an empty sample"));
    }
    let (mut a, mut b) = split(points);
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let axis = |s: &[f64]| -> Result<Vec<f64>> {
        let (l, h) = (quantile_sorted(s, lo / 100.0), quantile_sorted(s, hi / 100.0));
        if !(h > l) {
            return Err(Error::invalid("percentile range has zero width"));
        }
        Ok((0..n).map(|k| l + (h - l) * k as f64 / (n - 1) as f64).collect())
    };
    Grid::uniform(axis(&a)?, axis(&b)?)
}

/// How a grid is obtained for a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// `n x n` points between the `lo` and `hi` marginal percentiles.
    Percentile {
        n: usize,
        lo: f64,
        hi: f64,
    },
    Explicit(Grid),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Percentile { n: 7, lo: 5.0, hi: 95.0 }
    }
}

impl GridSpec {
    pub fn resolve(&self, points: &[[f64; 2]]) -> Result<Grid> {
        match self {
            GridSpec::Percentile { n, lo, hi } => default_grid(points, *n, *lo, *hi),
            GridSpec::Explicit(g) => Ok(g.clone()),
        }
    }
}

/// Local Gaussian parameters at one gridpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalParams {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub converged: bool,
    /// Average kernel weight per observation at the gridpoint (1 = all mass at `x`).
    pub effective_mass: f64,
}

impl LocalParams {
    pub fn new(mu1: f64, mu2: f64, sigma1: f64, sigma2: f64, rho: f64) -> Self {
        Self { mu1, mu2, sigma1, sigma2, rho, converged: false, effective_mass: f64::NAN }
    }

    /// Global Gaussian moments of a sample.
    pub fn from_moments(points: &[[f64; 2]]) -> Self {
        let (a, b) = split(points);
        let rho = pearson(&a, &b);
        let rho = if rho.is_finite() { rho.clamp(-0.95, 0.95) } else { 0.0 };
        Self::new(mean(&a), mean(&b), std_dev(&a), std_dev(&b), rho)
    }

    fn masked(effective_mass: f64) -> Self {
        Self { mu1: f64::NAN, mu2: f64::NAN, sigma1: f64::NAN, sigma2: f64::NAN, rho: f64::NAN, converged: false, effective_mass }
    }

    fn is_valid(&self) -> bool {
        self.sigma1 > 0.0 && self.sigma2 > 0.0 && self.rho > -1.0 && self.rho < 1.0 && self.mu1.is_finite() && self.mu2.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgcMap {
    pub grid: Grid,
    /// Row-major like the grid weights.
    pub params: Vec<LocalParams>,
    pub bandwidths: Bandwidths,
    pub sample_size: usize,
}

impl LgcMap {
    /// Gridpoints with positive weight whose fit converged.
    pub fn is_included(&self, idx: usize) -> bool {
        self.grid.weights[idx] > 0.0 && self.params[idx].converged
    }

    pub fn masked_count(&self) -> usize {
        (0..self.params.len()).filter(|&i| self.grid.weights[i] > 0.0 && !self.params[i].converged).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LgcOptions {
    /// Gradient tolerance of the standardized local objective.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Extra starting points tried when the first fit fails.
    pub restarts: usize,
    /// Gridpoints whose effective mass falls below this are masked.
    pub mass_threshold: f64,
    /// Start each gridpoint from a converged neighbour when available.
    pub warm_start: bool,
    /// `estimate_map` fails when more of the weighted gridpoints are masked.
    pub max_masked_fraction: f64,
}

impl Default for LgcOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-8, max_iter: 200, restarts: 2, mass_threshold: 1e-4, warm_start: true, max_masked_fraction: 0.5 }
    }
}

pub const MIN_SAMPLE: usize = 50;

const POLISH_RADIUS: f64 = 1e-4;

#[inline]
pub fn kernel(v: [f64; 2], b: Bandwidths) -> f64 {
    let (z1, z2) = (v[0] / b.b1, v[1] / b.b2);
    exp(-0.5 * (z1 * z1 + z2 * z2))
}

fn log_density(v: [f64; 2], t: &LocalParams) -> f64 {
    let (u1, u2) = ((v[0] - t.mu1) / t.sigma1, (v[1] - t.mu2) / t.sigma2);
    let d = 1.0 - t.rho * t.rho;
    -LN_2PI - ln(t.sigma1) - ln(t.sigma2) - 0.5 * ln(d) - (u1 * u1 - 2.0 * t.rho * u1 * u2 + u2 * u2) / (2.0 * d)
}

/// Bivariate normal density `N(0; m, A)` for a 2x2 covariance `A = [[a11, a12], [a12, a22]]`.
fn normal_at_origin(m: [f64; 2], a11: f64, a12: f64, a22: f64) -> f64 {
    let det = a11 * a22 - a12 * a12;
    let q = ((a22 * m[0] * m[0] + a11 * m[1] * m[1]) - 2.0 * a12 * m[0] * m[1]) / det;
    exp(-0.5 * q) / (2.0 * PI * sqrt(det))
}

/// `integral K_b(v - x) psi(v; theta) dv` in closed form.
pub fn integral_term(theta: &LocalParams, x: [f64; 2], b: Bandwidths) -> f64 {
    let (s1, s2) = (theta.sigma1 / b.b1, theta.sigma2 / b.b2);
    let m = [(theta.mu1 - x[0]) / b.b1, (theta.mu2 - x[1]) / b.b2];
    2.0 * PI * normal_at_origin(m, s1 * s1 + 1.0, theta.rho * s1 * s2, s2 * s2 + 1.0)
}

fn check_theta(theta: &LocalParams) -> Result<()> {
    if theta.is_valid() && theta.sigma1.is_finite() && theta.sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("local parameters need sigma > 0 and |rho| < 1"))
    }
}

/// The local log-likelihood at gridpoint `x`, summed directly over the data.
pub fn local_loglik(theta: &LocalParams, x: [f64; 2], data: &[[f64; 2]], b: Bandwidths) -> Result<f64> {
    check_theta(theta)?;
    if data.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    let mut acc = 0.0;
    for &r in data {
        let k = kernel([r[0] - x[0], r[1] - x[1]], b);
        if k > 0.0 {
            acc += k * log_density(r, theta);
        }
    }
    let value = acc / data.len() as f64 - integral_term(theta, x, b);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numerical("local log-likelihood is not finite"))
    }
}

/// Kernel-weighted moments in standardized coordinates `z = (R - x) / b`,
/// each averaged over the full sample.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    s0: f64,
    s1: f64,
    s2: f64,
    s11: f64,
    s12: f64,
    s22: f64,
}

impl Moments {
    fn direct(x: [f64; 2], data: &[[f64; 2]], b: Bandwidths) -> Self {
        let mut m = Moments::default();
        for r in data {
            let (z1, z2) = ((r[0] - x[0]) / b.b1, (r[1] - x[1]) / b.b2);
            let w = exp(-0.5 * (z1 * z1 + z2 * z2));
            m.s0 += w;
            m.s1 += w * z1;
            m.s2 += w * z2;
            m.s11 += w * z1 * z1;
            m.s12 += w * z1 * z2;
            m.s22 += w * z2 * z2;
        }
        m.scale(1.0 / data.len() as f64)
    }

    fn scale(mut self, f: f64) -> Self {
        self.s0 *= f;
        self.s1 *= f;
        self.s2 *= f;
        self.s11 *= f;
        self.s12 *= f;
        self.s22 *= f;
        self
    }
}

/// Negative standardized objective `-(F - 2 pi G) / s0` and its gradient in
/// working parameters `(m1, m2, log s1, log s2, atanh rho)`.
fn objective(mo: &Moments, w: &[f64], grad: &mut [f64]) -> f64 {
    let (m1, m2) = (w[0], w[1]);
    let (s1, s2) = (exp(w[2]), exp(w[3]));
    let r = tanh(w[4]);
    let d = 1.0 - r * r;
    if !(d > 0.0) || !(s1 > 0.0) || !(s2 > 0.0) || !s1.is_finite() || !s2.is_finite() {
        return f64::INFINITY;
    }
    let a1 = mo.s1 - m1 * mo.s0;
    let a2 = mo.s2 - m2 * mo.s0;
    let c11 = mo.s11 - 2.0 * m1 * mo.s1 + m1 * m1 * mo.s0;
    let c22 = mo.s22 - 2.0 * m2 * mo.s2 + m2 * m2 * mo.s0;
    let c12 = mo.s12 - (m1 * mo.s2 + m2 * mo.s1) + m1 * m2 * mo.s0;
    let (i1, i2) = (1.0 / (s1 * s1), 1.0 / (s2 * s2));
    let i12 = 1.0 / (s1 * s2);
    let p = c12 * i12;
    let qs = (c11 * i1 + c22 * i2) - 2.0 * r * p;
    let f = mo.s0 * (-LN_2PI - (w[2] + w[3]) - 0.5 * ln(d)) - qs / (2.0 * d);

    let df = [
        (a1 * i1 - r * a2 * i12) / d,
        (a2 * i2 - r * a1 * i12) / d,
        -mo.s0 + (c11 * i1 - r * p) / d,
        -mo.s0 + (c22 * i2 - r * p) / d,
        mo.s0 * r + p - r * qs / d,
    ];

    // integral term 2 pi N(0; m, A), A = Sigma + I
    let a11 = s1 * s1 + 1.0;
    let a22 = s2 * s2 + 1.0;
    let a12 = r * s1 * s2;
    let det = a11 * a22 - a12 * a12;
    let (ai11, ai22, ai12) = (a22 / det, a11 / det, -a12 / det);
    let v1 = ai11 * m1 + ai12 * m2;
    let v2 = ai12 * m1 + ai22 * m2;
    let g = exp(-0.5 * (m1 * v1 + m2 * v2)) / sqrt(det);
    let cross = v1 * v2 - ai12;
    let dlog_g = [-v1, -v2, (v1 * v1 - ai11) * s1 * s1 + cross * a12, (v2 * v2 - ai22) * s2 * s2 + cross * a12, cross * d * s1 * s2];
    let inv = 1.0 / mo.s0;
    for k in 0..5 {
        grad[k] = -(df[k] - g * dlog_g[k]) * inv;
    }
    -(f - g) * inv
}

/// Chord-Newton refinement of a near-stationary point, with one
/// forward-difference Hessian of the analytic gradient. Returns the final
/// gradient norm, or `None` when that Hessian is not positive definite.
fn newton_polish(mo: &Moments, w: &mut [f64], max_steps: usize) -> Option<f64> {
    let mut g = [0.0; 5];
    if !objective(mo, w, &mut g).is_finite() {
        return None;
    }
    let mut hess = [0.0; 25];
    let mut gp = [0.0; 5];
    let mut wp = [0.0; 5];
    wp.copy_from_slice(w);
    for k in 0..5 {
        let h = 1e-6 * w[k].abs().max(1.0);
        wp[k] = w[k] + h;
        objective(mo, &wp, &mut gp);
        wp[k] = w[k];
        for r in 0..5 {
            hess[r * 5 + k] = (gp[r] - g[r]) / h;
        }
    }
    for i in 0..5 {
        for j in 0..i {
            let v = 0.5 * (hess[i * 5 + j] + hess[j * 5 + i]);
            hess[i * 5 + j] = v;
            hess[j * 5 + i] = v;
        }
    }
    let l = cholesky(&hess, 5)?;
    for _ in 0..max_steps {
        let gn = inf_norm(&g);
        if gn == 0.0 {
            break;
        }
        let d = cholesky_solve(&l, &g, 5);
        for k in 0..5 {
            wp[k] = w[k] - d[k];
        }
        if !objective(mo, &wp, &mut gp).is_finite() || inf_norm(&gp) >= gn {
            break;
        }
        w.copy_from_slice(&wp);
        g = gp;
    }
    Some(inf_norm(&g))
}

/// Working-parameter vector of `theta` in the frame standardized at `x`.
fn to_working(theta: &LocalParams, x: [f64; 2], b: Bandwidths) -> [f64; 5] {
    [
        (theta.mu1 - x[0]) / b.b1,
        (theta.mu2 - x[1]) / b.b2,
        ln(theta.sigma1 / b.b1),
        ln(theta.sigma2 / b.b2),
        atanh(theta.rho.clamp(-0.999, 0.999)),
    ]
}

fn from_working(w: &[f64], x: [f64; 2], b: Bandwidths) -> LocalParams {
    LocalParams::new(x[0] + b.b1 * w[0], x[1] + b.b2 * w[1], b.b1 * exp(w[2]), b.b2 * exp(w[3]), tanh(w[4]))
}

fn fit_from_moments(mo: &Moments, x: [f64; 2], b: Bandwidths, starts: &[LocalParams], opts: &LgcOptions) -> LocalParams {
    if !(mo.s0 >= opts.mass_threshold) {
        return LocalParams::masked(mo.s0);
    }
    let bfgs = BfgsOptions { max_iter: opts.max_iter, grad_tol: opts.grad_tol, rel_tol: 0.0 };
    for start in starts.iter().take(1 + opts.restarts) {
        if !start.is_valid() {
            continue;
        }
        let w0 = to_working(start, x, b);
        let mut m = minimize_bfgs(|w, g| objective(mo, w, g), &w0, &bfgs);
        // BFGS stalls once function differences drop below rounding; a few
        // Newton steps on the gradient take it well past grad_tol
        if m.grad_norm() < POLISH_RADIUS {
            let gn = newton_polish(mo, &mut m.x, 3);
            m.converged = gn.is_some_and(|gn| gn <= opts.grad_tol);
        }
        if m.converged {
            let mut p = from_working(&m.x, x, b);
            if p.is_valid() && p.sigma1.is_finite() && p.sigma2.is_finite() {
                p.converged = true;
                p.effective_mass = mo.s0;
                return p;
            }
        }
    }
    LocalParams::masked(mo.s0)
}

/// Starting points: the given one, then fallbacks used as restarts.
fn starts(init: &LocalParams, global: &LocalParams, x: [f64; 2], b: Bandwidths) -> [LocalParams; 3] {
    let decorrelated = LocalParams { rho: 0.0, ..*global };
    let centred = LocalParams::new(x[0], x[1], b.b1, b.b2, 0.0);
    [*init, decorrelated, centred]
}

/// Maximizes the local likelihood at `x` starting from `init`. Gridpoints
/// with too little kernel mass, or where every start fails, come back
/// masked (`converged == false`).
pub fn fit_gridpoint(x: [f64; 2], data: &[[f64; 2]], b: Bandwidths, init: &LocalParams, opts: &LgcOptions) -> LocalParams {
    if data.is_empty() {
        return LocalParams::masked(0.0);
    }
    let mo = Moments::direct(x, data, b);
    let global = LocalParams::from_moments(data);
    fit_from_moments(&mo, x, b, &starts(init, &global, x, b), opts)
}

/// Kernel moments for every gridpoint, computed from separable per-axis
/// kernel tables.
struct MomentField {
    moments: Vec<Moments>,
}

impl MomentField {
    fn new(data: &[[f64; 2]], grid: &Grid, b: Bandwidths, scratch: &mut Scratch) -> Self {
        let t = data.len();
        let (nx, ny) = (grid.xs.len(), grid.ys.len());
        scratch.fill(data, grid, b);
        let mut moments = Vec::with_capacity(nx * ny);
        let inv_t = 1.0 / t as f64;
        for i in 0..nx {
            let (k0x, k1x, k2x) = scratch.x_rows(i, t);
            for j in 0..ny {
                if grid.weights[i * ny + j] <= 0.0 {
                    moments.push(Moments::default());
                    continue;
                }
                let (k0y, k1y, k2y) = scratch.y_rows(j, t);
                let mut m = Moments::default();
                for s in 0..t {
                    let (a0, a1, a2) = (k0x[s], k1x[s], k2x[s]);
                    let (c0, c1, c2) = (k0y[s], k1y[s], k2y[s]);
                    m.s0 += a0 * c0;
                    m.s1 += a1 * c0;
                    m.s2 += a0 * c1;
                    m.s11 += a2 * c0;
                    m.s12 += a1 * c1;
                    m.s22 += a0 * c2;
                }
                moments.push(m.scale(inv_t));
            }
        }
        Self { moments }
    }
}

/// Reusable per-axis kernel tables: `k0 = exp(-z^2/2)`, `k1 = k0 z`, `k2 = k0 z^2`.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    x: [Vec<f64>; 3],
    y: [Vec<f64>; 3],
}

impl Scratch {
    fn fill(&mut self, data: &[[f64; 2]], grid: &Grid, b: Bandwidths) {
        fn axis(out: &mut [Vec<f64>; 3], nodes: &[f64], data: &[[f64; 2]], k: usize, bw: f64) {
            let t = data.len();
            for o in out.iter_mut() {
                o.clear();
                o.resize(nodes.len() * t, 0.0);
            }
            for (g, &c) in nodes.iter().enumerate() {
                for (s, r) in data.iter().enumerate() {
                    let z = (r[k] - c) / bw;
                    let w = exp(-0.5 * z * z);
                    out[0][g * t + s] = w;
                    out[1][g * t + s] = w * z;
                    out[2][g * t + s] = w * z * z;
                }
            }
        }
        axis(&mut self.x, &grid.xs, data, 0, b.b1);
        axis(&mut self.y, &grid.ys, data, 1, b.b2);
    }

    fn x_rows(&self, i: usize, t: usize) -> (&[f64], &[f64], &[f64]) {
        let r = i * t..(i + 1) * t;
        (&self.x[0][r.clone()], &self.x[1][r.clone()], &self.x[2][r])
    }

    fn y_rows(&self, j: usize, t: usize) -> (&[f64], &[f64], &[f64]) {
        let r = j * t..(j + 1) * t;
        (&self.y[0][r.clone()], &self.y[1][r.clone()], &self.y[2][r])
    }
}

/// Map estimation without the sample-size and masked-fraction checks; the
/// bootstrap uses this so a poor replicate only loses its masked points.
pub(crate) fn estimate_map_with(data: &[[f64; 2]], grid: &Grid, b: Bandwidths, opts: &LgcOptions, scratch: &mut Scratch) -> LgcMap {
    let field = MomentField::new(data, grid, b, scratch);
    let global = LocalParams::from_moments(data);
    let ny = grid.ys.len();
    let mut params: Vec<LocalParams> = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        if grid.weights[idx] <= 0.0 {
            params.push(LocalParams::masked(field.moments[idx].s0));
            continue;
        }
        let x = grid.point(idx);
        let (i, j) = (idx / ny, idx % ny);
        // average of the converged upper and left neighbours; this dependency
        // pattern is mirrored under transposition, keeping fits exchange-symmetric
        let neighbour = if opts.warm_start {
            let up = (i > 0).then(|| params[idx - ny]).filter(|p| p.converged);
            let left = (j > 0).then(|| params[idx - 1]).filter(|p| p.converged);
            match (up, left) {
                (Some(a), Some(b)) => Some(LocalParams::new(
                    0.5 * (a.mu1 + b.mu1),
                    0.5 * (a.mu2 + b.mu2),
                    0.5 * (a.sigma1 + b.sigma1),
                    0.5 * (a.sigma2 + b.sigma2),
                    0.5 * (a.rho + b.rho),
                )),
                (a, b) => a.or(b),
            }
        } else {
            None
        };
        let init = neighbour.unwrap_or(global);
        params.push(fit_from_moments(&field.moments[idx], x, b, &starts(&init, &global, x, b), opts));
    }
    LgcMap { grid: grid.clone(), params, bandwidths: b, sample_size: data.len() }
}

/// Estimates the local Gaussian parameters at every weighted gridpoint.
/// Returns the map and any warnings.
pub fn estimate_map(data: &[[f64; 2]], grid: &Grid, b: Bandwidths, opts: &LgcOptions) -> Result<(LgcMap, Vec<String>)> {
    let t = data.len();
    if t < MIN_SAMPLE {
        return Err(Error::invalid(format!("LGC estimation needs at least {MIN_SAMPLE} observations, got {t}")));
    }
    if data.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::invalid("sample contains non-finite values"));
    }
    let mut warnings = Vec::new();
    if t < 200 {
        warnings.push(format!("LGC map estimated from only {t} observations"));
    }
    let map = estimate_map_with(data, grid, b, opts, &mut Scratch::default());
    let weighted = grid.weights.iter().filter(|&&w| w > 0.0).count();
    let masked = map.masked_count();
    if weighted > 0 && masked as f64 > opts.max_masked_fraction * weighted as f64 {
        return Err(Error::numerical(format!("{masked} of {weighted} weighted gridpoints masked; try larger bandwidths")));
    }
    if masked > 0 {
        warnings.push(format!("{masked} of {weighted} weighted gridpoints masked"));
    }
    Ok((map, warnings))
}
