//! Quasi-Newton minimization (BFGS with a strong-Wolfe line search) and
//! finite-difference derivatives.
//!
//! Objectives are closures `f(x, grad) -> value` that fill `grad` and return
//! the objective value. Non-finite values are treated as "step too long".

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{fabs, sqrt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the infinity norm of the gradient falls below this.
    pub grad_tol: f64,
    /// Stop when the relative change of the objective between iterations
    /// falls below this. Zero disables the test.
    pub rel_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-6, rel_tol: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl Minimum {
    pub fn grad_norm(&self) -> f64 {
        inf_norm(&self.grad)
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &g| m.max(fabs(g)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x, g);
        if v.is_finite() && g.iter().all(|d| d.is_finite()) {
            v
        } else {
            f64::INFINITY
        }
    }
}

/// Minimizes `f` from `x0` with BFGS.
pub fn minimize_bfgs<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut obj = Counted { f, evals: 0 };
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = obj.eval(&x, &mut g);
    if !fx.is_finite() {
        return Minimum { x, value: fx, grad: g, iterations: 0, evaluations: obj.evals, converged: false };
    }
    // inverse Hessian approximation, row-major
    let mut h = identity(n);
    let mut first_step = true;
    let mut resets = 0;
    let mut converged = inf_norm(&g) < opts.grad_tol;
    let mut iter = 0;
    let mut p = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];

    while !converged && iter < opts.max_iter {
        iter += 1;
        for i in 0..n {
            p[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&p, &g);
        if !(slope < 0.0) {
            h = identity(n);
            for i in 0..n {
                p[i] = -g[i];
            }
            slope = -dot(&g, &g);
            first_step = true;
        }
        let alpha0 = if first_step { (1.0 / sqrt(dot(&p, &p))).min(1.0) } else { 1.0 };
        let ls = line_search(&mut obj, &x, fx, &p, slope, alpha0, &mut x_new, &mut g_new);
        let Some(f_new) = ls else {
            if resets < 2 {
                resets += 1;
                h = identity(n);
                first_step = true;
                continue;
            }
            // no descent possible even along the gradient: stationary to
            // working precision, which the relative-change test accepts
            converged = opts.rel_tol > 0.0;
            break;
        };
        for i in 0..n {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        let sy = dot(&s, &y);
        let f_old = fx;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if sy > 1e-12 * sqrt(dot(&s, &s) * dot(&y, &y)) {
            if first_step {
                // Shanno-Phua scaling of the initial inverse Hessian
                let scale = sy / dot(&y, &y);
                for v in h.iter_mut() {
                    *v *= scale;
                }
            }
            let rho = 1.0 / sy;
            for i in 0..n {
                hy[i] = (0..n).map(|j| h[i * n + j] * y[j]).sum();
            }
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            first_step = false;
        }
        if inf_norm(&g) < opts.grad_tol || (opts.rel_tol > 0.0 && fabs(f_old - fx) <= opts.rel_tol * fabs(fx).max(1e-300)) {
            converged = true;
        }
    }
    Minimum { x, value: fx, grad: g, iterations: iter, evaluations: obj.evals, converged }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

/// Strong-Wolfe line search (bracketing + zoom). Fills `x_new`/`g_new` with
/// the accepted point.
#[allow(clippy::too_many_arguments)]
fn line_search<F: FnMut(&[f64], &mut [f64]) -> f64>(
    obj: &mut Counted<F>,
    x: &[f64],
    f0: f64,
    p: &[f64],
    slope0: f64,
    alpha_init: f64,
    x_new: &mut [f64],
    g_new: &mut [f64],
) -> Option<f64> {
    let mut phi = |a: f64, xn: &mut [f64], gn: &mut [f64], obj: &mut Counted<F>| -> (f64, f64) {
        for i in 0..x.len() {
            xn[i] = x[i] + a * p[i];
        }
        let v = obj.eval(xn, gn);
        (v, dot(gn, p))
    };
    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = slope0;
    let mut a = alpha_init;
    for i in 0..40 {
        let (fa, da) = phi(a, x_new, g_new, obj);
        if !fa.is_finite() {
            // shrink into the finite region
            a = a_prev + 0.25 * (a - a_prev);
            if a - a_prev < 1e-16 {
                return None;
            }
            continue;
        }
        if fa > f0 + C1 * a * slope0 || (i > 0 && fa >= f_prev) {
            return zoom(&mut phi, obj, f0, slope0, a_prev, f_prev, d_prev, a, fa, da, x_new, g_new);
        }
        if fabs(da) <= -C2 * slope0 {
            return Some(fa);
        }
        if da >= 0.0 {
            return zoom(&mut phi, obj, f0, slope0, a, fa, da, a_prev, f_prev, d_prev, x_new, g_new);
        }
        a_prev = a;
        f_prev = fa;
        d_prev = da;
        a *= 2.0;
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<F, P>(
    phi: &mut P,
    obj: &mut Counted<F>,
    f0: f64,
    slope0: f64,
    mut a_lo: f64,
    mut f_lo: f64,
    mut d_lo: f64,
    mut a_hi: f64,
    mut f_hi: f64,
    mut d_hi: f64,
    x_new: &mut [f64],
    g_new: &mut [f64],
) -> Option<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    P: FnMut(f64, &mut [f64], &mut [f64], &mut Counted<F>) -> (f64, f64),
{
    for _ in 0..40 {
        let a = interpolate(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi);
        let (fa, da) = phi(a, x_new, g_new, obj);
        if !fa.is_finite() || fa > f0 + C1 * a * slope0 || fa >= f_lo {
            a_hi = a;
            f_hi = if fa.is_finite() { fa } else { f64::MAX };
            d_hi = if fa.is_finite() { da } else { f64::NAN };
        } else {
            if fabs(da) <= -C2 * slope0 {
                return Some(fa);
            }
            if da * (a_hi - a_lo) >= 0.0 {
                a_hi = a_lo;
                f_hi = f_lo;
                d_hi = d_lo;
            }
            a_lo = a;
            f_lo = fa;
            d_lo = da;
        }
        if fabs(a_hi - a_lo) < 1e-14 * a_lo.max(1e-14) {
            break;
        }
    }
    // accept the best sufficiently-decreasing point found, if any
    if a_lo > 0.0 && f_lo < f0 {
        let (fa, _) = phi(a_lo, x_new, g_new, obj);
        return Some(fa);
    }
    None
}

/// Cubic interpolation of the minimizer on [a_lo, a_hi], safeguarded.
fn interpolate(a_lo: f64, f_lo: f64, d_lo: f64, a_hi: f64, f_hi: f64, d_hi: f64) -> f64 {
    let (lo, hi) = if a_lo < a_hi { (a_lo, a_hi) } else { (a_hi, a_lo) };
    let width = hi - lo;
    let fallback = 0.5 * (a_lo + a_hi);
    if !(f_hi.is_finite() && d_hi.is_finite()) || f_hi == f64::MAX {
        return fallback;
    }
    let d1 = d_lo + d_hi - 3.0 * (f_lo - f_hi) / (a_lo - a_hi);
    let disc = d1 * d1 - d_lo * d_hi;
    if disc < 0.0 {
        return fallback;
    }
    let d2 = (a_hi - a_lo).signum() * sqrt(disc);
    let a = a_hi - (a_hi - a_lo) * (d_hi + d2 - d1) / (d_hi - d_lo + 2.0 * d2);
    if !a.is_finite() || a < lo + 0.05 * width || a > hi - 0.05 * width {
        fallback
    } else {
        a
    }
}

/// Step used for finite differences at coordinate value `x`.
#[inline]
pub fn fd_step(x: f64, rel: f64) -> f64 {
    rel * fabs(x).max(1.0)
}

/// Central-difference gradient of `f` at `x`; returns `f(x)`.
pub fn central_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], grad: &mut [f64]) -> f64 {
    let fx = f(x);
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = fd_step(x[i], 1e-5);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    fx
}

/// Central-difference Hessian of `f` at `x` (row-major, symmetric).
pub fn central_hessian<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let hs: Vec<f64> = x.iter().map(|&v| fd_step(v, 1e-4)).collect();
    let f0 = f(x);
    let mut h = vec![0.0; n * n];
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + hs[i];
        let fp = f(&xp);
        xp[i] = x[i] - hs[i];
        let fm = f(&xp);
        xp[i] = x[i];
        h[i * n + i] = (fp - 2.0 * f0 + fm) / (hs[i] * hs[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64, xp: &mut Vec<f64>| {
                xp[i] = x[i] + si * hs[i];
                xp[j] = x[j] + sj * hs[j];
                let v = f(xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0, &mut xp) - corner(1.0, -1.0, &mut xp) - corner(-1.0, 1.0, &mut xp) + corner(-1.0, -1.0, &mut xp))
                / (4.0 * hs[i] * hs[j]);
            h[i * n + j] = v;
            h[j * n + i] = v;
        }
    }
    h
}

/// Central-difference Jacobian of a vector map `f: R^n -> R^m` (row-major `m x n`).
pub fn central_jacobian<F: FnMut(&[f64]) -> Vec<f64>>(f: &mut F, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let mut jac = vec![0.0; m * n];
    let mut xp = x.to_vec();
    for c in 0..n {
        let h = fd_step(x[c], 1e-6);
        xp[c] = x[c] + h;
        let fp = f(&xp);
        xp[c] = x[c] - h;
        let fm = f(&xp);
        xp[c] = x[c];
        for r in 0..m {
            jac[r * n + c] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a)
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let m = minimize_bfgs(rosenbrock, &[-1.2, 1.0], &BfgsOptions { grad_tol: 1e-10, ..Default::default() });
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-8 && (m.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn bfgs_handles_infinite_region() {
        // minimum at x = 1 but objective undefined for x <= 0
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] <= 0.0 {
                return f64::INFINITY;
            }
            g[0] = 1.0 - 1.0 / x[0];
            x[0] - x[0].ln()
        };
        let m = minimize_bfgs(f, &[5.0], &BfgsOptions { grad_tol: 1e-10, ..Default::default() });
        assert!(m.converged && (m.x[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn finite_differences_match_analytic() {
        let mut f = |x: &[f64]| x[0].powi(3) * x[1] + (x[1]).exp();
        let x = [1.3, -0.4];
        let mut g = [0.0; 2];
        central_gradient(&mut f, &x, &mut g);
        assert!((g[0] - 3.0 * 1.69 * -0.4).abs() < 1e-8);
        assert!((g[1] - (1.3f64.powi(3) + (-0.4f64).exp())).abs() < 1e-8);
        let h = central_hessian(&mut f, &x);
        assert!((h[0] - 6.0 * 1.3 * -0.4).abs() < 1e-5);
        assert!((h[1] - 3.0 * 1.69).abs() < 1e-5);
        assert!((h[3] - (-0.4f64).exp()).abs() < 1e-5);
    }
}
