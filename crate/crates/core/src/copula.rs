//! Copula data-generating processes with Gaussian marginals.
//!
//! Clayton and Gumbel pairs come from the Marshall-Olkin frailty
//! construction (gamma and positive-stable frailties respectively); the
//! Gaussian copula from a Cholesky factor of the 2x2 correlation matrix.
//! All three samplers are exact and rejection-free.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{asin, exp, expm1, ln, log1p, norm_cdf, norm_quantile, pow, sin, sqrt, PI};
use crate::rng;
use crate::timeseries::ReturnSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaFamily {
    Clayton,
    Gumbel,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub family: CopulaFamily,
    pub param: f64,
    #[serde(default)]
    pub marginal_mean_a: f64,
    #[serde(default)]
    pub marginal_mean_b: f64,
    #[serde(default = "unit")]
    pub marginal_sd_a: f64,
    #[serde(default = "unit")]
    pub marginal_sd_b: f64,
}

fn unit() -> f64 {
    1.0
}

impl CopulaSpec {
    pub fn new(family: CopulaFamily, param: f64) -> Self {
        Self { family, param, marginal_mean_a: 0.0, marginal_mean_b: 0.0, marginal_sd_a: 1.0, marginal_sd_b: 1.0 }
    }

    pub fn clayton(theta: f64) -> Self {
        Self::new(CopulaFamily::Clayton, theta)
    }

    pub fn gumbel(theta: f64) -> Self {
        Self::new(CopulaFamily::Gumbel, theta)
    }

    pub fn gaussian(rho: f64) -> Self {
        Self::new(CopulaFamily::Gaussian, rho)
    }

    /// Both marginals `N(mean, sd^2)`.
    pub fn with_marginals(mut self, mean: f64, sd: f64) -> Self {
        self.marginal_mean_a = mean;
        self.marginal_mean_b = mean;
        self.marginal_sd_a = sd;
        self.marginal_sd_b = sd;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_param(self.family, self.param)?;
        for (name, sd) in [("marginal_sd_a", self.marginal_sd_a), ("marginal_sd_b", self.marginal_sd_b)] {
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::OutOfRange { name, value: sd, admissible: "(0, inf)" });
            }
        }
        if !(self.marginal_mean_a.is_finite() && self.marginal_mean_b.is_finite()) {
            return Err(Error::invalid("marginal means must be finite"));
        }
        Ok(())
    }

    /// Short human-readable label, e.g. `clayton(2)`.
    pub fn label(&self) -> alloc::string::String {
        let name = match self.family {
            CopulaFamily::Clayton => "clayton",
            CopulaFamily::Gumbel => "gumbel",
            CopulaFamily::Gaussian => "gaussian",
        };
        alloc::format!("{name}({})", self.param)
    }
}

fn check_param(family: CopulaFamily, p: f64) -> Result<()> {
    let ok = match family {
        CopulaFamily::Clayton => p > 0.0 && p.is_finite(),
        CopulaFamily::Gumbel => p >= 1.0 && p.is_finite(),
        CopulaFamily::Gaussian => p > -1.0 && p < 1.0,
    };
    if ok {
        return Ok(());
    }
    Err(match family {
        CopulaFamily::Clayton => Error::OutOfRange { name: "clayton theta", value: p, admissible: "(0, inf)" },
        CopulaFamily::Gumbel => Error::OutOfRange { name: "gumbel theta", value: p, admissible: "[1, inf)" },
        CopulaFamily::Gaussian => Error::OutOfRange { name: "gaussian rho", value: p, admissible: "(-1, 1)" },
    })
}

/// Population Kendall's tau of the copula.
pub fn kendall_tau(family: CopulaFamily, param: f64) -> Result<f64> {
    check_param(family, param)?;
    Ok(match family {
        CopulaFamily::Clayton => param / (param + 2.0),
        CopulaFamily::Gumbel => 1.0 - 1.0 / param,
        CopulaFamily::Gaussian => 2.0 / PI * asin(param),
    })
}

/// A uniform coordinate carried together with its complement, so that
/// both tails keep full precision through the inverse CDF.
#[derive(Debug, Clone, Copy)]
struct Uniform {
    u: f64,
    one_minus_u: f64,
}

impl Uniform {
    fn normal_score(self) -> f64 {
        if self.u < 0.5 {
            norm_quantile(self.u)
        } else {
            -norm_quantile(self.one_minus_u)
        }
    }
}

/// Positive stable variate with Laplace transform `exp(-s^alpha)`,
/// `0 < alpha < 1` (Kanter's representation).
fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    let theta = PI * u;
    let w: f64 = Exp1.sample(rng);
    let a = sin(alpha * theta) / pow(sin(theta), 1.0 / alpha);
    let b = pow(sin((1.0 - alpha) * theta) / w, (1.0 - alpha) / alpha);
    a * b
}

/// Draws `n` points on the normal-score scale, i.e. with standard normal
/// marginals and the requested copula.
fn sample_scores<R: Rng + ?Sized>(family: CopulaFamily, param: f64, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n);
    match family {
        CopulaFamily::Gaussian => {
            let c = sqrt(1.0 - param * param);
            for _ in 0..n {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                out.push([z1, param * z1 + c * z2]);
            }
        }
        CopulaFamily::Clayton => {
            // psi(t) = (1 + t)^(-1/theta), frailty V ~ Gamma(1/theta, 1)
            let gamma = Gamma::new(1.0 / param, 1.0).expect("validated shape");
            for _ in 0..n {
                let v: f64 = gamma.sample(rng);
                let mut pair = [0.0; 2];
                for p in pair.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    // log u = -(1/theta) log(1 + e / v)
                    let log_u = -ln1p_ratio(e, v) / param;
                    *p = Uniform { u: exp(log_u), one_minus_u: -expm1(log_u) }.normal_score();
                }
                out.push(pair);
            }
        }
        CopulaFamily::Gumbel => {
            // psi(t) = exp(-t^(1/theta)), frailty positive stable(1/theta)
            let alpha = 1.0 / param;
            for _ in 0..n {
                let v = if param == 1.0 { 1.0 } else { positive_stable(alpha, rng) };
                let mut pair = [0.0; 2];
                for p in pair.iter_mut() {
                    let e: f64 = Exp1.sample(rng);
                    let t = pow(e / v, alpha);
                    *p = Uniform { u: exp(-t), one_minus_u: -expm1(-t) }.normal_score();
                }
                out.push(pair);
            }
        }
    }
    out
}

/// `ln(1 + e / v)` accurate for both tiny and huge ratios.
fn ln1p_ratio(e: f64, v: f64) -> f64 {
    let r = e / v;
    if r.is_finite() {
        log1p(r)
    } else {
        ln(e) - ln(v)
    }
}

/// Draws `n` points from the copula with the spec's Gaussian marginals.
pub fn sample_points<R: Rng + ?Sized>(spec: &CopulaSpec, n: usize, rng: &mut R) -> Result<Vec<[f64; 2]>> {
    spec.validate()?;
    let mut pts = sample_scores(spec.family, spec.param, n, rng);
    for p in pts.iter_mut() {
        p[0] = spec.marginal_mean_a + spec.marginal_sd_a * p[0];
        p[1] = spec.marginal_mean_b + spec.marginal_sd_b * p[1];
    }
    Ok(pts)
}

/// Uniform-scale draws `(u1, u2)` from the copula.
pub fn sample_uniforms<R: Rng + ?Sized>(family: CopulaFamily, param: f64, n: usize, rng: &mut R) -> Result<Vec<[f64; 2]>> {
    check_param(family, param)?;
    let pts = sample_scores(family, param, n, rng);
    Ok(pts.into_iter().map(|[a, b]| [norm_cdf(a), norm_cdf(b)]).collect())
}

/// Seeded sample as a return series indexed `0..n`.
pub fn sample(spec: &CopulaSpec, n: usize, seed: u64) -> Result<ReturnSeries> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let mut rng = rng::stream(seed, 0);
    let pts = sample_points(spec, n, &mut rng)?;
    ReturnSeries::from_points(&pts)
}
