//! Scalar math and special functions.
//!
//! Everything routes through `libm` so results are identical with and
//! without `std`, which keeps seeded Monte Carlo output bit-reproducible.

pub use libm::{asin, cos, pow, sin};
pub use libm::{atanh, erfc, exp, expm1, fabs, lgamma as ln_gamma, log as ln, log1p, sqrt, tanh};

pub const PI: f64 = core::f64::consts::PI;
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn sq(x: f64) -> f64 {
    x * x
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    ln(p / (1.0 - p))
}

/// `ln(sum(exp(xs)))` without overflow. Empty input yields `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| exp(x - m)).sum();
    m + ln(s)
}

pub fn norm_pdf(x: f64) -> f64 {
    exp(-0.5 * x * x - 0.5 * LN_2PI)
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / core::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF (Wichura, AS 241, PPND16). Relative accuracy
/// about 1e-16 over the open unit interval.
pub fn norm_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if fabs(q) <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_13) * r + 67265.770_927_008_7) * r + 45921.953_931_549_87) * r
                + 13731.693_765_509_46)
                * r
                + 1971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r + 39307.895_800_092_71) * r + 21213.794_301_586_597) * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = sqrt(-ln(tail));
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6) * r + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r + 0.015_198_666_563_616_457) * r
                + 0.148_103_976_427_480_07)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r + 0.001_242_660_947_388_078_4) * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_87)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r + 1.846_318_317_510_054_8e-5) * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cont_frac(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cont_frac(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if fabs(del) < fabs(sum) * 1e-16 {
            break;
        }
    }
    sum * exp(-x + a * ln(x) - ln_gamma(a))
}

fn gamma_cont_frac(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if fabs(d) < tiny {
            d = tiny;
        }
        c = b + an / c;
        if fabs(c) < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if fabs(del - 1.0) < 1e-16 {
            break;
        }
    }
    exp(-x + a * ln(x) - ln_gamma(a)) * h
}

/// Upper tail of the chi-square distribution with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: f64) -> f64 {
    gamma_q(0.5 * dof, 0.5 * x)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

pub fn binom_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    exp(ln_choose(n, k) + k as f64 * ln(p) + (n - k) as f64 * log1p(-p))
}

/// `P(X <= k)` for `X ~ Binomial(n, p)`.
pub fn binom_cdf(k: u64, n: u64, p: f64) -> f64 {
    let s: f64 = (0..=k.min(n)).map(|i| binom_pmf(i, n, p)).sum();
    s.min(1.0)
}

/// Central acceptance region `[lo, hi]` for a Binomial(n, p) count at the
/// given confidence: each tail outside the region carries at most
/// `(1 - confidence) / 2` probability.
pub fn binom_acceptance_region(n: u64, p: f64, confidence: f64) -> (u64, u64) {
    let tail = 0.5 * (1.0 - confidence);
    let mut lo = 0;
    // largest lo with P(X < lo) <= tail
    while lo < n && binom_cdf(lo, n, p) <= tail {
        lo += 1;
    }
    let mut hi = n;
    // smallest hi with P(X > hi) <= tail
    while hi > 0 && 1.0 - binom_cdf(hi - 1, n, p) <= tail {
        hi -= 1;
    }
    (lo, hi)
}

/// Clopper-Pearson interval for `k` successes out of `n`.
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> (f64, f64) {
    let tail = 0.5 * (1.0 - confidence);
    let lower = if k == 0 {
        0.0
    } else {
        // P(X >= k | p) = tail
        bisect(|p| (1.0 - binom_cdf(k - 1, n, p)) - tail)
    };
    let upper = if k == n {
        1.0
    } else {
        // P(X <= k | p) = tail
        bisect(|p| tail - binom_cdf(k, n, p))
    };
    (lower, upper)
}

/// Root of an increasing function on [0, 1].
fn bisect(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.05, 0.3, 0.5, 0.77, 0.95, 0.999_999] {
            let x = norm_quantile(p);
            assert!((norm_cdf(x) - p).abs() < 1e-14 * p.max(1e-2), "p={p}");
        }
        assert!((norm_quantile(0.95) - 1.644_853_626_951_472_2).abs() < 1e-14);
    }

    #[test]
    fn chi2_critical_value() {
        // chi2(10) upper 5% point
        assert!((chi2_sf(18.307_038_053_275_146, 10.0) - 0.05).abs() < 1e-12);
        assert!((chi2_sf(2.0, 2.0) - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn binomial_region_covers_mass() {
        let (lo, hi) = binom_acceptance_region(200, 0.05, 0.99);
        let inside: f64 = (lo..=hi).map(|k| binom_pmf(k, 200, 0.05)).sum();
        assert!(inside >= 0.99);
        assert!(lo <= 10 && hi >= 10);
        let (l, u) = clopper_pearson(10, 200, 0.95);
        assert!(l < 0.05 && u > 0.05);
        assert!((l - 0.024_22).abs() < 1e-4 && (u - 0.090_05).abs() < 1e-4);
    }

    #[test]
    fn lse_is_stable() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
