//! Sample statistics shared across modules.

use alloc::vec::Vec;

use crate::math::sqrt;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with `n - 1` denominator.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_dev(x: &[f64]) -> f64 {
    sqrt(variance(x))
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / sqrt(sxx * syy)
}

/// Linear-interpolation ("type 7") quantile of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h as usize; // floor for h >= 0
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

/// Kendall's tau-b in O(n log n) (Knight's merge-sort algorithm).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(y[i].total_cmp(&y[j])));

    // ties in x, and joint ties in (x, y)
    let (mut tied_x, mut tied_xy) = (0u64, 0u64);
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        let run = (j - i) as u64;
        tied_x += run * (run - 1) / 2;
        let mut k = i;
        while k < j {
            let mut l = k + 1;
            while l < j && y[idx[l]] == y[idx[k]] {
                l += 1;
            }
            let r = (l - k) as u64;
            tied_xy += r * (r - 1) / 2;
            k = l;
        }
        i = j;
    }

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = ys.clone();
    let swaps = merge_count(&mut ys, &mut buf);

    let mut tied_y = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && ys[j] == ys[i] {
            j += 1;
        }
        let run = (j - i) as u64;
        tied_y += run * (run - 1) / 2;
        i = j;
    }
    let total = (n as u64) * (n as u64 - 1) / 2;
    let concordant_minus_discordant = total as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * swaps as f64;
    concordant_minus_discordant / sqrt((total - tied_x) as f64 * (total - tied_y) as f64)
}

/// Sorts `v` ascending and returns the number of inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    let k = k + mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_statistic(x: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0, |d: f64, (i, &v)| {
        let f = cdf(v);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Ljung-Box portmanteau statistic over lags `1..=lags`.
pub fn ljung_box(x: &[f64], lags: usize) -> f64 {
    let n = x.len();
    let m = mean(x);
    let denom: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    let mut q = 0.0;
    for k in 1..=lags {
        let num: f64 = (k..n).map(|t| (x[t] - m) * (x[t - k] - m)).sum();
        let r = num / denom;
        q += r * r / (n - k) as f64;
    }
    n as f64 * (n as f64 + 2.0) * q
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn naive_tau_b(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut s, mut tx, mut ty) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let a = (x[i] - x[j]).signum() * if x[i] == x[j] { 0.0 } else { 1.0 };
                let b = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
                s += a * b;
                tx += a * a;
                ty += b * b;
            }
        }
        s / sqrt(tx * ty)
    }

    #[test]
    fn kendall_matches_pairwise_count() {
        let x = vec![1.0, 2.0, 2.0, 3.0, 5.0, 4.0, 7.0, 7.0, 0.5, 6.0];
        let y = vec![2.0, 1.0, 3.0, 3.0, 4.0, 6.0, 5.0, 5.0, 1.0, 9.0];
        assert!((kendall_tau(&x, &y) - naive_tau_b(&x, &y)).abs() < 1e-14);
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((kendall_tau(&x, &rev) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn type7_quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.25), 2.0);
        assert_eq!(quantile_sorted(&s, 0.1), 1.4);
        assert_eq!(quantile_sorted(&s, 1.0), 5.0);
        assert_eq!(quantile_sorted(&[4.0], 0.3), 4.0);
    }

    #[test]
    fn ljung_box_white_noise_is_small_for_alternating() {
        // perfectly alternating series has r_1 = -1 (approximately)
        let x: Vec<f64> = (0..200).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(ljung_box(&x, 1) > 150.0);
    }
}
