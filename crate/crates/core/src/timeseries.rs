//! Bivariate return series and descriptive statistics.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ln, sqrt};
use crate::stats::{mean, quantile_sorted};

/// Aligned bivariate log-returns (percent) with a strictly increasing index.
///
/// The index is an opaque `i64` (the CLI stores Unix seconds; simulated
/// series use `0..n`). Labels, when present, are regime ids in `1..=C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    timestamps: Vec<i64>,
    values_a: Vec<f64>,
    values_b: Vec<f64>,
    labels: Option<Vec<usize>>,
}

impl ReturnSeries {
    pub fn new(timestamps: Vec<i64>, values_a: Vec<f64>, values_b: Vec<f64>) -> Result<Self> {
        if values_a.len() != values_b.len() || values_a.len() != timestamps.len() {
            return Err(Error::invalid(format!(
                "length mismatch: {} timestamps, {} and {} values",
                timestamps.len(),
                values_a.len(),
                values_b.len()
            )));
        }
        if let Some(t) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!("timestamps not strictly increasing at row {}", t + 1)));
        }
        if let Some(t) = values_a.iter().zip(&values_b).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at row {t}")));
        }
        Ok(Self { timestamps, values_a, values_b, labels: None })
    }

    /// A series indexed `0..n` from `(a, b)` pairs.
    pub fn from_points(points: &[[f64; 2]]) -> Result<Self> {
        let idx = (0..points.len() as i64).collect();
        Self::new(idx, points.iter().map(|p| p[0]).collect(), points.iter().map(|p| p[1]).collect())
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::invalid(format!("{} labels for {} observations", labels.len(), self.len())));
        }
        if labels.contains(&0) {
            return Err(Error::invalid("regime labels are 1-based"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn len(&self) -> usize {
        self.values_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_a.is_empty()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values_a(&self) -> &[f64] {
        &self.values_a
    }

    pub fn values_b(&self) -> &[f64] {
        &self.values_b
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.values_a.iter().zip(&self.values_b).map(|(&a, &b)| [a, b]).collect()
    }

    /// Same index and labels with replacement values.
    pub fn with_values(&self, values_a: Vec<f64>, values_b: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(self.timestamps.clone(), values_a, values_b)?;
        s.labels = self.labels.clone();
        Ok(s)
    }

    /// Number of regimes, taken as the largest label.
    pub fn n_regimes(&self) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l.iter().copied().max())
    }

    /// Observations grouped by regime; entry `c - 1` holds regime `c`.
    pub fn regime_groups(&self) -> Result<Vec<Vec<[f64; 2]>>> {
        let labels = self.labels.as_ref().ok_or_else(|| Error::invalid("series carries no regime labels"))?;
        let c = labels.iter().copied().max().unwrap_or(0);
        let mut groups = alloc::vec![Vec::new(); c];
        for (t, &l) in labels.iter().enumerate() {
            groups[l - 1].push([self.values_a[t], self.values_b[t]]);
        }
        Ok(groups)
    }
}

/// Percent log-returns `100 * ln(P_t / P_{t-1})`.
pub fn log_returns(prices: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = prices.iter().position(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!("price at position {i} is not a positive number")));
    }
    Ok(prices.windows(2).map(|w| 100.0 * ln(w[1] / w[0])).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub iqr: f64,
    /// Sample variance (`n - 1` denominator).
    pub variance: f64,
    pub skewness: f64,
    /// Non-excess kurtosis; 3 for a Gaussian.
    pub kurtosis: f64,
    pub jarque_bera: f64,
}

/// Descriptive statistics of a sample with at least four observations.
pub fn describe(x: &[f64]) -> Result<DescriptiveStats> {
    let n = x.len();
    if n < 4 {
        return Err(Error::invalid(format!("need at least 4 observations, got {n}")));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = mean(x);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let nf = n as f64;
    let variance = m2 / (nf - 1.0);
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let (skewness, kurtosis) = if m2 > 0.0 { (m3 / (m2 * sqrt(m2)), m4 / (m2 * m2)) } else { (0.0, 3.0) };
    let excess = kurtosis - 3.0;
    Ok(DescriptiveStats {
        n,
        mean: m,
        median: quantile_sorted(&sorted, 0.5),
        min: sorted[0],
        max: sorted[n - 1],
        iqr: quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25),
        variance,
        skewness,
        kurtosis,
        jarque_bera: nf / 6.0 * (skewness * skewness + excess * excess / 4.0),
    })
}

/// Which slice of the sample a row of a descriptive table covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    All,
    Regime(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: Group,
    pub stats: DescriptiveStats,
}

/// Statistics per regime (ascending) followed by the pooled sample. Regimes
/// with fewer than four observations are omitted and reported as warnings.
pub fn describe_by_label(x: &[f64], labels: Option<&[usize]>) -> Result<(Vec<GroupStats>, Vec<String>)> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    if let Some(labels) = labels {
        if labels.len() != x.len() {
            return Err(Error::invalid("labels and sample differ in length"));
        }
        let c = labels.iter().copied().max().unwrap_or(0);
        for regime in 1..=c {
            let group: Vec<f64> = x.iter().zip(labels).filter(|(_, &l)| l == regime).map(|(&v, _)| v).collect();
            match describe(&group) {
                Ok(stats) => rows.push(GroupStats { group: Group::Regime(regime), stats }),
                Err(_) => warnings.push(format!("regime {regime} has {} observations; omitted", group.len())),
            }
        }
    }
    rows.push(GroupStats { group: Group::All, stats: describe(x)? });
    Ok((rows, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn log_return_definition() {
        let r = log_returns(&[100.0, 110.0]).unwrap();
        assert!((r[0] - 100.0 * 1.1f64.ln()).abs() < 1e-12);
        assert!((r[0] - 9.531).abs() < 1e-3);
        assert_eq!(log_returns(&[100.0, 100.0, 100.0]).unwrap(), vec![0.0, 0.0]);
        assert!(log_returns(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn hand_computed_stats() {
        let d = describe(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(d.mean, 3.0);
        assert_eq!(d.median, 3.0);
        assert_eq!(d.iqr, 2.0);
        assert!((d.variance - 2.5).abs() < 1e-15);
        assert_eq!(d.skewness, 0.0);
        // m2 = 2, m4 = 6.8 -> kurtosis 1.7
        assert!((d.kurtosis - 1.7).abs() < 1e-14);
        assert!(describe(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn jarque_bera_zero_for_gaussian_moments() {
        // m2 = 1, m3 = 0, m4 = 3
        let r3 = 3f64.sqrt();
        let d = describe(&[-r3, 0.0, 0.0, 0.0, 0.0, r3]).unwrap();
        assert!(d.skewness.abs() < 1e-15);
        assert!((d.kurtosis - 3.0).abs() < 1e-14);
        assert!(d.jarque_bera < 1e-25);
    }

    #[test]
    fn series_invariants() {
        assert!(ReturnSeries::new(vec![0, 0], vec![1.0, 2.0], vec![1.0, 2.0]).is_err());
        assert!(ReturnSeries::new(vec![0, 1], vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(ReturnSeries::new(vec![0, 1], vec![1.0, f64::NAN], vec![1.0, 2.0]).is_err());
        let s = ReturnSeries::from_points(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let s = s.with_labels(vec![1, 2, 1]).unwrap();
        let g = s.regime_groups().unwrap();
        assert_eq!(g[0], vec![[1.0, 2.0], [5.0, 6.0]]);
        assert!(s.clone().with_labels(vec![0, 1, 1]).is_err());
    }

    #[test]
    fn small_groups_are_omitted() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let (rows, warnings) = describe_by_label(&x, Some(&[1, 1, 1, 1, 2, 2])).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].group, Group::Regime(1));
        assert_eq!(rows[1].group, Group::All);
        assert_eq!(warnings.len(), 1);
    }
}
