//! Bootstrap test of equal local Gaussian correlation across regimes.
//!
//! For each pair of regimes `k > l` the statistic
//! `D1 = n^-2 sum_ij (rho_k(x_ij) - rho_l(x_ij))^2 w(x_ij)` compares the two
//! maps on a common grid. Its null distribution comes from resamples that
//! draw from the pooled observations with replacement and refill every
//! regime at its original size.

use alloc::vec;
use alloc::vec::Vec;
use alloc::{format, string::String};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{Executor, Sequential};
use crate::lgc::{estimate_map_with, BandwidthSpec, Bandwidths, Grid, GridSpec, LgcMap, LgcOptions, Scratch};
use crate::rng;
use crate::timeseries::ReturnSeries;

pub const MIN_REGIME_SIZE: usize = 30;
pub const SMALL_REGIME_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    None,
    #[default]
    Bonferroni,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestConfig {
    pub n_boot: usize,
    pub alpha: f64,
    pub correction: Correction,
    pub grid: GridSpec,
    pub bandwidths: BandwidthSpec,
    pub lgc: LgcOptions,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            n_boot: 1000,
            alpha: 0.05,
            correction: Correction::Bonferroni,
            grid: GridSpec::default(),
            bandwidths: BandwidthSpec::default(),
            lgc: LgcOptions::default(),
            seed: 0,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_boot < 100 {
            return Err(Error::invalid(format!("n_boot must be at least 100, got {}", self.n_boot)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::OutOfRange { name: "alpha", value: self.alpha, admissible: "(0, 1)" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    /// Regime labels, `k > l`.
    pub k: usize,
    pub l: usize,
    pub d1_observed: f64,
    /// One value per bootstrap replicate; NaN where the replicate had no
    /// usable gridpoint.
    pub d1_boot: Vec<f64>,
    /// Replicates with `D1* >= D1`.
    pub exceedances: usize,
    /// `(1 + exceedances) / (B + 1)` over usable replicates.
    pub p_raw: f64,
    /// `exceedances / B`.
    pub p_count: f64,
    /// `min(1, m p_raw)` under Bonferroni, otherwise `p_raw`.
    pub p_adjusted: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub n_regimes: usize,
    pub regime_sizes: Vec<usize>,
    pub pairs: Vec<PairResult>,
    pub alpha: f64,
    pub correction: Correction,
    /// Threshold each raw p-value is compared with.
    pub p_threshold: f64,
    pub n_boot: usize,
    /// Replicates in which some pair had no usable gridpoint.
    pub failed_replicates: usize,
    pub grid: Grid,
    pub bandwidths: Bandwidths,
    /// Observed map per regime, in label order.
    pub maps: Vec<LgcMap>,
    pub warnings: Vec<String>,
}

impl TestReport {
    pub fn pair(&self, k: usize, l: usize) -> Option<&PairResult> {
        let (k, l) = if k > l { (k, l) } else { (l, k) };
        self.pairs.iter().find(|p| p.k == k && p.l == l)
    }

    pub fn any_rejected(&self) -> bool {
        self.pairs.iter().any(|p| p.reject)
    }
}

/// D1 between two maps on the same grid, with the number of gridpoints it
/// averages over. Weighted gridpoints masked in either map are dropped from
/// both the sum and the normalizer.
pub fn d1_statistic(map_k: &LgcMap, map_l: &LgcMap) -> Result<(f64, usize)> {
    if map_k.grid != map_l.grid {
        return Err(Error::invalid("maps were estimated on different grids"));
    }
    let grid = &map_k.grid;
    let (mut sum, mut dropped, mut used) = (0.0, 0usize, 0usize);
    for (idx, &w) in grid.weights().iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        if map_k.params[idx].converged && map_l.params[idx].converged {
            let d = map_k.params[idx].rho - map_l.params[idx].rho;
            sum += d * d * w;
            used += 1;
        } else {
            dropped += 1;
        }
    }
    if used == 0 {
        return Err(Error::numerical("no gridpoint is usable in both maps"));
    }
    let n = grid.len() - dropped;
    Ok((sum / n as f64, n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub p_adjusted: f64,
    pub threshold: f64,
    pub reject: bool,
}

/// Multiple-comparison adjustment of `p` at level `alpha` over `m` tests.
pub fn p_adjust(p: &[f64], alpha: f64, correction: Correction, m: usize) -> Vec<Decision> {
    let m = m.max(1) as f64;
    p.iter()
        .map(|&pv| match correction {
            Correction::None => Decision { p_adjusted: pv, threshold: alpha, reject: pv < alpha },
            Correction::Bonferroni => {
                let threshold = alpha / m;
                Decision { p_adjusted: (m * pv).min(1.0), threshold, reject: pv < threshold }
            }
        })
        .collect()
}

pub fn bootstrap_test(data: &ReturnSeries, cfg: &TestConfig) -> Result<TestReport> {
    bootstrap_test_with(data, cfg, &Sequential)
}

/// Runs the test with replicates distributed over `exec`.
pub fn bootstrap_test_with<E: Executor>(data: &ReturnSeries, cfg: &TestConfig, exec: &E) -> Result<TestReport> {
    cfg.validate()?;
    let groups = data.regime_groups()?;
    let c = groups.len();
    let mut warnings = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        if g.len() < MIN_REGIME_SIZE {
            return Err(Error::invalid(format!("regime {} has {} observations; at least {MIN_REGIME_SIZE} are required", i + 1, g.len())));
        }
        if g.len() < SMALL_REGIME_SIZE {
            warnings.push(format!("regime {} has only {} observations", i + 1, g.len()));
        }
    }
    if c < 2 {
        return Err(Error::invalid("the test needs at least 2 regimes"));
    }
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let pooled: Vec<[f64; 2]> = groups.iter().flatten().copied().collect();
    let grid = cfg.grid.resolve(&pooled)?;
    let bw = cfg.bandwidths.resolve(&pooled)?;

    let mut scratch = Scratch::default();
    let maps: Vec<LgcMap> = groups.iter().map(|g| estimate_map_with(g, &grid, bw, &cfg.lgc, &mut scratch)).collect();
    let weighted = grid.weights().iter().filter(|&&w| w > 0.0).count();
    for (i, m) in maps.iter().enumerate() {
        if m.masked_count() as f64 > cfg.lgc.max_masked_fraction * weighted as f64 {
            return Err(Error::numerical(format!(
                "{} of {weighted} weighted gridpoints masked in the map of regime {}; try larger bandwidths",
                m.masked_count(),
                i + 1
            )));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..c).flat_map(|k| (0..k).map(move |l| (k, l))).collect();
    let observed: Vec<f64> = pairs.iter().map(|&(k, l)| d1_statistic(&maps[k], &maps[l]).map(|d| d.0)).collect::<Result<_>>()?;

    let replicates: Vec<Vec<f64>> = exec.map(cfg.n_boot, |b| {
        let mut rng = rng::stream(cfg.seed, b as u64);
        let mut scratch = Scratch::default();
        let n = pooled.len();
        let mut boot_maps = Vec::with_capacity(c);
        for &size in &sizes {
            let sample: Vec<[f64; 2]> = (0..size).map(|_| pooled[rng.random_range(0..n)]).collect();
            boot_maps.push(estimate_map_with(&sample, &grid, bw, &cfg.lgc, &mut scratch));
        }
        pairs.iter().map(|&(k, l)| d1_statistic(&boot_maps[k], &boot_maps[l]).map_or(f64::NAN, |d| d.0)).collect()
    });

    let failed_replicates = replicates.iter().filter(|r| r.iter().any(|v| v.is_nan())).count();
    let m = pairs.len();
    let mut results = Vec::with_capacity(m);
    for (q, &(k, l)) in pairs.iter().enumerate() {
        let d1_boot: Vec<f64> = replicates.iter().map(|r| r[q]).collect();
        let usable = d1_boot.iter().filter(|v| !v.is_nan()).count();
        let exceedances = d1_boot.iter().filter(|&&v| v >= observed[q]).count();
        let p_raw = (1 + exceedances) as f64 / (usable + 1) as f64;
        let p_count = exceedances as f64 / usable.max(1) as f64;
        results.push(PairResult {
            k: k + 1,
            l: l + 1,
            d1_observed: observed[q],
            d1_boot,
            exceedances,
            p_raw,
            p_count,
            p_adjusted: p_raw,
            reject: false,
        });
    }
    // only Bonferroni when more than one comparison is made
    let correction = if m > 1 { cfg.correction } else { Correction::None };
    let decisions = p_adjust(&results.iter().map(|r| r.p_raw).collect::<Vec<_>>(), cfg.alpha, correction, m);
    for (r, d) in results.iter_mut().zip(&decisions) {
        r.p_adjusted = d.p_adjusted;
        r.reject = d.reject;
    }
    if failed_replicates > 0 {
        warnings.push(format!("{failed_replicates} of {} replicates had a pair without usable gridpoints", cfg.n_boot));
    }
    Ok(TestReport {
        n_regimes: c,
        regime_sizes: sizes,
        pairs: results,
        alpha: cfg.alpha,
        correction,
        p_threshold: decisions.first().map_or(cfg.alpha, |d| d.threshold),
        n_boot: cfg.n_boot,
        failed_replicates,
        grid,
        bandwidths: bw,
        maps,
        warnings,
    })
}

/// `C x C` matrix of raw p-values (symmetric, NaN on the diagonal).
pub fn p_value_matrix(report: &TestReport) -> Vec<Vec<f64>> {
    let c = report.n_regimes;
    let mut m = vec![vec![f64::NAN; c]; c];
    for p in &report.pairs {
        m[p.k - 1][p.l - 1] = p.p_raw;
        m[p.l - 1][p.k - 1] = p.p_raw;
    }
    m
}
