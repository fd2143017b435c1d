//! Monte Carlo studies of the equality test: level under a common DGP,
//! power under different regime DGPs, and power when regimes are
//! classified by a fitted two-state HMM.

use alloc::vec;
use alloc::vec::Vec;
use alloc::{format, string::String};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::copula::{sample_points, CopulaSpec};
use crate::error::{Error, Result};
use crate::exec::{Clock, Executor};
use crate::hmm::{decode, fit_hmm, HmmOptions};
use crate::lgc::{BandwidthSpec, GridSpec, LgcOptions};
use crate::math::clopper_pearson;
use crate::regimetest::{bootstrap_test, Correction, TestConfig, MIN_REGIME_SIZE};
use crate::rng::{self, derive_seed};
use crate::timeseries::ReturnSeries;

/// How the latent regime sequence of the classification study is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentPath {
    /// Markov chain with the given TPM, started from its stationary law.
    Markov { tpm: Vec<Vec<f64>>, length: usize },
    /// Independent draws with the given regime probabilities.
    Iid { probs: Vec<f64>, length: usize },
}

impl LatentPath {
    pub fn length(&self) -> usize {
        match self {
            LatentPath::Markov { length, .. } | LatentPath::Iid { length, .. } => *length,
        }
    }

    fn n_regimes(&self) -> usize {
        match self {
            LatentPath::Markov { tpm, .. } => tpm.len(),
            LatentPath::Iid { probs, .. } => probs.len(),
        }
    }

    /// 0-based states.
    fn draw(&self, rng: &mut rng::StreamRng) -> Result<Vec<usize>> {
        let pick = |p: &[f64], rng: &mut rng::StreamRng| {
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
        match self {
            LatentPath::Iid { probs, length } => Ok((0..*length).map(|_| pick(probs, rng)).collect()),
            LatentPath::Markov { tpm, length } => {
                let delta = crate::hmm::stationary_distribution(tpm)?;
                let mut s = pick(&delta, rng);
                let mut out = Vec::with_capacity(*length);
                for t in 0..*length {
                    if t > 0 {
                        s = pick(&tpm[s], rng);
                    }
                    out.push(s);
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyDesign {
    /// Short name for tables.
    pub name: String,
    pub regime_dgps: Vec<CopulaSpec>,
    pub regime_sizes: Vec<usize>,
    pub n_datasets: usize,
    pub n_boot: usize,
    pub levels: Vec<f64>,
    pub classify_with_hmm: bool,
    /// Latent path for the classification study; regime sizes are then random.
    pub latent: Option<LatentPath>,
    pub grid: GridSpec,
    pub bandwidths: BandwidthSpec,
    pub lgc: LgcOptions,
    pub hmm: HmmOptions,
    pub seed: u64,
}

impl Default for StudyDesign {
    fn default() -> Self {
        Self {
            name: String::new(),
            regime_dgps: Vec::new(),
            regime_sizes: vec![300, 100],
            n_datasets: 1000,
            n_boot: 1000,
            levels: vec![0.01, 0.05, 0.1],
            classify_with_hmm: false,
            latent: None,
            grid: GridSpec::default(),
            bandwidths: BandwidthSpec::default(),
            lgc: LgcOptions::default(),
            hmm: HmmOptions { std_errors: false, ..HmmOptions::default() },
            seed: 0,
        }
    }
}

impl StudyDesign {
    pub fn validate(&self) -> Result<()> {
        if self.regime_dgps.len() < 2 {
            return Err(Error::invalid("a study needs at least 2 regime DGPs"));
        }
        for d in &self.regime_dgps {
            d.validate()?;
        }
        if self.latent.is_none() {
            if self.regime_sizes.len() != self.regime_dgps.len() {
                return Err(Error::invalid("one regime size per DGP is required"));
            }
            if let Some(s) = self.regime_sizes.iter().find(|&&s| s < 30) {
                return Err(Error::invalid(format!("regime sizes must be at least 30, got {s}")));
            }
        }
        if self.n_datasets < 10 {
            return Err(Error::invalid(format!("n_datasets must be at least 10, got {}", self.n_datasets)));
        }
        if self.n_boot < 100 {
            return Err(Error::invalid(format!("n_boot must be at least 100, got {}", self.n_boot)));
        }
        if self.levels.is_empty() || self.levels.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::invalid("levels must be a non-empty list in (0, 1)"));
        }
        Ok(())
    }

    fn test_config(&self, seed: u64) -> TestConfig {
        TestConfig {
            n_boot: self.n_boot,
            alpha: self.levels[0],
            correction: Correction::Bonferroni,
            grid: self.grid.clone(),
            bandwidths: self.bandwidths,
            lgc: self.lgc,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labels {
    True,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub model: String,
    pub labels: Labels,
    pub level: f64,
    pub rejections: usize,
    pub n: usize,
    pub rate: f64,
    /// Clopper-Pearson 95% interval for the rate.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub design: StudyDesign,
    pub rejection_rates: Vec<RateRow>,
    /// Pooled classification proportions, `confusion[true][predicted]`.
    pub confusion: Option<Vec<Vec<f64>>>,
    pub accuracy: Option<f64>,
    /// Datasets dropped because the HMM fit failed.
    pub skipped: usize,
    /// Datasets whose decoded split left a regime too small to test;
    /// they count as non-rejections on predicted labels.
    pub untestable: usize,
    pub runtimes: Vec<Runtime>,
    pub warnings: Vec<String>,
}

impl StudyResult {
    pub fn rate(&self, labels: Labels, level: f64) -> Option<&RateRow> {
        self.rejection_rates.iter().find(|r| r.labels == labels && (r.level - level).abs() < 1e-12)
    }
}

fn rate_rows(model: &str, labels: Labels, levels: &[f64], p_values: &[f64]) -> Vec<RateRow> {
    let n = p_values.len();
    levels
        .iter()
        .map(|&a| {
            let k = p_values.iter().filter(|&&p| p < a).count();
            let (lo, hi) = clopper_pearson(k as u64, n as u64, 0.95);
            RateRow { model: model.into(), labels, level: a, rejections: k, n, rate: k as f64 / n.max(1) as f64, ci_low: lo, ci_high: hi }
        })
        .collect()
}

fn labelled_sample(dgps: &[CopulaSpec], sizes: &[usize], seed: u64) -> Result<ReturnSeries> {
    let mut r = rng::stream(seed, 0);
    let mut points = Vec::with_capacity(sizes.iter().sum());
    let mut labels = Vec::with_capacity(points.capacity());
    for (c, (spec, &n)) in dgps.iter().zip(sizes).enumerate() {
        points.extend(sample_points(spec, n, &mut r)?);
        labels.extend(core::iter::repeat_n(c + 1, n));
    }
    ReturnSeries::from_points(&points)?.with_labels(labels)
}

/// p-value of the equality test on each simulated dataset with known labels.
fn known_label_p_values<E: Executor>(design: &StudyDesign, exec: &E) -> Result<Vec<f64>> {
    let results = exec.map(design.n_datasets, |d| -> Result<f64> {
        let ds = derive_seed(design.seed, d as u64);
        let data = labelled_sample(&design.regime_dgps, &design.regime_sizes, ds)?;
        let report = bootstrap_test(&data, &design.test_config(derive_seed(ds, 1)))?;
        Ok(report.pairs[0].p_raw)
    });
    results.into_iter().collect()
}

/// Rejection rates under a common DGP in every regime.
pub fn run_level_study<E: Executor, C: Clock>(design: &StudyDesign, exec: &E, clock: &C) -> Result<StudyResult> {
    design.validate()?;
    if design.classify_with_hmm {
        return Err(Error::invalid("the level study uses known labels; classify_with_hmm must be false"));
    }
    if design.regime_dgps.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::invalid("the level study requires identical DGPs in every regime"));
    }
    if design.regime_dgps.len() != 2 {
        return Err(Error::invalid("the level study is defined for 2 regimes"));
    }
    let t0 = clock.now();
    let p = known_label_p_values(design, exec)?;
    let name = if design.name.is_empty() { design.regime_dgps[0].label() } else { design.name.clone() };
    Ok(StudyResult {
        design: design.clone(),
        rejection_rates: rate_rows(&name, Labels::True, &design.levels, &p),
        confusion: None,
        accuracy: None,
        skipped: 0,
        untestable: 0,
        runtimes: vec![Runtime { stage: "level".into(), seconds: clock.now() - t0 }],
        warnings: Vec::new(),
    })
}

/// Rejection rates when the regime DGPs differ.
pub fn run_power_study<E: Executor, C: Clock>(design: &StudyDesign, exec: &E, clock: &C) -> Result<StudyResult> {
    design.validate()?;
    if design.classify_with_hmm {
        return Err(Error::invalid("the power study uses known labels; classify_with_hmm must be false"));
    }
    if design.regime_dgps.len() != 2 {
        return Err(Error::invalid("the power study is defined for 2 regimes"));
    }
    let t0 = clock.now();
    let p = known_label_p_values(design, exec)?;
    let name = if design.name.is_empty() { design.regime_dgps[1].label() } else { design.name.clone() };
    Ok(StudyResult {
        design: design.clone(),
        rejection_rates: rate_rows(&name, Labels::True, &design.levels, &p),
        confusion: None,
        accuracy: None,
        skipped: 0,
        untestable: 0,
        runtimes: vec![Runtime { stage: "power".into(), seconds: clock.now() - t0 }],
        warnings: Vec::new(),
    })
}

struct ClassifiedOutcome {
    p_true: f64,
    fitted: bool,
    /// None when a decoded regime is too small to test.
    p_predicted: Option<f64>,
    /// `counts[true][predicted]`, empty when the HMM fit failed.
    counts: Vec<Vec<usize>>,
}

/// Power on true and on HMM-decoded labels, plus the pooled confusion matrix.
pub fn run_misclassification_study<E: Executor, C: Clock>(design: &StudyDesign, exec: &E, clock: &C) -> Result<StudyResult> {
    design.validate()?;
    if !design.classify_with_hmm {
        return Err(Error::invalid("the classification study requires classify_with_hmm = true"));
    }
    let latent = design.latent.as_ref().ok_or_else(|| Error::invalid("the classification study needs a latent path"))?;
    let c = design.regime_dgps.len();
    if latent.n_regimes() != c {
        return Err(Error::invalid("latent path and DGP list disagree on the number of regimes"));
    }
    let t0 = clock.now();
    let outcomes = exec.map(design.n_datasets, |d| -> Result<ClassifiedOutcome> {
        let ds = derive_seed(design.seed, d as u64);
        let mut r = rng::stream(ds, 0);
        let states = latent.draw(&mut r)?;
        let mut counts = vec![0usize; c];
        for &s in &states {
            counts[s] += 1;
        }
        let draws: Vec<Vec<[f64; 2]>> =
            design.regime_dgps.iter().zip(&counts).map(|(spec, &n)| sample_points(spec, n, &mut r)).collect::<Result<_>>()?;
        let mut next = vec![0usize; c];
        let points: Vec<[f64; 2]> = states
            .iter()
            .map(|&s| {
                next[s] += 1;
                draws[s][next[s] - 1]
            })
            .collect();
        let truth: Vec<usize> = states.iter().map(|s| s + 1).collect();
        let series = ReturnSeries::from_points(&points)?;
        let cfg = design.test_config(derive_seed(ds, 1));
        let p_true = bootstrap_test(&series.clone().with_labels(truth.clone())?, &cfg)?.pairs[0].p_raw;

        let hmm_opts = HmmOptions { seed: derive_seed(ds, 2), ..design.hmm };
        let fitted = fit_hmm(&points, c, &hmm_opts).and_then(|m| decode(&m, &points));
        let Ok(path) = fitted else {
            return Ok(ClassifiedOutcome { p_true, fitted: false, p_predicted: None, counts: Vec::new() });
        };
        let mut raw = vec![vec![0usize; c]; c];
        for (&t, &p) in truth.iter().zip(&path.labels) {
            raw[t - 1][p - 1] += 1;
        }
        let perm = best_matching(&raw);
        let labels: Vec<usize> = path.labels.iter().map(|&p| perm[p - 1] + 1).collect();
        let mut confusion = vec![vec![0usize; c]; c];
        for (&t, &p) in truth.iter().zip(&labels) {
            confusion[t - 1][p - 1] += 1;
        }
        let sizes = series.clone().with_labels(labels.clone())?.regime_groups()?;
        let p_predicted = if sizes.len() < c || sizes.iter().any(|g| g.len() < MIN_REGIME_SIZE) {
            None
        } else {
            Some(bootstrap_test(&series.with_labels(labels)?, &cfg)?.pairs[0].p_raw)
        };
        Ok(ClassifiedOutcome { p_true, fitted: true, p_predicted, counts: confusion })
    });
    let outcomes: Vec<ClassifiedOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let skipped = outcomes.iter().filter(|o| !o.fitted).count();
    if skipped * 10 > design.n_datasets {
        return Err(Error::numerical(format!("HMM fit failed on {skipped} of {} datasets", design.n_datasets)));
    }
    let kept: Vec<&ClassifiedOutcome> = outcomes.iter().filter(|o| o.fitted).collect();
    let untestable = kept.iter().filter(|o| o.p_predicted.is_none()).count();
    let p_true: Vec<f64> = kept.iter().map(|o| o.p_true).collect();
    // An untestable split cannot reject.
    let p_pred: Vec<f64> = kept.iter().map(|o| o.p_predicted.unwrap_or(1.0)).collect();
    let mut pooled = vec![vec![0usize; c]; c];
    for o in &kept {
        for i in 0..c {
            for j in 0..c {
                pooled[i][j] += o.counts[i][j];
            }
        }
    }
    let total: usize = pooled.iter().flatten().sum();
    let confusion: Vec<Vec<f64>> = pooled.iter().map(|r| r.iter().map(|&v| v as f64 / total as f64).collect()).collect();
    let accuracy = (0..c).map(|i| pooled[i][i]).sum::<usize>() as f64 / total as f64;
    let name = if design.name.is_empty() { design.regime_dgps[1].label() } else { design.name.clone() };
    let mut rows = rate_rows(&name, Labels::True, &design.levels, &p_true);
    rows.extend(rate_rows(&name, Labels::Predicted, &design.levels, &p_pred));
    let mut warnings = Vec::new();
    if skipped > 0 {
        warnings.push(format!("{skipped} datasets skipped after a failed HMM fit"));
    }
    if untestable > 0 {
        warnings.push(format!("{untestable} datasets decoded a regime with fewer than {MIN_REGIME_SIZE} observations"));
    }
    Ok(StudyResult {
        design: design.clone(),
        rejection_rates: rows,
        confusion: Some(confusion),
        accuracy: Some(accuracy),
        skipped,
        untestable,
        runtimes: vec![Runtime { stage: "classification".into(), seconds: clock.now() - t0 }],
        warnings,
    })
}

/// Relabelling of decoded regimes that maximizes agreement with the truth:
/// decoded label `j` becomes `perm[j]`. `counts[true][decoded]`.
fn best_matching(counts: &[Vec<usize>]) -> Vec<usize> {
    fn search(counts: &[Vec<usize>], j: usize, used: &mut [bool], cur: &mut Vec<usize>, score: usize, best: &mut (usize, Vec<usize>)) {
        let c = counts.len();
        if j == c {
            if score > best.0 || best.1.is_empty() {
                *best = (score, cur.clone());
            }
            return;
        }
        for i in 0..c {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                search(counts, j + 1, used, cur, score + counts[i][j], best);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut best = (0, Vec::new());
    search(counts, 0, &mut vec![false; counts.len()], &mut Vec::new(), 0, &mut best);
    best.1
}

fn study_marginals(spec: CopulaSpec, mean: f64) -> CopulaSpec {
    spec.with_marginals(mean, 4.0)
}

/// The six common-DGP models of the level study; N(0, 4^2) marginals.
pub fn level_models() -> Vec<CopulaSpec> {
    [
        CopulaSpec::clayton(1.0),
        CopulaSpec::clayton(2.0),
        CopulaSpec::gaussian(-0.5),
        CopulaSpec::gaussian(0.3),
        CopulaSpec::gumbel(2.0),
        CopulaSpec::gumbel(3.0),
    ]
    .into_iter()
    .map(|s| study_marginals(s, 0.0))
    .collect()
}

/// Regime-1 DGP of the power study: Gaussian copula rho = 0.5, N(1, 4^2) marginals.
pub fn power_baseline() -> CopulaSpec {
    study_marginals(CopulaSpec::gaussian(0.5), 1.0)
}

/// The six alternative regime-2 models of the power study; N(0, 4^2) marginals.
pub fn power_models() -> Vec<CopulaSpec> {
    [
        CopulaSpec::clayton(2.0),
        CopulaSpec::clayton(3.0),
        CopulaSpec::gaussian(-0.5),
        CopulaSpec::gaussian(0.8),
        CopulaSpec::gumbel(2.0),
        CopulaSpec::gumbel(3.0),
    ]
    .into_iter()
    .map(|s| study_marginals(s, 0.0))
    .collect()
}

/// Level-study design for one model.
pub fn level_design(model: CopulaSpec, n_datasets: usize, n_boot: usize, seed: u64) -> StudyDesign {
    StudyDesign { name: model.label(), regime_dgps: vec![model; 2], n_datasets, n_boot, seed, ..StudyDesign::default() }
}

/// Power-study design for one alternative model.
pub fn power_design(model: CopulaSpec, n_datasets: usize, n_boot: usize, seed: u64) -> StudyDesign {
    StudyDesign { name: model.label(), regime_dgps: vec![power_baseline(), model], n_datasets, n_boot, seed, ..StudyDesign::default() }
}

/// Default latent chain of the classification study: persistent, with
/// stationary regime shares 75/25.
pub fn default_latent_path(length: usize) -> LatentPath {
    LatentPath::Markov { tpm: vec![vec![0.95, 0.05], vec![0.15, 0.85]], length }
}

/// Classification-study design: Gaussian rho = 0.5 with N(0, 3^2) marginals
/// against Clayton theta = 3 with N(0, 5^2) marginals.
pub fn misclassification_design(n_datasets: usize, length: usize, n_boot: usize, seed: u64) -> StudyDesign {
    StudyDesign {
        name: "gaussian(0.5) vs clayton(3)".into(),
        regime_dgps: vec![CopulaSpec::gaussian(0.5).with_marginals(0.0, 3.0), CopulaSpec::clayton(3.0).with_marginals(0.0, 5.0)],
        regime_sizes: Vec::new(),
        n_datasets,
        n_boot,
        classify_with_hmm: true,
        latent: Some(default_latent_path(length)),
        seed,
        ..StudyDesign::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{NoClock, Sequential};

    #[test]
    fn matching_undoes_label_switching() {
        assert_eq!(best_matching(&[vec![3, 40], vec![50, 2]]), vec![1, 0]);
        assert_eq!(best_matching(&[vec![40, 3], vec![2, 50]]), vec![0, 1]);
        assert_eq!(best_matching(&[vec![0, 0, 9], vec![7, 0, 0], vec![0, 5, 1]]), vec![1, 2, 0]);
    }

    #[test]
    fn level_study_guards() {
        let mut d = level_design(CopulaSpec::gaussian(0.3), 10, 100, 1);
        d.regime_dgps[1] = CopulaSpec::gaussian(0.2);
        assert!(run_level_study(&d, &Sequential, &NoClock).is_err());
        let d = level_design(CopulaSpec::gaussian(0.3), 5, 100, 1);
        assert!(run_level_study(&d, &Sequential, &NoClock).is_err());
    }

    #[test]
    fn level_study_rows_are_consistent() {
        let d = level_design(level_models()[3], 10, 100, 2);
        let r = run_level_study(&d, &Sequential, &NoClock).unwrap();
        assert_eq!(r.rejection_rates.len(), 3);
        for row in &r.rejection_rates {
            assert!(row.rate >= 0.0 && row.rate <= 1.0);
            assert!(row.ci_low <= row.rate && row.rate <= row.ci_high);
        }
        let again = run_level_study(&d, &Sequential, &NoClock).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn latent_paths_have_requested_shares() {
        let p = default_latent_path(200_000).draw(&mut rng::stream(3, 0)).unwrap();
        let share = p.iter().filter(|&&s| s == 0).count() as f64 / p.len() as f64;
        assert!((share - 0.75).abs() < 0.01);
        let p = LatentPath::Iid { probs: vec![0.75, 0.25], length: 100_000 }.draw(&mut rng::stream(4, 0)).unwrap();
        let share = p.iter().filter(|&&s| s == 0).count() as f64 / p.len() as f64;
        assert!((share - 0.75).abs() < 0.01);
    }
}
