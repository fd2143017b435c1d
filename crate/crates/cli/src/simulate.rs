use lgc_regime::copula::{sample_points, CopulaFamily, CopulaSpec};
use lgc_regime::hmm::HmmModel;
use lgc_regime::rng;

use crate::error::{CliError, Result, StageExt};

/// Parses `family:param`, e.g. `clayton:3`.
pub fn parse_copula(s: &str) -> Result<CopulaSpec> {
    let (name, param) = s.split_once(':').ok_or_else(|| CliError::validation(format!("copula {s:?} is not of the form family:param")))?;
    let family = match name.trim().to_ascii_lowercase().as_str() {
        "clayton" => CopulaFamily::Clayton,
        "gumbel" => CopulaFamily::Gumbel,
        "gaussian" | "normal" => CopulaFamily::Gaussian,
        other => return Err(CliError::validation(format!("unknown copula family {other:?}"))),
    };
    let param: f64 = param.trim().parse().map_err(|_| CliError::validation(format!("copula parameter {param:?} is not a number")))?;
    let spec = CopulaSpec::new(family, param);
    spec.validate().stage("simulate")?;
    Ok(spec)
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub points: Vec<[f64; 2]>,
    /// 1-based regime of each point.
    pub regimes: Vec<usize>,
}

/// I.i.d. draws for one regime; for several, a Markov chain whose diagonal
/// is `stay` with the remaining mass spread evenly, started from its
/// stationary law.
pub fn simulate_regimes(specs: &[CopulaSpec], n: usize, stay: f64, seed: u64) -> Result<Simulated> {
    if specs.is_empty() {
        return Err(CliError::validation("at least one copula is required"));
    }
    if n == 0 {
        return Err(CliError::validation("n must be positive"));
    }
    let c = specs.len();
    let regimes: Vec<usize> = if c == 1 {
        vec![1; n]
    } else {
        if !(stay > 0.0 && stay < 1.0) {
            return Err(CliError::validation(format!("stay must lie in (0, 1), got {stay}")));
        }
        let off = (1.0 - stay) / (c - 1) as f64;
        let tpm: Vec<Vec<f64>> = (0..c).map(|i| (0..c).map(|j| if i == j { stay } else { off }).collect()).collect();
        let chain = HmmModel::new(vec![[0.0; 2]; c], vec![[[1.0, 0.0], [0.0, 1.0]]; c], tpm).stage("simulate")?;
        lgc_regime::hmm::simulate(&chain, n, &mut rng::stream(seed, 1)).1
    };
    let mut r = rng::stream(seed, 0);
    let mut draws = Vec::with_capacity(c);
    for (k, spec) in specs.iter().enumerate() {
        let count = regimes.iter().filter(|&&s| s == k + 1).count();
        draws.push(sample_points(spec, count, &mut r).stage("simulate")?.into_iter());
    }
    let points = regimes.iter().map(|&s| draws[s - 1].next().expect("counted draws")).collect();
    Ok(Simulated { points, regimes })
}
