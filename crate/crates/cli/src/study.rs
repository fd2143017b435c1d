use lgc_regime::exec::{Clock, Executor};
use lgc_regime::hmm::HmmOptions;
use lgc_regime::lgc::LgcOptions;
use lgc_regime::simstudy::{
    default_latent_path, level_design, level_models, misclassification_design, power_baseline, power_design, power_models, run_level_study,
    run_misclassification_study, run_power_study, Labels, StudyDesign, StudyResult,
};

use crate::config::{StudyConfig, StudyKind};
use crate::error::{CliError, Result, StageExt};
use crate::output::{num, Manifest};
use crate::pipeline::with_output;

/// One design per model for the level and power studies; a single design
/// for the classification study.
pub fn designs(cfg: &StudyConfig) -> Result<Vec<StudyDesign>> {
    let tune = |mut d: StudyDesign| {
        d.levels = cfg.levels.clone();
        d.grid = cfg.grid.spec();
        d.bandwidths = cfg.bandwidth;
        d.lgc = LgcOptions::default();
        d.hmm = HmmOptions { restarts: cfg.hmm_restarts, std_errors: false, ..HmmOptions::default() };
        if d.latent.is_none() {
            d.regime_sizes = cfg.sizes.clone();
        }
        d
    };
    let designs: Vec<StudyDesign> = match cfg.kind {
        StudyKind::Level => {
            let models = if cfg.models.is_empty() { level_models() } else { cfg.models.clone() };
            models
                .into_iter()
                .enumerate()
                .map(|(i, m)| tune(level_design(m, cfg.n_datasets, cfg.n_boot, lgc_regime::rng::derive_seed(cfg.seed, i as u64))))
                .collect()
        }
        StudyKind::Power => {
            let models = if cfg.models.is_empty() { power_models() } else { cfg.models.clone() };
            let base = cfg.baseline.unwrap_or_else(power_baseline);
            models
                .into_iter()
                .enumerate()
                .map(|(i, m)| {
                    let mut d = power_design(m, cfg.n_datasets, cfg.n_boot, lgc_regime::rng::derive_seed(cfg.seed, i as u64));
                    d.regime_dgps[0] = base;
                    tune(d)
                })
                .collect()
        }
        StudyKind::Misclassification => {
            let mut d = misclassification_design(cfg.n_datasets, cfg.length, cfg.n_boot, cfg.seed);
            if !cfg.regimes.is_empty() {
                d.regime_dgps = cfg.regimes.clone();
            }
            d.latent = Some(cfg.latent.clone().unwrap_or_else(|| default_latent_path(cfg.length)));
            vec![tune(d)]
        }
    };
    for d in &designs {
        d.validate().map_err(|e| CliError::validation(format!("study design {}: {e}", d.name)))?;
    }
    Ok(designs)
}

pub fn run_designs<E: Executor, C: Clock>(kind: StudyKind, designs: &[StudyDesign], exec: &E, clock: &C) -> Result<Vec<StudyResult>> {
    designs
        .iter()
        .map(|d| match kind {
            StudyKind::Level => run_level_study(d, exec, clock).stage("level study"),
            StudyKind::Power => run_power_study(d, exec, clock).stage("power study"),
            StudyKind::Misclassification => run_misclassification_study(d, exec, clock).stage("classification study"),
        })
        .collect()
}

fn labels_name(l: Labels) -> &'static str {
    match l {
        Labels::True => "true",
        Labels::Predicted => "predicted",
    }
}

/// Runs the configured study and writes long and wide rate tables, the
/// confusion matrix when there is one, and the full results as JSON.
pub fn run_study<E: Executor, C: Clock>(cfg: &StudyConfig, exec: &E, clock: &C, threads: usize) -> Result<(Vec<StudyResult>, Manifest)> {
    let designs = designs(cfg)?;
    with_output(&cfg.output_dir, "study", cfg.seed, threads, |out| {
        let t0 = clock.now();
        let results = run_designs(cfg.kind, &designs, exec, clock)?;
        out.time("study", clock.now() - t0);
        let rows: Vec<_> = results.iter().flat_map(|r| r.rejection_rates.iter()).collect();
        out.write_csv(
            "rejection_rates.csv",
            &["model", "labels", "level", "rejections", "n", "rate", "ci_low", "ci_high"],
            rows.iter().map(|r| {
                vec![
                    r.model.clone(),
                    labels_name(r.labels).into(),
                    num(r.level),
                    r.rejections.to_string(),
                    r.n.to_string(),
                    num(r.rate),
                    num(r.ci_low),
                    num(r.ci_high),
                ]
            }),
        )?;
        let mut header = vec!["model".to_string(), "labels".to_string()];
        header.extend(cfg.levels.iter().map(|a| format!("alpha={a}")));
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut wide = Vec::new();
        for r in &results {
            for labels in [Labels::True, Labels::Predicted] {
                let cells: Vec<String> = cfg.levels.iter().filter_map(|&a| r.rate(labels, a)).map(|row| num(100.0 * row.rate)).collect();
                if cells.len() == cfg.levels.len() {
                    let mut line = vec![r.rejection_rates[0].model.clone(), labels_name(labels).into()];
                    line.extend(cells);
                    wide.push(line);
                }
            }
        }
        out.write_csv("rates_x100.csv", &header_ref, wide)?;
        for r in &results {
            if let Some(conf) = &r.confusion {
                let c = conf.len();
                let mut header = vec!["true_regime".to_string()];
                header.extend((1..=c).map(|k| format!("predicted_{k}")));
                let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
                out.write_csv(
                    "confusion.csv",
                    &header_ref,
                    conf.iter().enumerate().map(|(i, row)| {
                        let mut v = vec![(i + 1).to_string()];
                        v.extend(row.iter().map(|&p| num(p)));
                        v
                    }),
                )?;
            }
            out.warnings.extend(r.warnings.iter().cloned());
        }
        out.write_json("study_results.json", &results)?;
        Ok(results)
    })
}
