use lgc_regime::exec::{Clock, Executor};
use lgc_regime::garch::{fit_garch, parameter_table, standardized_residuals, GarchOptions, GarchParams};
use lgc_regime::hmm::{decode, fit_hmm_with, information_criteria, HmmModel, RegimePath};
use lgc_regime::lgc::{estimate_map, LgcMap};
use lgc_regime::regimetest::{bootstrap_test_with, p_value_matrix, TestConfig, TestReport};
use lgc_regime::rng::derive_seed;
use lgc_regime::timeseries::describe_by_label;
use lgc_regime::ReturnSeries;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result, StageExt};
use crate::input::{format_timestamp, load_csv, LoadedSeries};
use crate::output::*;

const HMM_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const GARCH_STREAM: u64 = 10;

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub model: HmmModel,
    pub path: RegimePath,
    pub garch: Option<[GarchParams; 2]>,
    pub maps: Vec<LgcMap>,
    pub report: Option<TestReport>,
    pub manifest: Manifest,
}

fn load(cfg: &PipelineConfig) -> Result<LoadedSeries> {
    load_csv(&cfg.input.path, &cfg.input.column_spec(), cfg.input.mode, cfg.input.date_format.as_deref())
}

/// Runs `body` against a locked output directory and always writes the
/// manifest, marking it FAILED when `body` errs.
pub(crate) fn with_output<T>(
    dir: &std::path::Path,
    command: &str,
    seed: u64,
    threads: usize,
    body: impl FnOnce(&mut OutputDir) -> Result<T>,
) -> Result<(T, Manifest)> {
    let mut out = OutputDir::open(dir)?;
    match body(&mut out) {
        Ok(v) => {
            let m = out.finish(command, seed, threads, None)?;
            Ok((v, m))
        }
        Err(e) => {
            out.finish(command, seed, threads, Some(&e))?;
            Err(e)
        }
    }
}

/// HMM on raw returns, GARCH filtering, per-regime LGC maps on the filtered
/// data and the bootstrap equality test.
pub fn run_pipeline<E: Executor, C: Clock>(cfg: &PipelineConfig, exec: &E, clock: &C, threads: usize) -> Result<PipelineSummary> {
    cfg.validate()?;
    let (parts, manifest) = with_output(&cfg.output_dir, "analyze", cfg.seed, threads, |out| stages(cfg, out, exec, clock))?;
    let (model, path, garch, maps, report) = parts;
    Ok(PipelineSummary { model, path, garch, maps, report, manifest })
}

type Stages = (HmmModel, RegimePath, Option<[GarchParams; 2]>, Vec<LgcMap>, Option<TestReport>);

fn stages<E: Executor, C: Clock>(cfg: &PipelineConfig, out: &mut OutputDir, exec: &E, clock: &C) -> Result<Stages> {
    let mut t = clock.now();
    let mut lap = |out: &mut OutputDir, stage: &str| {
        let now = clock.now();
        out.time(stage, now - t);
        t = now;
    };

    out.stage = Some("ingest");
    let loaded = load(cfg)?;
    if !loaded.dropped_rows.is_empty() {
        out.warnings.push(format!("dropped {} input rows with missing fields", loaded.dropped_rows.len()));
    }
    let raw = &loaded.series;
    let [name_a, name_b] = &loaded.names;
    lap(out, "ingest");
    out.stage = Some("hmm");

    let points = raw.points();
    let c = cfg.hmm.n_regimes;
    let model = fit_hmm_with(&points, c, &cfg.hmm.options(derive_seed(cfg.seed, HMM_STREAM)), exec).stage("hmm")?;
    if let Some(d) = &model.diagnostics {
        out.warnings.extend(d.warnings.iter().cloned());
    }
    let path = decode(&model, &points).stage("decode")?;
    out.write_json("hmm_model.json", &model)?;
    out.write_csv("hmm_parameters.csv", &["parameter", "estimate", "std_error"], hmm_parameter_rows(&model))?;
    let mut header = vec!["date".to_string(), "regime".to_string()];
    header.extend((1..=c).map(|k| format!("p_{k}")));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_csv(
        "regime_path.csv",
        &header_ref,
        raw.timestamps().iter().zip(&path.labels).zip(&path.smoothing).map(|((&ts, &l), p)| {
            let mut row = vec![format_timestamp(ts), l.to_string()];
            row.extend(p.iter().map(|&v| num(v)));
            row
        }),
    )?;
    lap(out, "hmm");
    out.stage = Some("garch");

    let labels = Some(path.labels.as_slice());
    let mut stats = Vec::new();
    for (name, x) in [(name_a, raw.values_a()), (name_b, raw.values_b())] {
        let (groups, warnings) = describe_by_label(x, labels).stage("describe")?;
        out.warnings.extend(warnings);
        stats.extend(stats_rows(name, "raw", &groups));
    }

    let (filtered, garch) = if cfg.garch.enabled {
        let mut fits = Vec::with_capacity(2);
        let mut resid = Vec::with_capacity(2);
        for (i, x) in [raw.values_a(), raw.values_b()].into_iter().enumerate() {
            let opts = GarchOptions {
                mean: cfg.garch.mean,
                restarts: cfg.garch.restarts,
                seed: derive_seed(cfg.seed, GARCH_STREAM + i as u64),
                ..GarchOptions::default()
            };
            let p = fit_garch(x, &opts).stage("garch")?;
            out.warnings.extend(p.warnings.iter().map(|w| format!("{}: {w}", loaded.names[i])));
            resid.push(standardized_residuals(x, &p).stage("garch")?);
            fits.push(p);
        }
        let mut rows = garch_rows(name_a, &parameter_table(&fits[0]));
        rows.extend(garch_rows(name_b, &parameter_table(&fits[1])));
        out.write_csv("garch_parameters.csv", &GARCH_HEADER, rows)?;
        let rb = resid.pop().unwrap_or_default();
        let ra = resid.pop().unwrap_or_default();
        let f = raw.with_values(ra, rb).stage("garch")?;
        for (name, x) in [(name_a, f.values_a()), (name_b, f.values_b())] {
            let (groups, warnings) = describe_by_label(x, labels).stage("describe")?;
            out.warnings.extend(warnings);
            stats.extend(stats_rows(name, "GF", &groups));
        }
        let fb = fits.pop().expect("two fits");
        let fa = fits.pop().expect("two fits");
        (f, Some([fa, fb]))
    } else {
        (raw.clone(), None)
    };
    out.write_csv("descriptive_stats.csv", &STATS_HEADER, stats)?;
    out.write_csv(
        "filtered_returns.csv",
        &["date", name_a.as_str(), name_b.as_str(), "regime"],
        filtered
            .timestamps()
            .iter()
            .zip(filtered.values_a().iter().zip(filtered.values_b()))
            .zip(&path.labels)
            .map(|((&ts, (a, b)), l)| vec![format_timestamp(ts), num(*a), num(*b), l.to_string()]),
    )?;
    lap(out, "garch");
    out.stage = Some("lgc_test");

    let labelled = filtered.with_labels(path.labels.clone()).stage("lgc")?;
    let (maps, report) = if cfg.test.enabled {
        let tc = TestConfig {
            n_boot: cfg.test.n_boot,
            alpha: cfg.test.alpha,
            correction: cfg.test.correction,
            grid: cfg.grid.spec(),
            bandwidths: cfg.bandwidth,
            lgc: cfg.lgc,
            seed: derive_seed(cfg.seed, TEST_STREAM),
        };
        let report = bootstrap_test_with(&labelled, &tc, exec).stage("test")?;
        out.warnings.extend(report.warnings.iter().cloned());
        (report.maps.clone(), Some(report))
    } else {
        (regime_maps(cfg, &labelled, out)?, None)
    };
    for (k, m) in maps.iter().enumerate() {
        out.write_csv(&format!("lgc_map_regime_{}.csv", k + 1), &MAP_HEADER, map_rows(m))?;
    }
    if let Some(r) = &report {
        out.write_json("test_report.json", r)?;
        let mut header = vec!["regime".to_string()];
        header.extend((1..=r.n_regimes).map(|k| k.to_string()));
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        let matrix = p_value_matrix(r);
        out.write_csv(
            "p_values.csv",
            &header_ref,
            matrix.iter().enumerate().map(|(k, row)| {
                let mut v = vec![(k + 1).to_string()];
                v.extend(row.iter().map(|&p| num(p)));
                v
            }),
        )?;
    }
    lap(out, "lgc_test");
    Ok((model, path, garch, maps, report))
}

fn regime_maps(cfg: &PipelineConfig, labelled: &ReturnSeries, out: &mut OutputDir) -> Result<Vec<LgcMap>> {
    let groups = labelled.regime_groups().stage("lgc")?;
    let pooled: Vec<[f64; 2]> = groups.iter().flatten().copied().collect();
    let grid = cfg.grid.spec().resolve(&pooled).stage("lgc")?;
    let bw = cfg.bandwidth.resolve(&pooled).stage("lgc")?;
    let mut maps = Vec::with_capacity(groups.len());
    for g in &groups {
        let (m, w) = estimate_map(g, &grid, bw, &cfg.lgc).stage("lgc")?;
        out.warnings.extend(w);
        maps.push(m);
    }
    Ok(maps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub n_regimes: usize,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub bic: f64,
    pub aic_best: bool,
    pub bic_best: bool,
    /// `ok` or the failure message.
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct SelectionSummary {
    pub rows: Vec<SelectionRow>,
    pub aic_choice: Option<usize>,
    pub bic_choice: Option<usize>,
    pub manifest: Manifest,
}

/// Fits every C in the configured range with the same seed and ranks the
/// fits by AIC and BIC.
pub fn run_model_selection<E: Executor, C: Clock>(cfg: &PipelineConfig, exec: &E, clock: &C, threads: usize) -> Result<SelectionSummary> {
    cfg.validate_selection()?;
    let ((rows, aic_choice, bic_choice), manifest) = with_output(&cfg.output_dir, "select", cfg.seed, threads, |out| {
        let t0 = clock.now();
        out.stage = Some("select");
        let loaded = load(cfg)?;
        let points = loaded.series.points();
        let n = points.len();
        let [lo, hi] = cfg.hmm.select_range;
        let opts = cfg.hmm.options(derive_seed(cfg.seed, HMM_STREAM));
        let mut rows = Vec::new();
        for c in lo..=hi {
            let fit = fit_hmm_with(&points, c, &opts, exec).and_then(|m| information_criteria(&m, n).map(|ic| (m, ic)));
            match fit {
                Ok((m, (aic, bic))) => {
                    out.write_json(&format!("hmm_model_c{c}.json"), &m)?;
                    rows.push(SelectionRow {
                        n_regimes: c,
                        loglik: m.loglik,
                        n_params: m.n_params,
                        aic,
                        bic,
                        aic_best: false,
                        bic_best: false,
                        status: "ok".into(),
                    });
                }
                Err(e) => {
                    out.warnings.push(format!("C = {c}: {e}"));
                    rows.push(SelectionRow {
                        n_regimes: c,
                        loglik: f64::NAN,
                        n_params: lgc_regime::hmm::n_params(c, cfg.hmm.free_initial),
                        aic: f64::NAN,
                        bic: f64::NAN,
                        aic_best: false,
                        bic_best: false,
                        status: e.to_string(),
                    });
                }
            }
        }
        let best = |key: fn(&SelectionRow) -> f64| {
            rows.iter().filter(|r| r.status == "ok").min_by(|a, b| key(a).total_cmp(&key(b))).map(|r| r.n_regimes)
        };
        let (aic_choice, bic_choice) = (best(|r| r.aic), best(|r| r.bic));
        for r in &mut rows {
            r.aic_best = Some(r.n_regimes) == aic_choice;
            r.bic_best = Some(r.n_regimes) == bic_choice;
        }
        out.write_csv(
            "model_selection.csv",
            &["n_regimes", "loglik", "n_params", "aic", "bic", "aic_best", "bic_best", "status"],
            rows.iter().map(|r| {
                vec![
                    r.n_regimes.to_string(),
                    num(r.loglik),
                    r.n_params.to_string(),
                    num(r.aic),
                    num(r.bic),
                    r.aic_best.to_string(),
                    r.bic_best.to_string(),
                    r.status.clone(),
                ]
            }),
        )?;
        out.time("select", clock.now() - t0);
        if aic_choice.is_none() {
            return Err(CliError::Stage { stage: "select", source: lgc_regime::Error::Numerical("every candidate fit failed".into()) });
        }
        Ok((rows, aic_choice, bic_choice))
    })?;
    Ok(SelectionSummary { rows, aic_choice, bic_choice, manifest })
}
