use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lgc_regime::lgc::BandwidthSpec;
use lgc_regime_cli::config::{load_toml, PipelineConfig, StudyConfig, StudyKind};
use lgc_regime_cli::input::{format_timestamp, Mode};
use lgc_regime_cli::output::{num, sha256_hex};
use lgc_regime_cli::simulate::{parse_copula, simulate_regimes};
use lgc_regime_cli::{run_model_selection, run_pipeline, run_study, CliError, RayonExecutor, Result, StdClock};

#[derive(Parser)]
#[command(name = "lgc-regime", version, about = "Regime-wise local Gaussian correlation analysis of bivariate returns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the HMM, filter, estimate LGC maps and test them for equality.
    Analyze(PipelineArgs),
    /// Compare HMM fits over a range of regime counts by AIC and BIC.
    Select {
        #[command(flatten)]
        common: PipelineArgs,
        #[arg(long)]
        c_min: Option<usize>,
        #[arg(long)]
        c_max: Option<usize>,
    },
    /// Run a level, power or classification Monte Carlo study.
    Study(StudyArgs),
    /// Sample copula data, optionally regime-switching, to CSV.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    date_column: Option<String>,
    /// The two value columns, comma separated.
    #[arg(long, value_parser = parse_pair::<String>)]
    columns: Option<(String, String)>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    date_format: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_regimes: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Estimate the maps on raw returns.
    #[arg(long)]
    no_garch: bool,
    /// Skip the bootstrap test; maps are still written.
    #[arg(long)]
    no_test: bool,
    #[arg(long)]
    n_boot: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    grid_n: Option<usize>,
    /// Explicit bandwidths `b1,b2` instead of the rule of thumb.
    #[arg(long, value_parser = parse_pair::<f64>)]
    bandwidth: Option<(f64, f64)>,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c: PipelineConfig = match &self.config {
            Some(p) => load_toml(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.input {
            c.input.path = v.clone();
        }
        if let Some(v) = &self.date_column {
            c.input.date_column = v.clone();
        }
        if let Some(v) = &self.columns {
            c.input.columns = [v.0.clone(), v.1.clone()];
        }
        if let Some(v) = self.mode {
            c.input.mode = v;
        }
        if let Some(v) = &self.date_format {
            c.input.date_format = Some(v.clone());
        }
        if let Some(v) = &self.output_dir {
            c.output_dir = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.n_regimes {
            c.hmm.n_regimes = v;
        }
        if let Some(v) = self.restarts {
            c.hmm.restarts = v;
        }
        if self.no_garch {
            c.garch.enabled = false;
        }
        if self.no_test {
            c.test.enabled = false;
        }
        if let Some(v) = self.n_boot {
            c.test.n_boot = v;
        }
        if let Some(v) = self.alpha {
            c.test.alpha = v;
        }
        if let Some(v) = self.grid_n {
            c.grid.n = v;
        }
        if let Some(v) = &self.bandwidth {
            c.bandwidth = BandwidthSpec::Explicit { b1: v.0, b2: v.1 };
        }
        Ok(c)
    }
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    kind: Option<StudyKind>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_datasets: Option<usize>,
    #[arg(long)]
    n_boot: Option<usize>,
}

fn parse_kind(s: &str) -> std::result::Result<StudyKind, String> {
    match s {
        "level" => Ok(StudyKind::Level),
        "power" => Ok(StudyKind::Power),
        "misclassification" => Ok(StudyKind::Misclassification),
        _ => Err(format!("expected level, power or misclassification, got {s:?}")),
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// `family:param`; repeat for regime-switching data.
    #[arg(long, required = true)]
    copula: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    mean: f64,
    #[arg(long, default_value_t = 1.0)]
    sd: f64,
    /// Probability of staying in the current regime.
    #[arg(long, default_value_t = 0.95)]
    stay: f64,
    #[arg(long)]
    out: PathBuf,
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let specs = a.copula.iter().map(|s| parse_copula(s).map(|c| c.with_marginals(a.mean, a.sd))).collect::<Result<Vec<_>>>()?;
    let sim = simulate_regimes(&specs, a.n, a.stay, a.seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let wr = |e: csv::Error| CliError::io(&a.out, std::io::Error::other(e.to_string()));
    w.write_record(["date", "a", "b", "regime"]).map_err(wr)?;
    // consecutive days from 2000-01-01
    for (t, (p, r)) in sim.points.iter().zip(&sim.regimes).enumerate() {
        w.write_record([format_timestamp(946_684_800 + 86_400 * t as i64), num(p[0]), num(p[1]), r.to_string()]).map_err(wr)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(&a.out, std::io::Error::other(e.to_string())))?;
    std::fs::write(&a.out, &bytes).map_err(|e| CliError::io(&a.out, e))?;
    println!("{} rows written to {} (sha256 {})", sim.points.len(), a.out.display(), sha256_hex(&bytes));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Analyze(a) => {
            let cfg = a.resolve()?;
            let exec = RayonExecutor::from_env()?;
            let s = run_pipeline(&cfg, &exec, &StdClock::default(), exec.threads())?;
            if let Some(r) = &s.report {
                for p in &r.pairs {
                    println!(
                        "regimes {} vs {}: D1 = {:.6}, p = {:.4}, {} at threshold {}",
                        p.k,
                        p.l,
                        p.d1_observed,
                        p.p_raw,
                        if p.reject { "reject" } else { "retain" },
                        r.p_threshold
                    );
                }
            }
            println!("artifacts in {}", cfg.output_dir.display());
            Ok(())
        }
        Command::Select { common, c_min, c_max } => {
            let mut cfg = common.resolve()?;
            if let Some(v) = c_min {
                cfg.hmm.select_range[0] = v;
            }
            if let Some(v) = c_max {
                cfg.hmm.select_range[1] = v;
            }
            let exec = RayonExecutor::from_env()?;
            let s = run_model_selection(&cfg, &exec, &StdClock::default(), exec.threads())?;
            println!("{:>3} {:>14} {:>14} {:>14}", "C", "loglik", "AIC", "BIC");
            for r in &s.rows {
                println!(
                    "{:>3} {:>14.3} {:>14.3}{} {:>14.3}{}",
                    r.n_regimes,
                    r.loglik,
                    r.aic,
                    if r.aic_best { "*" } else { " " },
                    r.bic,
                    if r.bic_best { "*" } else { " " }
                );
            }
            Ok(())
        }
        Command::Study(a) => {
            let mut cfg: StudyConfig = match &a.config {
                Some(p) => load_toml(p)?,
                None => StudyConfig::default(),
            };
            if let Some(v) = a.kind {
                cfg.kind = v;
            }
            if let Some(v) = &a.output_dir {
                cfg.output_dir = v.clone();
            }
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
            if let Some(v) = a.n_datasets {
                cfg.n_datasets = v;
            }
            if let Some(v) = a.n_boot {
                cfg.n_boot = v;
            }
            let exec = RayonExecutor::from_env()?;
            let (results, _) = run_study(&cfg, &exec, &StdClock::default(), exec.threads())?;
            for r in &results {
                for row in &r.rejection_rates {
                    println!(
                        "{:<16} {:<9} alpha={:<5} rate={:.3} [{:.3}, {:.3}]",
                        row.model,
                        format!("{:?}", row.labels),
                        row.level,
                        row.rate,
                        row.ci_low,
                        row.ci_high
                    );
                }
                if let Some(acc) = r.accuracy {
                    println!("classification accuracy {acc:.3}");
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T), String>
where
    T::Err: std::fmt::Display,
{
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma separated values, got `{s}`"))?;
    let p = |v: &str| v.trim().parse::<T>().map_err(|e| format!("`{v}`: {e}"));
    Ok((p(a)?, p(b)?))
}
