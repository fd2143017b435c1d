use std::path::{Path, PathBuf};

use lgc_regime::copula::CopulaSpec;
use lgc_regime::garch::MeanMode;
use lgc_regime::hmm::HmmOptions;
use lgc_regime::lgc::{BandwidthSpec, GridSpec, LgcOptions};
use lgc_regime::regimetest::Correction;
use lgc_regime::simstudy::LatentPath;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::input::{ColumnSpec, Mode};

/// Largest number of regimes the pipeline fits.
pub const MAX_REGIMES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    pub path: PathBuf,
    pub date_column: String,
    pub columns: [String; 2],
    pub mode: Mode,
    /// chrono format string for the date column; ISO-8601 when absent.
    pub date_format: Option<String>,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self { path: PathBuf::new(), date_column: "date".into(), columns: ["a".into(), "b".into()], mode: Mode::Prices, date_format: None }
    }
}

impl InputConfig {
    pub fn column_spec(&self) -> ColumnSpec {
        ColumnSpec { date: self.date_column.clone(), a: self.columns[0].clone(), b: self.columns[1].clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmConfig {
    pub n_regimes: usize,
    /// `[C_min, C_max]` for `select`.
    pub select_range: [usize; 2],
    pub restarts: usize,
    pub max_iter: usize,
    pub free_initial: bool,
    pub std_errors: bool,
}

impl Default for HmmConfig {
    fn default() -> Self {
        let d = HmmOptions::default();
        Self {
            n_regimes: 2,
            select_range: [1, MAX_REGIMES],
            restarts: d.restarts,
            max_iter: d.max_iter,
            free_initial: false,
            std_errors: true,
        }
    }
}

impl HmmConfig {
    pub fn options(&self, seed: u64) -> HmmOptions {
        HmmOptions {
            restarts: self.restarts,
            max_iter: self.max_iter,
            free_initial: self.free_initial,
            std_errors: self.std_errors,
            seed,
            ..HmmOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GarchConfig {
    pub enabled: bool,
    pub mean: MeanMode,
    pub restarts: usize,
}

impl Default for GarchConfig {
    fn default() -> Self {
        Self { enabled: true, mean: MeanMode::Mle, restarts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub n: usize,
    /// Percentiles of the pooled filtered sample bounding the grid.
    pub lower: f64,
    pub upper: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 7, lower: 5.0, upper: 95.0 }
    }
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        GridSpec::Percentile { n: self.n, lo: self.lower, hi: self.upper }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestSection {
    pub enabled: bool,
    pub n_boot: usize,
    pub alpha: f64,
    pub correction: Correction,
}

impl Default for TestSection {
    fn default() -> Self {
        Self { enabled: true, n_boot: 1000, alpha: 0.05, correction: Correction::Bonferroni }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub input: InputConfig,
    pub hmm: HmmConfig,
    pub garch: GarchConfig,
    pub grid: GridConfig,
    pub bandwidth: BandwidthSpec,
    pub lgc: LgcOptions,
    pub test: TestSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("output"),
            input: InputConfig::default(),
            hmm: HmmConfig::default(),
            garch: GarchConfig::default(),
            grid: GridConfig::default(),
            bandwidth: BandwidthSpec::default(),
            lgc: LgcOptions::default(),
            test: TestSection::default(),
        }
    }
}

impl PipelineConfig {
    /// Checks for `analyze`.
    pub fn validate(&self) -> Result<()> {
        let c = self.hmm.n_regimes;
        if c == 0 || c > MAX_REGIMES {
            return Err(CliError::validation(format!("hmm.n_regimes must be in 1..={MAX_REGIMES}, got {c}")));
        }
        if self.test.enabled && c < 2 {
            return Err(CliError::validation("testing needs hmm.n_regimes >= 2; set test.enabled = false for C = 1"));
        }
        if self.test.enabled {
            if self.test.n_boot < 100 {
                return Err(CliError::validation(format!("test.n_boot must be at least 100, got {}", self.test.n_boot)));
            }
            if !(self.test.alpha > 0.0 && self.test.alpha < 1.0) {
                return Err(CliError::validation(format!("test.alpha must lie in (0, 1), got {}", self.test.alpha)));
            }
        }
        self.validate_common()
    }

    /// Checks for `select`.
    pub fn validate_selection(&self) -> Result<()> {
        let [lo, hi] = self.hmm.select_range;
        if lo < 1 || hi < lo || hi > MAX_REGIMES {
            return Err(CliError::validation(format!(
                "hmm.select_range must satisfy 1 <= C_min <= C_max <= {MAX_REGIMES}, got [{lo}, {hi}]"
            )));
        }
        self.validate_common()
    }

    fn validate_common(&self) -> Result<()> {
        if self.input.path.as_os_str().is_empty() {
            return Err(CliError::validation("input.path is required"));
        }
        let g = &self.grid;
        if g.n < 2 || !(0.0..100.0).contains(&g.lower) || !(g.lower < g.upper && g.upper <= 100.0) {
            return Err(CliError::validation(format!(
                "grid needs n >= 2 and 0 <= lower < upper <= 100, got n = {}, [{}, {}]",
                g.n, g.lower, g.upper
            )));
        }
        if self.hmm.restarts == 0 {
            return Err(CliError::validation("hmm.restarts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    #[default]
    Level,
    Power,
    Misclassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub n_datasets: usize,
    pub n_boot: usize,
    pub levels: Vec<f64>,
    /// Regime sizes for the level and power studies.
    pub sizes: Vec<usize>,
    /// Common DGPs (level) or regime-2 alternatives (power); the built-in
    /// lists when empty.
    pub models: Vec<CopulaSpec>,
    /// Regime-1 DGP of the power study.
    pub baseline: Option<CopulaSpec>,
    /// Regime DGPs of the classification study.
    pub regimes: Vec<CopulaSpec>,
    pub latent: Option<LatentPath>,
    /// Series length of the classification study without explicit `latent`.
    pub length: usize,
    pub grid: GridConfig,
    pub bandwidth: BandwidthSpec,
    pub hmm_restarts: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            kind: StudyKind::Level,
            seed: 1,
            output_dir: PathBuf::from("study"),
            n_datasets: 1000,
            n_boot: 1000,
            levels: vec![0.01, 0.05, 0.1],
            sizes: vec![300, 100],
            models: Vec::new(),
            baseline: None,
            regimes: Vec::new(),
            latent: None,
            length: 500,
            grid: GridConfig::default(),
            bandwidth: BandwidthSpec::default(),
            hmm_restarts: HmmOptions::default().restarts,
        }
    }
}

/// Parses TOML into `T`, rejecting every key `T` does not know.
pub fn parse_toml<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let mut unknown = Vec::new();
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::validation(format!("{origin}: {e}")))?;
    let value: T = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| CliError::validation(format!("{origin}: {e}")))?;
    if !unknown.is_empty() {
        return Err(CliError::validation(format!("{origin}: unknown keys: {}", unknown.join(", "))));
    }
    Ok(value)
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_toml(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let c: PipelineConfig = parse_toml("", "t").unwrap();
        assert_eq!(c, PipelineConfig::default());
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let e = parse_toml::<PipelineConfig>("seed = 3\nbogus = 1\n[hmm]\nn_regime = 2\n", "t").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus") && msg.contains("hmm.n_regime"), "{msg}");
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn single_regime_with_test_is_rejected() {
        let mut c = PipelineConfig::default();
        c.input.path = "x.csv".into();
        c.hmm.n_regimes = 1;
        assert!(c.validate().is_err());
        c.test.enabled = false;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn study_config_sections() {
        let c: StudyConfig = parse_toml(
            "kind = \"power\"\nn_datasets = 50\n[[models]]\nfamily = \"clayton\"\nparam = 2.0\nmarginal_sd_a = 4.0\nmarginal_sd_b = 4.0\n",
            "t",
        )
        .unwrap();
        assert_eq!(c.kind, StudyKind::Power);
        assert_eq!(c.models.len(), 1);
    }
}
