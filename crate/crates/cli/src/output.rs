use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use lgc_regime::garch::TableRow;
use lgc_regime::hmm::HmmModel;
use lgc_regime::lgc::LgcMap;
use lgc_regime::timeseries::{Group, GroupStats};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const LOCK_FILE: &str = ".lgc-regime.lock";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Exclusive hold on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::io(
                &path,
                std::io::Error::new(e.kind(), "output directory is locked by another run; remove the lock file if that run is gone"),
            )),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    /// `ok` or `FAILED`.
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub artifacts: Vec<Artifact>,
    pub runtimes: Vec<StageTime>,
    pub warnings: Vec<String>,
}

/// An output directory whose files are hashed as they are written.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
    pub runtimes: Vec<StageTime>,
    /// Stage in progress, reported when an error carries none.
    pub stage: Option<&'static str>,
    _lock: DirLock,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl OutputDir {
    pub fn open(dir: &Path) -> Result<Self> {
        let lock = DirLock::acquire(dir)?;
        Ok(Self { dir: dir.to_path_buf(), artifacts: Vec::new(), warnings: Vec::new(), runtimes: Vec::new(), stage: None, _lock: lock })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.retain(|a| a.file != name);
        self.artifacts.push(Artifact { file: name.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_vec_pretty(value).map_err(|e| CliError::validation(format!("{name}: {e}")))?;
        text.push(b'\n');
        self.write_bytes(name, &text)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::io(name, std::io::Error::other(e.to_string()));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(&r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(name, std::io::Error::other(e.to_string())))?;
        self.write_bytes(name, &bytes)
    }

    pub fn time(&mut self, stage: &str, seconds: f64) {
        self.runtimes.push(StageTime { stage: stage.into(), seconds });
    }

    /// Writes the manifest; `failure` marks the run FAILED.
    pub fn finish(self, command: &str, seed: u64, threads: usize, failure: Option<&CliError>) -> Result<Manifest> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            threads,
            status: if failure.is_some() { "FAILED".into() } else { "ok".into() },
            failed_stage: failure.and_then(|e| e.stage().or(self.stage)).map(String::from),
            error: failure.map(|e| e.to_string()),
            artifacts: self.artifacts.clone(),
            runtimes: self.runtimes.clone(),
            warnings: self.warnings.clone(),
        };
        let path = self.dir.join(MANIFEST_FILE);
        let mut f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::validation(e.to_string()))?;
        writeln!(f, "{text}").map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

/// Shortest round-trip representation; empty for NaN.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v != 0.0 && v.is_finite() && !(1e-5..1e16).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub const STATS_HEADER: [&str; 13] =
    ["variable", "series", "regime", "n", "mean", "median", "min", "max", "iqr", "variance", "skewness", "kurtosis", "jarque_bera"];

pub fn stats_rows(variable: &str, series: &str, groups: &[GroupStats]) -> Vec<Vec<String>> {
    groups
        .iter()
        .map(|g| {
            let s = &g.stats;
            let regime = match g.group {
                Group::All => "all".to_string(),
                Group::Regime(k) => k.to_string(),
            };
            vec![
                variable.into(),
                series.into(),
                regime,
                s.n.to_string(),
                num(s.mean),
                num(s.median),
                num(s.min),
                num(s.max),
                num(s.iqr),
                num(s.variance),
                num(s.skewness),
                num(s.kurtosis),
                num(s.jarque_bera),
            ]
        })
        .collect()
}

pub const MAP_HEADER: [&str; 9] = ["x", "y", "mu1", "mu2", "sigma1", "sigma2", "rho", "converged", "weight"];

pub fn map_rows(map: &LgcMap) -> Vec<Vec<String>> {
    (0..map.grid.len())
        .map(|idx| {
            let [x, y] = map.grid.point(idx);
            let p = &map.params[idx];
            vec![
                num(x),
                num(y),
                num(p.mu1),
                num(p.mu2),
                num(p.sigma1),
                num(p.sigma2),
                num(p.rho),
                p.converged.to_string(),
                num(map.grid.weights()[idx]),
            ]
        })
        .collect()
}

pub const GARCH_HEADER: [&str; 6] = ["variable", "parameter", "estimate", "std_error", "t_value", "p_value"];

pub fn garch_rows(variable: &str, table: &[TableRow]) -> Vec<Vec<String>> {
    table.iter().map(|r| vec![variable.into(), r.name.clone(), num(r.estimate), num(r.std_error), num(r.t_value), num(r.p_value)]).collect()
}

/// Natural parameters and standard errors, one row each.
pub fn hmm_parameter_rows(m: &HmmModel) -> Vec<Vec<String>> {
    let se = m.std_errors.as_ref();
    let mut rows = Vec::new();
    let mut push = |name: String, v: f64, s: Option<f64>| rows.push(vec![name, num(v), s.map_or(String::new(), num)]);
    for k in 0..m.n_regimes {
        for i in 0..2 {
            push(format!("mu_{},{}", k + 1, i + 1), m.means[k][i], se.map(|s| s.means[k][i]));
        }
    }
    for k in 0..m.n_regimes {
        for i in 0..2 {
            for j in 0..2 {
                push(format!("sigma_{},{}{}", k + 1, i + 1, j + 1), m.covariances[k][i][j], se.map(|s| s.covariances[k][i][j]));
            }
        }
    }
    for i in 0..m.n_regimes {
        for j in 0..m.n_regimes {
            push(format!("gamma_{}{}", i + 1, j + 1), m.tpm[i][j], se.map(|s| s.tpm[i][j]));
        }
    }
    for i in 0..m.n_regimes {
        push(format!("delta_{}", i + 1), m.stationary[i], se.map(|s| s.stationary[i]));
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = DirLock::acquire(dir.path()).unwrap();
        let e = DirLock::acquire(dir.path()).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        drop(a);
        assert!(DirLock::acquire(dir.path()).is_ok());
    }
}
