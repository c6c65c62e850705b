//! Run configuration: a TOML file with one table per command, layered under
//! command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer};

use crate::CliError;

/// A number written as a decimal (`0.25`) or a simple fraction (`1/3`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Number(pub f64);

pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| format!("bad numerator in '{s}'"))?;
            let den: f64 = den.trim().parse().map_err(|_| format!("bad denominator in '{s}'"))?;
            if den == 0.0 {
                return Err(format!("zero denominator in '{s}'"));
            }
            num / den
        }
        None => s.parse().map_err(|_| format!("'{s}' is not a number"))?,
    };
    if !value.is_finite() {
        return Err(format!("'{s}' is not finite"));
    }
    Ok(value)
}

impl FromStr for Number {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_number(s).map(Number)
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl<'de> Deserialize<'de> for Number {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Float(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Float(x) => Ok(Number(x)),
            Raw::Int(i) => Ok(Number(i as f64)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Comma-separated numbers, e.g. `60,40` or `1/3,2/3`.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberList(pub Vec<f64>);

impl FromStr for NumberList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',').map(parse_number).collect::<Result<_, _>>().map(NumberList)
    }
}

pub fn values(xs: &[Number]) -> Vec<f64> {
    xs.iter().map(|n| n.0).collect()
}

/// Inputs shared by `security` and `bribery`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Allocation matrix CSV.
    pub allocation: Option<PathBuf>,
    /// Inline allocation rows, used when no file is given.
    pub omega: Option<Vec<Vec<Number>>>,
    /// Validator stakes; row sums of the allocation when absent.
    pub stakes: Option<Vec<Number>>,
    pub pi: Option<Number>,
    pub theta: Option<Number>,
    pub rate: Option<Number>,
    /// Total reward R; derived as r·Δ when absent.
    pub reward: Option<Number>,
    /// Pool for the single-SSP baseline; the largest pool when absent.
    pub single_ssp: Option<usize>,
    /// Fixed slashing penalty per validator (bribery only).
    pub slashing: Option<Vec<Number>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub stakes: Option<Vec<Number>>,
    pub k: Option<usize>,
    /// Starting allocation for the iterative equalizer.
    pub allocation: Option<PathBuf>,
    pub pi: Option<Number>,
    pub theta: Option<Number>,
    pub rate: Option<Number>,
    pub probes: Option<usize>,
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSection {
    pub prices: Option<PathBuf>,
    /// Number of most recent daily returns used.
    pub window: Option<usize>,
    pub shock_asset: Option<String>,
    pub shock_factor: Option<Number>,
    pub theta: Option<Number>,
}

/// Output format of tabular files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub security: Option<ModelSection>,
    pub bribery: Option<ModelSection>,
    pub optimize: Option<OptimizeSection>,
    pub risk: Option<RiskSection>,
    /// Simulation settings; validated against the simulator's schema.
    pub simulate: Option<toml::Table>,
    /// Directory relative paths in the file are resolved against.
    #[serde(skip)]
    pub base: PathBuf,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Resolves a path from the config file against its directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_and_decimals() {
        assert_eq!(parse_number("1/3").unwrap(), 1.0 / 3.0);
        assert_eq!(parse_number(" 0.25 ").unwrap(), 0.25);
        assert_eq!(parse_number("3").unwrap(), 3.0);
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("a/3").is_err());
        assert!(parse_number("").is_err());
        assert!(parse_number("inf").is_err());
        assert_eq!("60,40".parse::<NumberList>().unwrap().0, vec![60.0, 40.0]);
    }

    #[test]
    fn toml_numbers_accept_all_forms() {
        let s: ModelSection = toml::from_str("theta = \"1/3\"\npi = 10\nrate = 0.1").unwrap();
        assert_eq!(s.theta, Some(Number(1.0 / 3.0)));
        assert_eq!(s.pi, Some(Number(10.0)));
        assert_eq!(s.rate, Some(Number(0.1)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sead = 1").is_err());
        assert!(toml::from_str::<ModelSection>("thetta = 0.3").is_err());
        let ok: RunConfig = toml::from_str("seed = 7\n[simulate]\nn_trials = 3").unwrap();
        assert_eq!(ok.seed, Some(7));
    }
}
