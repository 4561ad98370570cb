//! `key = value` experiment files.
//!
//! One experiment per file, `#` starts a comment, blank lines are ignored.
//! Unknown keys and malformed values are rejected with their line number.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use klslab::Family;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Verify,
    Bounds,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Bounds => "bounds",
            Command::Report => "report",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "simulate" => Ok(Command::Simulate),
            "verify" => Ok(Command::Verify),
            "bounds" => Ok(Command::Bounds),
            "report" => Ok(Command::Report),
            _ => Err(format!("unknown command `{s}` (simulate | verify | bounds | report)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Trace,
    Swap,
    Moments,
    TensorLemmas,
    Drift,
    Martingale,
    Potential,
    All,
}

impl Suite {
    pub const EACH: [Suite; 7] =
        [Suite::Trace, Suite::Swap, Suite::Moments, Suite::TensorLemmas, Suite::Drift, Suite::Martingale, Suite::Potential];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Trace => "trace",
            Suite::Swap => "swap",
            Suite::Moments => "moments",
            Suite::TensorLemmas => "tensor-lemmas",
            Suite::Drift => "drift",
            Suite::Martingale => "martingale",
            Suite::Potential => "potential",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}` (trace | swap | moments | tensor-lemmas | drift | martingale | potential | all)"))
    }
}

/// Covariance of the base density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceKind {
    /// The family's isotropic member.
    Isotropic,
    /// A Gaussian with random SPD covariance (spectrum in `[0.5, 2]`); Gaussian family only.
    Random,
}

/// Test fixture: corrupt one hard gate to exercise the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Fault {
    None,
    Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub family: Family,
    pub d: usize,
    pub covariance: CovarianceKind,
    pub n_atoms: usize,
    pub q: u32,
    /// Horizon `T`.
    pub horizon: f64,
    /// Defaults to `1e-3 · min(1, T)`.
    pub dt: Option<f64>,
    pub seed: u64,
    pub paths: usize,
    pub slack: f64,
    pub suite: Suite,
    /// Random instances for the trace and swap gates.
    pub cases: usize,
    /// Clouds per family for the statistical tensor suites.
    pub seeds: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Strong log-concavity used for the tilted clouds.
    pub tau: f64,
    pub drift_stride: usize,
    pub d_list: Vec<f64>,
    pub c: f64,
    pub c_lv: f64,
    pub directions: usize,
    pub knn: usize,
    pub inject_fault: Fault,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: None,
            family: Family::Gaussian,
            d: 4,
            covariance: CovarianceKind::Isotropic,
            n_atoms: 1000,
            q: 3,
            horizon: 1.0,
            dt: None,
            seed: 0,
            paths: 10,
            slack: 1.1,
            suite: Suite::All,
            cases: 1000,
            seeds: 5,
            alpha: 4.0,
            beta: 0.5,
            tau: 1.0,
            drift_stride: 10,
            d_list: (3..=12).map(|k| 10f64.powi(k)).collect(),
            c: 1.0,
            c_lv: 1.0,
            directions: 16,
            knn: 10,
            inject_fault: Fault::None,
            out: None,
        }
    }
}

/// A config problem, pointing at the offending line when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

fn parse_value<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse `{value}`: {e}"))
}

fn parse_list(value: &str) -> Result<Vec<f64>, String> {
    value.split(',').map(|s| parse_value::<f64>(s.trim())).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError { line: Some(line_no), message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(err)?;
        }
        cfg.validate().map_err(|message| ConfigError { line: None, message })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "command" => self.command = Some(parse_value(value)?),
            "family" => self.family = value.parse::<Family>().map_err(|e| e.to_string())?,
            "d" => self.d = parse_value(value)?,
            "covariance" => {
                self.covariance = match value {
                    "isotropic" => CovarianceKind::Isotropic,
                    "random" => CovarianceKind::Random,
                    _ => return Err(format!("unknown covariance `{value}` (isotropic | random)")),
                }
            }
            "n_atoms" => self.n_atoms = parse_value(value)?,
            "q" => self.q = parse_value(value)?,
            "T" => self.horizon = parse_value(value)?,
            "dt" => self.dt = Some(parse_value(value)?),
            "seed" => self.seed = parse_value(value)?,
            "paths" => self.paths = parse_value(value)?,
            "slack" => self.slack = parse_value(value)?,
            "suite" => self.suite = parse_value(value)?,
            "cases" => self.cases = parse_value(value)?,
            "seeds" => self.seeds = parse_value(value)?,
            "alpha" => self.alpha = parse_value(value)?,
            "beta" => self.beta = parse_value(value)?,
            "tau" => self.tau = parse_value(value)?,
            "drift_stride" => self.drift_stride = parse_value(value)?,
            "d_list" => self.d_list = if value.is_empty() { Vec::new() } else { parse_list(value)? },
            "c" => self.c = parse_value(value)?,
            "c_lv" => self.c_lv = parse_value(value)?,
            "directions" => self.directions = parse_value(value)?,
            "knn" => self.knn = parse_value(value)?,
            "inject_fault" => {
                self.inject_fault = match value {
                    "none" => Fault::None,
                    "trace" => Fault::Trace,
                    _ => return Err(format!("unknown fault `{value}` (none | trace)")),
                }
            }
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), String> {
        if self.d == 0 {
            return Err("d must be at least 1".into());
        }
        if self.n_atoms <= self.d {
            return Err(format!("n_atoms = {} must exceed d = {}", self.n_atoms, self.d));
        }
        if self.q == 0 {
            return Err("q must be at least 1".into());
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(format!("T must be finite and nonnegative, got {}", self.horizon));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(format!("dt must be positive, got {dt}"));
            }
            if self.horizon > 0.0 && dt > self.horizon {
                return Err(format!("dt = {dt} exceeds T = {}", self.horizon));
            }
        }
        if self.paths == 0 || self.cases == 0 || self.seeds == 0 {
            return Err("paths, cases and seeds must be positive".into());
        }
        if !(self.slack >= 1.0) {
            return Err(format!("slack must be at least 1, got {}", self.slack));
        }
        if !(self.alpha >= 1.0) || !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(format!("need alpha >= 1 and beta in (0, 1/2], got {} and {}", self.alpha, self.beta));
        }
        if !(self.tau > 0.0) || !(self.c > 0.0) || !(self.c_lv > 0.0) {
            return Err("tau, c and c_lv must be positive".into());
        }
        if self.covariance == CovarianceKind::Random && self.family != Family::Gaussian {
            return Err("covariance = random is only available for the gaussian family".into());
        }
        if self.d_list.iter().any(|d| !(*d >= 1.0) || !d.is_finite()) {
            return Err("every entry of d_list must be a finite dimension >= 1".into());
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1e-3 * self.horizon.min(1.0)).max(f64::MIN_POSITIVE)
    }

    /// Checks the file's `command` key, if any, against the subcommand used.
    pub fn expect_command(&self, command: Command) -> Result<(), CliError> {
        match self.command {
            Some(c) if c != command => Err(CliError::Usage(format!(
                "config is for `{}` but `{}` was invoked",
                c.name(),
                command.name()
            ))),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_comments() {
        let cfg = ExperimentConfig::parse("# gaussian run\nfamily = gaussian\nd = 4   # dimension\nq=3\nT = 1\ndt = 1e-3\npaths = 100\n").unwrap();
        assert_eq!(cfg.d, 4);
        assert_eq!(cfg.paths, 100);
        assert_eq!(cfg.dt(), 1e-3);
    }

    #[test]
    fn unknown_key_names_its_line() {
        let e = ExperimentConfig::parse("d = 3\n\nbogus = 1\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("bogus"));
    }

    #[test]
    fn dt_beyond_horizon_is_rejected() {
        let e = ExperimentConfig::parse("T = 0.1\ndt = 0.5\n").unwrap_err();
        assert!(e.message.contains("exceeds"));
    }

    #[test]
    fn default_dt_scales_with_short_horizons() {
        let cfg = ExperimentConfig::parse("T = 0.5\n").unwrap();
        assert_eq!(cfg.dt(), 5e-4);
    }

    #[test]
    fn lists_and_enums() {
        let cfg = ExperimentConfig::parse("d_list = 1e3, 1e6\nsuite = tensor-lemmas\nfamily = uniform-ball\n").unwrap();
        assert_eq!(cfg.d_list, vec![1e3, 1e6]);
        assert_eq!(cfg.suite, Suite::TensorLemmas);
        assert_eq!(cfg.family, Family::UniformBall);
        assert!(ExperimentConfig::parse("suite = everything\n").is_err());
        assert!(ExperimentConfig::parse("d = 3\nd = 4\n").is_err());
    }
}
