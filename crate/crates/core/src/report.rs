//! The JSON record shared by every checker.
//!
//! A [`Report`] is a list of [`CheckRecord`]s plus an environment echo. Only
//! hard-gate records may carry [`Status::Fail`]; statistical records that
//! exceed their slack are [`Status::Flag`].

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Flag,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    /// Provable without log-concavity: a violation is a bug.
    Hard,
    /// Relies on the continuous measure: finite samples get slack.
    Statistical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub seeds: Vec<u64>,
    pub violations: usize,
    /// Number of instances the record aggregates.
    pub cases: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    pub status: Status,
    pub gate: Gate,
}

impl CheckRecord {
    /// Aggregates `cases` hard-gate instances; `lhs`/`rhs` describe the worst one.
    pub fn hard(check: impl Into<String>, lhs: f64, rhs: f64, cases: usize, violations: usize, seeds: Vec<u64>) -> Self {
        let status = if violations == 0 { Status::Pass } else { Status::Fail };
        CheckRecord { check: check.into(), lhs, rhs, slack: 1.0, seeds, violations, cases, z: None, status, gate: Gate::Hard }
    }

    pub fn statistical(
        check: impl Into<String>,
        lhs: f64,
        rhs: f64,
        slack: f64,
        cases: usize,
        violations: usize,
        seeds: Vec<u64>,
    ) -> Self {
        let status = if violations == 0 { Status::Pass } else { Status::Flag };
        CheckRecord { check: check.into(), lhs, rhs, slack, seeds, violations, cases, z: None, status, gate: Gate::Statistical }
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.z = Some(z);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EnvValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for EnvValue {
    fn from(v: f64) -> Self {
        EnvValue::Float(v)
    }
}

impl From<u64> for EnvValue {
    fn from(v: u64) -> Self {
        EnvValue::Int(v as i64)
    }
}

impl From<usize> for EnvValue {
    fn from(v: usize) -> Self {
        EnvValue::Int(v as i64)
    }
}

impl From<&str> for EnvValue {
    fn from(v: &str) -> Self {
        EnvValue::Text(v.to_string())
    }
}

impl From<String> for EnvValue {
    fn from(v: String) -> Self {
        EnvValue::Text(v)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    /// Seeds, constants and tolerances, sorted by key.
    pub environment: BTreeMap<String, EnvValue>,
    pub checks: Vec<CheckRecord>,
}

impl Report {
    pub fn new() -> Self {
        let mut r = Report::default();
        r.echo("log_base", "natural");
        r
    }

    pub fn echo(&mut self, key: impl Into<String>, value: impl Into<EnvValue>) {
        self.environment.insert(key.into(), value.into());
    }

    pub fn push(&mut self, record: CheckRecord) {
        self.checks.push(record);
    }

    pub fn extend(&mut self, other: Report) {
        self.environment.extend(other.environment);
        self.checks.extend(other.checks);
    }

    /// Worst status over all records.
    pub fn status(&self) -> Status {
        self.checks.iter().map(|c| c.status).max().unwrap_or(Status::Pass)
    }

    pub fn failed(&self) -> bool {
        self.status() == Status::Fail
    }

    pub fn flagged(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| c.status == Status::Flag)
    }

    /// Pretty JSON. Non-finite numbers become `null`.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
