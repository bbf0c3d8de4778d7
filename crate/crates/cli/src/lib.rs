//! Scenario runner: load a TOML scenario, run its checks, report.

pub mod registry;
pub mod scenario;

use std::path::Path;

use serde::Serialize;
use tkbundle_core::report::CheckRecord;
use tkbundle_core::{Backend, Rational};

pub use scenario::{Overrides, Scenario};

/// Default cap on the order of any check, overridable by `TKBUNDLE_MAX_ORDER`.
pub const DEFAULT_MAX_ORDER: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario at `{path}`: {message}")]
    Validation { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// One record tagged with the check that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    pub check: String,
    #[serde(flatten)]
    pub record: CheckRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub backend: Backend,
    pub records: usize,
    pub failed: usize,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub entries: Vec<Entry>,
    pub summary: Summary,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.summary.pass
    }

    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            0
        } else {
            1
        }
    }

    /// Line-delimited JSON: one object per record, then `{"summary": …}`.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("records serialize"));
            out.push('\n');
        }
        #[derive(Serialize)]
        struct Wrapped<'a> {
            summary: &'a Summary,
        }
        out.push_str(&serde_json::to_string(&Wrapped { summary: &self.summary }).expect("summary serializes"));
        out.push('\n');
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("scenario {} ({:?} backend)\n", self.summary.scenario, self.summary.backend).to_lowercase();
        for e in &self.entries {
            let r = &e.record;
            out.push_str(&format!(
                "{}  {:<28} k={} samples={} max_abs={:.3e} max_rel={:.3e} tol={:e}\n",
                if r.pass { "PASS" } else { "FAIL" },
                r.name,
                r.order,
                r.samples,
                r.max_abs_residual,
                r.max_rel_residual,
                r.tolerance
            ));
            if let Some(d) = &r.diagnostic {
                out.push_str(&format!("      {d}\n"));
            }
        }
        out.push_str(&format!(
            "overall: {} ({} of {} records pass)\n",
            if self.pass() { "PASS" } else { "FAIL" },
            self.summary.records - self.summary.failed,
            self.summary.records
        ));
        out
    }
}

/// Reads `TKBUNDLE_MAX_ORDER`, falling back to the default.
pub fn max_order_from_env() -> Result<usize, CliError> {
    match std::env::var("TKBUNDLE_MAX_ORDER") {
        Err(_) => Ok(DEFAULT_MAX_ORDER),
        Ok(v) => v.trim().parse().map_err(|_| CliError::Validation {
            path: "TKBUNDLE_MAX_ORDER".into(),
            message: format!("`{v}` is not a non-negative integer"),
        }),
    }
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    scenario::parse(&text, overrides)
}

/// Runs every check in declaration order.
pub fn run(s: &Scenario) -> Report {
    let mut entries = Vec::new();
    for inv in &s.checks {
        let records = match s.backend {
            Backend::Exact => registry::run::<Rational>(inv),
            Backend::Float => registry::run::<f64>(inv),
        };
        entries.extend(records.into_iter().map(|record| Entry {
            check: inv.check.to_string(),
            record,
        }));
    }
    let failed = entries.iter().filter(|e| !e.record.pass).count();
    Report {
        summary: Summary {
            scenario: s.name.clone(),
            backend: s.backend,
            records: entries.len(),
            failed,
            pass: failed == 0,
        },
        entries,
    }
}
