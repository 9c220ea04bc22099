use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

/// Error printed as JSON on stderr before a nonzero exit.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub class: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ErrorReport {
    pub fn from_error(err: &anyhow::Error) -> Self {
        use pwa_reach::Error as E;
        let message = format!("{err:#}");
        let Some(e) = err.chain().find_map(|c| c.downcast_ref::<E>()) else {
            let class = if err.chain().any(|c| c.is::<std::io::Error>()) { "io" } else { "usage" };
            return Self { class, message, details: None };
        };
        let (class, details) = match e {
            E::Json(_) | E::DimensionMismatch(_) | E::ZeroNormal | E::NotPositiveDefinite { .. } => ("parse", None),
            E::NotContinuous { matrix_residual, offset_residual } => (
                "continuity",
                Some(serde_json::json!({ "matrix_residual": matrix_residual, "offset_residual": offset_residual })),
            ),
            E::NotHurwitz { mode, max_real_part } => (
                "hurwitz",
                Some(serde_json::json!({ "mode": mode, "max_real_part": max_real_part })),
            ),
            E::AllInfeasible(samples) => ("infeasible", serde_json::to_value(samples).ok()),
            E::AuditFailed { constraint, worst, report } => (
                "audit-failed",
                Some(serde_json::json!({ "constraint": constraint, "worst": worst, "report": report })),
            ),
            E::Io(_) => ("io", None),
            E::Solver(_) | E::UnknownBackend(_) => ("solver", None),
            _ => ("usage", None),
        };
        Self { class, message, details }
    }

    pub fn exit_code(&self) -> u8 {
        match self.class {
            "parse" => 2,
            "continuity" => 3,
            "hurwitz" => 4,
            "infeasible" => 5,
            "audit-failed" => 6,
            "solver" => 7,
            "io" => 8,
            _ => 1,
        }
    }
}

/// Wall-clock seconds per named stage.
#[derive(Debug, Default)]
pub struct Timings(Map<String, Value>);

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.insert(stage.to_string(), Value::from(start.elapsed().as_secs_f64()));
        out
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> Result<()> {
    write_file(dir, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// JSON cannot hold infinities; they become `null`.
pub fn finite(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else {
        Value::Null
    }
}
