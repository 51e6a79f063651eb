//! JSON shapes of every command and the human-readable number format.

use pchart_core::checker::{McEstimate, QueryResult, Value};
use pchart_core::diag::Diagnostic;
use serde::Serialize;

use crate::SchemaName;

pub const SCHEMAS: &[(&str, &str)] = &[
    ("check", include_str!("../schema/check.json")),
    ("verify", include_str!("../schema/verify.json")),
    ("export", include_str!("../schema/export.json")),
    ("codegen", include_str!("../schema/codegen.json")),
    ("simulate", include_str!("../schema/simulate.json")),
    ("stats", include_str!("../schema/stats.json")),
    ("dump", include_str!("../schema/dump.json")),
    ("fmt", include_str!("../schema/fmt.json")),
];

pub fn schema(name: SchemaName) -> &'static str {
    let key = match name {
        SchemaName::Check => "check",
        SchemaName::Verify => "verify",
        SchemaName::Export => "export",
        SchemaName::Codegen => "codegen",
        SchemaName::Simulate => "simulate",
        SchemaName::Stats => "stats",
        SchemaName::Dump => "dump",
        SchemaName::Fmt => "fmt",
    };
    SCHEMAS.iter().find(|(k, _)| *k == key).map(|(_, s)| *s).unwrap()
}

/// Four decimals; values below 1e-3 switch to scientific notation so small
/// probabilities keep their digits. JSON carries full precision.
pub fn number(x: f64) -> String {
    if x == 0.0 || x.abs() >= 1e-3 {
        format!("{x:.4}")
    } else {
        format!("{x:.4e}")
    }
}

pub fn value(v: Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Number(x) => number(x),
        Value::Infinite => "Infinity".to_string(),
    }
}

#[derive(Serialize)]
pub struct ErrorJson {
    pub error: ErrorBody,
}

#[derive(Serialize)]
pub struct ErrorBody {
    /// `usage`, `io`, `diagnostics` or `analysis`.
    pub kind: &'static str,
    pub message: String,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Serialize)]
pub struct CheckJson {
    pub file: String,
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Serialize)]
pub struct CrossCheck {
    pub mean: f64,
    pub std_err: f64,
    /// mean - 3 standard errors.
    pub low: f64,
    pub high: f64,
    pub samples: u64,
    pub seed: u64,
    pub truncated: u64,
    pub agrees: bool,
}

#[derive(Serialize)]
pub struct VerifyRow {
    pub state: Option<String>,
    pub query: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<QueryResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<CrossCheck>,
}

#[derive(Serialize)]
pub struct VerifyJson {
    pub file: String,
    pub chart: String,
    pub states: usize,
    pub transitions: usize,
    pub ok: bool,
    pub invariant: Option<QueryResult>,
    pub queries: Vec<VerifyRow>,
    pub warnings: Vec<Diagnostic>,
}

#[derive(Serialize)]
pub struct ExportJson {
    pub model: String,
    pub properties: String,
    pub variables: usize,
    pub commands: usize,
    pub property_count: usize,
}

#[derive(Serialize)]
pub struct EntryPoint {
    pub event: String,
    pub procedure: String,
}

#[derive(Serialize)]
pub struct CodegenJson {
    /// File the source was written to; absent when it is inlined.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub header: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub entry_points: Vec<EntryPoint>,
    pub warnings: Vec<Diagnostic>,
}

#[derive(Serialize)]
pub struct Estimate {
    pub state: Option<String>,
    pub query: String,
    #[serde(flatten)]
    pub estimate: McEstimate,
}

#[derive(Serialize)]
pub struct SimulateJson {
    pub seed: u64,
    pub estimates: Vec<Estimate>,
}

#[derive(Serialize)]
pub struct StatsJson {
    pub chart: String,
    pub states: usize,
    pub transitions: usize,
    pub variables: usize,
    pub commands: usize,
    /// Length of one tick, e.g. `1d`; absent for untimed charts.
    pub time_base: Option<String>,
    pub build_seconds: f64,
}

#[derive(Serialize)]
pub struct DumpJson {
    pub states: usize,
    pub transitions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump: Option<String>,
}

#[derive(Serialize)]
pub struct FmtJson {
    pub formatted: String,
    pub changed: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_four_decimals() {
        assert_eq!(number(10.0 / 9.0), "1.1111");
        assert_eq!(number(43.0 / 18.0), "2.3889");
        assert_eq!(number(0.0), "0.0000");
        assert_eq!(number(0.000_122_6), "1.2260e-4");
        assert_eq!(value(Value::Infinite), "Infinity");
        assert_eq!(value(Value::Bool(true)), "true");
    }

    #[test]
    fn every_schema_is_json() {
        for (name, text) in SCHEMAS {
            let v: serde_json::Value = serde_json::from_str(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(v.get("oneOf").is_some(), "{name} admits the error shape");
        }
    }
}
