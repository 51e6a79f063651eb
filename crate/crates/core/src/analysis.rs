//! End-to-end verification of a chart: normalize, build the MDP, check the
//! invariant and every query attached to the chart.

use serde::Serialize;

use crate::chart::{Attachment, Chart, Query};
use crate::checker::{check_invariant, evaluate, CheckOptions, QueryResult};
use crate::diag::Diagnostic;
use crate::mdp::{apply_digital_clocks, build_mdp, BuildOptions, BuildStats, Mdp};
use crate::normalize::{lowered_invariant, normalize, resolve_goal, FExpr, FlatSystem, Normalized};

/// A chart compiled down to its explicit MDP.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub normalized: Normalized,
    /// The normalized system with digital clocks applied.
    pub system: FlatSystem,
    pub mdp: Mdp,
    pub stats: BuildStats,
}

#[derive(Debug)]
pub enum CompileError {
    Diagnostics(Vec<Diagnostic>),
    Build(crate::mdp::BuildError),
}

impl std::fmt::Display for CompileError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CompileError::Diagnostics(ds) => {
                let msgs: Vec<String> = ds.iter().filter(|d| d.is_error()).map(|d| d.message.clone()).collect();
                f.write_str(&msgs.join("; "))
            }
            CompileError::Build(e) => write!(f, "{e}"),
        }
    }
}

pub fn compile(chart: &Chart, options: BuildOptions) -> Result<Compiled, CompileError> {
    let normalized = normalize(chart).map_err(CompileError::Diagnostics)?;
    let system = apply_digital_clocks(&normalized.system);
    let (mdp, stats) = build_mdp(&system, options).map_err(CompileError::Build)?;
    Ok(Compiled { normalized, system, mdp, stats })
}

impl Compiled {
    pub fn goal(&self, chart: &Chart, q: &Query) -> Result<FExpr, String> {
        resolve_goal(chart, &self.normalized.layout, q)
    }

    pub fn invariant(&self, chart: &Chart) -> Result<FExpr, String> {
        lowered_invariant(chart, &self.normalized.layout)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryOutcome {
    /// Name of the state the query is attached to, if any.
    pub state: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<QueryResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub chart: String,
    pub states: usize,
    pub transitions: usize,
    /// Absent when the chart declares no invariant.
    pub invariant: Option<QueryResult>,
    pub queries: Vec<QueryOutcome>,
}

/// Checks the invariant and every query of `chart`.
pub fn verify(chart: &Chart, compiled: &Compiled, options: &CheckOptions) -> Report {
    let has_invariant = chart.node_ids().any(|n| chart.node(n).invariant.is_some());
    let invariant = has_invariant.then(|| match compiled.invariant(chart) {
        Ok(inv) => check_invariant(&compiled.mdp, &inv),
        Err(e) => panic!("invariant was checked during normalization: {e}"),
    });
    let queries = chart
        .queries
        .iter()
        .map(|q| {
            let state = match q.attachment {
                Attachment::State(s) => Some(chart.name(s).to_string()),
                Attachment::Floating => None,
            };
            let result = compiled
                .goal(chart, q)
                .and_then(|g| evaluate(&compiled.mdp, q, &g, options).map_err(|e| e.to_string()));
            match result {
                Ok(r) => QueryOutcome { state, result: Some(r), error: None },
                Err(e) => QueryOutcome { state, result: None, error: Some(e) },
            }
        })
        .collect();
    Report {
        chart: chart.name.clone(),
        states: compiled.stats.num_states,
        transitions: compiled.stats.num_transitions,
        invariant,
        queries,
    }
}
