//! Run reports and their JSON/CSV emission.

use serde::{Deserialize, Serialize};

use crate::prune::AdmmTrace;
use crate::train::{Metrics, NfrRow, RateRow, TaskSpec};

/// Aggregate size/cost of the graphs built for one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphStatsSummary {
    pub graphs: usize,
    pub k: usize,
    pub total_nnz: usize,
    pub mean_nnz: f64,
    pub total_bytes: usize,
    pub build_seconds: f64,
}

/// Loss/accuracy history entry. `phase` is `train`, `admm`, or `retrain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: String,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

/// Per-layer parameter accounting after a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer_index: usize,
    pub kind: String,
    pub total_weights: usize,
    pub surviving_weights: usize,
}

/// Wall-clock accounting; omitted entirely in deterministic mode so report
/// files are bitwise reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingInfo {
    pub started_unix_ms: u128,
    pub total_seconds: f64,
}

/// Everything a training run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub seed: u64,
    pub task: TaskSpec,
    pub epochs: Vec<EpochRecord>,
    pub final_metrics: Metrics,
    pub param_table: Vec<LayerReport>,
    pub non_trainable: usize,
    pub total_params: usize,
    pub surviving_weights: usize,
    pub admm_trace: Option<AdmmTrace>,
    pub graph_stats: GraphStatsSummary,
    pub timing: Option<TimingInfo>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<RunReport, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Human-readable summary for the `report` subcommand.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "model={} seed={} version={}\n",
            self.task.model, self.seed, self.tool_version
        ));
        out.push_str(&format!(
            "graphs={} k={} mean_nnz={:.1} bytes={}\n",
            self.graph_stats.graphs,
            self.graph_stats.k,
            self.graph_stats.mean_nnz,
            self.graph_stats.total_bytes
        ));
        out.push_str(&format!(
            "accuracy={:.4} sensitivity={:.4} specificity={:.4} (tp={} tn={} fp={} fn={})\n",
            self.final_metrics.accuracy,
            self.final_metrics.sensitivity,
            self.final_metrics.specificity,
            self.final_metrics.true_pos,
            self.final_metrics.true_neg,
            self.final_metrics.false_pos,
            self.final_metrics.false_neg
        ));
        out.push_str("layer  kind    total  surviving\n");
        for row in &self.param_table {
            out.push_str(&format!(
                "{:<6} {:<7} {:<6} {}\n",
                row.layer_index, row.kind, row.total_weights, row.surviving_weights
            ));
        }
        out.push_str(&format!(
            "non-trainable={} total={} surviving_weights={}\n",
            self.non_trainable, self.total_params, self.surviving_weights
        ));
        if let Some(last) = self.epochs.last() {
            out.push_str(&format!(
                "epochs={} final_phase={} final_loss={:.6}\n",
                self.epochs.len(),
                last.phase,
                last.loss
            ));
        }
        out
    }
}

/// CSV table for near-field-rate sweeps.
pub fn nfr_rows_to_csv(rows: &[NfrRow]) -> String {
    let mut out = String::from("rate,accuracy,mean_nnz,build_seconds,bytes,error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.rate,
            r.accuracy,
            r.mean_nnz,
            r.build_seconds,
            r.bytes,
            r.error.as_deref().unwrap_or("")
        ));
    }
    out
}

/// CSV table for connection-rate sweeps.
pub fn rate_rows_to_csv(rows: &[RateRow]) -> String {
    let mut out = String::from("method,rate,accuracy,surviving_params,error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method,
            r.rate,
            r.accuracy,
            r.surviving_params,
            r.error.as_deref().unwrap_or("")
        ));
    }
    out
}

/// CSV table for `graph-bench`.
pub fn graph_bench_to_csv(rows: &[(f64, GraphStatsSummary)]) -> String {
    let mut out = String::from("rate,k,graphs,total_nnz,mean_nnz,total_bytes,build_seconds\n");
    for (rate, s) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            rate, s.k, s.graphs, s.total_nnz, s.mean_nnz, s.total_bytes, s.build_seconds
        ));
    }
    out
}
