//! Metrics CSV and run manifest.
//!
//! Each round emits one `client` row per client followed by one `global` row.
//! Columns that do not apply to a row kind are left empty.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tokenfl_core::engine::{RoundRecord, SimConfig};

use crate::config::RunConfig;
use crate::dataset::FileChecksum;

pub const METRICS_HEADER: &[&str] = &[
    "round",
    "kind",
    "client",
    "eps",
    "scheduled",
    "trained",
    "participated",
    "earned",
    "spent",
    "expired",
    "balance",
    "bought",
    "evicted",
    "owned_model_round",
    "accuracy",
    "utility",
    "cumulative_payoff",
    "noise_scale",
    "participants",
    "tokens_credited",
    "global_accuracy",
];

#[derive(Debug, Default, Serialize)]
struct Row {
    round: u32,
    kind: &'static str,
    client: Option<u32>,
    eps: Option<f64>,
    scheduled: Option<bool>,
    trained: Option<bool>,
    participated: Option<bool>,
    earned: Option<f64>,
    spent: Option<f64>,
    expired: Option<f64>,
    balance: Option<f64>,
    bought: Option<bool>,
    evicted: Option<bool>,
    owned_model_round: Option<u32>,
    accuracy: Option<f64>,
    utility: Option<f64>,
    cumulative_payoff: Option<f64>,
    noise_scale: Option<f64>,
    participants: Option<usize>,
    tokens_credited: Option<f64>,
    global_accuracy: Option<f64>,
}

pub struct MetricsWriter<W: Write> {
    csv: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(inner: W) -> csv::Result<Self> {
        let mut csv = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(inner);
        csv.write_record(METRICS_HEADER)?;
        Ok(Self { csv })
    }

    pub fn write_round(&mut self, r: &RoundRecord) -> csv::Result<()> {
        for c in &r.clients {
            self.csv.serialize(Row {
                round: r.round,
                kind: "client",
                client: Some(c.client),
                eps: Some(c.eps),
                scheduled: Some(c.scheduled),
                trained: Some(c.trained),
                participated: Some(c.participated),
                earned: Some(c.earned),
                spent: Some(c.spent),
                expired: Some(c.expired),
                balance: Some(c.balance),
                bought: Some(c.bought),
                evicted: Some(c.evicted),
                owned_model_round: Some(c.owned_model_round),
                accuracy: Some(c.accuracy),
                utility: Some(c.utility),
                cumulative_payoff: Some(c.cumulative_payoff),
                noise_scale: Some(c.noise_scale),
                ..Row::default()
            })?;
        }
        self.csv.serialize(Row {
            round: r.round,
            kind: "global",
            participants: Some(r.participants.len()),
            tokens_credited: Some(r.tokens_credited),
            global_accuracy: Some(r.global_accuracy),
            ..Row::default()
        })
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.csv.flush()
    }
}

/// Everything needed to replay a run; `tokenfl run manifest.json` accepts it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub name: String,
    pub preset: Option<String>,
    pub config: RunConfig,
    pub resolved: SimConfig,
    pub seed: u64,
    pub dataset_dir: PathBuf,
    pub dataset_checksums: Vec<FileChecksum>,
    pub metrics_csv: PathBuf,
    pub rounds_completed: u32,
    pub error: Option<String>,
}
