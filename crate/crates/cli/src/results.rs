//! Result records: line-delimited JSON for tooling plus a tab-separated
//! table for plotting. Each command rewrites its own files from scratch, so
//! reruns are byte-comparable; rows never contain timestamps or absolute
//! paths.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rainbow_core::EvalReport;

use crate::error::Result;

/// Root directory for results: `RAINBOW_RESULTS_DIR` wins over the default
/// `./results`.
pub fn results_root() -> PathBuf {
    match std::env::var_os("RAINBOW_RESULTS_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from("results"),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRow {
    pub command: String,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub point: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub overrides: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epoch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub win_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub avg_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pairwise_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy_ties: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_reward: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
}

impl RunRow {
    pub fn new(command: &str, label: &str, seed: u64, config_hash: String) -> Self {
        Self {
            command: command.to_string(),
            label: label.to_string(),
            stage: None,
            point: None,
            overrides: None,
            epoch: None,
            train_loss: None,
            win_rate: None,
            avg_length: None,
            pairwise_accuracy: None,
            accuracy_ties: None,
            mean_reward: None,
            seed,
            config_hash,
        }
    }

    pub fn with_eval(mut self, report: &EvalReport) -> Self {
        self.win_rate = Some(report.win_rate);
        self.avg_length = Some(report.avg_length);
        self.pairwise_accuracy = Some(report.pairwise_accuracy);
        self.accuracy_ties = Some(report.accuracy_ties);
        self.mean_reward = Some(report.mean_reward);
        self
    }
}

pub const TSV_HEADER: &str = "command\tlabel\tstage\tpoint\toverrides\tepoch\ttrain_loss\twin_rate\tavg_length\tpairwise_accuracy\taccuracy_ties\tmean_reward\tseed\tconfig_hash";

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

impl RunRow {
    pub fn tsv_line(&self) -> String {
        [
            self.command.clone(),
            self.label.clone(),
            opt(&self.stage),
            opt(&self.point),
            opt(&self.overrides),
            opt(&self.epoch),
            opt(&self.train_loss),
            opt(&self.win_rate),
            opt(&self.avg_length),
            opt(&self.pairwise_accuracy),
            opt(&self.accuracy_ties),
            opt(&self.mean_reward),
            self.seed.to_string(),
            self.config_hash.clone(),
        ]
        .join("\t")
    }
}

/// Write both representations of a row set, truncating previous contents.
pub fn write_rows(dir: &Path, basename: &str, rows: &[RunRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut jsonl = Vec::new();
    let mut tsv = Vec::new();
    writeln!(tsv, "{TSV_HEADER}").expect("vec write");
    for row in rows {
        let line = serde_json::to_string(row).expect("row serializes");
        writeln!(jsonl, "{line}").expect("vec write");
        writeln!(tsv, "{}", row.tsv_line()).expect("vec write");
    }
    std::fs::write(dir.join(format!("{basename}.jsonl")), jsonl)?;
    std::fs::write(dir.join(format!("{basename}.tsv")), tsv)?;
    Ok(())
}

/// Per-step loss trace as its own small table.
pub fn write_trace(dir: &Path, basename: &str, trace: &[f64]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut out = String::from("step\tloss\n");
    for (step, loss) in trace.iter().enumerate() {
        out.push_str(&format!("{step}\t{loss}\n"));
    }
    std::fs::write(dir.join(format!("{basename}.tsv")), out)?;
    Ok(())
}
