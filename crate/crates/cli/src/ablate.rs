//! Greedy component-by-component ablation: stage `k` fixes the winners of
//! stages `< k` and sweeps only its own grid, so the total run count is the
//! sum of the per-stage grid sizes rather than their product.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rainbow_core::EvalReport;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::results::{write_rows, RunRow};
use crate::runs::run_experiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    WinRate,
    PairwiseAccuracy,
    MeanReward,
}

impl Metric {
    fn extract(&self, report: &EvalReport) -> f64 {
        match self {
            Metric::WinRate => report.win_rate,
            Metric::PairwiseAccuracy => report.pairwise_accuracy,
            Metric::MeanReward => report.mean_reward,
        }
    }
}

/// Whether a stage adds a component on top of the running winner config or
/// removes one from it; only the row label changes, the overrides say what
/// actually happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageMode {
    #[default]
    Add,
    Drop,
}

impl StageMode {
    fn prefix(&self) -> &'static str {
        match self {
            StageMode::Add => "\u{2295} ",
            StageMode::Drop => "\u{2212} ",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub name: String,
    #[serde(default)]
    pub mode: StageMode,
    /// Hyper-parameter settings to sweep, as dotted-path overrides of the
    /// experiment config (e.g. `"loss.beta" = 10.0`).
    pub points: Vec<toml::Table>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Base experiment config path, relative to the grid file; defaults
    /// apply when omitted.
    pub config: Option<PathBuf>,
    #[serde(default)]
    pub metric: Metric,
    pub stage: Vec<StageSpec>,
}

impl GridSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let spec: GridSpec = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if spec.stage.is_empty() {
            return Err(CliError::config("ablation grid lists no stages"));
        }
        if let Some(stage) = spec.stage.iter().find(|s| s.points.is_empty()) {
            return Err(CliError::config(format!(
                "stage {:?} lists no grid points",
                stage.name
            )));
        }
        Ok(spec)
    }

    pub fn base_config(&self, spec_path: &Path) -> Result<ExperimentConfig> {
        match &self.config {
            Some(rel) => {
                let base_dir = spec_path.parent().unwrap_or_else(|| Path::new("."));
                ExperimentConfig::load(base_dir.join(rel))
            }
            None => Ok(ExperimentConfig::default()),
        }
    }
}

/// Set one dotted path inside a TOML tree, creating tables on the way.
fn set_path(root: &mut toml::Table, dotted: &str, value: toml::Value) -> Result<()> {
    let segments: Vec<&str> = dotted.split('.').collect();
    let mut node = root;
    for segment in &segments[..segments.len() - 1] {
        let entry = node
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            CliError::config(format!(
                "override path {dotted:?} crosses a non-table value"
            ))
        })?;
    }
    node.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

/// Apply dotted-path overrides to a config; unknown paths are rejected when
/// the result deserializes.
pub fn apply_overrides(
    base: &ExperimentConfig,
    overrides: &toml::Table,
) -> Result<ExperimentConfig> {
    let mut tree = toml::Table::try_from(base)
        .map_err(|e| CliError::runtime(format!("config serialization failed: {e}")))?;
    for (path, value) in overrides {
        set_path(&mut tree, path, value.clone())?;
    }
    let cfg: ExperimentConfig = toml::Value::Table(tree)
        .try_into()
        .map_err(|e| CliError::config(format!("overrides do not fit the config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn overrides_summary(table: &toml::Table) -> String {
    table
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub struct AblateOutcome {
    pub rows: Vec<RunRow>,
    pub summary: Vec<RunRow>,
    pub total_runs: usize,
}

pub fn cmd_ablate(
    spec_path: &Path,
    seed_override: Option<u64>,
    jobs: usize,
    results_dir: &Path,
) -> Result<AblateOutcome> {
    let spec = GridSpec::load(spec_path)?;
    let mut base = spec.base_config(spec_path)?;
    if let Some(seed) = seed_override {
        base.override_seed(seed);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))?;

    let mut winners = toml::Table::new();
    let mut rows: Vec<RunRow> = Vec::new();
    let mut summary: Vec<RunRow> = Vec::new();

    for stage in &spec.stage {
        // Every point rides on the winners of all earlier stages.
        let merged: Vec<toml::Table> = stage
            .points
            .iter()
            .map(|point| {
                let mut table = winners.clone();
                table.extend(point.clone());
                table
            })
            .collect();
        let outcomes: Vec<Result<(EvalReport, String)>> = pool.install(|| {
            merged
                .par_iter()
                .map(|table| {
                    let cfg = apply_overrides(&base, table)?;
                    run_experiment(&cfg)
                })
                .collect()
        });

        let mut best: Option<(usize, f64)> = None;
        for (idx, outcome) in outcomes.iter().enumerate() {
            let (report, hash) = match outcome {
                Ok(pair) => pair,
                Err(e) => {
                    return Err(CliError::runtime(format!(
                        "stage {:?} point {idx}: {e}",
                        stage.name
                    )))
                }
            };
            let label = format!("{}{}", stage.mode.prefix(), stage.name);
            let mut row =
                RunRow::new("ablate", &label, base.world.seed, hash.clone()).with_eval(report);
            row.stage = Some(stage.name.clone());
            row.point = Some(idx);
            row.overrides = Some(overrides_summary(&stage.points[idx]));
            rows.push(row);

            let value = spec.metric.extract(report);
            let better = match best {
                None => true,
                Some((_, best_value)) => value > best_value,
            };
            if better {
                best = Some((idx, value));
            }
        }
        let (winner_idx, _) = best.expect("stages have at least one point");
        winners.extend(stage.points[winner_idx].clone());

        let winner_global = rows.len() - stage.points.len() + winner_idx;
        summary.push(rows[winner_global].clone());
    }

    let total_runs = rows.len();
    let expected: usize = spec.stage.iter().map(|s| s.points.len()).sum();
    assert_eq!(
        total_runs, expected,
        "greedy sweep ran a wrong number of runs"
    );

    write_rows(results_dir, "ablate_runs", &rows)?;
    write_rows(results_dir, "ablate_summary", &summary)?;
    Ok(AblateOutcome {
        rows,
        summary,
        total_runs,
    })
}
