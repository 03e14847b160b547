use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{mode_name, ExperimentConfig, HarnessError, RunResult};
use crate::dsl::print_ruleset;
use crate::labeling::IterationMetrics;

/// Per-run figures for the CSV summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub mode: String,
    pub strategy: String,
    pub iterations: usize,
    pub final_accuracy: f64,
    pub max_accuracy: f64,
    pub plateau_iteration: usize,
    pub mean_hit_rate: Option<f64>,
    pub labeled: usize,
    pub avg_clauses: f64,
    pub avg_predicates: f64,
}

/// First iteration whose held-out accuracy is within `delta` of the run's best.
pub fn plateau_iteration(metrics: &[IterationMetrics], delta: f64) -> usize {
    let best = metrics
        .iter()
        .map(|m| m.accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    metrics
        .iter()
        .find(|m| m.accuracy >= best - delta)
        .map_or(0, |m| m.iteration)
}

pub fn summarize(run: &RunResult, config: &ExperimentConfig) -> RunSummary {
    let last = run.metrics.last().expect("every run records iteration 0");
    let hits: Vec<f64> = run.metrics.iter().filter_map(|m| m.hit_rate).collect();
    RunSummary {
        seed: run.seed,
        mode: mode_name(config.loop_config.mode).to_string(),
        strategy: config.loop_config.selection.strategy.clone(),
        iterations: last.iteration,
        final_accuracy: last.accuracy,
        max_accuracy: run.metrics.iter().map(|m| m.accuracy).fold(0.0, f64::max),
        plateau_iteration: plateau_iteration(&run.metrics, 0.01),
        mean_hit_rate: (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64),
        labeled: last.labeled,
        avg_clauses: last.avg_clauses,
        avg_predicates: last.avg_predicates,
    }
}

#[derive(Serialize)]
struct MetricsLine<'a> {
    seed: u64,
    mode: &'a str,
    strategy: &'a str,
    #[serde(flatten)]
    metrics: &'a IterationMetrics,
}

/// Writes `metrics.jsonl`, `summary.csv` and one `rules-<seed>.dsl` per run.
pub fn write_report(
    dir: &Path,
    runs: &[RunResult],
    config: &ExperimentConfig,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mode = mode_name(config.loop_config.mode);
    let strategy = config.loop_config.selection.strategy.as_str();
    let mut jsonl = String::new();
    for run in runs {
        for m in &run.metrics {
            let line = MetricsLine {
                seed: run.seed,
                mode,
                strategy,
                metrics: m,
            };
            jsonl.push_str(&serde_json::to_string(&line).expect("metrics serialize"));
            jsonl.push('\n');
        }
        fs::write(
            dir.join(format!("rules-{}.dsl", run.seed)),
            print_ruleset(&run.rules),
        )?;
    }
    fs::write(dir.join("metrics.jsonl"), jsonl)?;
    let mut csv =
        csv::Writer::from_path(dir.join("summary.csv")).map_err(|e| HarnessError::Io(e.into()))?;
    for run in runs {
        csv.serialize(summarize(run, config))
            .map_err(|e| HarnessError::Io(e.into()))?;
    }
    csv.flush()?;
    Ok(())
}
