//! Experiment runner and synthetic data generation.

mod config;
mod presets;
mod report;
mod synth;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::attr::{DataError, Dataset};
use crate::dsl::{ParseError, RuleSet};
use crate::labeling::{FeedbackMode, IterationMetrics, LabelingLoop, LoopConfig, LoopError};
use crate::oracle::{correct_labels, edit_rule, GoldSpec, OracleError};
use crate::select::StrategyRegistry;

pub use config::{DataSource, ExperimentConfig};
pub use presets::{preset, preset_names};
pub use report::{plateau_iteration, summarize, write_report, RunSummary};
pub use synth::{
    generate_synthetic, Audit, GeneratorSpec, NumericSpec, RelationSpec, SceneSpec, SortSpec,
    Synthetic,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("gold rules: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error("gold rules for {} and {} both hold on a sampled scene: {example}", .labels.0, .labels.1)]
    OverlappingRules {
        labels: (String, String),
        example: String,
    },
    #[error("could not fill the quota for {labels:?} after {attempts} scenes")]
    Unsatisfiable {
        labels: Vec<String>,
        attempts: usize,
    },
    #[error("seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: Box<HarnessError>,
    },
}

/// Everything one seeded run produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub metrics: Vec<IterationMetrics>,
    pub rules: RuleSet,
}

/// Drives one loop with the simulated expert until it finishes.
pub fn simulate(
    dataset: Arc<Dataset>,
    gold: &GoldSpec,
    config: LoopConfig,
) -> Result<RunResult, HarnessError> {
    let seed = config.seed;
    let mode = config.mode;
    let mut lp = LabelingLoop::new(dataset.clone(), config, StrategyRegistry::default())?;
    while !lp.is_finished() {
        if let Some(batch) = lp.pending_batch() {
            let corrections: BTreeMap<String, String> = correct_labels(batch, gold)?
                .into_iter()
                .filter(|c| c.hit)
                .map(|c| (c.record_id, c.gold))
                .collect();
            lp.submit_corrections(&corrections)?;
        }
        if mode.edits() {
            if let Some(edit) = edit_rule(lp.rules(), gold, dataset.labels()) {
                let mut rules = lp.rules().clone();
                edit.apply_to(&mut rules);
                let edited = rules.get(&edit.label).expect("edit applied").clone();
                lp.submit_rule(edited)?;
            }
        }
        lp.step()?;
    }
    Ok(RunResult {
        seed,
        metrics: lp.metrics().to_vec(),
        rules: lp.rules().clone(),
    })
}

/// Runs every seed of `config`, in parallel, returning results in seed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunResult>, HarnessError> {
    config.validate()?;
    let fixed = match &config.data {
        DataSource::Files { .. } => Some(config.data.load(None)?),
        DataSource::Preset { seed: Some(_), .. } | DataSource::Spec { .. } => {
            Some(config.data.load(None)?)
        }
        DataSource::Preset { seed: None, .. } => None,
    };
    config
        .seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<RunResult, HarnessError> {
                let (dataset, gold) = match &fixed {
                    Some(d) => d.clone(),
                    None => config.data.load(Some(seed))?,
                };
                let mut lc = config.loop_config.clone();
                lc.seed = seed;
                simulate(dataset, &gold, lc)
            };
            run().map_err(|e| HarnessError::Run {
                seed,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn mode_name(mode: FeedbackMode) -> &'static str {
    match mode {
        FeedbackMode::Full => "full",
        FeedbackMode::NoEdit => "no-edit",
        FeedbackMode::NoAl => "no-al",
        FeedbackMode::NoFeedback => "no-feedback",
    }
}
