//! Choosing which unlabeled records to show the expert next.

mod kmeans;
mod strategy;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attr::{featurize, AttributeRecord, FeatureVector};
use crate::eval::{CompiledRuleSet, LabelDecision};

pub use kmeans::diversity_pick;
pub use strategy::{
    ranked, DiversityOnly, InformativenessOnly, MultiCriteria, Random, SelectionStrategy,
    StrategyRegistry,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelectError {
    #[error("need {needed} record(s) but the pool has {available}")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("unknown selection strategy {name:?} (known: {})", .known.join(", "))]
    UnknownStrategy { name: String, known: Vec<String> },
    #[error("invalid selection config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Weight of the satisfied-rule count in the informativeness score.
    pub lambda: f64,
    /// Size of the informative shortlist clustered for diversity; 3·N when unset.
    pub m_intermediate: Option<usize>,
    pub n_batch: usize,
    pub strategy: String,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            lambda: 0.6,
            m_intermediate: None,
            n_batch: 3,
            strategy: "multi-criteria".into(),
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn m(&self) -> usize {
        self.m_intermediate.unwrap_or(3 * self.n_batch)
    }

    pub fn validate(&self) -> Result<(), SelectError> {
        if self.n_batch == 0 {
            return Err(SelectError::Config("n_batch must be >= 1".into()));
        }
        if self.m() < self.n_batch {
            return Err(SelectError::Config(
                "m_intermediate must be >= n_batch".into(),
            ));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(SelectError::Config("lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// Conflict-based informativeness of one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub record_id: String,
    pub score: f64,
    pub n_labels: usize,
    /// One minus the mean CSR of the unsatisfied rules.
    pub u: f64,
}

impl ScoredRecord {
    pub fn from_decision(decision: &LabelDecision, lambda: f64) -> Self {
        let n_labels = decision.satisfied_labels.len();
        let (sum, count) = decision
            .unsatisfied_csr()
            .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
        let u = if count == 0 {
            0.0
        } else {
            1.0 - sum / count as f64
        };
        let score = if n_labels == 1 {
            0.0
        } else {
            lambda * n_labels as f64 + u
        };
        ScoredRecord {
            record_id: decision.record_id.clone(),
            score,
            n_labels,
            u,
        }
    }
}

pub fn informativeness(
    record: &AttributeRecord,
    rules: &CompiledRuleSet,
    lambda: f64,
) -> ScoredRecord {
    ScoredRecord::from_decision(&rules.assign(record), lambda)
}

/// An unlabeled record with everything the strategies look at.
#[derive(Debug, Clone)]
pub struct PoolEntry<'a> {
    pub record: &'a AttributeRecord,
    pub decision: LabelDecision,
    pub scored: ScoredRecord,
    pub features: FeatureVector,
}

pub fn score_pool<'a>(
    pool: &[&'a AttributeRecord],
    rules: &CompiledRuleSet,
    dims: &[String],
    lambda: f64,
) -> Vec<PoolEntry<'a>> {
    pool.par_iter()
        .map(|&record| {
            let decision = rules.assign(record);
            PoolEntry {
                record,
                scored: ScoredRecord::from_decision(&decision, lambda),
                decision,
                features: featurize(record, dims),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    pub record_id: String,
    pub scored: ScoredRecord,
    pub decision: LabelDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionBatch {
    pub strategy: String,
    pub items: Vec<BatchItem>,
}

impl SelectionBatch {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.record_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Picks `config.n_batch` records from `pool` with the configured strategy.
/// `dims` fixes the feature space used for diversity.
pub fn select_batch(
    pool: &[&AttributeRecord],
    rules: &CompiledRuleSet,
    dims: &[String],
    config: &SelectionConfig,
    registry: &StrategyRegistry,
) -> Result<SelectionBatch, SelectError> {
    config.validate()?;
    let strategy = registry.get(&config.strategy)?;
    if pool.len() < config.n_batch {
        return Err(SelectError::PoolTooSmall {
            needed: config.n_batch,
            available: pool.len(),
        });
    }
    let entries = score_pool(pool, rules, dims, config.lambda);
    let picks = strategy.select(&entries, config)?;
    let mut seen = vec![false; entries.len()];
    for &p in &picks {
        if p >= entries.len() || std::mem::replace(&mut seen[p], true) {
            return Err(SelectError::Config(format!(
                "strategy {:?} returned an invalid or repeated position",
                config.strategy
            )));
        }
    }
    Ok(SelectionBatch {
        strategy: config.strategy.clone(),
        items: picks
            .into_iter()
            .map(|p| {
                let e = &entries[p];
                BatchItem {
                    record_id: e.record.id().to_string(),
                    scored: e.scored.clone(),
                    decision: e.decision.clone(),
                }
            })
            .collect(),
    })
}
