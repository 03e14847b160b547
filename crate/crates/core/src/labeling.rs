//! The interactive labeling loop: learn, select, correct, edit, relearn.
//!
//! Both the experiment harness and the session service drive this type, so a
//! session fed the same corrections and edits produces the same metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attr::{AttributeRecord, Dataset};
use crate::dsl::{diff_rules, Rule, RuleDiff, RuleSet};
use crate::eval::CompiledRuleSet;
use crate::learn::{learn_ruleset, FeedbackConstraints, LearnConfig, LearnError};
use crate::select::{select_batch, SelectError, SelectionBatch, SelectionConfig, StrategyRegistry};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    /// Label corrections and rule edits.
    #[default]
    Full,
    /// Label corrections only.
    NoEdit,
    /// Rule edits only; the labeled pool never grows.
    NoAl,
    /// One learning pass on a random sample of the same labeling budget.
    NoFeedback,
}

impl FeedbackMode {
    pub fn selects(self) -> bool {
        matches!(self, FeedbackMode::Full | FeedbackMode::NoEdit)
    }

    pub fn edits(self) -> bool {
        matches!(self, FeedbackMode::Full | FeedbackMode::NoAl)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub bootstrap_size: usize,
    pub max_iterations: usize,
    pub mode: FeedbackMode,
    /// Fraction of the dataset held out for evaluation.
    pub test_fraction: f64,
    pub seed: u64,
    pub learn: LearnConfig,
    pub selection: SelectionConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            bootstrap_size: 3,
            max_iterations: 20,
            mode: FeedbackMode::Full,
            test_fraction: 0.4,
            seed: 0,
            learn: LearnConfig::default(),
            selection: SelectionConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn batch_size(&self) -> usize {
        self.selection.n_batch
    }

    pub fn validate(&self) -> Result<(), LoopError> {
        let bad = |m: &str| Err(LoopError::Config(m.to_string()));
        if self.bootstrap_size == 0 {
            return bad("bootstrap_size must be >= 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1");
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad("test_fraction must be in [0, 1)");
        }
        self.learn.validate().map_err(LoopError::Config)?;
        self.selection.validate()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error("iteration {iteration}: {source}")]
    Learn {
        iteration: usize,
        #[source]
        source: LearnError,
    },
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error("need {needed} labeled training record(s) to bootstrap, found {found}")]
    NotEnoughLabeled { needed: usize, found: usize },
    #[error("the pending batch has not been corrected yet")]
    NotReady,
    #[error("no batch is pending")]
    NoPendingBatch,
    #[error("the loop has finished")]
    Finished,
    #[error("record {0:?} is not in the pending batch")]
    NotInBatch(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("unknown record {0:?}")]
    UnknownRecord(String),
    #[error("record {0:?} has no label")]
    Unlabeled(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Held-out accuracy.
    pub accuracy: f64,
    /// Accuracy over every record not in the labeled pool.
    pub remaining_accuracy: f64,
    /// Fraction of the batch corrected this iteration whose prediction was wrong.
    pub hit_rate: Option<f64>,
    /// Fraction of labeled records the rules label correctly.
    pub training_consistency: f64,
    pub labeled: usize,
    pub avg_clauses: f64,
    pub avg_predicates: f64,
    pub edited: bool,
}

/// The final label of one record in a corrected batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolved {
    pub record_id: String,
    pub predicted: String,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct LabelingLoop {
    dataset: Arc<Dataset>,
    config: LoopConfig,
    registry: StrategyRegistry,
    test: Vec<usize>,
    pool: BTreeSet<usize>,
    labeled: BTreeMap<usize, String>,
    rules: RuleSet,
    constraints: FeedbackConstraints,
    iteration: usize,
    pending: Option<SelectionBatch>,
    resolved: Option<Vec<Resolved>>,
    edited: bool,
    finished: bool,
    metrics: Vec<IterationMetrics>,
}

fn mix(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// `size` records with at least one per label when the budget allows.
fn stratified_sample(
    candidates: &[usize],
    dataset: &Dataset,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut shuffled = candidates.to_vec();
    shuffled.shuffle(rng);
    let mut chosen = Vec::new();
    let mut covered = BTreeSet::new();
    for &i in &shuffled {
        if chosen.len() == size {
            break;
        }
        if let Some(l) = dataset.records()[i].label() {
            if covered.insert(l) {
                chosen.push(i);
            }
        }
    }
    for &i in &shuffled {
        if chosen.len() == size {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    chosen
}

impl LabelingLoop {
    /// Splits the data, learns from the bootstrap sample and, when the mode
    /// selects, picks the first batch.
    pub fn new(
        dataset: Arc<Dataset>,
        config: LoopConfig,
        registry: StrategyRegistry,
    ) -> Result<Self, LoopError> {
        Self::build(dataset, config, registry, None)
    }

    /// Like [`LabelingLoop::new`] with a fixed bootstrap set. These records
    /// must be labeled and never land in the held-out split.
    pub fn with_bootstrap(
        dataset: Arc<Dataset>,
        config: LoopConfig,
        registry: StrategyRegistry,
        bootstrap: &[String],
    ) -> Result<Self, LoopError> {
        let mut chosen = BTreeSet::new();
        for id in bootstrap {
            let i = dataset
                .position(id)
                .ok_or_else(|| LoopError::UnknownRecord(id.clone()))?;
            if dataset.records()[i].label().is_none() {
                return Err(LoopError::Unlabeled(id.clone()));
            }
            chosen.insert(i);
        }
        if chosen.is_empty() {
            return Err(LoopError::NotEnoughLabeled {
                needed: 1,
                found: 0,
            });
        }
        Self::build(dataset, config, registry, Some(chosen))
    }

    fn build(
        dataset: Arc<Dataset>,
        config: LoopConfig,
        registry: StrategyRegistry,
        fixed: Option<BTreeSet<usize>>,
    ) -> Result<Self, LoopError> {
        config.validate()?;
        registry.get(&config.selection.strategy)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..dataset.len())
            .filter(|i| !fixed.as_ref().is_some_and(|f| f.contains(i)))
            .collect();
        order.shuffle(&mut rng);
        let n_test = (dataset.len() as f64 * config.test_fraction).round() as usize;
        let n_test = n_test.min(order.len());
        let mut test = order[..n_test].to_vec();
        test.sort_unstable();
        let mut train: Vec<usize> = order[n_test..].to_vec();
        let bootstrap = match fixed {
            Some(f) => {
                train.extend(f.iter().copied());
                f.into_iter().collect()
            }
            None => {
                let mut labeled_train: Vec<usize> = train
                    .iter()
                    .copied()
                    .filter(|&i| dataset.records()[i].label().is_some())
                    .collect();
                let budget = match config.mode {
                    FeedbackMode::NoFeedback => {
                        config.bootstrap_size + config.max_iterations * config.batch_size()
                    }
                    _ => config.bootstrap_size,
                };
                if labeled_train.len() < config.bootstrap_size {
                    return Err(LoopError::NotEnoughLabeled {
                        needed: config.bootstrap_size,
                        found: labeled_train.len(),
                    });
                }
                let budget = budget.min(labeled_train.len());
                labeled_train.sort_unstable();
                stratified_sample(&labeled_train, &dataset, budget, &mut rng)
            }
        };
        let labeled: BTreeMap<usize, String> = bootstrap
            .iter()
            .map(|&i| {
                (
                    i,
                    dataset.records()[i].label().expect("labeled").to_string(),
                )
            })
            .collect();
        let pool: BTreeSet<usize> = train
            .iter()
            .copied()
            .filter(|i| !labeled.contains_key(i))
            .collect();

        let mut lp = LabelingLoop {
            dataset,
            config,
            registry,
            test,
            pool,
            labeled,
            rules: RuleSet::new(),
            constraints: FeedbackConstraints::default(),
            iteration: 0,
            pending: None,
            resolved: None,
            edited: false,
            finished: false,
            metrics: Vec::new(),
        };
        lp.rules = lp.learn()?;
        lp.record_metrics(None);
        if lp.config.mode == FeedbackMode::NoFeedback {
            lp.finished = true;
        } else {
            lp.select_next()?;
        }
        Ok(lp)
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn config(&self) -> &LoopConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn constraints(&self) -> &FeedbackConstraints {
        &self.constraints
    }

    pub fn pending_batch(&self) -> Option<&SelectionBatch> {
        self.pending.as_ref()
    }

    pub fn resolved(&self) -> Option<&[Resolved]> {
        self.resolved.as_deref()
    }

    pub fn metrics(&self) -> &[IterationMetrics] {
        &self.metrics
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Ready to step: nothing pending, or the pending batch is corrected.
    pub fn is_ready(&self) -> bool {
        !self.finished && (self.pending.is_none() || self.resolved.is_some())
    }

    pub fn labeled_ids(&self) -> impl Iterator<Item = (&str, &str)> {
        self.labeled
            .iter()
            .map(|(&i, l)| (self.dataset.records()[i].id(), l.as_str()))
    }

    pub fn unlabeled_ids(&self) -> impl Iterator<Item = &str> {
        self.pool.iter().map(|&i| self.dataset.records()[i].id())
    }

    pub fn test_ids(&self) -> impl Iterator<Item = &str> {
        self.test.iter().map(|&i| self.dataset.records()[i].id())
    }

    fn labeled_records(&self) -> Vec<AttributeRecord> {
        self.labeled
            .iter()
            .map(|(&i, l)| {
                self.dataset.records()[i]
                    .clone()
                    .with_label(Some(l.clone()))
            })
            .collect()
    }

    fn learn(&self) -> Result<RuleSet, LoopError> {
        let records = self.labeled_records();
        let refs: Vec<&AttributeRecord> = records.iter().collect();
        let present: BTreeSet<&str> = self.labeled.values().map(String::as_str).collect();
        let labels: Vec<String> = self
            .dataset
            .labels()
            .iter()
            .filter(|l| present.contains(l.as_str()) || !self.constraints.included(l).is_empty())
            .cloned()
            .collect();
        learn_ruleset(
            &refs,
            &labels,
            &self.constraints,
            self.dataset.vocabulary(),
            &self.config.learn,
        )
        .map_err(|source| LoopError::Learn {
            iteration: self.iteration,
            source,
        })
    }

    fn select_next(&mut self) -> Result<(), LoopError> {
        self.pending = None;
        self.resolved = None;
        if !self.config.mode.selects() {
            return Ok(());
        }
        if self.pool.len() < self.config.batch_size() {
            self.finished = true;
            return Ok(());
        }
        let pool: Vec<&AttributeRecord> = self
            .pool
            .iter()
            .map(|&i| &self.dataset.records()[i])
            .collect();
        let compiled = CompiledRuleSet::new(&self.rules, self.dataset.vocabulary());
        let mut selection = self.config.selection.clone();
        selection.seed = mix(self.config.seed, self.iteration as u64);
        let batch = select_batch(
            &pool,
            &compiled,
            self.dataset.sorts(),
            &selection,
            &self.registry,
        )?;
        self.pending = Some(batch);
        Ok(())
    }

    /// Final labels for the pending batch. Records absent from `corrections`
    /// keep their predicted label.
    pub fn submit_corrections(
        &mut self,
        corrections: &BTreeMap<String, String>,
    ) -> Result<&[Resolved], LoopError> {
        if self.finished {
            return Err(LoopError::Finished);
        }
        let batch = self.pending.as_ref().ok_or(LoopError::NoPendingBatch)?;
        if self.resolved.is_some() {
            return Err(LoopError::NoPendingBatch);
        }
        for (id, label) in corrections {
            if !batch.ids().any(|b| b == id) {
                return Err(LoopError::NotInBatch(id.clone()));
            }
            if !self.dataset.labels().contains(label) {
                return Err(LoopError::UnknownLabel(label.clone()));
            }
        }
        let resolved: Vec<Resolved> = batch
            .items
            .iter()
            .map(|item| Resolved {
                record_id: item.record_id.clone(),
                predicted: item.decision.label.clone(),
                label: corrections
                    .get(&item.record_id)
                    .cloned()
                    .unwrap_or_else(|| item.decision.label.clone()),
            })
            .collect();
        for r in &resolved {
            let i = self
                .dataset
                .position(&r.record_id)
                .expect("batch ids come from the dataset");
            self.pool.remove(&i);
            self.labeled.insert(i, r.label.clone());
        }
        Ok(self.resolved.insert(resolved))
    }

    /// Replaces the rule for `rule.label`. Clauses that are new or moved
    /// become must-include, clauses dropped become must-exclude.
    pub fn submit_rule(&mut self, rule: Rule) -> Result<RuleDiff, LoopError> {
        if self.finished {
            return Err(LoopError::Finished);
        }
        if !self.dataset.labels().contains(&rule.label) {
            return Err(LoopError::UnknownLabel(rule.label.clone()));
        }
        let empty = Rule::new(rule.label.clone(), Vec::new());
        let old = self.rules.get(&rule.label).unwrap_or(&empty);
        let diff = diff_rules(old, &rule);
        let moved: Vec<(usize, &crate::dsl::Clause)> = rule
            .clauses
            .iter()
            .enumerate()
            .filter(|(i, c)| old.clauses.get(*i) != Some(*c))
            .collect();
        if moved.is_empty() && diff.is_empty() {
            return Ok(diff);
        }
        for c in &diff.removed {
            self.constraints.exclude(&rule.label, c.clone());
        }
        for (_, c) in &moved {
            self.constraints.include(&rule.label, (*c).clone());
        }
        self.constraints.order_includes(&rule.label, &rule.clauses);
        self.rules.insert(rule);
        self.edited = true;
        Ok(diff)
    }

    /// Relearns under the accumulated labels and constraints, records the
    /// iteration's metrics and selects the next batch.
    pub fn step(&mut self) -> Result<&IterationMetrics, LoopError> {
        if self.finished {
            return Err(LoopError::Finished);
        }
        if !self.is_ready() {
            return Err(LoopError::NotReady);
        }
        self.iteration += 1;
        let rules = match self.learn() {
            Ok(r) => r,
            Err(e) => {
                self.iteration -= 1;
                return Err(e);
            }
        };
        self.rules = rules;
        let hit_rate = self.resolved.as_ref().map(|r| {
            let hits = r.iter().filter(|x| x.predicted != x.label).count();
            hits as f64 / r.len() as f64
        });
        self.record_metrics(hit_rate);
        self.edited = false;
        if self.iteration >= self.config.max_iterations {
            self.finished = true;
            self.pending = None;
            self.resolved = None;
        } else {
            self.select_next()?;
        }
        Ok(self.metrics.last().expect("just recorded"))
    }

    fn record_metrics(&mut self, hit_rate: Option<f64>) {
        let compiled = CompiledRuleSet::new(&self.rules, self.dataset.vocabulary());
        let records = self.dataset.records();
        let accuracy_over = |idx: &mut dyn Iterator<Item = usize>| {
            let (mut right, mut total) = (0usize, 0usize);
            for i in idx {
                if let Some(gold) = records[i].label() {
                    total += 1;
                    if compiled.assign(&records[i]).label == gold {
                        right += 1;
                    }
                }
            }
            if total == 0 {
                0.0
            } else {
                right as f64 / total as f64
            }
        };
        let accuracy = accuracy_over(&mut self.test.iter().copied());
        let remaining_accuracy = accuracy_over(&mut self.test.iter().chain(&self.pool).copied());
        let consistent = self
            .labeled
            .iter()
            .filter(|(&i, l)| compiled.assign(&records[i]).label == **l)
            .count();
        self.metrics.push(IterationMetrics {
            iteration: self.iteration,
            accuracy,
            remaining_accuracy,
            hit_rate,
            training_consistency: consistent as f64 / self.labeled.len().max(1) as f64,
            labeled: self.labeled.len(),
            avg_clauses: self.rules.avg_clauses(),
            avg_predicates: self.rules.avg_predicates_per_clause(),
            edited: self.edited,
        });
    }
}
