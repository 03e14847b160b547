//! A simulated expert that knows the planted rules and labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attr::{Dataset, Vocabulary};
use crate::dsl::{first_inconsistent_clause, Clause, Inconsistency, Rule, RuleSet};
use crate::eval::CompiledRule;
use crate::select::SelectionBatch;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("no gold label for record {0:?}")]
    MissingGold(String),
    #[error("no gold rule for label {0:?}")]
    MissingRule(String),
}

/// Planted rules plus the true label of every record.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldSpec {
    pub rules: RuleSet,
    pub labels: BTreeMap<String, String>,
}

impl GoldSpec {
    /// Gold labels taken from the dataset's `label` fields.
    pub fn from_dataset(rules: RuleSet, dataset: &Dataset) -> Self {
        let labels = dataset
            .records()
            .iter()
            .filter_map(|r| r.label().map(|l| (r.id().to_string(), l.to_string())))
            .collect();
        GoldSpec { rules, labels }
    }

    /// Ids of labeled records that do not satisfy their gold label's rule.
    pub fn violations(
        &self,
        dataset: &Dataset,
        vocab: &Vocabulary,
    ) -> Result<Vec<String>, OracleError> {
        let compiled: BTreeMap<&str, CompiledRule> = self
            .rules
            .rules()
            .map(|r| (r.label.as_str(), CompiledRule::new(r, vocab)))
            .collect();
        let mut out = Vec::new();
        for record in dataset.records() {
            let Some(label) = self.labels.get(record.id()) else {
                continue;
            };
            let rule = compiled
                .get(label.as_str())
                .ok_or_else(|| OracleError::MissingRule(label.clone()))?;
            if !rule.satisfied(record) {
                out.push(record.id().to_string());
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub record_id: String,
    pub predicted: String,
    pub gold: String,
    /// The prediction was wrong.
    pub hit: bool,
}

pub fn correct_labels(
    batch: &SelectionBatch,
    gold: &GoldSpec,
) -> Result<Vec<Correction>, OracleError> {
    batch
        .items
        .iter()
        .map(|item| {
            let g = gold
                .labels
                .get(&item.record_id)
                .ok_or_else(|| OracleError::MissingGold(item.record_id.clone()))?;
            Ok(Correction {
                record_id: item.record_id.clone(),
                predicted: item.decision.label.clone(),
                gold: g.clone(),
                hit: item.decision.label != *g,
            })
        })
        .collect()
}

/// A change to one clause position of one rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleEdit {
    pub label: String,
    pub index: usize,
    /// The clause to place at `index`; `None` removes the clause there.
    pub clause: Option<Clause>,
    /// The clause previously at `index`, if any.
    pub replaced: Option<Clause>,
}

impl RuleEdit {
    pub fn apply(&self, rule: &Rule) -> Rule {
        let mut clauses = rule.clauses.clone();
        match &self.clause {
            Some(c) if self.index < clauses.len() => clauses[self.index] = c.clone(),
            Some(c) => clauses.push(c.clone()),
            None => {
                clauses.remove(self.index);
            }
        }
        Rule::new(rule.label.clone(), clauses)
    }

    pub fn apply_to(&self, rules: &mut RuleSet) {
        let current = rules
            .get(&self.label)
            .cloned()
            .unwrap_or_else(|| Rule::new(self.label.clone(), Vec::new()));
        rules.insert(self.apply(&current));
    }
}

/// The first clause, scanning labels in `order`, where `current` departs
/// from the gold rules.
pub fn edit_rule(current: &RuleSet, gold: &GoldSpec, order: &[String]) -> Option<RuleEdit> {
    for label in order {
        let Some(g) = gold.rules.get(label) else {
            continue;
        };
        let empty = Rule::new(label.clone(), Vec::new());
        let cur = current.get(label).unwrap_or(&empty);
        let found = first_inconsistent_clause(cur, g).expect("labels match");
        match found {
            None => continue,
            Some(Inconsistency::Differs { index, gold }) => {
                return Some(RuleEdit {
                    label: label.clone(),
                    index,
                    clause: Some(gold),
                    replaced: cur.clauses.get(index).cloned(),
                })
            }
            Some(Inconsistency::Surplus { index }) => {
                return Some(RuleEdit {
                    label: label.clone(),
                    index,
                    clause: None,
                    replaced: Some(cur.clauses[index].clone()),
                })
            }
        }
    }
    None
}

/// Edits needed to turn `current` into the gold rules one clause at a time.
pub fn edit_distance(current: &RuleSet, gold: &RuleSet) -> usize {
    gold.rules()
        .map(|g| {
            let cur: &[Clause] = current.get(&g.label).map_or(&[], |r| &r.clauses);
            let common = cur.len().min(g.clauses.len());
            let differing = (0..common).filter(|&i| cur[i] != g.clauses[i]).count();
            differing + cur.len().abs_diff(g.clauses.len())
        })
        .sum()
}
