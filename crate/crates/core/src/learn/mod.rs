//! Rule induction by greedy information gain, one label at a time.

mod candidates;
mod gain;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attr::{AttributeRecord, Vocabulary};
use crate::dsl::{Clause, Rule, RuleError, RuleSet};
use crate::eval::CompiledClause;

pub use candidates::{
    boundary_thresholds, indicator, init_candidates, literal_significance, tidy_midpoint,
    CandidateLiteral, Literal, Source,
};
pub use gain::{gain, significance, Coverage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("no positive examples")]
    NoPositives,
    #[error("no admissible literals")]
    NoAdmissibleLiterals,
    #[error("cannot separate {} negative example(s) from the positives{}", .covered_negatives.len(), partial_suffix(.partial))]
    CannotSeparate {
        partial: Option<Clause>,
        covered_negatives: Vec<String>,
    },
    #[error("positives {residual:?} cannot be covered (partial rule: {partial})")]
    Uncoverable {
        residual: Vec<String>,
        partial: Rule,
    },
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("label {label:?}: {source}")]
    Label {
        label: String,
        #[source]
        source: Box<LearnError>,
    },
}

fn partial_suffix(partial: &Option<Clause>) -> String {
    match partial {
        Some(c) => format!(" (best partial clause: {c})"),
        None => String::new(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Equal gains go to the more significant literal, then the earlier one.
    #[default]
    SignificanceThenOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    /// Literals need significance above this to become candidates.
    pub theta: f64,
    /// Per-predicate replacements for `theta`.
    pub theta_overrides: BTreeMap<String, f64>,
    /// Object-type literals a clause takes first while any still gains.
    pub phi: usize,
    /// Maximum atoms per clause.
    pub max_clause_len: usize,
    pub max_clauses: usize,
    pub gain_tie_break: TieBreak,
    /// Keep the best partial clause instead of failing on inseparable data.
    pub noise_tolerant: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            theta: 0.05,
            theta_overrides: BTreeMap::new(),
            phi: 2,
            max_clause_len: 6,
            max_clauses: 16,
            gain_tie_break: TieBreak::SignificanceThenOrder,
            noise_tolerant: false,
        }
    }
}

impl LearnConfig {
    pub fn theta_for(&self, predicate: &str) -> f64 {
        self.theta_overrides
            .get(predicate)
            .copied()
            .unwrap_or(self.theta)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.theta.is_nan() || self.theta < 0.0 {
            return Err("theta must be >= 0".into());
        }
        if self.phi < 1 || self.max_clause_len < 1 || self.max_clauses < 1 {
            return Err("phi, max_clause_len and max_clauses must be >= 1".into());
        }
        Ok(())
    }
}

/// Clauses a rule must contain (`include`) or must not contain (`exclude`),
/// per label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FeedbackConstraints {
    pub include: BTreeMap<String, Vec<Clause>>,
    pub exclude: BTreeMap<String, Vec<Clause>>,
}

impl FeedbackConstraints {
    /// Adds a must-include clause, withdrawing any exclusion of it.
    pub fn include(&mut self, label: &str, clause: Clause) {
        if let Some(ex) = self.exclude.get_mut(label) {
            ex.retain(|c| *c != clause);
        }
        let inc = self.include.entry(label.to_string()).or_default();
        if !inc.contains(&clause) {
            inc.push(clause);
        }
    }

    /// Adds a must-exclude clause, withdrawing any inclusion of it.
    pub fn exclude(&mut self, label: &str, clause: Clause) {
        if let Some(inc) = self.include.get_mut(label) {
            inc.retain(|c| *c != clause);
        }
        let ex = self.exclude.entry(label.to_string()).or_default();
        if !ex.contains(&clause) {
            ex.push(clause);
        }
    }

    /// Puts the included clauses of `label` in the order they take in
    /// `clauses`; clauses not found there keep their order at the end.
    pub fn order_includes(&mut self, label: &str, clauses: &[Clause]) {
        if let Some(inc) = self.include.get_mut(label) {
            inc.sort_by_key(|c| clauses.iter().position(|x| x == c).unwrap_or(usize::MAX));
        }
    }

    pub fn included(&self, label: &str) -> &[Clause] {
        self.include.get(label).map_or(&[], Vec::as_slice)
    }

    pub fn excluded(&self, label: &str) -> &[Clause] {
        self.exclude.get(label).map_or(&[], Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.include.values().all(Vec::is_empty) && self.exclude.values().all(Vec::is_empty)
    }
}

/// Gain bookkeeping for one candidate against a partial clause.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub index: usize,
    pub clause: Clause,
    pub before: Coverage,
    pub after: Coverage,
    pub both: usize,
    pub gain: f64,
}

/// Scores every usable candidate as a refinement of `clause` (or of the empty
/// clause). `pos` and `neg` are the examples the current clause covers.
/// Candidates already used, banned or making the clause too long are skipped.
pub fn score_candidates(
    clause: Option<&Clause>,
    pos: &[&AttributeRecord],
    neg: &[&AttributeRecord],
    candidates: &[CandidateLiteral],
    skip: &BTreeSet<Literal>,
    vocab: &Vocabulary,
    max_len: usize,
) -> Vec<CandidateScore> {
    let before = Coverage::new(pos.len(), neg.len());
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| !skip.contains(&c.literal))
        .filter_map(|(index, c)| {
            let extended = c.literal.extend(clause, vocab).ok()?;
            if extended.len() > max_len || Some(&extended) == clause {
                return None;
            }
            let compiled = CompiledClause::new(&extended, vocab);
            let p = pos.iter().filter(|r| compiled.satisfied(r)).count();
            let n = neg.iter().filter(|r| compiled.satisfied(r)).count();
            let after = Coverage::new(p, n);
            Some(CandidateScore {
                index,
                clause: extended,
                before,
                after,
                both: p,
                gain: gain(before, after, p),
            })
        })
        .collect()
}

fn pick<'a>(
    scores: impl Iterator<Item = &'a CandidateScore>,
    candidates: &[CandidateLiteral],
) -> Option<&'a CandidateScore> {
    scores.min_by(|a, b| {
        b.gain
            .total_cmp(&a.gain)
            .then(candidates[b.index].sig.total_cmp(&candidates[a.index].sig))
            .then(a.index.cmp(&b.index))
    })
}

/// A learned clause and the literals chosen for it, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedClause {
    pub clause: Clause,
    pub literals: Vec<Literal>,
}

/// Grows one clause greedily until it covers no negative example.
pub fn learn_clause(
    pos: &[&AttributeRecord],
    neg: &[&AttributeRecord],
    candidates: &[CandidateLiteral],
    banned: &BTreeSet<Literal>,
    vocab: &Vocabulary,
    config: &LearnConfig,
) -> Result<LearnedClause, LearnError> {
    if pos.is_empty() {
        return Err(LearnError::NoPositives);
    }
    let mut clause: Option<Clause> = None;
    let mut literals: Vec<Literal> = Vec::new();
    let mut skip = banned.clone();
    let mut pos_cov: Vec<&AttributeRecord> = pos.to_vec();
    let mut neg_cov: Vec<&AttributeRecord> = neg.to_vec();
    let mut object_literals = 0;

    loop {
        let scores = score_candidates(
            clause.as_ref(),
            &pos_cov,
            &neg_cov,
            candidates,
            &skip,
            vocab,
            config.max_clause_len,
        );
        let covers = |s: &&CandidateScore| s.after.pos > 0;
        let chosen = if neg_cov.is_empty() {
            if clause.is_some() {
                break;
            }
            pick(scores.iter().filter(covers), candidates)
        } else {
            let improving = |s: &&CandidateScore| s.gain > 0.0;
            let preferred = if object_literals < config.phi {
                pick(
                    scores
                        .iter()
                        .filter(improving)
                        .filter(|s| candidates[s.index].literal.is_object_type()),
                    candidates,
                )
            } else {
                None
            };
            preferred.or_else(|| pick(scores.iter().filter(improving), candidates))
        };
        let Some(chosen) = chosen else {
            return Err(LearnError::CannotSeparate {
                partial: clause,
                covered_negatives: neg_cov.iter().map(|r| r.id().to_string()).collect(),
            });
        };
        let literal = candidates[chosen.index].literal.clone();
        if literal.is_object_type() {
            object_literals += 1;
        }
        let compiled = CompiledClause::new(&chosen.clause, vocab);
        pos_cov.retain(|r| compiled.satisfied(r));
        neg_cov.retain(|r| compiled.satisfied(r));
        clause = Some(chosen.clause.clone());
        skip.insert(literal.clone());
        literals.push(literal);
        if neg_cov.is_empty() {
            break;
        }
    }
    Ok(LearnedClause {
        clause: clause.expect("at least one literal chosen"),
        literals,
    })
}

/// A longer variant of `clause` that still covers some of `pos`, for when
/// `clause` itself is ruled out. Adding literals never covers more negatives.
fn specialize(
    clause: &Clause,
    pos: &[&AttributeRecord],
    candidates: &[CandidateLiteral],
    forbidden: &dyn Fn(&Clause) -> bool,
    vocab: &Vocabulary,
    config: &LearnConfig,
) -> Option<Clause> {
    let covered: Vec<&AttributeRecord> = {
        let compiled = CompiledClause::new(clause, vocab);
        pos.iter()
            .copied()
            .filter(|r| compiled.satisfied(r))
            .collect()
    };
    let scores = score_candidates(
        Some(clause),
        &covered,
        &[],
        candidates,
        &BTreeSet::new(),
        vocab,
        config.max_clause_len,
    );
    scores
        .into_iter()
        .filter(|s| s.after.pos > 0 && !forbidden(&s.clause))
        .min_by(|a, b| {
            b.after
                .pos
                .cmp(&a.after.pos)
                .then(candidates[b.index].sig.total_cmp(&candidates[a.index].sig))
                .then(a.index.cmp(&b.index))
        })
        .map(|s| s.clause)
}

/// Learns a rule covering every positive and, outside the must-include
/// clauses, no negative.
pub fn learn_rule(
    label: &str,
    pos: &[&AttributeRecord],
    neg: &[&AttributeRecord],
    constraints: &FeedbackConstraints,
    vocab: &Vocabulary,
    config: &LearnConfig,
) -> Result<Rule, LearnError> {
    let attribute = |e: LearnError| LearnError::Label {
        label: label.to_string(),
        source: Box::new(e),
    };
    if pos.is_empty() {
        return Err(attribute(LearnError::NoPositives));
    }
    let all: Vec<&AttributeRecord> = pos.iter().chain(neg).copied().collect();
    let flags: Vec<bool> = (0..all.len()).map(|i| i < pos.len()).collect();

    let mut clauses: Vec<Clause> = constraints.included(label).to_vec();
    let included: Vec<CompiledClause> = clauses
        .iter()
        .map(|c| CompiledClause::new(c, vocab))
        .collect();
    let mut remaining: Vec<&AttributeRecord> = pos
        .iter()
        .copied()
        .filter(|r| !included.iter().any(|c| c.satisfied(r)))
        .collect();
    if remaining.is_empty() {
        return Ok(Rule::new(label, clauses));
    }
    let candidates = match init_candidates(&all, &flags, vocab, config) {
        Ok(c) => c,
        Err(_) if config.noise_tolerant && !clauses.is_empty() => {
            return Ok(Rule::new(label, clauses))
        }
        Err(e) => return Err(attribute(e)),
    };
    let excluded = constraints.excluded(label);
    let mut banned: BTreeSet<Literal> = BTreeSet::new();
    let mut rejected: Option<Clause> = None;
    let uncoverable = |remaining: &[&AttributeRecord], clauses: &[Clause]| {
        attribute(LearnError::Uncoverable {
            residual: remaining.iter().map(|r| r.id().to_string()).collect(),
            partial: Rule::new(label, clauses.to_vec()),
        })
    };

    while !remaining.is_empty() {
        if clauses.len() >= config.max_clauses {
            if config.noise_tolerant {
                break;
            }
            return Err(uncoverable(&remaining, &clauses));
        }
        let forbidden = |c: &Clause| excluded.contains(c) || clauses.contains(c);
        let learned = match learn_clause(&remaining, neg, &candidates, &banned, vocab, config) {
            Ok(l) => l,
            Err(LearnError::CannotSeparate { partial, .. }) => {
                let specialized = rejected.as_ref().and_then(|c| {
                    specialize(c, &remaining, &candidates, &forbidden, vocab, config)
                });
                let seeded = || {
                    learn_clause(&remaining[..1], neg, &candidates, &banned, vocab, config)
                        .ok()
                        .filter(|l| !forbidden(&l.clause))
                };
                match specialized {
                    Some(clause) => LearnedClause {
                        clause,
                        literals: Vec::new(),
                    },
                    None => match seeded() {
                        Some(l) => l,
                        None if config.noise_tolerant => match partial {
                            Some(clause) if !forbidden(&clause) => LearnedClause {
                                clause,
                                literals: Vec::new(),
                            },
                            _ => break,
                        },
                        None => return Err(uncoverable(&remaining, &clauses)),
                    },
                }
            }
            Err(_) if config.noise_tolerant => break,
            Err(e) => return Err(attribute(e)),
        };
        let learned = if forbidden(&learned.clause) {
            match learned.literals.first() {
                Some(first) if !banned.contains(first) => {
                    banned.insert(first.clone());
                    rejected = Some(learned.clause);
                    continue;
                }
                _ => match specialize(
                    &learned.clause,
                    &remaining,
                    &candidates,
                    &forbidden,
                    vocab,
                    config,
                ) {
                    Some(clause) => clause,
                    None if config.noise_tolerant => break,
                    None => return Err(uncoverable(&remaining, &clauses)),
                },
            }
        } else {
            learned.clause
        };
        banned.clear();
        rejected = None;
        let compiled = CompiledClause::new(&learned, vocab);
        let before = remaining.len();
        remaining.retain(|r| !compiled.satisfied(r));
        if remaining.len() == before {
            break;
        }
        clauses.push(learned);
    }
    if clauses.is_empty() {
        return Err(attribute(LearnError::Uncoverable {
            residual: remaining.iter().map(|r| r.id().to_string()).collect(),
            partial: Rule::new(label, clauses),
        }));
    }
    Ok(Rule::new(label, clauses))
}

/// One-vs-rest rule learning for every label, in parallel.
pub fn learn_ruleset(
    records: &[&AttributeRecord],
    labels: &[String],
    constraints: &FeedbackConstraints,
    vocab: &Vocabulary,
    config: &LearnConfig,
) -> Result<RuleSet, LearnError> {
    let rules: Vec<Result<Rule, LearnError>> = labels
        .par_iter()
        .map(|label| {
            let (pos, neg): (Vec<&AttributeRecord>, Vec<&AttributeRecord>) = records
                .iter()
                .copied()
                .partition(|r| r.label() == Some(label.as_str()));
            learn_rule(label, &pos, &neg, constraints, vocab, config)
        })
        .collect();
    let mut set = RuleSet::new();
    for rule in rules {
        set.insert(rule?);
    }
    Ok(set)
}
