//! Labeling rules in disjunctive normal form and their text syntax.
//!
//! ```text
//! highway(X) :- !people(X,A) ; truck(X,A), num(A,N), greater(N,5).
//! ```
//!
//! Variables are renamed on construction so that structurally equal clauses
//! compare equal: the head variable becomes `X`, object variables `A`, `B`,
//! ..., numeric variables `N`, `N1`, ... and symbol variables `V`, `V1`, ...

mod parser;
mod printer;

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::attr::{ArgKind, DataError, PredicateAtom, PredicateRole, Term, Vocabulary};

pub use parser::{parse_rule, parse_ruleset, ParseError, ParseErrorKind};
pub use printer::{print_rule, print_ruleset};

pub const HEAD_VAR: &str = "X";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("unknown predicate {0:?}")]
    UnknownPredicate(String),
    #[error(transparent)]
    Atom(DataError),
    #[error("variable {var} is used both as {first:?} and {second:?}")]
    KindConflict {
        var: String,
        first: ArgKind,
        second: ArgKind,
    },
    #[error("{atom}: the image argument must be the head variable")]
    ImageArgument { atom: String },
    #[error("{atom}: variable {var} is not bound by an earlier atom of the clause")]
    UnboundVariable { var: String, atom: String },
    #[error("empty clause")]
    EmptyClause,
    #[error("rule for {0:?} has no clauses")]
    EmptyRule(String),
    #[error("rule label {found:?} does not match {expected:?}")]
    LabelMismatch { expected: String, found: String },
    #[error("more than one rule for label {0:?}")]
    DuplicateRule(String),
}

impl From<DataError> for RuleError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::UnknownPredicate(name) => RuleError::UnknownPredicate(name),
            other => RuleError::Atom(other),
        }
    }
}

/// A conjunction of atoms with canonically named variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Clause {
    atoms: Vec<PredicateAtom>,
}

fn kind_of(vocab: &Vocabulary, atom: &PredicateAtom, pos: usize) -> ArgKind {
    match vocab.role(&atom.name) {
        Some(PredicateRole::Comparison(_)) => ArgKind::Numeric,
        _ => vocab.get(&atom.name).expect("validated").kinds[pos],
    }
}

fn nth_name(kind: ArgKind, n: usize) -> String {
    const OBJECT_NAMES: &[u8] = b"ABCDEFGHIJKLMOPQRSTUW";
    let (base, round) = match kind {
        ArgKind::Object => {
            let letter = OBJECT_NAMES[n % OBJECT_NAMES.len()] as char;
            (letter.to_string(), n / OBJECT_NAMES.len())
        }
        ArgKind::Numeric => ("N".to_string(), n),
        ArgKind::Symbol => ("V".to_string(), n),
        ArgKind::Image => return HEAD_VAR.to_string(),
    };
    if round == 0 {
        base
    } else {
        format!("{base}{round}")
    }
}

impl Clause {
    /// Validates the atoms against `vocab` and renames variables canonically.
    /// The head variable is `X`.
    pub fn new(atoms: Vec<PredicateAtom>, vocab: &Vocabulary) -> Result<Clause, RuleError> {
        Self::with_head(atoms, HEAD_VAR, vocab).map_err(|(_, e)| e)
    }

    /// Like [`Clause::new`], reporting the index of the offending atom.
    pub(crate) fn with_head(
        atoms: Vec<PredicateAtom>,
        head: &str,
        vocab: &Vocabulary,
    ) -> Result<Clause, (usize, RuleError)> {
        if atoms.is_empty() {
            return Err((0, RuleError::EmptyClause));
        }
        let mut kinds: HashMap<&str, ArgKind> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        for (i, atom) in atoms.iter().enumerate() {
            vocab
                .validate_atom(atom, false)
                .map_err(|e| (i, e.into()))?;
            for (pos, arg) in atom.args.iter().enumerate() {
                let kind = kind_of(vocab, atom, pos);
                let image_err = || {
                    (
                        i,
                        RuleError::ImageArgument {
                            atom: atom.to_string(),
                        },
                    )
                };
                match arg {
                    Term::Var(v) if v == head => {
                        if kind != ArgKind::Image {
                            return Err((
                                i,
                                RuleError::KindConflict {
                                    var: v.clone(),
                                    first: ArgKind::Image,
                                    second: kind,
                                },
                            ));
                        }
                    }
                    Term::Var(v) => {
                        if kind == ArgKind::Image {
                            return Err(image_err());
                        }
                        match kinds.get(v.as_str()) {
                            Some(&k) if k != kind => {
                                return Err((
                                    i,
                                    RuleError::KindConflict {
                                        var: v.clone(),
                                        first: k,
                                        second: kind,
                                    },
                                ))
                            }
                            Some(_) => {}
                            None => {
                                kinds.insert(v, kind);
                                order.push(v);
                            }
                        }
                    }
                    _ if kind == ArgKind::Image => return Err(image_err()),
                    _ => {}
                }
            }
        }

        let mut counters: HashMap<ArgKind, usize> = HashMap::new();
        let mut rename: HashMap<&str, String> = HashMap::new();
        rename.insert(head, HEAD_VAR.to_string());
        for v in order {
            let kind = kinds[v];
            let n = counters.entry(kind).or_insert(0);
            rename.insert(v, nth_name(kind, *n));
            *n += 1;
        }
        let atoms: Vec<PredicateAtom> = atoms
            .iter()
            .map(|a| PredicateAtom {
                name: a.name.clone(),
                negated: a.negated,
                args: a
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => Term::Var(rename[v.as_str()].clone()),
                        other => other.clone(),
                    })
                    .collect(),
            })
            .collect();

        let mut bound: Vec<&str> = vec![HEAD_VAR];
        for (i, atom) in atoms.iter().enumerate() {
            if let Some(PredicateRole::Comparison(_)) = vocab.role(&atom.name) {
                let var = atom.args[0].as_var().expect("validated");
                if !bound.contains(&var) {
                    return Err((
                        i,
                        RuleError::UnboundVariable {
                            var: var.to_string(),
                            atom: atom.to_string(),
                        },
                    ));
                }
            } else if !atom.negated {
                bound.extend(atom.vars());
            }
        }
        Ok(Clause { atoms })
    }

    pub fn atoms(&self) -> &[PredicateAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// A copy with one more atom appended, revalidated.
    pub fn extended(&self, atom: PredicateAtom, vocab: &Vocabulary) -> Result<Clause, RuleError> {
        let mut atoms = self.atoms.clone();
        atoms.push(atom);
        Clause::new(atoms, vocab)
    }
}

/// One label's rule: a disjunction of clauses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Rule {
    pub label: String,
    pub clauses: Vec<Clause>,
}

impl Rule {
    pub fn new(label: impl Into<String>, clauses: Vec<Clause>) -> Self {
        Rule {
            label: label.into(),
            clauses,
        }
    }

    pub fn predicate_count(&self) -> usize {
        self.clauses.iter().map(Clause::len).sum()
    }
}

/// At most one rule per label, ordered by label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(transparent)]
pub struct RuleSet {
    rules: BTreeMap<String, Rule>,
}

impl RuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rules(rules: impl IntoIterator<Item = Rule>) -> Result<Self, RuleError> {
        let mut set = Self::new();
        for rule in rules {
            if set.rules.contains_key(&rule.label) {
                return Err(RuleError::DuplicateRule(rule.label));
            }
            set.insert(rule);
        }
        Ok(set)
    }

    /// Adds or replaces the rule for its label.
    pub fn insert(&mut self, rule: Rule) -> Option<Rule> {
        self.rules.insert(rule.label.clone(), rule)
    }

    pub fn get(&self, label: &str) -> Option<&Rule> {
        self.rules.get(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.rules.keys().map(String::as_str)
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.values()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn avg_clauses(&self) -> f64 {
        if self.rules.is_empty() {
            return 0.0;
        }
        self.rules.values().map(|r| r.clauses.len()).sum::<usize>() as f64 / self.len() as f64
    }

    pub fn avg_predicates_per_clause(&self) -> f64 {
        let clauses: usize = self.rules.values().map(|r| r.clauses.len()).sum();
        if clauses == 0 {
            return 0.0;
        }
        self.rules
            .values()
            .map(Rule::predicate_count)
            .sum::<usize>() as f64
            / clauses as f64
    }
}

/// Where a rule first departs from a reference rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Inconsistency {
    /// Clause `index` differs from the reference, or is missing.
    Differs { index: usize, gold: Clause },
    /// The rule matches the reference but has extra clauses from `index` on.
    Surplus { index: usize },
}

/// Compares clause by clause. `None` when both rules have the same clauses in
/// the same order.
pub fn first_inconsistent_clause(
    current: &Rule,
    gold: &Rule,
) -> Result<Option<Inconsistency>, RuleError> {
    if current.label != gold.label {
        return Err(RuleError::LabelMismatch {
            expected: gold.label.clone(),
            found: current.label.clone(),
        });
    }
    for (index, g) in gold.clauses.iter().enumerate() {
        if current.clauses.get(index) != Some(g) {
            return Ok(Some(Inconsistency::Differs {
                index,
                gold: g.clone(),
            }));
        }
    }
    if current.clauses.len() > gold.clauses.len() {
        return Ok(Some(Inconsistency::Surplus {
            index: gold.clauses.len(),
        }));
    }
    Ok(None)
}

/// Clauses present in only one of two versions of a rule.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleDiff {
    pub added: Vec<Clause>,
    pub removed: Vec<Clause>,
}

impl RuleDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }
}

pub fn diff_rules(old: &Rule, new: &Rule) -> RuleDiff {
    let mut diff = RuleDiff::default();
    for c in &new.clauses {
        if !old.clauses.contains(c) && !diff.added.contains(c) {
            diff.added.push(c.clone());
        }
    }
    for c in &old.clauses {
        if !new.clauses.contains(c) && !diff.removed.contains(c) {
            diff.removed.push(c.clone());
        }
    }
    diff
}
