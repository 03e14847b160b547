use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::gain::significance;
use super::{LearnConfig, LearnError};
use crate::attr::{
    AttributeRecord, PredicateAtom, PredicateRole, Term, Vocabulary, GREATER, OBJECT, SMALLER,
};
use crate::dsl::{Clause, RuleError, HEAD_VAR};
use crate::eval::CompiledClause;

/// A refinement step: one or more atoms appended to a clause together.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Literal {
    /// `object(X,sort)` or its negation.
    Object { sort: String, negated: bool },
    /// A relation fact with the image generalized to `X`.
    Relation { atom: PredicateAtom },
    /// `sort(X,A), attr(A,N), cmp(N,value)`, reusing atoms already present.
    Threshold {
        sort: String,
        attr: String,
        cmp: String,
        value: Term,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Fact,
    Threshold,
    Negation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateLiteral {
    pub literal: Literal,
    pub source: Source,
    pub sig: f64,
}

fn fresh(n: usize) -> Term {
    Term::var(format!("Z{n}"))
}

impl Literal {
    /// Object-type literals are preferred early in a clause.
    pub fn is_object_type(&self) -> bool {
        matches!(self, Literal::Object { .. })
    }

    pub fn predicate(&self) -> &str {
        match self {
            Literal::Object { .. } => OBJECT,
            Literal::Relation { atom } => &atom.name,
            Literal::Threshold { attr, .. } => attr,
        }
    }

    /// The atoms this literal adds to `clause`.
    pub fn atoms(&self, clause: Option<&Clause>, vocab: &Vocabulary) -> Vec<PredicateAtom> {
        let existing: &[PredicateAtom] = clause.map_or(&[], Clause::atoms);
        match self {
            Literal::Object { sort, negated } => {
                let atom =
                    PredicateAtom::new(OBJECT, vec![Term::var(HEAD_VAR), Term::sym(sort.clone())]);
                vec![if *negated { atom.negate() } else { atom }]
            }
            Literal::Relation { atom } => vec![atom.clone()],
            Literal::Threshold {
                sort,
                attr,
                cmp,
                value,
            } => {
                let mut out = Vec::new();
                let object = match vocab.sort_predicate_for(sort) {
                    Some(pred) => {
                        let bound = existing
                            .iter()
                            .find(|a| !a.negated && a.name == pred && a.args[1].is_var());
                        match bound {
                            Some(a) => a.args[1].clone(),
                            None => {
                                let v = fresh(0);
                                out.push(PredicateAtom::new(
                                    pred,
                                    vec![Term::var(HEAD_VAR), v.clone()],
                                ));
                                v
                            }
                        }
                    }
                    None => Term::sym(sort.clone()),
                };
                let measured = existing
                    .iter()
                    .find(|a| {
                        !a.negated && a.name == *attr && a.args[0] == object && a.args[1].is_var()
                    })
                    .map(|a| a.args[1].clone());
                let n = match measured {
                    Some(n) => n,
                    None => {
                        let n = fresh(1);
                        out.push(PredicateAtom::new(attr.clone(), vec![object, n.clone()]));
                        n
                    }
                };
                out.push(PredicateAtom::new(cmp.clone(), vec![n, value.clone()]));
                out
            }
        }
    }

    /// `clause` with this literal appended, or the literal alone.
    pub fn extend(&self, clause: Option<&Clause>, vocab: &Vocabulary) -> Result<Clause, RuleError> {
        let mut atoms: Vec<PredicateAtom> = clause.map_or_else(Vec::new, |c| c.atoms().to_vec());
        atoms.extend(self.atoms(clause, vocab));
        Clause::new(atoms, vocab)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Object { sort, negated } => {
                let atom =
                    PredicateAtom::new(OBJECT, vec![Term::var(HEAD_VAR), Term::sym(sort.clone())]);
                if *negated {
                    write!(f, "{}", atom.negate())
                } else {
                    write!(f, "{atom}")
                }
            }
            Literal::Relation { atom } => write!(f, "{atom}"),
            Literal::Threshold {
                sort,
                attr,
                cmp,
                value,
            } => {
                write!(f, "{attr}({},N), {cmp}(N,{value})", Term::sym(sort.clone()))
            }
        }
    }
}

fn decimals(v: f64) -> usize {
    let s = format!("{v}");
    s.split_once('.').map_or(0, |(_, frac)| frac.len())
}

/// The midpoint of `lo` and `hi` rounded to the precision of the inputs, with
/// more digits only when needed to stay strictly between them.
pub fn tidy_midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    for digits in decimals(lo).max(decimals(hi))..=17 {
        let scale = 10f64.powi(digits as i32);
        let rounded = (mid * scale).round() / scale;
        if let Ok(m) = format!("{rounded:.digits$}").parse::<f64>() {
            if lo < m && m < hi {
                return m;
            }
        }
    }
    mid
}

/// Cut points between adjacent distinct values of one numeric attribute,
/// restricted to class boundaries: adjacent values whose examples are not all
/// of one and the same class.
pub fn boundary_thresholds(values: &[(f64, bool)]) -> Vec<f64> {
    let mut by_value: BTreeMap<u64, (f64, bool, bool)> = BTreeMap::new();
    for &(v, pos) in values {
        let key = ordered_key(v);
        let e = by_value.entry(key).or_insert((v, false, false));
        if pos {
            e.1 = true;
        } else {
            e.2 = true;
        }
    }
    let groups: Vec<(f64, bool, bool)> = by_value.into_values().collect();
    groups
        .windows(2)
        .filter(|w| {
            let (a, b) = (w[0], w[1]);
            let pure_same = a.1 != a.2 && b.1 != b.2 && a.1 == b.1;
            !pure_same
        })
        .map(|w| tidy_midpoint(w[0].0, w[1].0))
        .collect()
}

fn ordered_key(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

/// Satisfaction indicator of a standalone literal on each record.
pub fn indicator(
    literal: &Literal,
    records: &[&AttributeRecord],
    vocab: &Vocabulary,
) -> Result<Vec<bool>, RuleError> {
    let clause = literal.extend(None, vocab)?;
    let compiled = CompiledClause::new(&clause, vocab);
    Ok(records.iter().map(|r| compiled.satisfied(r)).collect())
}

/// Significance of a literal over training examples `all`, of which
/// `positive` flags the positives.
pub fn literal_significance(
    literal: &Literal,
    all: &[&AttributeRecord],
    positive: &[bool],
    vocab: &Vocabulary,
) -> Result<f64, LearnError> {
    let ind = indicator(literal, all, vocab)?;
    let n_pos = positive.iter().filter(|&&p| p).count();
    let pos_in = ind.iter().zip(positive).filter(|(i, p)| **i && **p).count();
    let all_in = ind.iter().filter(|&&i| i).count();
    significance(pos_in, n_pos, all_in, all.len()).ok_or(LearnError::NoPositives)
}

/// Candidate literals for one label: object and relation facts of the
/// positives, negations of facts seen in any example, and numeric thresholds
/// at class boundaries. Literals whose significance does not exceed the
/// threshold are dropped; object-type literals come first, then by
/// decreasing significance.
pub fn init_candidates(
    all: &[&AttributeRecord],
    positive: &[bool],
    vocab: &Vocabulary,
    config: &LearnConfig,
) -> Result<Vec<CandidateLiteral>, LearnError> {
    if !positive.iter().any(|&p| p) {
        return Err(LearnError::NoPositives);
    }
    let mut literals: BTreeMap<Literal, Source> = BTreeMap::new();
    let mut negations: BTreeSet<Literal> = BTreeSet::new();
    let image = Term::var(HEAD_VAR);
    for (record, &pos) in all.iter().zip(positive) {
        for sort in record.sorts() {
            if pos && vocab.has_existence() {
                literals.insert(
                    Literal::Object {
                        sort: sort.to_string(),
                        negated: false,
                    },
                    Source::Fact,
                );
            }
            if vocab.has_existence() {
                negations.insert(Literal::Object {
                    sort: sort.to_string(),
                    negated: true,
                });
            }
        }
        for (name, tuples) in record.relations() {
            if vocab.role(name) != Some(PredicateRole::Relation) {
                continue;
            }
            for args in tuples {
                let args: Vec<Term> = args
                    .iter()
                    .map(|a| {
                        if a == record.image_term() {
                            image.clone()
                        } else {
                            a.clone()
                        }
                    })
                    .collect();
                let atom = PredicateAtom::new(name.clone(), args);
                if pos {
                    literals.insert(Literal::Relation { atom: atom.clone() }, Source::Fact);
                }
                negations.insert(Literal::Relation {
                    atom: atom.negate(),
                });
            }
        }
    }
    for lit in negations {
        literals.entry(lit).or_insert(Source::Negation);
    }

    let attributes: Vec<&str> = vocab.attributes().collect();
    let comparisons_available = vocab.contains(GREATER) && vocab.contains(SMALLER);
    if comparisons_available {
        let mut observed: BTreeMap<(String, String), Vec<(f64, bool)>> = BTreeMap::new();
        for (record, &pos) in all.iter().zip(positive) {
            for attr in &attributes {
                for t in record.tuples(attr) {
                    if let (Some(sort), Some(v)) = (t[0].as_sym(), t[1].as_num()) {
                        observed
                            .entry((attr.to_string(), sort.to_string()))
                            .or_default()
                            .push((v, pos));
                    }
                }
            }
        }
        for ((attr, sort), values) in observed {
            for alpha in boundary_thresholds(&values) {
                for cmp in [GREATER, SMALLER] {
                    literals.insert(
                        Literal::Threshold {
                            sort: sort.clone(),
                            attr: attr.clone(),
                            cmp: cmp.to_string(),
                            value: Term::num(alpha),
                        },
                        Source::Threshold,
                    );
                }
            }
        }
    }

    let mut out = Vec::new();
    for (literal, source) in literals {
        let sig = literal_significance(&literal, all, positive, vocab)?;
        if sig > config.theta_for(literal.predicate()) {
            out.push(CandidateLiteral {
                literal,
                source,
                sig,
            });
        }
    }
    if out.is_empty() {
        return Err(LearnError::NoAdmissibleLiterals);
    }
    out.sort_by(|a, b| {
        b.literal
            .is_object_type()
            .cmp(&a.literal.is_object_type())
            .then(b.sig.total_cmp(&a.sig))
    });
    Ok(out)
}
