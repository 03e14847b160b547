//! Rule evaluation over attribute records: atom satisfaction, clause
//! satisfaction ratios (CSR) and label assignment with conflict resolution.
//!
//! Clause-level variables are those occurring in positive atoms. Variables
//! that only occur inside negated atoms are existential within the negation,
//! so `!people(X,B)` reads "no person is present". A variable whose domain is
//! empty in a record stays unbound; positive atoms over it fail and negated
//! ones hold.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::attr::{
    ArgKind, AttributeRecord, Comparison, PredicateAtom, PredicateRole, Term, Vocabulary,
};
use crate::dsl::{Clause, Rule, RuleSet, HEAD_VAR};

#[derive(Debug, Clone)]
enum Arg {
    Image,
    Slot(usize),
    Const(Term),
}

#[derive(Debug, Clone)]
enum Role {
    Compare(Comparison),
    Sort(String),
    Tuples,
}

#[derive(Debug, Clone)]
struct CompiledAtom {
    name: String,
    role: Role,
    args: Vec<Arg>,
    negated: bool,
}

/// The best partial satisfaction of a clause: `satisfied` of `len` atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClauseScore {
    pub satisfied: usize,
    pub len: usize,
}

impl ClauseScore {
    pub fn csr(&self) -> f64 {
        self.satisfied as f64 / self.len as f64
    }

    pub fn is_full(&self) -> bool {
        self.satisfied == self.len
    }

    /// Exact comparison of the two ratios.
    pub fn cmp_ratio(&self, other: &ClauseScore) -> Ordering {
        (self.satisfied * other.len).cmp(&(other.satisfied * self.len))
    }
}

fn compile_atom(
    vocab: &Vocabulary,
    atom: &PredicateAtom,
    slots: &mut HashMap<String, usize>,
) -> CompiledAtom {
    let role = match vocab.role(&atom.name) {
        Some(PredicateRole::Comparison(c)) => Role::Compare(c),
        Some(PredicateRole::Sort(s)) => Role::Sort(s.to_string()),
        _ => Role::Tuples,
    };
    let args = atom
        .args
        .iter()
        .map(|t| match t {
            Term::Var(v) if v == HEAD_VAR => Arg::Image,
            Term::Var(v) => {
                let n = slots.len();
                Arg::Slot(*slots.entry(v.clone()).or_insert(n))
            }
            other => Arg::Const(other.clone()),
        })
        .collect();
    CompiledAtom {
        name: atom.name.clone(),
        role,
        args,
        negated: atom.negated,
    }
}

fn slot_kind(vocab: &Vocabulary, atom: &CompiledAtom, pos: usize) -> ArgKind {
    match atom.role {
        Role::Compare(_) => ArgKind::Numeric,
        _ => vocab
            .get(&atom.name)
            .map(|d| d.kinds[pos])
            .unwrap_or(ArgKind::Object),
    }
}

/// A clause prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CompiledClause {
    atoms: Vec<CompiledAtom>,
    /// Kinds of the clause-level variables, which occupy the first slots.
    kinds: Vec<ArgKind>,
    slot_count: usize,
    /// Atom indices decided once `d` clause-level slots are assigned.
    decided_at: Vec<Vec<usize>>,
    join_order: Vec<usize>,
}

impl CompiledClause {
    pub fn new(clause: &Clause, vocab: &Vocabulary) -> Self {
        let mut slots: HashMap<String, usize> = HashMap::new();
        let positives: Vec<&PredicateAtom> = clause
            .atoms()
            .iter()
            .filter(|a| {
                !a.negated && !matches!(vocab.role(&a.name), Some(PredicateRole::Comparison(_)))
            })
            .collect();
        let mut kinds = Vec::new();
        for atom in &positives {
            let compiled = compile_atom(vocab, atom, &mut slots);
            for (pos, arg) in compiled.args.iter().enumerate() {
                if let Arg::Slot(s) = arg {
                    if *s == kinds.len() {
                        kinds.push(slot_kind(vocab, &compiled, pos));
                    }
                }
            }
        }
        let clause_vars = kinds.len();
        let atoms: Vec<CompiledAtom> = clause
            .atoms()
            .iter()
            .map(|a| compile_atom(vocab, a, &mut slots))
            .collect();
        let mut decided_at = vec![Vec::new(); clause_vars + 1];
        for (i, atom) in atoms.iter().enumerate() {
            let level = atom
                .args
                .iter()
                .filter_map(|a| match a {
                    Arg::Slot(s) if *s < clause_vars => Some(s + 1),
                    _ => None,
                })
                .max()
                .unwrap_or(0);
            decided_at[level].push(i);
        }
        let is_binder = |a: &CompiledAtom| !a.negated && !matches!(a.role, Role::Compare(_));
        let mut join_order: Vec<usize> =
            (0..atoms.len()).filter(|&i| is_binder(&atoms[i])).collect();
        join_order.extend((0..atoms.len()).filter(|&i| !is_binder(&atoms[i])));
        CompiledClause {
            atoms,
            kinds,
            slot_count: slots.len(),
            decided_at,
            join_order,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// True when some binding satisfies every atom.
    pub fn satisfied(&self, record: &AttributeRecord) -> bool {
        let mut binding = vec![None; self.slot_count];
        self.join(record, 0, &mut binding)
    }

    fn join(&self, record: &AttributeRecord, step: usize, binding: &mut Vec<Option<Term>>) -> bool {
        let Some(&i) = self.join_order.get(step) else {
            return true;
        };
        let atom = &self.atoms[i];
        let open = atom
            .args
            .iter()
            .any(|a| matches!(a, Arg::Slot(s) if binding[*s].is_none()));
        if atom.negated || matches!(atom.role, Role::Compare(_)) || !open {
            return holds(atom, record, binding) != atom.negated
                && self.join(record, step + 1, binding);
        }
        match &atom.role {
            Role::Sort(sort) => {
                if !record.has_sort(sort) {
                    return false;
                }
                let value = Term::sym(sort.clone());
                let mut bound = Vec::new();
                let ok = unify(
                    &atom.args,
                    &[record.image_term().clone(), value],
                    record,
                    binding,
                    &mut bound,
                ) && self.join(record, step + 1, binding);
                for s in bound {
                    binding[s] = None;
                }
                ok
            }
            _ => {
                for tuple in record.tuples(&atom.name) {
                    let mut bound = Vec::new();
                    if unify(&atom.args, tuple, record, binding, &mut bound) {
                        let ok = self.join(record, step + 1, binding);
                        for s in bound.drain(..) {
                            binding[s] = None;
                        }
                        if ok {
                            return true;
                        }
                    } else {
                        for s in bound {
                            binding[s] = None;
                        }
                    }
                }
                false
            }
        }
    }

    /// Maximum number of atoms satisfied by one binding of the clause-level
    /// variables.
    pub fn score(&self, record: &AttributeRecord) -> ClauseScore {
        let len = self.atoms.len();
        if self.satisfied(record) {
            return ClauseScore {
                satisfied: len,
                len,
            };
        }
        let mut binding = vec![None; self.slot_count];
        let base = self.count_level(0, record, &binding);
        let mut best = base.min(len);
        let mut decided = self.decided_at[0].len();
        self.search(record, 0, base, &mut decided, &mut binding, &mut best);
        ClauseScore {
            satisfied: best,
            len,
        }
    }

    fn count_level(
        &self,
        level: usize,
        record: &AttributeRecord,
        binding: &[Option<Term>],
    ) -> usize {
        self.decided_at[level]
            .iter()
            .filter(|&&i| holds(&self.atoms[i], record, binding) != self.atoms[i].negated)
            .count()
    }

    fn search(
        &self,
        record: &AttributeRecord,
        depth: usize,
        count: usize,
        decided: &mut usize,
        binding: &mut Vec<Option<Term>>,
        best: &mut usize,
    ) {
        let len = self.atoms.len();
        if *best == len || count + (len - *decided) <= *best {
            return;
        }
        if depth == self.kinds.len() {
            *best = (*best).max(count);
            return;
        }
        let domain = record.domain(self.kinds[depth]);
        let next = depth + 1;
        *decided += self.decided_at[next].len();
        if domain.is_empty() {
            binding[depth] = None;
            let c = count + self.count_level(next, record, binding);
            self.search(record, next, c, decided, binding, best);
        } else {
            for value in domain {
                binding[depth] = Some(value.clone());
                let c = count + self.count_level(next, record, binding);
                self.search(record, next, c, decided, binding, best);
                if *best == len {
                    break;
                }
            }
            binding[depth] = None;
        }
        *decided -= self.decided_at[next].len();
    }
}

fn unify(
    args: &[Arg],
    tuple: &[Term],
    record: &AttributeRecord,
    binding: &mut [Option<Term>],
    bound: &mut Vec<usize>,
) -> bool {
    if args.len() != tuple.len() {
        return false;
    }
    for (arg, value) in args.iter().zip(tuple) {
        let ok = match arg {
            Arg::Image => value == record.image_term(),
            Arg::Const(c) => c == value,
            Arg::Slot(s) => match &binding[*s] {
                Some(b) => b == value,
                None => {
                    binding[*s] = Some(value.clone());
                    bound.push(*s);
                    true
                }
            },
        };
        if !ok {
            return false;
        }
    }
    true
}

/// Whether the positive form of `atom` holds for some values of its unbound
/// variables.
fn holds(atom: &CompiledAtom, record: &AttributeRecord, binding: &[Option<Term>]) -> bool {
    let mut scratch = binding.to_vec();
    let mut bound = Vec::new();
    match &atom.role {
        Role::Compare(cmp) => {
            let lhs = match &atom.args[0] {
                Arg::Slot(s) => binding[*s].as_ref().and_then(Term::as_num),
                Arg::Const(t) => t.as_num(),
                Arg::Image => None,
            };
            let rhs = match &atom.args[1] {
                Arg::Slot(s) => binding[*s].as_ref().and_then(Term::as_num),
                Arg::Const(t) => t.as_num(),
                Arg::Image => None,
            };
            matches!((lhs, rhs), (Some(l), Some(r)) if cmp.holds(l, r))
        }
        Role::Sort(sort) => {
            record.has_sort(sort)
                && unify(
                    &atom.args,
                    &[record.image_term().clone(), Term::sym(sort.clone())],
                    record,
                    &mut scratch,
                    &mut bound,
                )
        }
        Role::Tuples => record.tuples(&atom.name).iter().any(|tuple| {
            let ok = unify(&atom.args, tuple, record, &mut scratch, &mut bound);
            for s in bound.drain(..) {
                scratch[s] = None;
            }
            ok
        }),
    }
}

/// Per-rule evaluation result for one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RuleScore {
    /// The best clause by CSR, then by satisfied-atom count.
    pub best: ClauseScore,
    pub satisfied: bool,
}

impl RuleScore {
    pub fn csr(&self) -> f64 {
        self.best.csr()
    }
}

#[derive(Debug, Clone)]
pub struct CompiledRule {
    pub label: String,
    clauses: Vec<CompiledClause>,
}

impl CompiledRule {
    pub fn new(rule: &Rule, vocab: &Vocabulary) -> Self {
        CompiledRule {
            label: rule.label.clone(),
            clauses: rule
                .clauses
                .iter()
                .map(|c| CompiledClause::new(c, vocab))
                .collect(),
        }
    }

    pub fn satisfied(&self, record: &AttributeRecord) -> bool {
        self.clauses.iter().any(|c| c.satisfied(record))
    }

    pub fn score(&self, record: &AttributeRecord) -> RuleScore {
        let mut best: Option<ClauseScore> = None;
        for clause in &self.clauses {
            let s = clause.score(record);
            let better = match &best {
                None => true,
                Some(b) => s.cmp_ratio(b).then(s.satisfied.cmp(&b.satisfied)) == Ordering::Greater,
            };
            if better {
                best = Some(s);
            }
            if s.is_full() {
                break;
            }
        }
        let best = best.unwrap_or(ClauseScore {
            satisfied: 0,
            len: 1,
        });
        RuleScore {
            satisfied: best.is_full(),
            best,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledRuleSet {
    rules: Vec<CompiledRule>,
}

/// The label chosen for one record, with the evidence behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDecision {
    pub record_id: String,
    pub label: String,
    pub satisfied_labels: Vec<String>,
    pub csr: BTreeMap<String, f64>,
    pub tie_broken: bool,
}

impl LabelDecision {
    pub fn unsatisfied_csr(&self) -> impl Iterator<Item = f64> + '_ {
        self.csr
            .iter()
            .filter(|(l, _)| !self.satisfied_labels.contains(l))
            .map(|(_, c)| *c)
    }
}

impl CompiledRuleSet {
    pub fn new(rules: &RuleSet, vocab: &Vocabulary) -> Self {
        CompiledRuleSet {
            rules: rules.rules().map(|r| CompiledRule::new(r, vocab)).collect(),
        }
    }

    pub fn rules(&self) -> &[CompiledRule] {
        &self.rules
    }

    pub fn scores(&self, record: &AttributeRecord) -> Vec<(&str, RuleScore)> {
        self.rules
            .iter()
            .map(|r| (r.label.as_str(), r.score(record)))
            .collect()
    }

    /// A unique satisfied rule decides the label. Otherwise the highest CSR
    /// wins, then the most satisfied atoms in the best clause, then the
    /// lexicographically first label; `tie_broken` marks a shared top CSR.
    pub fn assign(&self, record: &AttributeRecord) -> LabelDecision {
        let scores = self.scores(record);
        let satisfied_labels: Vec<String> = scores
            .iter()
            .filter(|(_, s)| s.satisfied)
            .map(|(l, _)| l.to_string())
            .collect();
        let csr = scores
            .iter()
            .map(|(l, s)| (l.to_string(), s.csr()))
            .collect();
        let (label, tie_broken) = if satisfied_labels.len() == 1 {
            (satisfied_labels[0].clone(), false)
        } else {
            let top = scores
                .iter()
                .map(|(_, s)| s.best)
                .max_by(|a, b| a.cmp_ratio(b))
                .expect("rule set is not empty");
            let tied: Vec<&(&str, RuleScore)> = scores
                .iter()
                .filter(|(_, s)| s.best.cmp_ratio(&top) == Ordering::Equal)
                .collect();
            let winner = tied
                .iter()
                .min_by(|a, b| {
                    b.1.best
                        .satisfied
                        .cmp(&a.1.best.satisfied)
                        .then(a.0.cmp(b.0))
                })
                .expect("at least one label at the top");
            (winner.0.to_string(), tied.len() > 1)
        };
        LabelDecision {
            record_id: record.id().to_string(),
            label,
            satisfied_labels,
            csr,
            tie_broken,
        }
    }
}

/// Convenience entry points that compile on each call.
#[derive(Debug, Clone, Copy)]
pub struct Evaluator<'v> {
    vocab: &'v Vocabulary,
}

impl<'v> Evaluator<'v> {
    pub fn new(vocab: &'v Vocabulary) -> Self {
        Evaluator { vocab }
    }

    /// Whether `atom` holds under `binding`. Unbound variables are read
    /// existentially; a negated atom holds when its positive form does not.
    pub fn sat(
        &self,
        record: &AttributeRecord,
        atom: &PredicateAtom,
        binding: &HashMap<String, Term>,
    ) -> bool {
        let mut slots = HashMap::new();
        let compiled = compile_atom(self.vocab, atom, &mut slots);
        let mut values = vec![None; slots.len()];
        for (name, slot) in &slots {
            values[*slot] = binding.get(name).cloned();
        }
        holds(&compiled, record, &values) != compiled.negated
    }

    pub fn clause_satisfied(&self, record: &AttributeRecord, clause: &Clause) -> bool {
        CompiledClause::new(clause, self.vocab).satisfied(record)
    }

    pub fn clause_csr(&self, record: &AttributeRecord, clause: &Clause) -> f64 {
        CompiledClause::new(clause, self.vocab).score(record).csr()
    }

    pub fn rule_satisfied(&self, record: &AttributeRecord, rule: &Rule) -> bool {
        CompiledRule::new(rule, self.vocab).satisfied(record)
    }

    pub fn rule_csr(&self, record: &AttributeRecord, rule: &Rule) -> f64 {
        CompiledRule::new(rule, self.vocab).score(record).csr()
    }

    pub fn assign_label(&self, record: &AttributeRecord, rules: &RuleSet) -> LabelDecision {
        CompiledRuleSet::new(rules, self.vocab).assign(record)
    }
}
