use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::term::{PredicateAtom, Term};
use super::vocab::{ArgKind, PredicateRole, Vocabulary, OBJECT};
use super::DataError;

/// One image, described by its extracted ground facts.
///
/// Object facts may carry instance ids so that two cars count as two. Numeric
/// attributes are stored per object sort and also appear as facts such as
/// `num(truck,6)`.
#[derive(Debug, Clone)]
pub struct AttributeRecord {
    id: String,
    label: Option<String>,
    facts: BTreeSet<PredicateAtom>,
    instances: BTreeMap<String, BTreeSet<String>>,
    numeric: BTreeMap<(String, String), f64>,
    relations: BTreeMap<String, Vec<Vec<Term>>>,
    tuples: HashMap<String, Vec<Vec<Term>>>,
    image: Term,
    sort_terms: Vec<Term>,
    symbol_terms: Vec<Term>,
    number_terms: Vec<Term>,
}

impl PartialEq for AttributeRecord {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.label == other.label
            && self.facts == other.facts
            && self.instances == other.instances
    }
}

#[derive(Debug, Clone)]
pub struct RecordBuilder {
    id: String,
    label: Option<String>,
    instances: BTreeMap<String, BTreeSet<String>>,
    numeric: BTreeMap<(String, String), f64>,
    relations: Vec<PredicateAtom>,
}

impl RecordBuilder {
    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn set_label(&mut self, label: Option<String>) {
        self.label = label;
    }

    pub fn object(mut self, sort: impl Into<String>) -> Self {
        self.add_object(sort, None);
        self
    }

    pub fn object_instance(mut self, sort: impl Into<String>, instance: impl Into<String>) -> Self {
        self.add_object(sort, Some(instance.into()));
        self
    }

    pub fn add_object(&mut self, sort: impl Into<String>, instance: Option<String>) {
        self.instances
            .entry(sort.into())
            .or_default()
            .insert(instance.unwrap_or_default());
    }

    pub fn remove_sort(&mut self, sort: &str) {
        self.instances.remove(sort);
        self.numeric.retain(|(_, s), _| s != sort);
        self.relations
            .retain(|f| !f.args.iter().any(|a| a.as_sym() == Some(sort)));
    }

    pub fn has_sort(&self, sort: &str) -> bool {
        self.instances.contains_key(sort)
    }

    pub fn sorts(&self) -> impl Iterator<Item = &str> {
        self.instances.keys().map(String::as_str)
    }

    pub fn numeric(mut self, attr: impl Into<String>, sort: impl Into<String>, value: f64) -> Self {
        self.set_numeric(attr, sort, value);
        self
    }

    pub fn set_numeric(&mut self, attr: impl Into<String>, sort: impl Into<String>, value: f64) {
        self.numeric.insert((attr.into(), sort.into()), value);
    }

    pub fn numeric_value(&self, attr: &str, sort: &str) -> Option<f64> {
        self.numeric
            .get(&(attr.to_string(), sort.to_string()))
            .copied()
    }

    /// A relation fact given without its image arguments, e.g.
    /// `fact("color", [sym("car"), sym("red")])`.
    pub fn fact(mut self, name: impl Into<String>, args: Vec<Term>) -> Self {
        self.add_fact(name, args);
        self
    }

    pub fn add_fact(&mut self, name: impl Into<String>, args: Vec<Term>) {
        self.relations.push(PredicateAtom::new(name, args));
    }

    /// Drops the `name` facts whose first argument is `subject`.
    pub fn remove_facts_about(&mut self, name: &str, subject: &Term) {
        self.relations
            .retain(|f| f.name != name || f.args.first() != Some(subject));
    }

    pub fn remove_facts(&mut self, name: &str) {
        self.relations.retain(|f| f.name != name);
    }

    pub fn build(self, vocab: &Vocabulary) -> Result<AttributeRecord, DataError> {
        let RecordBuilder {
            id,
            label,
            instances,
            numeric,
            relations: raw_relations,
        } = self;
        if id.is_empty() {
            return Err(DataError::InvalidRecord("empty record id".into()));
        }
        let image = Term::Sym(id.clone());
        let mut facts = BTreeSet::new();

        if !instances.is_empty() && !vocab.has_existence() {
            return Err(DataError::UnknownPredicate(OBJECT.into()));
        }
        for sort in instances.keys() {
            facts.insert(PredicateAtom::new(
                OBJECT,
                vec![image.clone(), Term::sym(sort)],
            ));
        }

        let mut number_set: BTreeSet<Term> = BTreeSet::new();
        for ((attr, sort), value) in &numeric {
            if !value.is_finite() {
                return Err(DataError::InvalidRecord(format!(
                    "{id}: non-finite value for {attr}({sort})"
                )));
            }
            if vocab.role(attr) != Some(PredicateRole::Attribute) {
                return match vocab.get(attr) {
                    None => Err(DataError::UnknownPredicate(attr.clone())),
                    Some(_) => Err(DataError::InvalidRecord(format!(
                        "{attr} is not a numeric attribute predicate"
                    ))),
                };
            }
            facts.insert(PredicateAtom::new(
                attr.clone(),
                vec![Term::sym(sort), Term::num(*value)],
            ));
            number_set.insert(Term::num(*value));
        }
        if vocab.role("num") == Some(PredicateRole::Attribute) {
            for (sort, inst) in &instances {
                if !numeric.contains_key(&("num".to_string(), sort.clone())) {
                    number_set.insert(Term::num(inst.len() as f64));
                }
            }
        }

        let mut object_set: BTreeSet<Term> = instances.keys().map(Term::sym).collect();
        object_set.extend(numeric.keys().map(|(_, sort)| Term::sym(sort)));
        let mut relations: BTreeMap<String, Vec<Vec<Term>>> = BTreeMap::new();
        let mut symbol_set: BTreeSet<Term> = BTreeSet::new();
        for raw in raw_relations {
            let decl = vocab
                .get(&raw.name)
                .ok_or_else(|| DataError::UnknownPredicate(raw.name.clone()))?;
            match vocab.role(&raw.name) {
                Some(PredicateRole::Relation) => {}
                _ => {
                    return Err(DataError::InvalidRecord(format!(
                        "{} cannot be given as a fact; use object facts and numeric maps",
                        raw.name
                    )))
                }
            }
            let explicit = decl.kinds.iter().filter(|k| **k != ArgKind::Image).count();
            if raw.args.len() != explicit {
                return Err(DataError::ArityMismatch {
                    name: raw.name.clone(),
                    expected: explicit,
                    found: raw.args.len(),
                });
            }
            let mut given = raw.args.into_iter();
            let mut args = Vec::with_capacity(decl.arity);
            for kind in &decl.kinds {
                if *kind == ArgKind::Image {
                    args.push(image.clone());
                } else {
                    let arg = given.next().expect("counted above");
                    match kind {
                        ArgKind::Symbol => {
                            symbol_set.insert(arg.clone());
                        }
                        ArgKind::Numeric => {
                            number_set.insert(arg.clone());
                        }
                        ArgKind::Object => {
                            object_set.insert(arg.clone());
                        }
                        ArgKind::Image => {}
                    }
                    args.push(arg);
                }
            }
            let atom = PredicateAtom::new(raw.name, args);
            vocab.validate_atom(&atom, true)?;
            if facts.insert(atom.clone()) {
                relations.entry(atom.name).or_default().push(atom.args);
            }
        }

        let mut tuples: HashMap<String, Vec<Vec<Term>>> = relations
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if !instances.is_empty() {
            tuples.insert(
                OBJECT.to_string(),
                instances
                    .keys()
                    .map(|sort| vec![image.clone(), Term::sym(sort)])
                    .collect(),
            );
        }
        for ((attr, sort), value) in &numeric {
            tuples
                .entry(attr.clone())
                .or_default()
                .push(vec![Term::sym(sort), Term::num(*value)]);
        }
        if vocab.role("num") == Some(PredicateRole::Attribute) {
            for (sort, inst) in &instances {
                if !numeric.contains_key(&("num".to_string(), sort.clone())) {
                    tuples
                        .entry("num".to_string())
                        .or_default()
                        .push(vec![Term::sym(sort), Term::num(inst.len() as f64)]);
                }
            }
        }

        Ok(AttributeRecord {
            image,
            tuples,
            sort_terms: object_set.into_iter().collect(),
            symbol_terms: symbol_set.into_iter().collect(),
            number_terms: number_set.into_iter().collect(),
            id,
            label,
            facts,
            instances,
            numeric,
            relations,
        })
    }
}

impl AttributeRecord {
    pub fn builder(id: impl Into<String>) -> RecordBuilder {
        RecordBuilder {
            id: id.into(),
            label: None,
            instances: BTreeMap::new(),
            numeric: BTreeMap::new(),
            relations: Vec::new(),
        }
    }

    /// Builder pre-filled with this record's content.
    pub fn to_builder(&self) -> RecordBuilder {
        let image_free = |args: &Vec<Term>| -> Vec<Term> {
            args.iter().filter(|a| **a != self.image).cloned().collect()
        };
        RecordBuilder {
            id: self.id.clone(),
            label: self.label.clone(),
            instances: self.instances.clone(),
            numeric: self.numeric.clone(),
            relations: self
                .relations
                .iter()
                .flat_map(|(name, tuples)| {
                    tuples
                        .iter()
                        .map(move |args| PredicateAtom::new(name.clone(), image_free(args)))
                })
                .collect(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }

    /// All ground facts, image arguments included.
    pub fn facts(&self) -> &BTreeSet<PredicateAtom> {
        &self.facts
    }

    pub fn has_sort(&self, sort: &str) -> bool {
        self.instances.contains_key(sort)
    }

    pub fn sorts(&self) -> impl Iterator<Item = &str> {
        self.instances.keys().map(String::as_str)
    }

    /// Distinct object instances of `sort` (0 when absent).
    pub fn instance_count(&self, sort: &str) -> usize {
        self.instances.get(sort).map_or(0, BTreeSet::len)
    }

    pub fn instances(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.instances
    }

    pub fn explicit_numeric(&self) -> &BTreeMap<(String, String), f64> {
        &self.numeric
    }

    /// Value of a numeric attribute for a sort. `num` falls back to the number
    /// of object instances when the sort is present without an explicit count.
    pub fn attribute(&self, attr: &str, sort: &str) -> Option<f64> {
        if let Some(v) = self.numeric.get(&(attr.to_string(), sort.to_string())) {
            return Some(*v);
        }
        if attr == "num" && self.has_sort(sort) {
            return Some(self.instance_count(sort) as f64);
        }
        None
    }

    pub fn relation(&self, name: &str) -> &[Vec<Term>] {
        self.relations.get(name).map_or(&[], Vec::as_slice)
    }

    /// Ground argument tuples of `name`, covering object, numeric attribute
    /// (with the `num` fallback) and relation facts.
    pub fn tuples(&self, name: &str) -> &[Vec<Term>] {
        self.tuples.get(name).map_or(&[], Vec::as_slice)
    }

    pub fn relations(&self) -> &BTreeMap<String, Vec<Vec<Term>>> {
        &self.relations
    }

    pub fn image_term(&self) -> &Term {
        &self.image
    }

    /// Candidate values for a variable of the given kind.
    pub fn domain(&self, kind: ArgKind) -> &[Term] {
        match kind {
            ArgKind::Image => std::slice::from_ref(&self.image),
            ArgKind::Object => &self.sort_terms,
            ArgKind::Symbol => &self.symbol_terms,
            ArgKind::Numeric => &self.number_terms,
        }
    }
}
