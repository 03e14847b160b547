use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::term::{is_predicate_ident, PredicateAtom, Term};
use super::DataError;

/// What a predicate argument ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgKind {
    /// The image (record) itself, i.e. the rule head variable.
    Image,
    /// An object sort present in the image.
    Object,
    Symbol,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateDecl {
    pub arity: usize,
    pub kinds: Vec<ArgKind>,
    /// Marks a sort predicate such as `truck(X,A)`: true when an object of
    /// this sort exists, binding `A` to it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sort: Option<String>,
}

impl PredicateDecl {
    pub fn new(kinds: Vec<ArgKind>) -> Self {
        PredicateDecl {
            arity: kinds.len(),
            kinds,
            sort: None,
        }
    }

    pub fn sort_predicate(sort: impl Into<String>) -> Self {
        PredicateDecl {
            arity: 2,
            kinds: vec![ArgKind::Image, ArgKind::Object],
            sort: Some(sort.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Greater,
    Smaller,
}

impl Comparison {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparison::Greater => lhs > rhs,
            Comparison::Smaller => lhs < rhs,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Comparison::Greater => "greater",
            Comparison::Smaller => "smaller",
        }
    }
}

/// How the evaluator interprets a predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredicateRole<'a> {
    Comparison(Comparison),
    /// `object(X,A)`: some object of sort `A` is present.
    Existence,
    Sort(&'a str),
    /// `attr(A,N)`: numeric attribute lookup per object sort.
    Attribute,
    /// Any other predicate, looked up among the record's facts.
    Relation,
}

pub const OBJECT: &str = "object";
pub const GREATER: &str = "greater";
pub const SMALLER: &str = "smaller";

/// The predicate names available to rules and records, with argument kinds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    entries: BTreeMap<String, PredicateDecl>,
}

impl Vocabulary {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The basic visual-attribute predicates: object, overlap, color, num,
    /// area, greater and smaller.
    pub fn standard() -> Self {
        use ArgKind::*;
        let mut v = Self::empty();
        let decls = [
            (OBJECT, vec![Image, Object]),
            ("overlap", vec![Object, Object]),
            ("color", vec![Object, Symbol]),
            ("num", vec![Object, Numeric]),
            ("area", vec![Object, Numeric]),
            (GREATER, vec![Numeric, Numeric]),
            (SMALLER, vec![Numeric, Numeric]),
        ];
        for (name, kinds) in decls {
            v.entries
                .insert(name.to_string(), PredicateDecl::new(kinds));
        }
        v
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let entries: BTreeMap<String, PredicateDecl> =
            serde_json::from_str(text).map_err(|e| DataError::Vocabulary(e.to_string()))?;
        let mut v = Self::empty();
        for (name, decl) in entries {
            v.insert(name, decl)?;
        }
        Ok(v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("vocabulary serializes")
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        decl: PredicateDecl,
    ) -> Result<(), DataError> {
        let name = name.into();
        if !is_predicate_ident(&name) {
            return Err(DataError::Vocabulary(format!(
                "invalid predicate name {name:?}"
            )));
        }
        if decl.arity != decl.kinds.len() {
            return Err(DataError::Vocabulary(format!(
                "{name}: arity {} does not match {} kinds",
                decl.arity,
                decl.kinds.len()
            )));
        }
        if decl.sort.is_some() && decl.kinds != [ArgKind::Image, ArgKind::Object] {
            return Err(DataError::Vocabulary(format!(
                "{name}: sort predicates take (image, object)"
            )));
        }
        if (name == GREATER || name == SMALLER)
            && decl.kinds != [ArgKind::Numeric, ArgKind::Numeric]
        {
            return Err(DataError::Vocabulary(format!(
                "{name}: comparisons take (numeric, numeric)"
            )));
        }
        self.entries.insert(name, decl);
        Ok(())
    }

    /// Adds a sort predicate named after each sort, unless the name is taken
    /// or cannot be written in rule text.
    pub fn with_sort_predicates<'s>(mut self, sorts: impl IntoIterator<Item = &'s str>) -> Self {
        for sort in sorts {
            if is_predicate_ident(sort) && !self.entries.contains_key(sort) {
                self.entries
                    .insert(sort.to_string(), PredicateDecl::sort_predicate(sort));
            }
        }
        self
    }

    pub fn get(&self, name: &str) -> Option<&PredicateDecl> {
        self.entries.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PredicateDecl)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn role(&self, name: &str) -> Option<PredicateRole<'_>> {
        let decl = self.entries.get(name)?;
        Some(match name {
            GREATER => PredicateRole::Comparison(Comparison::Greater),
            SMALLER => PredicateRole::Comparison(Comparison::Smaller),
            OBJECT if decl.kinds == [ArgKind::Image, ArgKind::Object] => PredicateRole::Existence,
            _ => match &decl.sort {
                Some(sort) => PredicateRole::Sort(sort),
                None if decl.kinds == [ArgKind::Object, ArgKind::Numeric] => {
                    PredicateRole::Attribute
                }
                None => PredicateRole::Relation,
            },
        })
    }

    /// Sort predicate naming `sort`, preferring one whose name equals the sort.
    pub fn sort_predicate_for(&self, sort: &str) -> Option<&str> {
        if let Some((name, PredicateDecl { sort: Some(s), .. })) = self.entries.get_key_value(sort)
        {
            if s == sort {
                return Some(name);
            }
        }
        self.entries
            .iter()
            .find(|(_, d)| d.sort.as_deref() == Some(sort))
            .map(|(k, _)| k.as_str())
    }

    pub fn has_existence(&self) -> bool {
        matches!(self.role(OBJECT), Some(PredicateRole::Existence))
    }

    /// Names of numeric attribute predicates (`num`, `area`, ...).
    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.entries
            .keys()
            .filter(|k| self.role(k) == Some(PredicateRole::Attribute))
            .map(String::as_str)
    }

    /// Checks arity and argument kinds of an atom. Ground atoms (record facts)
    /// may not contain variables or negation.
    pub fn validate_atom(&self, atom: &PredicateAtom, ground: bool) -> Result<(), DataError> {
        let decl = self
            .entries
            .get(&atom.name)
            .ok_or_else(|| DataError::UnknownPredicate(atom.name.clone()))?;
        if atom.args.len() != decl.arity {
            return Err(DataError::ArityMismatch {
                name: atom.name.clone(),
                expected: decl.arity,
                found: atom.args.len(),
            });
        }
        let invalid = |reason: &str| DataError::InvalidAtom {
            atom: atom.to_string(),
            reason: reason.to_string(),
        };
        if ground && (atom.negated || !atom.is_ground()) {
            return Err(invalid("facts must be ground and positive"));
        }
        if let Some(PredicateRole::Comparison(_)) = self.role(&atom.name) {
            return match (&atom.args[0], &atom.args[1]) {
                (Term::Var(_), Term::Num(_)) => Ok(()),
                _ => Err(invalid(
                    "comparisons take a numeric variable and a numeric constant",
                )),
            };
        }
        for (arg, kind) in atom.args.iter().zip(&decl.kinds) {
            let ok = match (arg, kind) {
                (Term::Var(_), _) => true,
                (Term::Num(n), ArgKind::Numeric) => n.is_finite(),
                (Term::Sym(_), ArgKind::Image | ArgKind::Object | ArgKind::Symbol) => true,
                _ => false,
            };
            if !ok {
                return Err(invalid(&format!(
                    "argument {arg} is not a valid {kind:?} term"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_roles() {
        let v = Vocabulary::standard();
        assert_eq!(v.role("object"), Some(PredicateRole::Existence));
        assert_eq!(v.role("num"), Some(PredicateRole::Attribute));
        assert_eq!(v.role("color"), Some(PredicateRole::Relation));
        assert_eq!(
            v.role("greater"),
            Some(PredicateRole::Comparison(Comparison::Greater))
        );
        assert_eq!(v.role("truck"), None);
        assert_eq!(v.attributes().collect::<Vec<_>>(), vec!["area", "num"]);
    }

    #[test]
    fn sort_aliases_resolve() {
        let mut v = Vocabulary::standard();
        v.insert("people", PredicateDecl::sort_predicate("person"))
            .unwrap();
        assert_eq!(v.role("people"), Some(PredicateRole::Sort("person")));
        assert_eq!(v.sort_predicate_for("person"), Some("people"));
        let v = v.with_sort_predicates(["person"]);
        assert_eq!(v.sort_predicate_for("person"), Some("person"));
    }

    #[test]
    fn json_round_trip() {
        let v = Vocabulary::standard().with_sort_predicates(["truck"]);
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn rejects_bad_declarations() {
        let err = Vocabulary::from_json(r#"{"p": {"arity": 2, "kinds": ["object"]}}"#).unwrap_err();
        assert!(err.to_string().contains("arity"));
    }

    #[test]
    fn comparison_shape_enforced() {
        let v = Vocabulary::standard();
        let ok = PredicateAtom::new("greater", vec![Term::var("N"), Term::num(5.0)]);
        assert!(v.validate_atom(&ok, false).is_ok());
        let bad = PredicateAtom::new("greater", vec![Term::num(3.0), Term::num(5.0)]);
        assert!(v.validate_atom(&bad, false).is_err());
        let arity = PredicateAtom::new("num", vec![Term::var("A")]);
        assert!(matches!(
            v.validate_atom(&arity, false),
            Err(DataError::ArityMismatch { .. })
        ));
    }
}
