use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::record::AttributeRecord;
use super::term::{format_number, PredicateAtom, Term};
use super::vocab::{PredicateRole, Vocabulary, OBJECT};
use super::DataError;

/// A validated collection of records sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<AttributeRecord>,
    labels: Vec<String>,
    vocab: Vocabulary,
    sorts: Vec<String>,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Labels are taken from the records, in sorted order.
    pub fn new(records: Vec<AttributeRecord>, vocab: Vocabulary) -> Result<Self, DataError> {
        let labels: BTreeSet<String> = records
            .iter()
            .filter_map(|r| r.label().map(str::to_string))
            .collect();
        Self::with_labels(records, labels.into_iter().collect(), vocab)
    }

    pub fn with_labels(
        records: Vec<AttributeRecord>,
        labels: Vec<String>,
        vocab: Vocabulary,
    ) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let distinct: BTreeSet<&String> = labels.iter().collect();
        if distinct.len() != labels.len() {
            return Err(DataError::InvalidRecord(
                "duplicate label in label list".into(),
            ));
        }
        if labels.len() < 2 {
            return Err(DataError::TooFewLabels(labels.len()));
        }
        let mut index = HashMap::with_capacity(records.len());
        let mut sorts = BTreeSet::new();
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.id().to_string(), i).is_some() {
                return Err(DataError::DuplicateId(r.id().to_string()));
            }
            if let Some(label) = r.label() {
                if !distinct.contains(&label.to_string()) {
                    return Err(DataError::UnknownLabel(label.to_string()));
                }
            }
            sorts.extend(r.sorts().map(str::to_string));
        }
        let vocab = vocab.with_sort_predicates(sorts.iter().map(String::as_str));
        Ok(Dataset {
            records,
            labels,
            vocab,
            sorts: sorts.into_iter().collect(),
            index,
        })
    }

    pub fn records(&self) -> &[AttributeRecord] {
        &self.records
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// The vocabulary extended with one sort predicate per observed sort.
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Object sorts observed anywhere in the dataset, sorted.
    pub fn sorts(&self) -> &[String] {
        &self.sorts
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&AttributeRecord> {
        self.position(id).map(|i| &self.records[i])
    }

    pub fn to_jsonl(&self) -> String {
        records_to_jsonl(&self.records)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    #[serde(default)]
    facts: Vec<Vec<Value>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    num: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    area: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    extra: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

fn json_term(v: &Value) -> Result<Term, DataError> {
    match v {
        Value::String(s) => Ok(Term::sym(s.clone())),
        Value::Number(n) => n
            .as_f64()
            .map(Term::num)
            .ok_or_else(|| DataError::Malformed(format!("unrepresentable number {n}"))),
        other => Err(DataError::Malformed(format!(
            "fact argument {other} is not a string or number"
        ))),
    }
}

fn term_json(t: &Term) -> Value {
    match t {
        Term::Num(n) => serde_json::Number::from_f64(*n).map_or(Value::Null, Value::Number),
        Term::Sym(s) | Term::Var(s) => Value::String(s.clone()),
    }
}

fn record_from_line(line: RecordLine, vocab: &Vocabulary) -> Result<AttributeRecord, DataError> {
    let mut b = AttributeRecord::builder(line.id);
    b.set_label(line.label);
    for fact in line.facts {
        let (head, rest) = fact
            .split_first()
            .ok_or_else(|| DataError::Malformed("empty fact".into()))?;
        let name = head
            .as_str()
            .ok_or_else(|| DataError::Malformed(format!("fact name {head} is not a string")))?;
        let args = rest.iter().map(json_term).collect::<Result<Vec<_>, _>>()?;
        match vocab.role(name) {
            None => return Err(DataError::UnknownPredicate(name.to_string())),
            Some(PredicateRole::Existence) => match args.as_slice() {
                [Term::Sym(sort)] => b.add_object(sort.clone(), None),
                [Term::Sym(sort), Term::Sym(inst)] => {
                    b.add_object(sort.clone(), Some(inst.clone()))
                }
                [Term::Sym(sort), Term::Num(n)] => {
                    b.add_object(sort.clone(), Some(format_number(*n)))
                }
                _ => {
                    return Err(DataError::InvalidAtom {
                        atom: PredicateAtom::new(name, args).to_string(),
                        reason: "object facts take a sort and an optional instance id".into(),
                    })
                }
            },
            Some(PredicateRole::Attribute) => match args.as_slice() {
                [Term::Sym(sort), Term::Num(v)] => b.set_numeric(name, sort.clone(), *v),
                _ => {
                    return Err(DataError::InvalidAtom {
                        atom: PredicateAtom::new(name, args).to_string(),
                        reason: "attribute facts take a sort and a number".into(),
                    })
                }
            },
            Some(_) => b.add_fact(name, args),
        }
    }
    let maps = [
        ("num".to_string(), line.num),
        ("area".to_string(), line.area),
    ];
    for (attr, values) in maps.into_iter().chain(line.extra) {
        for (sort, v) in values {
            if !vocab.contains(&attr) {
                return Err(DataError::UnknownPredicate(attr));
            }
            b.set_numeric(attr.clone(), sort, v);
        }
    }
    b.build(vocab)
}

/// Parses JSON Lines records without requiring labels. Blank lines are
/// skipped; any bad line rejects the whole input.
pub fn parse_records(text: &str, vocab: &Vocabulary) -> Result<Vec<AttributeRecord>, DataError> {
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: RecordLine = serde_json::from_str(raw)
            .map_err(|e| DataError::Malformed(e.to_string()).at_line(lineno))?;
        let record = record_from_line(line, vocab).map_err(|e| e.at_line(lineno))?;
        if !seen.insert(record.id().to_string()) {
            return Err(DataError::DuplicateId(record.id().to_string()).at_line(lineno));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(records)
}

pub fn parse_dataset(text: &str, vocab: &Vocabulary) -> Result<Dataset, DataError> {
    Dataset::new(parse_records(text, vocab)?, vocab.clone())
}

fn record_to_line(r: &AttributeRecord) -> RecordLine {
    let mut facts = Vec::new();
    for (sort, instances) in r.instances() {
        for inst in instances {
            let mut f = vec![Value::from(OBJECT), Value::from(sort.as_str())];
            if !inst.is_empty() {
                f.push(Value::from(inst.as_str()));
            }
            facts.push(f);
        }
    }
    for (name, tuples) in r.relations() {
        for args in tuples {
            let mut f = vec![Value::from(name.as_str())];
            f.extend(args.iter().filter(|a| *a != r.image_term()).map(term_json));
            facts.push(f);
        }
    }
    let mut line = RecordLine {
        id: r.id().to_string(),
        facts,
        num: BTreeMap::new(),
        area: BTreeMap::new(),
        extra: BTreeMap::new(),
        label: r.label().map(str::to_string),
    };
    for ((attr, sort), v) in r.explicit_numeric() {
        let map = match attr.as_str() {
            "num" => &mut line.num,
            "area" => &mut line.area,
            other => line.extra.entry(other.to_string()).or_default(),
        };
        map.insert(sort.clone(), *v);
    }
    line
}

/// One JSON object per line, in record order.
pub fn records_to_jsonl(records: &[AttributeRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&record_to_line(r)).expect("record serializes"));
        out.push('\n');
    }
    out
}
