//! Planted-rule datasets: random scenes labeled by gold rules.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::attr::{
    records_to_jsonl, AttributeRecord, Dataset, PredicateDecl, RecordBuilder, Term, Vocabulary,
};
use crate::dsl::{parse_ruleset, print_ruleset, RuleSet};
use crate::eval::CompiledRuleSet;
use crate::oracle::GoldSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SortSpec {
    pub name: String,
    /// Probability the sort appears in a scene; the scene default when unset.
    pub presence: Option<f64>,
    pub max_count: Option<u32>,
}

/// A numeric attribute drawn uniformly from `values` whenever `sort` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericSpec {
    pub attr: String,
    pub sort: String,
    pub values: Vec<f64>,
}

/// A relation fact `name(object, value)` with `value` drawn from `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    pub name: String,
    pub object: String,
    pub values: Vec<String>,
    #[serde(default = "one")]
    pub presence: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub presence: f64,
    pub max_count: u32,
    pub sorts: Vec<SortSpec>,
    pub numeric: Vec<NumericSpec>,
    pub relations: Vec<RelationSpec>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            presence: 0.3,
            max_count: 4,
            sorts: Vec::new(),
            numeric: Vec::new(),
            relations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub name: String,
    pub seed: u64,
    pub records: usize,
    /// Probability that a record gets one random fact perturbation.
    pub noise: f64,
    /// Label order; the sorted rule labels when empty.
    pub labels: Vec<String>,
    pub gold_rules: String,
    /// Predicates beyond the standard vocabulary and the sort predicates.
    pub predicates: BTreeMap<String, PredicateDecl>,
    pub scene: SceneSpec,
    pub audit_samples: usize,
    pub max_attempts_per_record: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            name: "synthetic".into(),
            seed: 0,
            records: 200,
            noise: 0.0,
            labels: Vec::new(),
            gold_rules: String::new(),
            predicates: BTreeMap::new(),
            scene: SceneSpec::default(),
            audit_samples: 2000,
            max_attempts_per_record: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    /// Scenes drawn to check the gold rules against the scene distribution.
    pub sampled: usize,
    /// Sampled scenes satisfying no gold rule.
    pub uncovered: usize,
    /// Scenes drawn to fill the label quotas.
    pub attempts: usize,
    /// Records whose gold rule no longer decides them after noise.
    pub violations: usize,
    pub violation_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub gold: GoldSpec,
    pub audit: Audit,
}

impl GeneratorSpec {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn vocabulary(&self) -> Result<Vocabulary, HarnessError> {
        let mut v = Vocabulary::standard();
        for (name, decl) in &self.predicates {
            v.insert(name.clone(), decl.clone())?;
        }
        Ok(v.with_sort_predicates(self.scene.sorts.iter().map(|s| s.name.as_str())))
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.records == 0 {
            return bad("records must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise must be in [0, 1]".into());
        }
        for s in &self.scene.sorts {
            if let Some(p) = s.presence {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("presence of {} must be in [0, 1]", s.name));
                }
            }
        }
        for n in &self.scene.numeric {
            if n.values.is_empty() || n.values.iter().any(|v| !v.is_finite()) {
                return bad(format!("{}({}) needs finite values", n.attr, n.sort));
            }
        }
        for r in &self.scene.relations {
            if r.values.is_empty() {
                return bad(format!("{}({}) needs values", r.name, r.object));
            }
        }
        Ok(())
    }
}

struct Scene<'a> {
    spec: &'a GeneratorSpec,
    vocab: &'a Vocabulary,
}

impl Scene<'_> {
    fn place_sort(&self, b: &mut RecordBuilder, sort: &str, max: u32, rng: &mut ChaCha8Rng) {
        let count = rng.gen_range(1..=max.max(1));
        for i in 0..count {
            b.add_object(sort, Some(format!("{sort}{i}")));
        }
        for n in self.spec.scene.numeric.iter().filter(|n| n.sort == sort) {
            let v = *n.values.choose(rng).expect("validated non-empty");
            b.set_numeric(n.attr.clone(), sort, v);
        }
    }

    fn draw(&self, id: &str, rng: &mut ChaCha8Rng) -> RecordBuilder {
        let scene = &self.spec.scene;
        let mut b = AttributeRecord::builder(id);
        for s in &scene.sorts {
            if rng.gen_bool(s.presence.unwrap_or(scene.presence)) {
                self.place_sort(&mut b, &s.name, s.max_count.unwrap_or(scene.max_count), rng);
            }
        }
        for r in &scene.relations {
            if rng.gen_bool(r.presence) {
                let value = r.values.choose(rng).expect("validated non-empty");
                b.add_fact(
                    r.name.clone(),
                    vec![Term::sym(r.object.clone()), Term::sym(value.clone())],
                );
            }
        }
        b
    }

    /// Toggles one sort or redraws one relation value.
    fn perturb(&self, b: &mut RecordBuilder, rng: &mut ChaCha8Rng) {
        let scene = &self.spec.scene;
        let choices = scene.sorts.len() + scene.relations.len();
        if choices == 0 {
            return;
        }
        let k = rng.gen_range(0..choices);
        if let Some(s) = scene.sorts.get(k) {
            if b.has_sort(&s.name) {
                b.remove_sort(&s.name);
            } else {
                self.place_sort(b, &s.name, s.max_count.unwrap_or(scene.max_count), rng);
            }
        } else {
            let r = &scene.relations[k - scene.sorts.len()];
            let subject = Term::sym(r.object.clone());
            b.remove_facts_about(&r.name, &subject);
            let value = r.values.choose(rng).expect("validated non-empty");
            b.add_fact(r.name.clone(), vec![subject, Term::sym(value.clone())]);
        }
    }

    fn build(&self, b: RecordBuilder) -> Result<AttributeRecord, HarnessError> {
        Ok(b.build(self.vocab)?)
    }
}

fn satisfied(rules: &CompiledRuleSet, record: &AttributeRecord) -> Vec<String> {
    rules
        .scores(record)
        .into_iter()
        .filter(|(_, s)| s.satisfied)
        .map(|(l, _)| l.to_string())
        .collect()
}

/// Samples a dataset whose records each satisfy exactly their label's gold
/// rule (before noise), with equal quotas per label.
pub fn generate_synthetic(spec: &GeneratorSpec) -> Result<Synthetic, HarnessError> {
    spec.validate()?;
    let vocab = spec.vocabulary()?;
    let rules: RuleSet = parse_ruleset(&spec.gold_rules, &vocab)?;
    let labels: Vec<String> = if spec.labels.is_empty() {
        rules.labels().map(str::to_string).collect()
    } else {
        spec.labels.clone()
    };
    for l in &labels {
        if rules.get(l).is_none() {
            return Err(HarnessError::Config(format!(
                "label {l:?} has no gold rule"
            )));
        }
    }
    if rules.len() != labels.len() {
        return Err(HarnessError::Config(
            "every gold rule needs a listed label".into(),
        ));
    }
    let compiled = CompiledRuleSet::new(&rules, &vocab);
    let scene = Scene {
        spec,
        vocab: &vocab,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut uncovered = 0;
    for i in 0..spec.audit_samples {
        let r = scene.build(scene.draw(&format!("audit{i}"), &mut rng))?;
        match satisfied(&compiled, &r).as_slice() {
            [] => uncovered += 1,
            [_] => {}
            [a, b, ..] => {
                return Err(HarnessError::OverlappingRules {
                    labels: (a.clone(), b.clone()),
                    example: records_to_jsonl(std::slice::from_ref(&r))
                        .trim_end()
                        .to_string(),
                })
            }
        }
    }

    let mut quota: BTreeMap<&str, usize> = labels
        .iter()
        .map(|l| (l.as_str(), spec.records / labels.len()))
        .collect();
    for l in labels.iter().take(spec.records % labels.len()) {
        *quota.get_mut(l.as_str()).expect("listed") += 1;
    }
    let width = spec.records.to_string().len().max(4);
    let max_attempts = spec.max_attempts_per_record.saturating_mul(spec.records);
    let mut records = Vec::with_capacity(spec.records);
    let mut attempts = 0;
    let mut violations = 0;
    while records.len() < spec.records {
        if attempts >= max_attempts {
            let short: Vec<String> = quota
                .iter()
                .filter(|(_, &q)| q > 0)
                .map(|(l, _)| l.to_string())
                .collect();
            return Err(HarnessError::Unsatisfiable {
                labels: short,
                attempts,
            });
        }
        attempts += 1;
        let id = format!("img{:0width$}", records.len() + 1);
        let mut b = scene.draw(&id, &mut rng);
        let r = scene.build(b.clone())?;
        let sat = satisfied(&compiled, &r);
        let [label] = sat.as_slice() else { continue };
        let Some(q) = quota.get_mut(label.as_str()) else {
            continue;
        };
        if *q == 0 {
            continue;
        }
        *q -= 1;
        if spec.noise > 0.0 && rng.gen_bool(spec.noise) {
            scene.perturb(&mut b, &mut rng);
        }
        b.set_label(Some(label.clone()));
        let record = scene.build(b)?;
        if satisfied(&compiled, &record) != [label.clone()] {
            violations += 1;
        }
        records.push(record);
    }
    let dataset = Dataset::with_labels(records, labels, vocab)?;
    let gold = GoldSpec::from_dataset(rules, &dataset);
    Ok(Synthetic {
        audit: Audit {
            sampled: spec.audit_samples,
            uncovered,
            attempts,
            violations,
            violation_fraction: violations as f64 / spec.records as f64,
        },
        dataset,
        gold,
    })
}

impl Synthetic {
    /// Writes `data.jsonl`, `vocab.json`, `gold.dsl` and `audit.json`.
    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("data.jsonl"), self.dataset.to_jsonl())?;
        fs::write(
            dir.join("vocab.json"),
            self.dataset.vocabulary().to_json() + "\n",
        )?;
        fs::write(dir.join("gold.dsl"), print_ruleset(&self.gold.rules))?;
        let audit = serde_json::to_string_pretty(&self.audit).expect("audit serializes");
        fs::write(dir.join("audit.json"), audit + "\n")?;
        Ok(())
    }
}
