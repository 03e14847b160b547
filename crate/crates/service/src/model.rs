use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use rapid_core::attr::{
    parse_dataset, parse_records, records_to_jsonl, AttributeRecord, Dataset, Vocabulary,
};
use rapid_core::dsl::RuleSet;
use rapid_core::eval::LabelDecision;
use rapid_core::harness::DataSource;
use rapid_core::labeling::{IterationMetrics, LabelingLoop, LoopConfig, Resolved};
use rapid_core::learn::FeedbackConstraints;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;

/// Where a session's records come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DatasetRef {
    /// A built-in synthetic generator. Without `seed` the session seed is used.
    Preset {
        preset: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        records: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// A generator spec file on the server.
    Spec {
        spec: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// A JSONL record file on the server.
    File {
        dataset: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vocabulary: Option<PathBuf>,
    },
    /// JSONL records in the request itself.
    Inline {
        records: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vocabulary: Option<Value>,
        /// Every label the session may use; those on the records when unset.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
}

impl DatasetRef {
    pub fn load(&self, session_seed: u64) -> Result<Arc<Dataset>, ApiError> {
        let invalid =
            |e: &dyn std::fmt::Display| ApiError::bad_request("invalid_dataset", e.to_string());
        let unreadable = |p: &PathBuf, e: std::io::Error| {
            ApiError::bad_request("unreadable_file", format!("{}: {e}", p.display()))
                .with_detail(json!({ "path": p.display().to_string() }))
        };
        match self {
            DatasetRef::Preset {
                preset,
                records,
                noise,
                seed,
            } => {
                let source = DataSource::Preset {
                    preset: preset.clone(),
                    records: *records,
                    noise: *noise,
                    seed: *seed,
                };
                source
                    .load(Some(session_seed))
                    .map(|(d, _)| d)
                    .map_err(|e| invalid(&e))
            }
            DatasetRef::Spec { spec, seed } => {
                let source = DataSource::Spec {
                    spec: spec.clone(),
                    seed: *seed,
                };
                source
                    .load(Some(session_seed))
                    .map(|(d, _)| d)
                    .map_err(|e| invalid(&e))
            }
            DatasetRef::File {
                dataset,
                vocabulary,
            } => {
                let vocab = match vocabulary {
                    Some(p) => {
                        let text = fs::read_to_string(p).map_err(|e| unreadable(p, e))?;
                        Vocabulary::from_json(&text).map_err(|e| invalid(&e))?
                    }
                    None => Vocabulary::standard(),
                };
                let text = fs::read_to_string(dataset).map_err(|e| unreadable(dataset, e))?;
                Ok(Arc::new(
                    parse_dataset(&text, &vocab).map_err(|e| invalid(&e))?,
                ))
            }
            DatasetRef::Inline {
                records,
                vocabulary,
                labels,
            } => {
                let vocab = match vocabulary {
                    Some(v) => Vocabulary::from_json(&v.to_string()).map_err(|e| invalid(&e))?,
                    None => Vocabulary::standard(),
                };
                let data = match labels {
                    Some(labels) => {
                        let recs = parse_records(records, &vocab).map_err(|e| invalid(&e))?;
                        Dataset::with_labels(recs, labels.clone(), vocab)
                    }
                    None => parse_dataset(records, &vocab),
                };
                Ok(Arc::new(data.map_err(|e| invalid(&e))?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub data: DatasetRef,
    #[serde(default)]
    pub config: LoopConfig,
    /// Labeled records to learn the first rules from, instead of a seeded sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corrections {
    #[serde(default)]
    pub corrections: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleEditRequest {
    pub label: String,
    /// A complete rule, e.g. `glaucoma(X) :- acdr(X,A), area(A,N), greater(N,0.31).`
    pub dsl: String,
}

/// One entry of a session's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created {
        id: String,
        request: CreateSession,
    },
    Corrections {
        corrections: BTreeMap<String, String>,
    },
    Rule {
        label: String,
        dsl: String,
    },
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleView {
    pub label: String,
    pub dsl: String,
    pub clauses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintView {
    pub include: Vec<String>,
    pub exclude: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledView {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionState {
    pub id: String,
    pub iteration: usize,
    pub finished: bool,
    /// Whether `step` would be accepted now.
    pub ready: bool,
    pub mode: String,
    pub labels: Vec<String>,
    /// The whole rule set as DSL text, one rule per line.
    pub dsl: String,
    pub rules: Vec<RuleView>,
    pub constraints: BTreeMap<String, ConstraintView>,
    pub labeled: Vec<LabeledView>,
    pub unlabeled: Vec<String>,
    pub pending_batch: Option<Vec<String>>,
    pub resolved: Option<Vec<Resolved>>,
    pub metrics: Vec<IterationMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub record_id: String,
    /// The record's facts in the dataset line format, label removed.
    pub record: Value,
    pub decision: LabelDecision,
    pub score: f64,
    pub n_labels: usize,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchView {
    pub iteration: usize,
    pub strategy: String,
    pub items: Vec<Candidate>,
    pub resolved: Option<Vec<Resolved>>,
}

fn rule_views(rules: &RuleSet) -> Vec<RuleView> {
    rules
        .rules()
        .map(|r| RuleView {
            label: r.label.clone(),
            dsl: r.to_string(),
            clauses: r.clauses.iter().map(ToString::to_string).collect(),
        })
        .collect()
}

fn constraint_views(
    c: &FeedbackConstraints,
    labels: &[String],
) -> BTreeMap<String, ConstraintView> {
    labels
        .iter()
        .filter(|l| !c.included(l).is_empty() || !c.excluded(l).is_empty())
        .map(|l| {
            let view = ConstraintView {
                include: c.included(l).iter().map(ToString::to_string).collect(),
                exclude: c.excluded(l).iter().map(ToString::to_string).collect(),
            };
            (l.clone(), view)
        })
        .collect()
}

fn record_json(record: &AttributeRecord) -> Value {
    let unlabeled = record.clone().with_label(None);
    let line = records_to_jsonl(std::slice::from_ref(&unlabeled));
    serde_json::from_str(line.trim_end()).expect("record lines are JSON")
}

pub fn session_state(id: &str, lp: &LabelingLoop) -> SessionState {
    let labels = lp.dataset().labels().to_vec();
    SessionState {
        id: id.to_string(),
        iteration: lp.iteration(),
        finished: lp.is_finished(),
        ready: lp.is_ready(),
        mode: rapid_core::harness::mode_name(lp.config().mode).to_string(),
        dsl: lp.rules().to_string(),
        rules: rule_views(lp.rules()),
        constraints: constraint_views(lp.constraints(), &labels),
        labels,
        labeled: lp
            .labeled_ids()
            .map(|(id, label)| LabeledView {
                id: id.to_string(),
                label: label.to_string(),
            })
            .collect(),
        unlabeled: lp.unlabeled_ids().map(str::to_string).collect(),
        pending_batch: lp
            .pending_batch()
            .map(|b| b.ids().map(str::to_string).collect()),
        resolved: lp.resolved().map(<[Resolved]>::to_vec),
        metrics: lp.metrics().to_vec(),
    }
}

pub fn batch_view(lp: &LabelingLoop) -> Option<BatchView> {
    let batch = lp.pending_batch()?;
    let data = lp.dataset();
    Some(BatchView {
        iteration: lp.iteration(),
        strategy: batch.strategy.clone(),
        items: batch
            .items
            .iter()
            .map(|item| Candidate {
                record_id: item.record_id.clone(),
                record: record_json(
                    data.get(&item.record_id)
                        .expect("batch ids come from the dataset"),
                ),
                decision: item.decision.clone(),
                score: item.scored.score,
                n_labels: item.scored.n_labels,
                u: item.scored.u,
            })
            .collect(),
        resolved: lp.resolved().map(<[Resolved]>::to_vec),
    })
}
