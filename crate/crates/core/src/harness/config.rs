use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use super::presets::preset;
use super::synth::{generate_synthetic, GeneratorSpec};
use super::HarnessError;
use crate::attr::{parse_dataset, Dataset, Vocabulary};
use crate::dsl::parse_ruleset;
use crate::labeling::{FeedbackMode, LoopConfig};
use crate::learn::LearnConfig;
use crate::oracle::GoldSpec;
use crate::select::SelectionConfig;

/// Where a run's records and gold rules come from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DataSource {
    /// A dataset file whose labels are the gold labels, plus gold rules.
    Files {
        dataset: PathBuf,
        gold: PathBuf,
        vocabulary: Option<PathBuf>,
    },
    /// A built-in generator. Without `seed` each run seed draws its own data.
    Preset {
        preset: String,
        records: Option<usize>,
        noise: Option<f64>,
        seed: Option<u64>,
    },
    /// A generator spec file.
    Spec { spec: PathBuf, seed: Option<u64> },
}

impl DataSource {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DataSource::Files {
                dataset,
                gold,
                vocabulary,
            } => {
                fix(dataset);
                fix(gold);
                if let Some(v) = vocabulary {
                    fix(v);
                }
            }
            DataSource::Spec { spec, .. } => fix(spec),
            DataSource::Preset { .. } => {}
        }
    }

    /// The generator spec behind a synthetic source.
    pub fn generator(&self, run_seed: Option<u64>) -> Result<Option<GeneratorSpec>, HarnessError> {
        Ok(match self {
            DataSource::Files { .. } => None,
            DataSource::Preset {
                preset: name,
                records,
                noise,
                seed,
            } => {
                let mut spec = preset(name)?;
                if let Some(r) = records {
                    spec.records = *r;
                }
                if let Some(n) = noise {
                    spec.noise = *n;
                }
                if let Some(s) = seed.or(run_seed) {
                    spec.seed = s;
                }
                Some(spec)
            }
            DataSource::Spec { spec, seed } => {
                let mut g = GeneratorSpec::from_toml(&fs::read_to_string(spec)?)?;
                if let Some(s) = seed {
                    g.seed = *s;
                }
                Some(g)
            }
        })
    }

    pub fn load(&self, run_seed: Option<u64>) -> Result<(Arc<Dataset>, GoldSpec), HarnessError> {
        if let Some(spec) = self.generator(run_seed)? {
            let s = generate_synthetic(&spec)?;
            return Ok((Arc::new(s.dataset), s.gold));
        }
        let DataSource::Files {
            dataset,
            gold,
            vocabulary,
        } = self
        else {
            unreachable!("synthetic sources return above")
        };
        let vocab = match vocabulary {
            Some(p) => Vocabulary::from_json(&fs::read_to_string(p)?)?,
            None => Vocabulary::standard(),
        };
        let data = parse_dataset(&fs::read_to_string(dataset)?, &vocab)?;
        let rules = parse_ruleset(&fs::read_to_string(gold)?, data.vocabulary())?;
        let gold = GoldSpec::from_dataset(rules, &data);
        Ok((Arc::new(data), gold))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    data: DataSource,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
    bootstrap_size: Option<usize>,
    batch_size: Option<usize>,
    max_iterations: Option<usize>,
    mode: Option<FeedbackMode>,
    test_fraction: Option<f64>,
    #[serde(default)]
    learn: LearnConfig,
    selection: Option<SelectionConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub seeds: Vec<u64>,
    /// Everything but the seed, which each run sets.
    pub loop_config: LoopConfig,
}

impl ExperimentConfig {
    /// Parses a TOML config; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, HarnessError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut data = raw.data;
        data.resolve(base);
        let mut lc = LoopConfig::default();
        let table: toml::Table =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let selection_has = |key: &str| {
            table
                .get("selection")
                .and_then(|s| s.as_table())
                .is_some_and(|s| s.contains_key(key))
        };
        if let Some(s) = raw.selection {
            lc.selection = s;
        }
        if let Some(b) = raw.batch_size {
            if selection_has("n_batch") && lc.selection.n_batch != b {
                return Err(HarnessError::Config(
                    "batch_size and selection.n_batch disagree".into(),
                ));
            }
            lc.selection.n_batch = b;
        }
        if let Some(b) = raw.bootstrap_size {
            lc.bootstrap_size = b;
        }
        if let Some(m) = raw.max_iterations {
            lc.max_iterations = m;
        }
        if let Some(m) = raw.mode {
            lc.mode = m;
        }
        if let Some(f) = raw.test_fraction {
            lc.test_fraction = f;
        }
        lc.learn = raw.learn;
        if selection_has("strategy") && !lc.mode.selects() {
            return Err(HarnessError::Config(format!(
                "mode {} does not select batches, so a selection strategy cannot apply",
                super::mode_name(lc.mode)
            )));
        }
        let config = ExperimentConfig {
            data,
            seeds: raw.seeds.unwrap_or_else(|| vec![0]),
            loop_config: lc,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must not be empty".into()));
        }
        self.loop_config.validate()?;
        Ok(())
    }
}
