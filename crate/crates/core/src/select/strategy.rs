use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kmeans::diversity_pick;
use super::{PoolEntry, SelectError, SelectionConfig};

/// Chooses `config.n_batch` distinct pool positions.
pub trait SelectionStrategy: Send + Sync {
    fn name(&self) -> &str;

    fn select(
        &self,
        pool: &[PoolEntry<'_>],
        config: &SelectionConfig,
    ) -> Result<Vec<usize>, SelectError>;
}

/// Pool positions by descending score, ties by record id.
pub fn ranked(pool: &[PoolEntry<'_>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        pool[b]
            .scored
            .score
            .total_cmp(&pool[a].scored.score)
            .then_with(|| pool[a].record.id().cmp(pool[b].record.id()))
    });
    order
}

fn pick_diverse(
    pool: &[PoolEntry<'_>],
    subset: &[usize],
    n: usize,
    seed: u64,
) -> Result<Vec<usize>, SelectError> {
    let vectors: Vec<_> = subset.iter().map(|&i| pool[i].features.clone()).collect();
    Ok(diversity_pick(&vectors, n, seed)?
        .into_iter()
        .map(|k| subset[k])
        .collect())
}

/// Top `M` by informativeness, then one medoid per k-means cluster.
#[derive(Debug, Default)]
pub struct MultiCriteria;

impl SelectionStrategy for MultiCriteria {
    fn name(&self) -> &str {
        "multi-criteria"
    }

    fn select(
        &self,
        pool: &[PoolEntry<'_>],
        config: &SelectionConfig,
    ) -> Result<Vec<usize>, SelectError> {
        let mut top = ranked(pool);
        top.truncate(config.m().max(config.n_batch));
        pick_diverse(pool, &top, config.n_batch, config.seed)
    }
}

#[derive(Debug, Default)]
pub struct InformativenessOnly;

impl SelectionStrategy for InformativenessOnly {
    fn name(&self) -> &str {
        "informativeness-only"
    }

    fn select(
        &self,
        pool: &[PoolEntry<'_>],
        config: &SelectionConfig,
    ) -> Result<Vec<usize>, SelectError> {
        let mut top = ranked(pool);
        top.truncate(config.n_batch);
        Ok(top)
    }
}

#[derive(Debug, Default)]
pub struct DiversityOnly;

impl SelectionStrategy for DiversityOnly {
    fn name(&self) -> &str {
        "diversity-only"
    }

    fn select(
        &self,
        pool: &[PoolEntry<'_>],
        config: &SelectionConfig,
    ) -> Result<Vec<usize>, SelectError> {
        let all: Vec<usize> = (0..pool.len()).collect();
        pick_diverse(pool, &all, config.n_batch, config.seed)
    }
}

#[derive(Debug, Default)]
pub struct Random;

impl SelectionStrategy for Random {
    fn name(&self) -> &str {
        "random"
    }

    fn select(
        &self,
        pool: &[PoolEntry<'_>],
        config: &SelectionConfig,
    ) -> Result<Vec<usize>, SelectError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(sample(&mut rng, pool.len(), config.n_batch).into_vec())
    }
}

/// Strategies by name.
#[derive(Clone)]
pub struct StrategyRegistry {
    strategies: BTreeMap<String, Arc<dyn SelectionStrategy>>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        StrategyRegistry {
            strategies: BTreeMap::new(),
        }
    }

    pub fn register(
        &mut self,
        strategy: Arc<dyn SelectionStrategy>,
    ) -> Option<Arc<dyn SelectionStrategy>> {
        self.strategies
            .insert(strategy.name().to_string(), strategy)
    }

    pub fn get(&self, name: &str) -> Result<&dyn SelectionStrategy, SelectError> {
        self.strategies
            .get(name)
            .map(|s| s.as_ref())
            .ok_or_else(|| SelectError::UnknownStrategy {
                name: name.to_string(),
                known: self.names().map(str::to_string).collect(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.strategies.keys().map(String::as_str)
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut r = StrategyRegistry::empty();
        r.register(Arc::new(MultiCriteria));
        r.register(Arc::new(InformativenessOnly));
        r.register(Arc::new(DiversityOnly));
        r.register(Arc::new(Random));
        r
    }
}

impl std::fmt::Debug for StrategyRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}
