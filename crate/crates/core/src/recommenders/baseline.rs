use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{check_n, validate_ratings, Rating, RatingMatrix, Recommendation, Recommender, RepeatFilter, Strategy, EMPTY_KB_SCORE};
use crate::kb::{Catalog, ConfigKey};
use crate::{Error, Result, Rng};

/// Uniform over algorithms, then uniform over the chosen algorithm's
/// remaining configs. Algorithms with nothing left are skipped, which is
/// the same distribution as rejecting and redrawing.
#[derive(Debug, Clone)]
pub struct RandomRecommender {
    catalog: Arc<Catalog>,
    sum: f64,
    count: usize,
}

impl RandomRecommender {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        RandomRecommender { catalog, sum: 0.0, count: 0 }
    }
}

/// Two-stage uniform draw of up to `n` distinct unfiltered configs.
pub(crate) fn draw_two_stage(
    catalog: &Catalog,
    dataset: &str,
    n: usize,
    filter: &mut RepeatFilter,
    rng: &mut Rng,
) -> Vec<ConfigKey> {
    let mut available: Vec<Vec<ConfigKey>> = (0..catalog.algorithms().len())
        .map(|i| catalog.members(i).iter().copied().filter(|k| !filter.contains(dataset, *k)).collect())
        .collect();
    let mut live: Vec<usize> = (0..available.len()).filter(|i| !available[*i].is_empty()).collect();
    let mut out = Vec::with_capacity(n);
    while out.len() < n && !live.is_empty() {
        let slot = rng.random_range(0..live.len());
        let pool = &mut available[live[slot]];
        let pick = pool.swap_remove(rng.random_range(0..pool.len()));
        // keep the pool in key order so draws do not depend on history
        pool.sort_unstable();
        if pool.is_empty() {
            live.remove(slot);
        }
        filter.insert(dataset, pick);
        out.push(pick);
    }
    out
}

impl Recommender for RandomRecommender {
    fn strategy(&self) -> Strategy {
        Strategy::Random
    }

    fn update(&mut self, ratings: &[Rating], _rng: &mut Rng) -> Result<()> {
        validate_ratings(ratings, self.catalog.len())?;
        for r in ratings {
            self.sum += r.score;
            self.count += 1;
        }
        Ok(())
    }

    fn recommend(&mut self, dataset: &str, n: usize, filter: &mut RepeatFilter, rng: &mut Rng) -> Result<Vec<Recommendation>> {
        check_n(n)?;
        let picks = draw_two_stage(&self.catalog, dataset, n, filter, rng);
        if picks.is_empty() {
            return Err(Error::Exhausted { dataset: dataset.to_string() });
        }
        let predicted = if self.count > 0 { self.sum / self.count as f64 } else { EMPTY_KB_SCORE };
        Ok(picks.into_iter().map(|config| Recommendation { config, predicted }).collect())
    }
}

/// Ranks configs by their running mean training score across all datasets.
/// Configs never scored rank after every scored one, in id order.
#[derive(Debug, Clone)]
pub struct AverageRecommender {
    catalog: Arc<Catalog>,
    ratings: RatingMatrix,
}

impl AverageRecommender {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        let ratings = RatingMatrix::new(catalog.len());
        AverageRecommender { catalog, ratings }
    }

    pub fn running_mean(&self, config: ConfigKey) -> Option<f64> {
        self.ratings.config_mean(config)
    }
}

impl Recommender for AverageRecommender {
    fn strategy(&self) -> Strategy {
        Strategy::Average
    }

    fn update(&mut self, ratings: &[Rating], _rng: &mut Rng) -> Result<()> {
        validate_ratings(ratings, self.catalog.len())?;
        self.ratings.insert_batch(ratings.iter().map(|r| (r.dataset.as_str(), r.config, r.score)));
        Ok(())
    }

    fn recommend(&mut self, dataset: &str, n: usize, filter: &mut RepeatFilter, _rng: &mut Rng) -> Result<Vec<Recommendation>> {
        check_n(n)?;
        let fallback = self.ratings.global_mean().unwrap_or(EMPTY_KB_SCORE);
        // (tier, mean, id rank): scored configs are tier 0
        let mut ranked: Vec<(u8, f64, u32, ConfigKey)> = self
            .catalog
            .keys()
            .filter(|k| !filter.contains(dataset, *k))
            .map(|k| match self.ratings.config_mean(k) {
                Some(m) => (0, m, self.catalog.id_rank(k), k),
                None => (1, fallback, self.catalog.id_rank(k), k),
            })
            .collect();
        if ranked.is_empty() {
            return Err(Error::Exhausted { dataset: dataset.to_string() });
        }
        ranked.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
        ranked.truncate(n);
        Ok(ranked
            .into_iter()
            .map(|(_, predicted, _, config)| {
                filter.insert(dataset, config);
                Recommendation { config, predicted: predicted.clamp(0.0, 1.0) }
            })
            .collect())
    }
}
