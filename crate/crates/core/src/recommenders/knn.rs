use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{msd_similarity, rank_and_filter, validate_ratings, Rating, RatingMatrix, Recommendation, Recommender, RepeatFilter, Strategy};
use crate::kb::{Catalog, ConfigKey};
use crate::{Result, Rng};

/// Similarity-weighted mean over the `k` best `(similarity, score)`
/// neighbors; `None` when no neighbor has positive similarity.
fn weighted_top_k<T: Ord>(mut neighbors: Vec<(f64, T, f64)>, k: usize) -> Option<f64> {
    neighbors.retain(|n| n.0 > 0.0);
    if neighbors.is_empty() {
        return None;
    }
    neighbors.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    neighbors.truncate(k);
    let (mut num, mut den) = (0.0, 0.0);
    for (sim, _, r) in &neighbors {
        num += sim * r;
        den += sim;
    }
    Some(num / den)
}

/// Item-based neighborhood: a config's score on a dataset is the
/// similarity-weighted mean of the scores of its `k` most similar configs
/// already run on that dataset.
#[derive(Debug, Clone)]
pub struct KnnMl {
    catalog: Arc<Catalog>,
    ratings: RatingMatrix,
    k: usize,
}

impl KnnMl {
    pub fn new(catalog: Arc<Catalog>, k: usize) -> Self {
        let ratings = RatingMatrix::new(catalog.len());
        KnnMl { catalog, ratings, k }
    }

    pub fn ratings(&self) -> &RatingMatrix {
        &self.ratings
    }

    /// Config-config similarity over the datasets both were run on.
    pub fn similarity(&self, a: ConfigKey, b: ConfigKey) -> f64 {
        msd_similarity(self.ratings.col(a), self.ratings.col(b))
    }

    /// Predicted score, `None` if the dataset has no ratings (cold start).
    /// Falls back to the dataset mean when no neighbor is similar.
    pub fn predict(&self, a: ConfigKey, dataset: &str) -> Option<f64> {
        let d = self.ratings.dataset_index(dataset)?;
        let row = self.ratings.row(d);
        if row.is_empty() {
            return None;
        }
        let neighbors = row
            .iter()
            .filter(|(b, _)| **b != a)
            .map(|(b, r)| (self.similarity(a, *b), self.catalog.id_rank(*b), *r))
            .collect();
        weighted_top_k(neighbors, self.k).or_else(|| self.ratings.dataset_mean(d))
    }

    fn estimate(&self, a: ConfigKey, dataset: &str) -> f64 {
        self.predict(a, dataset).unwrap_or_else(|| self.ratings.config_fallback(a))
    }
}

impl Recommender for KnnMl {
    fn strategy(&self) -> Strategy {
        Strategy::KnnMl
    }

    fn update(&mut self, ratings: &[Rating], _rng: &mut Rng) -> Result<()> {
        validate_ratings(ratings, self.catalog.len())?;
        self.ratings.insert_batch(ratings.iter().map(|r| (r.dataset.as_str(), r.config, r.score)));
        Ok(())
    }

    fn recommend(&mut self, dataset: &str, n: usize, filter: &mut RepeatFilter, _rng: &mut Rng) -> Result<Vec<Recommendation>> {
        let catalog = self.catalog.clone();
        rank_and_filter(&catalog, dataset, n, filter, |a| self.estimate(a, dataset))
    }
}

/// Dataset-based neighborhood: a config's score on a dataset is the
/// similarity-weighted mean of its scores on the `k` most similar datasets
/// it was run on.
#[derive(Debug, Clone)]
pub struct KnnData {
    catalog: Arc<Catalog>,
    ratings: RatingMatrix,
    k: usize,
}

impl KnnData {
    pub fn new(catalog: Arc<Catalog>, k: usize) -> Self {
        let ratings = RatingMatrix::new(catalog.len());
        KnnData { catalog, ratings, k }
    }

    pub fn ratings(&self) -> &RatingMatrix {
        &self.ratings
    }

    /// Dataset-dataset similarity over the configs both were scored with.
    pub fn similarity(&self, d: &str, e: &str) -> f64 {
        match (self.ratings.dataset_index(d), self.ratings.dataset_index(e)) {
            (Some(d), Some(e)) => msd_similarity(self.ratings.row(d), self.ratings.row(e)),
            _ => 0.0,
        }
    }

    fn similarities(&self, d: u32) -> Vec<f64> {
        let row = self.ratings.row(d);
        (0..self.ratings.n_datasets() as u32)
            .map(|e| if e == d { 0.0 } else { msd_similarity(row, self.ratings.row(e)) })
            .collect()
    }

    fn predict_with(&self, a: ConfigKey, d: u32, sims: &[f64]) -> f64 {
        let neighbors = self
            .ratings
            .col(a)
            .iter()
            .filter(|(e, _)| **e != d)
            .map(|(e, r)| (sims[*e as usize], self.ratings.dataset_name(*e), *r))
            .collect();
        weighted_top_k(neighbors, self.k).unwrap_or_else(|| self.ratings.config_fallback(a))
    }

    /// Predicted score, `None` if the dataset has no ratings (cold start).
    /// Falls back to the config mean when no neighbor is similar.
    pub fn predict(&self, a: ConfigKey, dataset: &str) -> Option<f64> {
        let d = self.ratings.dataset_index(dataset)?;
        if self.ratings.row(d).is_empty() {
            return None;
        }
        Some(self.predict_with(a, d, &self.similarities(d)))
    }
}

impl Recommender for KnnData {
    fn strategy(&self) -> Strategy {
        Strategy::KnnData
    }

    fn update(&mut self, ratings: &[Rating], _rng: &mut Rng) -> Result<()> {
        validate_ratings(ratings, self.catalog.len())?;
        self.ratings.insert_batch(ratings.iter().map(|r| (r.dataset.as_str(), r.config, r.score)));
        Ok(())
    }

    fn recommend(&mut self, dataset: &str, n: usize, filter: &mut RepeatFilter, _rng: &mut Rng) -> Result<Vec<Recommendation>> {
        let catalog = self.catalog.clone();
        let warm = self.ratings.dataset_index(dataset).filter(|d| !self.ratings.row(*d).is_empty());
        match warm {
            Some(d) => {
                let sims = self.similarities(d);
                rank_and_filter(&catalog, dataset, n, filter, |a| self.predict_with(a, d, &sims))
            }
            None => rank_and_filter(&catalog, dataset, n, filter, |a| self.ratings.config_fallback(a)),
        }
    }
}
