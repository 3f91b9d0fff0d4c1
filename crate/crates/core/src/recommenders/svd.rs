use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{rank_and_filter, validate_ratings, Rating, Recommendation, Recommender, RepeatFilter, Strategy, EMPTY_KB_SCORE};
use crate::kb::{Catalog, ConfigKey};
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct SvdParams {
    pub n_factors: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub init_sd: f64,
    /// Epochs run per new result in an update call, clamped to
    /// `[min_epochs, max_epochs]`.
    pub epochs_per_result: usize,
    pub min_epochs: usize,
    pub max_epochs: usize,
}

impl Default for SvdParams {
    fn default() -> Self {
        SvdParams {
            n_factors: 20,
            learning_rate: 0.005,
            regularization: 0.02,
            init_sd: 0.1,
            epochs_per_result: 1,
            min_epochs: 10,
            max_epochs: 1000,
        }
    }
}

impl SvdParams {
    pub fn epochs_for(&self, new_results: usize) -> usize {
        if new_results == 0 {
            return 0;
        }
        self.epochs_per_result.saturating_mul(new_results).clamp(self.min_epochs, self.max_epochs)
    }
}

/// Biased matrix factorization trained online by SGD:
/// `r = mu + b_d + b_a + q_a . p_d`.
///
/// Parameters persist across updates; each update runs a number of epochs
/// over every rating seen so far, proportional to the size of the batch.
#[derive(Debug, Clone)]
pub struct Svd {
    catalog: Arc<Catalog>,
    params: SvdParams,
    mu: f64,
    datasets: BTreeMap<alloc::string::String, u32>,
    dataset_bias: Vec<f64>,
    dataset_factors: Vec<f64>,
    config_bias: Vec<f64>,
    config_factors: Vec<f64>,
    config_seen: Vec<bool>,
    ratings: Vec<(u32, ConfigKey, f64)>,
    rating_index: BTreeMap<(u32, ConfigKey), usize>,
}

impl Svd {
    pub fn new(catalog: Arc<Catalog>, params: SvdParams) -> Self {
        let n = catalog.len();
        let k = params.n_factors;
        Svd {
            catalog,
            params,
            mu: EMPTY_KB_SCORE,
            datasets: BTreeMap::new(),
            dataset_bias: Vec::new(),
            dataset_factors: Vec::new(),
            config_bias: alloc::vec![0.0; n],
            config_factors: alloc::vec![0.0; n * k],
            config_seen: alloc::vec![false; n],
            ratings: Vec::new(),
            rating_index: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &SvdParams {
        &self.params
    }

    pub fn global_mean(&self) -> f64 {
        self.mu
    }

    pub fn n_ratings(&self) -> usize {
        self.ratings.len()
    }

    fn dataset_slot(&self, dataset: &str) -> Option<usize> {
        self.datasets.get(dataset).map(|d| *d as usize)
    }

    /// Registers a dataset; new factors are drawn from `N(0, init_sd^2)`.
    fn intern(&mut self, dataset: &str, rng: &mut Rng) -> u32 {
        if let Some(&d) = self.datasets.get(dataset) {
            return d;
        }
        let d = self.dataset_bias.len() as u32;
        self.datasets.insert(dataset.into(), d);
        self.dataset_bias.push(0.0);
        for _ in 0..self.params.n_factors {
            let z: f64 = rng.sample(StandardNormal);
            self.dataset_factors.push(self.params.init_sd * z);
        }
        d
    }

    fn touch_config(&mut self, a: ConfigKey, rng: &mut Rng) {
        if !self.config_seen[a.index()] {
            self.config_seen[a.index()] = true;
            let k = self.params.n_factors;
            for f in &mut self.config_factors[a.index() * k..(a.index() + 1) * k] {
                let z: f64 = rng.sample(StandardNormal);
                *f = self.params.init_sd * z;
            }
        }
    }

    fn raw(&self, d: Option<usize>, a: ConfigKey) -> f64 {
        let k = self.params.n_factors;
        let qa = &self.config_factors[a.index() * k..(a.index() + 1) * k];
        let mut r = self.mu + self.config_bias[a.index()];
        if let Some(d) = d {
            let pd = &self.dataset_factors[d * k..(d + 1) * k];
            r += self.dataset_bias[d] + qa.iter().zip(pd).map(|(x, y)| x * y).sum::<f64>();
        }
        r
    }

    /// Unclipped prediction; unseen datasets and configs contribute zero
    /// bias and zero factors.
    pub fn predict(&self, a: ConfigKey, dataset: &str) -> f64 {
        self.raw(self.dataset_slot(dataset), a)
    }

    /// One SGD step on a single rating, all four updates computed from the
    /// pre-step parameters.
    pub fn sgd_step(&mut self, d: u32, a: ConfigKey, r: f64) {
        let k = self.params.n_factors;
        let (lr, reg) = (self.params.learning_rate, self.params.regularization);
        let d = d as usize;
        let err = r - self.raw(Some(d), a);
        self.dataset_bias[d] += lr * (err - reg * self.dataset_bias[d]);
        self.config_bias[a.index()] += lr * (err - reg * self.config_bias[a.index()]);
        let pd = &mut self.dataset_factors[d * k..(d + 1) * k];
        let qa = &mut self.config_factors[a.index() * k..(a.index() + 1) * k];
        for (p, q) in pd.iter_mut().zip(qa.iter_mut()) {
            let (p0, q0) = (*p, *q);
            *p += lr * (err * q0 - reg * p0);
            *q += lr * (err * p0 - reg * q0);
        }
    }

    /// One pass over every stored rating in shuffled order.
    pub fn sgd_epoch(&mut self, rng: &mut Rng) -> Result<()> {
        let mut order: Vec<usize> = (0..self.ratings.len()).collect();
        order.shuffle(rng);
        for i in order {
            let (d, a, r) = self.ratings[i];
            self.sgd_step(d, a, r);
        }
        let finite = self.dataset_bias.iter().chain(&self.dataset_factors).all(|x| x.is_finite())
            && self.config_bias.iter().chain(&self.config_factors).all(|x| x.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::Divergence { learning_rate: self.params.learning_rate })
        }
    }

    /// Regularized squared loss summed over all stored ratings.
    pub fn loss(&self) -> f64 {
        let k = self.params.n_factors;
        let reg = self.params.regularization;
        self.ratings
            .iter()
            .map(|&(d, a, r)| {
                let d = d as usize;
                let e = r - self.raw(Some(d), a);
                let pd = &self.dataset_factors[d * k..(d + 1) * k];
                let qa = &self.config_factors[a.index() * k..(a.index() + 1) * k];
                let norms: f64 = pd.iter().chain(qa).map(|x| x * x).sum();
                e * e + reg * (self.dataset_bias[d].powi(2) + self.config_bias[a.index()].powi(2) + norms)
            })
            .sum()
    }

    /// Adds ratings (replacing repeats) and refreshes the global mean
    /// without training. Returns the number of ratings in the batch.
    pub fn ingest(&mut self, ratings: &[Rating], rng: &mut Rng) -> Result<usize> {
        validate_ratings(ratings, self.catalog.len())?;
        for r in ratings {
            let d = self.intern(&r.dataset, rng);
            self.touch_config(r.config, rng);
            match self.rating_index.get(&(d, r.config)) {
                Some(&i) => self.ratings[i].2 = r.score,
                None => {
                    self.rating_index.insert((d, r.config), self.ratings.len());
                    self.ratings.push((d, r.config, r.score));
                }
            }
        }
        if !self.ratings.is_empty() {
            self.mu = self.ratings.iter().map(|x| x.2).sum::<f64>() / self.ratings.len() as f64;
        }
        Ok(ratings.len())
    }

    /// Exposes the parameters touched by one rating, for gradient checks:
    /// `(b_d, b_a, p_d, q_a)`.
    pub fn parameters(&self, dataset: &str, a: ConfigKey) -> Option<(f64, f64, Vec<f64>, Vec<f64>)> {
        let d = self.dataset_slot(dataset)?;
        let k = self.params.n_factors;
        Some((
            self.dataset_bias[d],
            self.config_bias[a.index()],
            self.dataset_factors[d * k..(d + 1) * k].to_vec(),
            self.config_factors[a.index() * k..(a.index() + 1) * k].to_vec(),
        ))
    }

    /// Overwrites the parameters touched by one rating.
    pub fn set_parameters(&mut self, dataset: &str, a: ConfigKey, b_d: f64, b_a: f64, p_d: &[f64], q_a: &[f64]) -> Result<()> {
        let d = self
            .dataset_slot(dataset)
            .ok_or_else(|| Error::NotFound(alloc::format!("dataset `{dataset}`")))?;
        let k = self.params.n_factors;
        if p_d.len() != k || q_a.len() != k {
            return Err(Error::Validation(alloc::format!("factor vectors must have length {k}")));
        }
        self.dataset_bias[d] = b_d;
        self.config_bias[a.index()] = b_a;
        self.dataset_factors[d * k..(d + 1) * k].copy_from_slice(p_d);
        self.config_factors[a.index() * k..(a.index() + 1) * k].copy_from_slice(q_a);
        Ok(())
    }

    pub fn dataset_key(&self, dataset: &str) -> Option<u32> {
        self.datasets.get(dataset).copied()
    }

    pub fn set_global_mean(&mut self, mu: f64) {
        self.mu = mu;
    }
}

impl Recommender for Svd {
    fn strategy(&self) -> Strategy {
        Strategy::Svd
    }

    fn update(&mut self, ratings: &[Rating], rng: &mut Rng) -> Result<()> {
        let n = self.ingest(ratings, rng)?;
        for _ in 0..self.params.epochs_for(n) {
            self.sgd_epoch(rng)?;
        }
        Ok(())
    }

    fn recommend(&mut self, dataset: &str, n: usize, filter: &mut RepeatFilter, _rng: &mut Rng) -> Result<Vec<Recommendation>> {
        let d = self.dataset_slot(dataset);
        let catalog = self.catalog.clone();
        rank_and_filter(&catalog, dataset, n, filter, |a| self.raw(d, a))
    }
}
