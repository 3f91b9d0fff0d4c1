use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{rank_and_filter, validate_ratings, Rating, RatingMatrix, Recommendation, Recommender, RepeatFilter, Strategy};
use crate::kb::{Catalog, ConfigKey};
use crate::{Result, Rng};

/// Slope One: the dataset mean shifted by the average deviation of the
/// target config from the configs already run on the dataset.
#[derive(Debug, Clone)]
pub struct SlopeOne {
    catalog: Arc<Catalog>,
    ratings: RatingMatrix,
}

impl SlopeOne {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        let ratings = RatingMatrix::new(catalog.len());
        SlopeOne { catalog, ratings }
    }

    pub fn ratings(&self) -> &RatingMatrix {
        &self.ratings
    }

    /// Mean of `r_a - r_b` over datasets where both were run; `None` if
    /// they share no dataset.
    pub fn deviation(&self, a: ConfigKey, b: ConfigKey) -> Option<f64> {
        let (ca, cb) = (self.ratings.col(a), self.ratings.col(b));
        let (mut sum, mut n) = (0.0, 0usize);
        let (small, large, sign) = if ca.len() <= cb.len() { (ca, cb, 1.0) } else { (cb, ca, -1.0) };
        for (d, x) in small {
            if let Some(y) = large.get(d) {
                sum += sign * (x - y);
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Predicted score, `None` if the dataset has no ratings (cold start).
    /// With no config sharing a dataset with `a`, returns the dataset mean.
    pub fn predict(&self, a: ConfigKey, dataset: &str) -> Option<f64> {
        let d = self.ratings.dataset_index(dataset)?;
        let mu_d = self.ratings.dataset_mean(d)?;
        let (mut sum, mut n) = (0.0, 0usize);
        for b in self.ratings.row(d).keys() {
            if let Some(dev) = self.deviation(a, *b) {
                sum += dev;
                n += 1;
            }
        }
        Some(if n == 0 { mu_d } else { mu_d + sum / n as f64 })
    }
}

impl Recommender for SlopeOne {
    fn strategy(&self) -> Strategy {
        Strategy::SlopeOne
    }

    fn update(&mut self, ratings: &[Rating], _rng: &mut Rng) -> Result<()> {
        validate_ratings(ratings, self.catalog.len())?;
        self.ratings.insert_batch(ratings.iter().map(|r| (r.dataset.as_str(), r.config, r.score)));
        Ok(())
    }

    fn recommend(&mut self, dataset: &str, n: usize, filter: &mut RepeatFilter, _rng: &mut Rng) -> Result<Vec<Recommendation>> {
        let catalog = self.catalog.clone();
        rank_and_filter(&catalog, dataset, n, filter, |a| {
            self.predict(a, dataset).unwrap_or_else(|| self.ratings.config_fallback(a))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::ConfigSpace;
    use rand::SeedableRng;

    fn model(xs: &[(&str, u32, f64)]) -> SlopeOne {
        let mut m = SlopeOne::new(Arc::new(Catalog::new(ConfigSpace::synthetic(1, 4)).unwrap()));
        let ratings: Vec<Rating> = xs.iter().map(|(d, a, s)| Rating::new(*d, ConfigKey(*a), *s)).collect();
        m.update(&ratings, &mut Rng::seed_from_u64(0)).unwrap();
        m
    }

    const A: ConfigKey = ConfigKey(0);
    const B: ConfigKey = ConfigKey(1);

    #[test]
    fn worked_example() {
        let m = model(&[("D1", 0, 0.6), ("D1", 1, 0.8), ("D2", 0, 0.7)]);
        assert!((m.deviation(B, A).unwrap() - 0.2).abs() < 1e-12);
        assert!((m.deviation(A, B).unwrap() + 0.2).abs() < 1e-12);
        assert!((m.predict(B, "D2").unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn no_shared_dataset_gives_dataset_mean() {
        let m = model(&[("D1", 0, 0.6), ("D2", 1, 0.8), ("D2", 2, 0.4)]);
        assert!((m.predict(A, "D2").unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(m.predict(A, "D9"), None);
    }

    #[test]
    fn zero_deviations_give_dataset_mean() {
        let m = model(&[("D1", 0, 0.5), ("D1", 1, 0.5), ("D2", 0, 0.7), ("D2", 1, 0.7), ("D3", 0, 0.9)]);
        assert!((m.predict(B, "D3").unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn empty_update_is_noop() {
        let mut m = model(&[("D1", 0, 0.6)]);
        let before = m.predict(B, "D1");
        m.update(&[], &mut Rng::seed_from_u64(1)).unwrap();
        assert_eq!(m.predict(B, "D1"), before);
    }
}
