use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{check_n, validate_ratings, Rating, Recommendation, Recommender, RepeatFilter, Strategy, EMPTY_KB_SCORE};
use crate::kb::{Catalog, ConfigKey};
use crate::metafeatures::{metafeature_distance, MetafeatureVector, NormStats};
use crate::{Error, Result, Rng};

/// Per-dataset results sorted best first, plus the metafeatures of every
/// dataset seen so far.
#[derive(Debug, Clone, Default)]
pub struct MetaArchive {
    scores: BTreeMap<String, BTreeMap<ConfigKey, f64>>,
    ranked: BTreeMap<String, Vec<(ConfigKey, f64)>>,
    metafeatures: BTreeMap<String, MetafeatureVector>,
    sum: f64,
    count: usize,
}

impl MetaArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, catalog: &Catalog, ratings: &[Rating]) {
        let mut touched = Vec::new();
        for r in ratings {
            let row = self.scores.entry(r.dataset.clone()).or_default();
            match row.insert(r.config, r.score) {
                Some(old) => self.sum += r.score - old,
                None => {
                    self.sum += r.score;
                    self.count += 1;
                }
            }
            touched.push(r.dataset.clone());
        }
        touched.sort();
        touched.dedup();
        for d in touched {
            let mut list: Vec<(ConfigKey, f64)> = self.scores[&d].iter().map(|(k, v)| (*k, *v)).collect();
            list.sort_by(|a, b| b.1.total_cmp(&a.1).then(catalog.id_rank(a.0).cmp(&catalog.id_rank(b.0))));
            self.ranked.insert(d, list);
        }
    }

    /// Results for a dataset, best first.
    pub fn ranked(&self, dataset: &str) -> &[(ConfigKey, f64)] {
        self.ranked.get(dataset).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn set_metafeatures(&mut self, mf: MetafeatureVector) {
        self.metafeatures.insert(mf.dataset_id.clone(), mf);
    }

    pub fn metafeatures(&self, dataset: &str) -> Option<&MetafeatureVector> {
        self.metafeatures.get(dataset)
    }

    pub fn global_mean(&self) -> f64 {
        if self.count == 0 {
            EMPTY_KB_SCORE
        } else {
            self.sum / self.count as f64
        }
    }

    /// The `k` datasets closest to `dataset` in metafeature space, nearest
    /// first, ties by name. Only datasets with results are candidates.
    pub fn neighbors(&self, dataset: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let target = self
            .metafeatures
            .get(dataset)
            .ok_or_else(|| Error::MissingMetafeatures { dataset: dataset.to_string() })?;
        let norm = NormStats::from_vectors(self.metafeatures.values());
        let mut out: Vec<(String, f64)> = self
            .metafeatures
            .iter()
            .filter(|(name, _)| name.as_str() != dataset && self.ranked.get(name.as_str()).is_some_and(|l| !l.is_empty()))
            .map(|(name, mf)| (name.clone(), metafeature_distance(target, mf, &norm)))
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        out.truncate(k);
        Ok(out)
    }
}

/// Metalearning recommender: round-robins the best configs of the nearest
/// datasets by metafeatures, then falls back to uniform random draws.
#[derive(Debug, Clone)]
pub struct KnnMeta {
    catalog: Arc<Catalog>,
    k: usize,
    archive: MetaArchive,
}

impl KnnMeta {
    pub fn new(catalog: Arc<Catalog>, k: usize) -> Self {
        KnnMeta { catalog, k, archive: MetaArchive::new() }
    }

    pub fn archive(&self) -> &MetaArchive {
        &self.archive
    }
}

impl Recommender for KnnMeta {
    fn strategy(&self) -> Strategy {
        Strategy::KnnMeta
    }

    fn update(&mut self, ratings: &[Rating], _rng: &mut Rng) -> Result<()> {
        validate_ratings(ratings, self.catalog.len())?;
        self.archive.insert(&self.catalog, ratings);
        Ok(())
    }

    fn recommend(&mut self, dataset: &str, n: usize, filter: &mut RepeatFilter, rng: &mut Rng) -> Result<Vec<Recommendation>> {
        check_n(n)?;
        let neighbors = self.archive.neighbors(dataset, self.k)?;
        if filter.remaining(dataset) == 0 {
            return Err(Error::Exhausted { dataset: dataset.to_string() });
        }
        let mut out = Vec::with_capacity(n);
        let mut cursors = alloc::vec![0usize; neighbors.len()];
        let mut live = true;
        while out.len() < n && live {
            live = false;
            for (i, (name, _)) in neighbors.iter().enumerate() {
                if out.len() == n {
                    break;
                }
                let list = self.archive.ranked(name);
                while let Some((config, score)) = list.get(cursors[i]) {
                    cursors[i] += 1;
                    if filter.insert(dataset, *config) {
                        out.push(Recommendation { config: *config, predicted: *score });
                        live = true;
                        break;
                    }
                }
            }
        }
        if out.len() < n {
            let pool: Vec<ConfigKey> = self.catalog.keys().filter(|k| !filter.contains(dataset, *k)).collect();
            let m = (n - out.len()).min(pool.len());
            let predicted = self.archive.global_mean();
            for i in rand::seq::index::sample(rng, pool.len(), m) {
                filter.insert(dataset, pool[i]);
                out.push(Recommendation { config: pool[i], predicted });
            }
        }
        Ok(out)
    }

    fn register_metafeatures(&mut self, mf: MetafeatureVector) {
        self.archive.set_metafeatures(mf);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::ConfigSpace;
    use crate::metafeatures::N_METAFEATURES;
    use rand::SeedableRng;

    fn mf(name: &str, x: f64) -> MetafeatureVector {
        let mut v = alloc::vec![Some(0.0); N_METAFEATURES];
        v[0] = Some(x);
        v[1] = Some(x * x);
        MetafeatureVector::new(name, v).unwrap()
    }

    fn setup() -> KnnMeta {
        let cat = Arc::new(Catalog::new(ConfigSpace::synthetic(2, 5)).unwrap());
        let mut m = KnnMeta::new(cat, 1);
        for (name, x) in [("near", 1.0), ("far", 5.0), ("new", 1.0)] {
            m.register_metafeatures(mf(name, x));
        }
        let xs = [
            Rating::new("near", ConfigKey(7), 0.9),
            Rating::new("near", ConfigKey(2), 0.8),
            Rating::new("far", ConfigKey(3), 0.99),
        ];
        m.update(&xs, &mut Rng::seed_from_u64(0)).unwrap();
        m
    }

    #[test]
    fn twin_neighbor_best_first() {
        let mut m = setup();
        let mut f = RepeatFilter::new(10);
        let mut rng = Rng::seed_from_u64(1);
        let recs = m.recommend("new", 3, &mut f, &mut rng).unwrap();
        assert_eq!(recs[0].config, ConfigKey(7));
        assert_eq!(recs[1].config, ConfigKey(2));
        assert_eq!(recs.len(), 3);
        assert_eq!(m.archive().neighbors("new", 5).unwrap()[0], ("near".to_string(), 0.0));
    }

    #[test]
    fn round_robin_across_neighbors() {
        let mut m = setup();
        m.k = 2;
        let mut f = RepeatFilter::new(10);
        let recs = m.recommend("new", 3, &mut f, &mut Rng::seed_from_u64(1)).unwrap();
        let got: Vec<u32> = recs.iter().map(|r| r.config.0).collect();
        assert_eq!(got, [7, 3, 2]);
    }

    #[test]
    fn missing_metafeatures_and_exhaustion() {
        let mut m = setup();
        let mut f = RepeatFilter::new(10);
        let mut rng = Rng::seed_from_u64(1);
        assert!(matches!(m.recommend("ghost", 1, &mut f, &mut rng), Err(Error::MissingMetafeatures { .. })));
        let recs = m.recommend("new", 100, &mut f, &mut rng).unwrap();
        assert_eq!(recs.len(), 10);
        assert!(matches!(m.recommend("new", 1, &mut f, &mut rng), Err(Error::Exhausted { .. })));
    }

    #[test]
    fn fallback_skips_filtered() {
        let mut m = setup();
        let mut f = RepeatFilter::new(10);
        f.insert("new", ConfigKey(7));
        f.insert("new", ConfigKey(2));
        f.insert("new", ConfigKey(0));
        let recs = m.recommend("new", 7, &mut f, &mut Rng::seed_from_u64(3)).unwrap();
        let mut got: Vec<u32> = recs.iter().map(|r| r.config.0).collect();
        got.sort();
        assert_eq!(got, [1, 3, 4, 5, 6, 8, 9]);
    }
}
