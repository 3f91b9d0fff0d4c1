//! Recommendation strategies sharing one recommend/update contract.
//!
//! Every strategy learns from ratings fed through [`Recommender::update`]
//! and, for a dataset, returns configurations that are not yet in the
//! session's [`RepeatFilter`]. Score-based strategies rank by predicted
//! score (clipped to `[0, 1]`), breaking ties by canonical config id.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::kb::{Catalog, ConfigKey, ExperimentResult};
use crate::metafeatures::MetafeatureVector;
use crate::{Error, Result, Rng};

mod baseline;
mod cocluster;
mod filter;
mod knn;
mod meta;
mod ratings;
mod slope_one;
mod svd;

pub use baseline::{AverageRecommender, RandomRecommender};
pub use cocluster::{CoClusterParams, CoClustering};
pub use filter::RepeatFilter;
pub use knn::{KnnData, KnnMl};
pub use meta::{KnnMeta, MetaArchive};
pub use ratings::{RatingMatrix, EMPTY_KB_SCORE};
pub use slope_one::SlopeOne;
pub use svd::{Svd, SvdParams};

/// A training rating as the recommenders see it.
#[derive(Debug, Clone, PartialEq)]
pub struct Rating {
    pub dataset: String,
    pub config: ConfigKey,
    pub score: f64,
}

impl Rating {
    pub fn new(dataset: impl Into<String>, config: ConfigKey, score: f64) -> Self {
        Rating { dataset: dataset.into(), config, score }
    }

    /// Uses the training score of a knowledge-base result.
    pub fn from_result(catalog: &Catalog, result: &ExperimentResult) -> Result<Self> {
        Ok(Rating::new(result.dataset_id.clone(), catalog.key(&result.config)?, result.train_score))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recommendation {
    pub config: ConfigKey,
    pub predicted: f64,
}

pub trait Recommender: Send {
    fn strategy(&self) -> Strategy;

    /// Learns from new ratings. An empty batch leaves the state unchanged.
    fn update(&mut self, ratings: &[Rating], rng: &mut Rng) -> Result<()>;

    /// Returns up to `n` unfiltered configs for `dataset` and adds them to
    /// the filter.
    fn recommend(
        &mut self,
        dataset: &str,
        n: usize,
        filter: &mut RepeatFilter,
        rng: &mut Rng,
    ) -> Result<Vec<Recommendation>>;

    /// Makes metafeatures available; only metalearning strategies use them.
    fn register_metafeatures(&mut self, _mf: MetafeatureVector) {}
}

pub(crate) fn validate_ratings(ratings: &[Rating], n_configs: usize) -> Result<()> {
    for r in ratings {
        crate::kb::check_score("score", r.score)?;
        if r.config.index() >= n_configs {
            return Err(Error::Validation(format!("config key {} out of range", r.config.0)));
        }
        if r.dataset.is_empty() {
            return Err(Error::Validation("empty dataset id".into()));
        }
    }
    Ok(())
}

/// Mean-squared-deviation similarity `1 / (msd + 1)` over common keys;
/// 0 when nothing is shared.
pub fn msd_similarity<K: Ord>(x: &BTreeMap<K, f64>, y: &BTreeMap<K, f64>) -> f64 {
    let mut xi = x.iter().peekable();
    let mut yi = y.iter().peekable();
    let (mut sum, mut n) = (0.0, 0usize);
    while let (Some((kx, vx)), Some((ky, vy))) = (xi.peek(), yi.peek()) {
        match kx.cmp(ky) {
            core::cmp::Ordering::Less => {
                xi.next();
            }
            core::cmp::Ordering::Greater => {
                yi.next();
            }
            core::cmp::Ordering::Equal => {
                let d = *vx - *vy;
                sum += d * d;
                n += 1;
                xi.next();
                yi.next();
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        1.0 / (sum / n as f64 + 1.0)
    }
}

/// Scores every unfiltered config, keeps the best `n` (score descending,
/// then canonical id ascending) and records them in the filter.
pub(crate) fn rank_and_filter<F>(
    catalog: &Catalog,
    dataset: &str,
    n: usize,
    filter: &mut RepeatFilter,
    mut score: F,
) -> Result<Vec<Recommendation>>
where
    F: FnMut(ConfigKey) -> f64,
{
    check_n(n)?;
    let mut scored: Vec<(f64, u32, ConfigKey)> = catalog
        .keys()
        .filter(|k| !filter.contains(dataset, *k))
        .map(|k| (score(k).clamp(0.0, 1.0), catalog.id_rank(k), k))
        .collect();
    if scored.is_empty() {
        return Err(Error::Exhausted { dataset: dataset.to_string() });
    }
    let order = |a: &(f64, u32, ConfigKey), b: &(f64, u32, ConfigKey)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if scored.len() > n {
        scored.select_nth_unstable_by(n - 1, order);
        scored.truncate(n);
    }
    scored.sort_by(order);
    Ok(scored
        .into_iter()
        .map(|(predicted, _, config)| {
            filter.insert(dataset, config);
            Recommendation { config, predicted }
        })
        .collect())
}

pub(crate) fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::Validation("number of recommendations must be at least 1".into()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    KnnMl,
    KnnData,
    CoCluster,
    KnnMeta,
    Svd,
    SlopeOne,
    Random,
    Average,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::KnnMl,
        Strategy::KnnData,
        Strategy::CoCluster,
        Strategy::KnnMeta,
        Strategy::Svd,
        Strategy::SlopeOne,
        Strategy::Random,
        Strategy::Average,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::KnnMl => "knn-ml",
            Strategy::KnnData => "knn-data",
            Strategy::CoCluster => "cocluster",
            Strategy::KnnMeta => "knn-meta",
            Strategy::Svd => "svd",
            Strategy::SlopeOne => "slopeone",
            Strategy::Random => "random",
            Strategy::Average => "average",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown strategy `{s}`")))
    }
}

/// A strategy plus its hyperparameters, settable through flat
/// `namespace.key=value` pairs such as `svd.n_factors=20`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub knn_k: usize,
    pub meta_k: usize,
    pub svd: SvdParams,
    pub cocluster: CoClusterParams,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy) -> Self {
        StrategyConfig {
            strategy,
            knn_k: 40,
            meta_k: 10,
            svd: SvdParams::default(),
            cocluster: CoClusterParams::default(),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::Validation(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "knn.k" => self.knn_k = parse(key, value)?,
            "knn-meta.k" => self.meta_k = parse(key, value)?,
            "svd.n_factors" => self.svd.n_factors = parse(key, value)?,
            "svd.learning_rate" => self.svd.learning_rate = parse(key, value)?,
            "svd.regularization" => self.svd.regularization = parse(key, value)?,
            "svd.init_sd" => self.svd.init_sd = parse(key, value)?,
            "svd.epochs_per_result" => self.svd.epochs_per_result = parse(key, value)?,
            "svd.min_epochs" => self.svd.min_epochs = parse(key, value)?,
            "svd.max_epochs" => self.svd.max_epochs = parse(key, value)?,
            "cocluster.k_datasets" => self.cocluster.k_datasets = parse(key, value)?,
            "cocluster.k_configs" => self.cocluster.k_configs = parse(key, value)?,
            "cocluster.iters" => self.cocluster.iters = parse(key, value)?,
            "cocluster.restarts" => self.cocluster.restarts = parse(key, value)?,
            _ => return Err(Error::Validation(format!("unknown parameter `{key}`"))),
        }
        self.check()
    }

    /// Parses `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("expected key=value, got `{pair}`")))?;
        self.set(k.trim(), v)
    }

    fn check(&self) -> Result<()> {
        let positive = [
            ("knn.k", self.knn_k),
            ("knn-meta.k", self.meta_k),
            ("svd.n_factors", self.svd.n_factors),
            ("cocluster.k_datasets", self.cocluster.k_datasets),
            ("cocluster.k_configs", self.cocluster.k_configs),
            ("cocluster.restarts", self.cocluster.restarts),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Validation(format!("`{k}` must be at least 1")));
        }
        let s = &self.svd;
        if !(s.learning_rate > 0.0 && s.regularization >= 0.0 && s.init_sd >= 0.0) {
            return Err(Error::Validation("svd rates must be non-negative (learning_rate > 0)".into()));
        }
        if s.min_epochs > s.max_epochs {
            return Err(Error::Validation("svd.min_epochs exceeds svd.max_epochs".into()));
        }
        Ok(())
    }

    /// Resolved parameters relevant to the selected strategy.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        match self.strategy {
            Strategy::KnnMl | Strategy::KnnData => push("knn.k", self.knn_k.to_string()),
            Strategy::KnnMeta => push("knn-meta.k", self.meta_k.to_string()),
            Strategy::Svd => {
                push("svd.n_factors", self.svd.n_factors.to_string());
                push("svd.learning_rate", format!("{:?}", self.svd.learning_rate));
                push("svd.regularization", format!("{:?}", self.svd.regularization));
                push("svd.init_sd", format!("{:?}", self.svd.init_sd));
                push("svd.epochs_per_result", self.svd.epochs_per_result.to_string());
                push("svd.min_epochs", self.svd.min_epochs.to_string());
                push("svd.max_epochs", self.svd.max_epochs.to_string());
            }
            Strategy::CoCluster => {
                push("cocluster.k_datasets", self.cocluster.k_datasets.to_string());
                push("cocluster.k_configs", self.cocluster.k_configs.to_string());
                push("cocluster.iters", self.cocluster.iters.to_string());
                push("cocluster.restarts", self.cocluster.restarts.to_string());
            }
            Strategy::SlopeOne | Strategy::Random | Strategy::Average => {}
        }
        out
    }

    pub fn build(&self, catalog: Arc<Catalog>) -> Box<dyn Recommender> {
        match self.strategy {
            Strategy::KnnMl => Box::new(KnnMl::new(catalog, self.knn_k)),
            Strategy::KnnData => Box::new(KnnData::new(catalog, self.knn_k)),
            Strategy::CoCluster => Box::new(CoClustering::new(catalog, self.cocluster.clone())),
            Strategy::KnnMeta => Box::new(KnnMeta::new(catalog, self.meta_k)),
            Strategy::Svd => Box::new(Svd::new(catalog, self.svd.clone())),
            Strategy::SlopeOne => Box::new(SlopeOne::new(catalog)),
            Strategy::Random => Box::new(RandomRecommender::new(catalog)),
            Strategy::Average => Box::new(AverageRecommender::new(catalog)),
        }
    }
}
