use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AlgorithmConfig, ConfigSpace};
use crate::metafeatures::MetafeatureVector;
use crate::{Error, Result};

/// One rating: the score of a configuration on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub dataset_id: String,
    pub config: AlgorithmConfig,
    /// Cross-validated training score; the only score recommenders see.
    pub train_score: f64,
    /// Held-out score, used for evaluation only.
    pub holdout_score: f64,
}

impl ExperimentResult {
    pub fn new(dataset_id: impl Into<String>, config: AlgorithmConfig, train_score: f64, holdout_score: f64) -> Self {
        ExperimentResult { dataset_id: dataset_id.into(), config, train_score, holdout_score }
    }

    pub fn validate_scores(&self) -> Result<()> {
        check_score("train_score", self.train_score)?;
        check_score("holdout_score", self.holdout_score)
    }
}

pub(crate) fn check_score(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} {x} is outside [0, 1]")))
    }
}

/// Validated results keyed by `(dataset, config)`, plus the space they are
/// drawn from and optional per-dataset metafeatures.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    results: Vec<ExperimentResult>,
    index: BTreeMap<(String, String), usize>,
    space: ConfigSpace,
    metafeatures: BTreeMap<String, MetafeatureVector>,
    warnings: Vec<String>,
}

impl KnowledgeBase {
    pub fn new(space: ConfigSpace) -> Self {
        KnowledgeBase {
            results: Vec::new(),
            index: BTreeMap::new(),
            space,
            metafeatures: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    /// Adds a result after checking scores, space membership and uniqueness.
    pub fn insert(&mut self, result: ExperimentResult) -> Result<()> {
        if result.dataset_id.is_empty() {
            return Err(Error::Validation("empty dataset id".into()));
        }
        result.validate_scores()?;
        self.space.validate(&result.config)?;
        let key = (result.dataset_id.clone(), result.config.id().to_string());
        if self.index.contains_key(&key) {
            return Err(Error::Duplicate { dataset: key.0, config_id: key.1 });
        }
        self.index.insert(key, self.results.len());
        self.results.push(result);
        Ok(())
    }

    pub fn set_metafeatures(&mut self, mf: MetafeatureVector) {
        self.metafeatures.insert(mf.dataset_id.clone(), mf);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn results(&self) -> &[ExperimentResult] {
        &self.results
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn metafeatures(&self) -> &BTreeMap<String, MetafeatureVector> {
        &self.metafeatures
    }

    pub fn get(&self, dataset_id: &str, config_id: &str) -> Option<&ExperimentResult> {
        self.index
            .get(&(dataset_id.to_string(), config_id.to_string()))
            .map(|&i| &self.results[i])
    }

    /// Dataset ids with at least one result, sorted.
    pub fn datasets(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.results.iter().map(|r| r.dataset_id.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn results_for<'a>(&'a self, dataset_id: &'a str) -> impl Iterator<Item = &'a ExperimentResult> + 'a {
        self.results.iter().filter(move |r| r.dataset_id == dataset_id)
    }

    /// Best holdout score on a dataset.
    pub fn best_holdout(&self, dataset_id: &str) -> Option<f64> {
        self.results_for(dataset_id).map(|r| r.holdout_score).reduce(f64::max)
    }

    /// Copy of the knowledge base without any result for `dataset_id`.
    /// Metafeatures are kept so the dataset can still be cold-started.
    pub fn without_dataset(&self, dataset_id: &str) -> KnowledgeBase {
        let mut out = KnowledgeBase::new(self.space.clone());
        out.metafeatures = self.metafeatures.clone();
        for r in self.results.iter().filter(|r| r.dataset_id != dataset_id) {
            out.insert(r.clone()).expect("subset of a valid knowledge base");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::ParamValue;

    fn lr(c: f64) -> AlgorithmConfig {
        AlgorithmConfig::from_pairs(
            "LogisticRegression",
            [
                ("penalty", ParamValue::from("l2")),
                ("C", ParamValue::Float(c)),
                ("fit_intercept", ParamValue::Bool(true)),
                ("dual", ParamValue::Bool(false)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn insert_and_lookup() {
        let mut kb = KnowledgeBase::new(ConfigSpace::pmlb());
        kb.insert(ExperimentResult::new("d1", lr(1.0), 0.84, 0.82)).unwrap();
        let r = kb.get("d1", lr(1.0).id()).unwrap();
        assert_eq!((r.train_score, r.holdout_score), (0.84, 0.82));
        assert_eq!(kb.datasets(), ["d1"]);
        assert_eq!(kb.best_holdout("d1"), Some(0.82));
    }

    #[test]
    fn rejects_bad_rows() {
        let mut kb = KnowledgeBase::new(ConfigSpace::pmlb());
        assert!(matches!(kb.insert(ExperimentResult::new("d1", lr(999.0), 0.5, 0.5)), Err(Error::Validation(_))));
        assert!(matches!(kb.insert(ExperimentResult::new("d1", lr(1.0), 1.2, 0.5)), Err(Error::Validation(_))));
        kb.insert(ExperimentResult::new("d1", lr(1.0), 0.5, 0.5)).unwrap();
        assert!(matches!(
            kb.insert(ExperimentResult::new("d1", lr(1.0), 0.6, 0.6)),
            Err(Error::Duplicate { .. })
        ));
    }

    #[test]
    fn leave_out_keeps_metafeatures() {
        let mut kb = KnowledgeBase::new(ConfigSpace::pmlb());
        kb.insert(ExperimentResult::new("d1", lr(1.0), 0.5, 0.5)).unwrap();
        kb.insert(ExperimentResult::new("d2", lr(1.0), 0.5, 0.5)).unwrap();
        kb.set_metafeatures(MetafeatureVector::new("d1", alloc::vec![None; 45]).unwrap());
        let out = kb.without_dataset("d1");
        assert_eq!(out.datasets(), ["d2"]);
        assert!(out.metafeatures().contains_key("d1"));
    }
}
