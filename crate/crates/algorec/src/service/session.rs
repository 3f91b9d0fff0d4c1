//! Event-sourced recommendation sessions.
//!
//! Every mutating call appends an [`Event`]; rebuilding a session means
//! replaying its events against the same seed knowledge base, which
//! reproduces the recommender state, the repeat filter and every
//! recommendation exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use algorec_core::kb::{AlgorithmConfig, Catalog, ConfigKey, KnowledgeBase, ParamValue};
use algorec_core::metafeatures::{MetafeatureVector, METAFEATURE_NAMES};
use algorec_core::recommenders::{Rating, Recommender, RepeatFilter, Strategy, StrategyConfig};
use algorec_core::{stream_id, substream, Error, Result, Rng};
use serde::{Deserialize, Serialize};

/// Everything needed to recreate a session from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub strategy: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kb_snapshot: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedItem {
    pub config_id: String,
    pub algorithm: String,
    pub params: BTreeMap<String, ParamValue>,
    pub predicted_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Ai,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    DatasetRegistered {
        seq: u64,
        dataset_id: String,
        metafeatures: Option<Vec<Option<f64>>>,
    },
    Recommended {
        seq: u64,
        dataset_id: String,
        n: usize,
        items: Vec<RecommendedItem>,
    },
    ResultRecorded {
        seq: u64,
        dataset_id: String,
        config_id: String,
        algorithm: String,
        params: BTreeMap<String, ParamValue>,
        train_score: f64,
        holdout_score: f64,
        holdout_defaulted: bool,
        source: Source,
    },
}

impl Event {
    pub fn seq(&self) -> u64 {
        match self {
            Event::DatasetRegistered { seq, .. } | Event::Recommended { seq, .. } | Event::ResultRecorded { seq, .. } => *seq,
        }
    }
}

/// Outcome of a registration call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Registration {
    Created,
    Updated,
    Unchanged,
}

pub struct Session {
    pub id: String,
    pub spec: SessionSpec,
    catalog: Arc<Catalog>,
    kb_datasets: BTreeSet<String>,
    model: Box<dyn Recommender>,
    filter: RepeatFilter,
    rng: Rng,
    datasets: BTreeMap<String, Option<MetafeatureVector>>,
    recommended: BTreeSet<(String, ConfigKey)>,
    recorded: BTreeSet<(String, ConfigKey)>,
    events: Vec<Event>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("id", &self.id).field("spec", &self.spec).field("events", &self.events.len()).finish()
    }
}

/// Parses a metafeature payload: either an array of 45 numbers/nulls in
/// the standard order, or an object mapping metafeature names to values
/// (unlisted names are missing).
pub fn parse_metafeatures(dataset_id: &str, value: &serde_json::Value) -> Result<MetafeatureVector> {
    let bad = |m: String| Error::Validation(format!("metafeatures: {m}"));
    let values = match value {
        serde_json::Value::Array(xs) => xs
            .iter()
            .map(|x| match x {
                serde_json::Value::Null => Ok(None),
                serde_json::Value::Number(n) => Ok(n.as_f64()),
                other => Err(bad(format!("expected a number or null, got {other}"))),
            })
            .collect::<Result<Vec<_>>>()?,
        serde_json::Value::Object(map) => {
            let mut v = vec![None; METAFEATURE_NAMES.len()];
            for (name, x) in map {
                let slot = algorec_core::metafeatures::slot(name).ok_or_else(|| bad(format!("unknown metafeature `{name}`")))?;
                v[slot] = match x {
                    serde_json::Value::Null => None,
                    serde_json::Value::Number(n) => n.as_f64(),
                    other => return Err(bad(format!("`{name}` must be a number or null, got {other}"))),
                };
            }
            v
        }
        other => return Err(bad(format!("expected an array or object, got {other}"))),
    };
    MetafeatureVector::new(dataset_id, values)
}

impl Session {
    /// Creates a session trained on every result of `kb`.
    pub fn new(id: String, spec: SessionSpec, catalog: Arc<Catalog>, kb: &KnowledgeBase) -> Result<Self> {
        let strategy: Strategy = spec.strategy.parse()?;
        let mut config = StrategyConfig::new(strategy);
        for (k, v) in &spec.params {
            config.set(k, v)?;
        }
        let mut rng = substream(spec.seed, stream_id("session"));
        let mut model = config.build(catalog.clone());
        for mf in kb.metafeatures().values() {
            model.register_metafeatures(mf.clone());
        }
        let ratings = kb
            .results()
            .iter()
            .map(|r| Rating::from_result(&catalog, r))
            .collect::<Result<Vec<_>>>()?;
        model.update(&ratings, &mut rng)?;
        // configs with a knowledge-base result are never recommended again
        let mut filter = RepeatFilter::new(catalog.len());
        let recorded: BTreeSet<(String, ConfigKey)> = ratings.iter().map(|r| (r.dataset.clone(), r.config)).collect();
        for (d, k) in &recorded {
            filter.insert(d, *k);
        }
        Ok(Session {
            id,
            spec,
            filter,
            catalog,
            kb_datasets: kb.datasets().into_iter().collect(),
            model,
            rng,
            datasets: BTreeMap::new(),
            recommended: BTreeSet::new(),
            recorded,
            events: Vec::new(),
        })
    }

    /// Rebuilds a session by replaying `events`. Fails if a replayed
    /// recommendation differs from the logged one.
    pub fn replay(id: String, spec: SessionSpec, catalog: Arc<Catalog>, kb: &KnowledgeBase, events: &[Event]) -> Result<Self> {
        let mut s = Session::new(id, spec, catalog, kb)?;
        for e in events {
            match e {
                Event::DatasetRegistered { dataset_id, metafeatures, .. } => {
                    let mf = metafeatures.clone().map(|v| MetafeatureVector::new(dataset_id, v)).transpose()?;
                    s.register(dataset_id, mf)?;
                }
                Event::Recommended { dataset_id, n, items, .. } => {
                    let (_, got) = s.recommend(dataset_id, *n)?;
                    if &got != items {
                        return Err(Error::Conflict(format!("replay of event {} produced different recommendations", e.seq())));
                    }
                }
                Event::ResultRecorded { dataset_id, algorithm, params, train_score, holdout_score, holdout_defaulted, .. } => {
                    let holdout = (!holdout_defaulted).then_some(*holdout_score);
                    s.record_result(dataset_id, algorithm, params, *train_score, holdout)?;
                }
            }
        }
        Ok(s)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn last_event(&self) -> Option<&Event> {
        self.events.last()
    }

    fn next_seq(&self) -> u64 {
        self.events.len() as u64 + 1
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn filter(&self) -> &RepeatFilter {
        &self.filter
    }

    pub fn is_known(&self, dataset_id: &str) -> bool {
        self.datasets.contains_key(dataset_id) || self.kb_datasets.contains(dataset_id)
    }

    /// Registers a dataset, optionally with metafeatures. Repeating a
    /// registration is a no-op; attaching metafeatures to a dataset that had
    /// none is allowed; changing them is a conflict.
    pub fn register(&mut self, dataset_id: &str, metafeatures: Option<MetafeatureVector>) -> Result<Registration> {
        if dataset_id.trim().is_empty() {
            return Err(Error::Validation("dataset_id must not be empty".into()));
        }
        let metafeatures = metafeatures.map(|m| m.renamed(dataset_id));
        let outcome = match (self.datasets.get(dataset_id), &metafeatures) {
            (None, _) => Registration::Created,
            (Some(_), None) => return Ok(Registration::Unchanged),
            (Some(None), Some(_)) => Registration::Updated,
            (Some(Some(old)), Some(new)) if old == new => return Ok(Registration::Unchanged),
            (Some(Some(_)), Some(_)) => {
                return Err(Error::Conflict(format!("dataset `{dataset_id}` is already registered with different metafeatures")))
            }
        };
        if let Some(mf) = &metafeatures {
            self.model.register_metafeatures(mf.clone());
        }
        self.events.push(Event::DatasetRegistered {
            seq: self.next_seq(),
            dataset_id: dataset_id.to_string(),
            metafeatures: metafeatures.as_ref().map(|m| m.values().to_vec()),
        });
        self.datasets.insert(dataset_id.to_string(), metafeatures);
        Ok(outcome)
    }

    /// Returns `(seq, items)`; the event is only logged on success.
    pub fn recommend(&mut self, dataset_id: &str, n: usize) -> Result<(u64, Vec<RecommendedItem>)> {
        if !self.is_known(dataset_id) {
            return Err(Error::NotFound(format!("dataset `{dataset_id}` is not registered")));
        }
        let recs = self.model.recommend(dataset_id, n, &mut self.filter, &mut self.rng)?;
        let items: Vec<RecommendedItem> = recs
            .iter()
            .map(|r| {
                let cfg = self.catalog.config(r.config);
                self.recommended.insert((dataset_id.to_string(), r.config));
                RecommendedItem {
                    config_id: cfg.id().to_string(),
                    algorithm: cfg.algorithm().to_string(),
                    params: cfg.params().clone(),
                    predicted_score: r.predicted,
                }
            })
            .collect();
        let seq = self.next_seq();
        self.events.push(Event::Recommended { seq, dataset_id: dataset_id.to_string(), n, items: items.clone() });
        Ok((seq, items))
    }

    /// Records a result; a missing holdout score defaults to the training
    /// score and is flagged. The config joins the repeat filter.
    pub fn record_result(
        &mut self,
        dataset_id: &str,
        algorithm: &str,
        params: &BTreeMap<String, ParamValue>,
        train_score: f64,
        holdout_score: Option<f64>,
    ) -> Result<&Event> {
        if !self.is_known(dataset_id) {
            return Err(Error::NotFound(format!("dataset `{dataset_id}` is not registered")));
        }
        let config: AlgorithmConfig = self.catalog.space().canonicalize(algorithm, params)?;
        let key = self.catalog.key(&config)?;
        if self.recorded.contains(&(dataset_id.to_string(), key)) {
            return Err(Error::Duplicate { dataset: dataset_id.to_string(), config_id: config.id().to_string() });
        }
        let holdout = holdout_score.unwrap_or(train_score);
        algorec_core::kb::ExperimentResult::new(dataset_id, config.clone(), train_score, holdout).validate_scores()?;
        self.model.update(&[Rating::new(dataset_id, key, train_score)], &mut self.rng)?;
        self.recorded.insert((dataset_id.to_string(), key));
        self.filter.insert(dataset_id, key);
        let source = if self.recommended.contains(&(dataset_id.to_string(), key)) { Source::Ai } else { Source::User };
        self.events.push(Event::ResultRecorded {
            seq: self.next_seq(),
            dataset_id: dataset_id.to_string(),
            config_id: config.id().to_string(),
            algorithm: config.algorithm().to_string(),
            params: config.params().clone(),
            train_score,
            holdout_score: holdout,
            holdout_defaulted: holdout_score.is_none(),
            source,
        });
        Ok(self.events.last().expect("just pushed"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use algorec_core::kb::{ConfigSpace, ExperimentResult};

    fn setup(strategy: &str) -> (Arc<Catalog>, KnowledgeBase, SessionSpec) {
        let space = ConfigSpace::synthetic(2, 4);
        let catalog = Arc::new(Catalog::new(space.clone()).unwrap());
        let mut kb = KnowledgeBase::new(space);
        for (i, k) in catalog.keys().enumerate() {
            let s = 0.5 + 0.05 * i as f64;
            kb.insert(ExperimentResult::new("seed", catalog.config(k).clone(), s, s)).unwrap();
        }
        let spec = SessionSpec { strategy: strategy.into(), params: BTreeMap::new(), seed: 3, kb_snapshot: None };
        (catalog, kb, spec)
    }

    fn p(v: i64) -> BTreeMap<String, ParamValue> {
        [("p".to_string(), ParamValue::Int(v))].into_iter().collect()
    }

    #[test]
    fn registration_rules() {
        let (cat, kb, spec) = setup("average");
        let mut s = Session::new("s1".into(), spec, cat, &kb).unwrap();
        assert_eq!(s.register("d", None).unwrap(), Registration::Created);
        assert_eq!(s.register("d", None).unwrap(), Registration::Unchanged);
        let mf = MetafeatureVector::new("x", vec![Some(1.0); METAFEATURE_NAMES.len()]).unwrap();
        assert_eq!(s.register("d", Some(mf.clone())).unwrap(), Registration::Updated);
        assert_eq!(s.register("d", Some(mf.clone())).unwrap(), Registration::Unchanged);
        let other = MetafeatureVector::new("x", vec![Some(2.0); METAFEATURE_NAMES.len()]).unwrap();
        assert!(matches!(s.register("d", Some(other)), Err(Error::Conflict(_))));
        assert!(s.register(" ", None).is_err());
        assert_eq!(s.events().len(), 2);
    }

    #[test]
    fn results_and_sources() {
        let (cat, kb, spec) = setup("average");
        let mut s = Session::new("s1".into(), spec, cat, &kb).unwrap();
        s.register("d", None).unwrap();
        let (_, recs) = s.recommend("d", 1).unwrap();
        assert_eq!(recs[0].config_id, "alg01|p=3");
        let params = recs[0].params.clone();
        let e = s.record_result("d", "alg01", &params, 0.7, None).unwrap().clone();
        assert!(matches!(e, Event::ResultRecorded { source: Source::Ai, holdout_defaulted: true, holdout_score, .. } if holdout_score == 0.7));
        let e = s.record_result("d", "alg00", &p(0), 0.9, Some(0.8)).unwrap().clone();
        assert!(matches!(e, Event::ResultRecorded { source: Source::User, .. }));
        let (_, next) = s.recommend("d", 8).unwrap();
        assert_eq!(next.len(), 6);
        assert!(next.iter().all(|r| r.config_id != "alg00|p=0" && r.config_id != "alg01|p=3"));
        assert!(s.record_result("d", "alg00", &p(0), 1.2, None).is_err());
        assert!(s.record_result("d", "alg00", &p(9), 0.2, None).is_err());
        assert!(matches!(s.recommend("ghost", 1), Err(Error::NotFound(_))));
        assert!(s.recommend("d", 0).is_err());
    }

    #[test]
    fn replay_reproduces_every_strategy() {
        for strategy in Strategy::ALL {
            let (cat, kb, spec) = setup(strategy.name());
            let mut s = Session::new("s1".into(), spec.clone(), cat.clone(), &kb).unwrap();
            let mf = MetafeatureVector::new("x", vec![Some(0.5); METAFEATURE_NAMES.len()]).unwrap();
            s.register("d", Some(mf)).unwrap();
            s.register("e", None).unwrap();
            for round in 0..3 {
                let (_, recs) = s.recommend("d", 2).unwrap();
                s.record_result("d", &recs[0].algorithm, &recs[0].params, 0.4 + 0.1 * round as f64, None).unwrap();
            }
            if strategy != Strategy::KnnMeta {
                s.recommend("e", 1).unwrap();
            }
            let rebuilt = Session::replay("s1".into(), spec, cat, &kb, s.events()).unwrap();
            assert_eq!(rebuilt.events(), s.events(), "{strategy}");
            let mut live = s;
            let mut copy = rebuilt;
            assert_eq!(live.recommend("d", 2).unwrap(), copy.recommend("d", 2).unwrap(), "{strategy}");
        }
    }

    #[test]
    fn metafeature_payloads() {
        let arr = serde_json::Value::Array(vec![serde_json::json!(1.5); METAFEATURE_NAMES.len()]);
        assert_eq!(parse_metafeatures("d", &arr).unwrap().values()[0], Some(1.5));
        let obj = serde_json::json!({ METAFEATURE_NAMES[2]: 3.0 });
        let v = parse_metafeatures("d", &obj).unwrap();
        assert_eq!(v.values()[2], Some(3.0));
        assert_eq!(v.values()[0], None);
        assert!(parse_metafeatures("d", &serde_json::json!([1.0])).is_err());
        assert!(parse_metafeatures("d", &serde_json::json!({"bogus": 1})).is_err());
    }
}
