//! Replay experiments against a knowledge base.
//!
//! A trial seeds a recommender with a sample of the knowledge base, then
//! repeatedly asks it for configurations for a random dataset, looks the
//! picks up in the knowledge base and feeds their training scores back.
//! Quality is measured on holdout scores as the relative gap to the best
//! known holdout score of the dataset.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;

use crate::kb::{Catalog, ConfigKey, KnowledgeBase};
use crate::metafeatures::MetafeatureVector;
use crate::recommenders::{Rating, RepeatFilter, StrategyConfig};
use crate::{stream_id, substream, Error, Result, Rng};

mod report;

pub use report::{aggregate, bootstrap_ci, success_rate, DeltaRow, FreqRow, Report, SuccessRow};

/// Relative distance of `ba` to the best score `ba_star`, floored at 0.
///
/// Scores are read as the shortest decimals that round-trip to them (the
/// form they have in a knowledge-base file) and the ratio is evaluated
/// exactly before a single rounding, so `delta_ba(0.9, 0.81)` is `0.1`
/// rather than `0.09999999999999996`.
pub fn delta_ba(ba_star: f64, ba: f64) -> Result<f64> {
    if !(ba_star > 0.0) || !ba_star.is_finite() {
        return Err(Error::Domain(format!("best balanced accuracy must be positive, got {ba_star}")));
    }
    if !ba.is_finite() {
        return Err(Error::Domain(format!("balanced accuracy must be finite, got {ba}")));
    }
    if ba >= ba_star {
        return Ok(0.0);
    }
    Ok(exact_relative_gap(ba_star, ba).unwrap_or_else(|| (ba_star - ba) / ba_star))
}

/// `(digits, exponent)` with `x == digits * 10^exponent` for the shortest
/// round-trip decimal form of a non-negative finite `x`.
fn shortest_decimal(x: f64) -> Option<(u128, i32)> {
    let text = format!("{x:e}");
    let (mantissa, exp) = text.split_once('e')?;
    let exp: i32 = exp.parse().ok()?;
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let mut digits: u128 = 0;
    for c in int.chars().chain(frac.chars()) {
        digits = digits.checked_mul(10)?.checked_add(c.to_digit(10)? as u128)?;
    }
    Some((digits, exp - frac.len() as i32))
}

fn pow10(e: u32) -> Option<u128> {
    10u128.checked_pow(e)
}

/// `(a - b) / a` for `0 <= b < a`, correctly rounded from the decimal
/// forms; `None` when the operands are too far apart in magnitude or `b`
/// is negative.
fn exact_relative_gap(a: f64, b: f64) -> Option<f64> {
    if b < 0.0 {
        return None;
    }
    let (ma, ea) = shortest_decimal(a)?;
    let (mb, eb) = shortest_decimal(b)?;
    let e = ea.min(eb);
    let big_a = ma.checked_mul(pow10((ea - e) as u32)?)?;
    let big_b = mb.checked_mul(pow10((eb - e) as u32)?)?;
    let num = big_a.checked_sub(big_b)?;
    // long division of num / big_a < 1, enough digits for a correctly
    // rounded parse plus a sticky digit for any nonzero remainder
    big_a.checked_mul(10)?;
    let mut text = String::from("0.");
    let (mut rem, mut significant) = (num, 0);
    while rem != 0 && significant < 40 && text.len() < 400 {
        rem *= 10;
        let digit = rem / big_a;
        rem %= big_a;
        if digit != 0 || significant > 0 {
            significant += 1;
        }
        text.push(char::from(b'0' + digit as u8));
    }
    if rem != 0 {
        text.push('1');
    }
    text.parse().ok()
}

/// Source of elapsed wall time in seconds; only used for logging.
pub trait Clock {
    fn seconds(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Replay,
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub n_trials: usize,
    pub n_iterations: usize,
    pub n_init: usize,
    pub n_recs: usize,
    pub strategy: StrategyConfig,
    pub seed: u64,
    pub mode: Mode,
    /// Leave-one-out only: train on the other datasets first.
    pub pretrain: bool,
    /// Leave-one-out only: ΔBA level for evaluations-to-threshold.
    pub threshold: f64,
}

impl ExperimentPlan {
    pub fn new(strategy: StrategyConfig) -> Self {
        ExperimentPlan {
            n_trials: 300,
            n_iterations: 1000,
            n_init: 100,
            n_recs: 10,
            strategy,
            seed: 0,
            mode: Mode::Replay,
            pretrain: true,
            threshold: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_trials", self.n_trials),
            ("n_iterations", self.n_iterations),
            ("n_init", self.n_init),
            ("n_recs", self.n_recs),
        ] {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be at least 1")));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Validation(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }
}

/// One recommended configuration and what the knowledge base says about it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub config: ConfigKey,
    pub predicted: f64,
    /// `None` when the configuration has no knowledge-base entry.
    pub train: Option<f64>,
    pub holdout: f64,
    pub delta_ba: f64,
}

impl Evaluated {
    pub fn in_kb(&self) -> bool {
        self.train.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub dataset: String,
    pub recs: Vec<Evaluated>,
    /// Best (minimum) ΔBA of the batch.
    pub delta_ba: f64,
    pub delta_ba_mean: f64,
    /// Best holdout score evaluated on this dataset so far in the trial.
    pub best_holdout: f64,
    pub delta_ba_cumulative: f64,
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub trial: usize,
    pub held_out: Option<String>,
    pub iterations: Vec<IterationRecord>,
    /// The recommender ran out of configurations before the last iteration.
    pub truncated: bool,
    /// Leave-one-out only: evaluations until the cumulative ΔBA first
    /// reached the plan's threshold.
    pub evaluations_to_threshold: Option<usize>,
}

/// Knowledge base indexed for replay lookups.
#[derive(Debug, Clone)]
pub struct ReplayEnv {
    catalog: Arc<Catalog>,
    datasets: Vec<String>,
    cells: Vec<BTreeMap<ConfigKey, (f64, f64)>>,
    best: Vec<f64>,
    worst: Vec<f64>,
    rows: Vec<(usize, ConfigKey)>,
    metafeatures: Vec<MetafeatureVector>,
}

impl ReplayEnv {
    /// Fails if the knowledge base is empty or a dataset's best holdout
    /// score is not positive.
    pub fn new(kb: &KnowledgeBase) -> Result<Self> {
        if kb.is_empty() {
            return Err(Error::EmptyInput("knowledge base has no results".into()));
        }
        let catalog = Arc::new(Catalog::new(kb.space().clone())?);
        let datasets = kb.datasets();
        let pos: BTreeMap<&str, usize> = datasets.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
        let mut cells = alloc::vec![BTreeMap::new(); datasets.len()];
        let mut rows = Vec::with_capacity(kb.len());
        for r in kb.results() {
            let d = pos[r.dataset_id.as_str()];
            let key = catalog.key(&r.config)?;
            cells[d].insert(key, (r.train_score, r.holdout_score));
            rows.push((d, key));
        }
        let mut best = Vec::with_capacity(datasets.len());
        let mut worst = Vec::with_capacity(datasets.len());
        for (name, row) in datasets.iter().zip(&cells) {
            let hi = row.values().map(|v: &(f64, f64)| v.1).fold(f64::NEG_INFINITY, f64::max);
            let lo = row.values().map(|v: &(f64, f64)| v.1).fold(f64::INFINITY, f64::min);
            if !(hi > 0.0) {
                return Err(Error::Domain(format!("dataset `{name}` has best holdout score {hi}; must be positive")));
            }
            best.push(hi);
            worst.push(lo);
        }
        let metafeatures = kb.metafeatures().values().cloned().collect();
        Ok(ReplayEnv { catalog, datasets, cells, best, worst, rows, metafeatures })
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }

    pub fn dataset_index(&self, name: &str) -> Option<usize> {
        self.datasets.binary_search_by(|d| d.as_str().cmp(name)).ok()
    }

    /// Best holdout score of dataset `d`.
    pub fn ba_star(&self, d: usize) -> f64 {
        self.best[d]
    }

    pub fn lookup(&self, d: usize, config: ConfigKey) -> Option<(f64, f64)> {
        self.cells[d].get(&config).copied()
    }

    fn evaluate(&self, d: usize, config: ConfigKey, predicted: f64) -> Evaluated {
        let (train, holdout) = match self.lookup(d, config) {
            Some((t, h)) => (Some(t), h),
            None => (None, self.worst[d]),
        };
        let delta_ba = delta_ba(self.best[d], holdout).expect("positive best checked at load");
        Evaluated { config, predicted, train, holdout, delta_ba }
    }

    fn rating(&self, d: usize, config: ConfigKey, score: f64) -> Rating {
        Rating::new(self.datasets[d].clone(), config, score)
    }
}

fn trial_stream(seed: u64, trial: usize, name: &str) -> Rng {
    substream(seed ^ stream_id(name), trial as u64)
}

/// Tracks the per-dataset best holdout score and produces log records.
struct Progress<'a> {
    env: &'a ReplayEnv,
    best: BTreeMap<usize, f64>,
    clock: Option<&'a dyn Clock>,
    start: f64,
}

impl<'a> Progress<'a> {
    fn new(env: &'a ReplayEnv, clock: Option<&'a dyn Clock>) -> Self {
        let start = clock.map(|c| c.seconds()).unwrap_or(0.0);
        Progress { env, best: BTreeMap::new(), clock, start }
    }

    fn record(&mut self, iteration: usize, d: usize, recs: Vec<Evaluated>) -> IterationRecord {
        let batch_best = recs.iter().map(|r| r.holdout).fold(f64::NEG_INFINITY, f64::max);
        let best = self.best.entry(d).or_insert(f64::NEG_INFINITY);
        *best = best.max(batch_best);
        let best_holdout = *best;
        let delta_min = recs.iter().map(|r| r.delta_ba).fold(f64::INFINITY, f64::min);
        let delta_mean = recs.iter().map(|r| r.delta_ba).sum::<f64>() / recs.len() as f64;
        IterationRecord {
            iteration,
            dataset: self.env.datasets[d].clone(),
            recs,
            delta_ba: delta_min,
            delta_ba_mean: delta_mean,
            best_holdout,
            delta_ba_cumulative: delta_ba(self.env.best[d], best_holdout).expect("positive best"),
            wall_time: self.clock.map(|c| c.seconds() - self.start),
        }
    }
}

/// Runs one replay trial. All randomness derives from `(plan.seed, trial)`,
/// so trials can run in any order or in parallel.
pub fn run_trial(env: &ReplayEnv, plan: &ExperimentPlan, trial: usize, clock: Option<&dyn Clock>) -> Result<TrialLog> {
    plan.validate()?;
    let mut rec_rng = trial_stream(plan.seed, trial, "recommender");
    let mut init_rng = trial_stream(plan.seed, trial, "init");
    let mut draw_rng = trial_stream(plan.seed, trial, "datasets");

    let mut model = plan.strategy.build(env.catalog.clone());
    for mf in &env.metafeatures {
        model.register_metafeatures(mf.clone());
    }
    let n_init = plan.n_init.min(env.rows.len());
    let seed: Vec<Rating> = index::sample(&mut init_rng, env.rows.len(), n_init)
        .into_iter()
        .map(|i| {
            let (d, k) = env.rows[i];
            env.rating(d, k, env.lookup(d, k).expect("row exists").0)
        })
        .collect();
    model.update(&seed, &mut rec_rng)?;

    let mut filter = RepeatFilter::new(env.catalog.len());
    let mut progress = Progress::new(env, clock);
    let mut log = TrialLog { trial, held_out: None, iterations: Vec::new(), truncated: false, evaluations_to_threshold: None };
    for iteration in 1..=plan.n_iterations {
        let d = draw_rng.random_range(0..env.datasets.len());
        let recs = match model.recommend(&env.datasets[d], plan.n_recs, &mut filter, &mut rec_rng) {
            Ok(r) => r,
            Err(Error::Exhausted { .. }) => {
                log.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let evaluated: Vec<Evaluated> = recs.iter().map(|r| env.evaluate(d, r.config, r.predicted)).collect();
        let feedback: Vec<Rating> = evaluated
            .iter()
            .filter_map(|e| e.train.map(|t| env.rating(d, e.config, t)))
            .collect();
        model.update(&feedback, &mut rec_rng)?;
        log.iterations.push(progress.record(iteration, d, evaluated));
    }
    Ok(log)
}

/// Trains on every other dataset (when `plan.pretrain`), then iterates
/// recommendations for `held_out` alone.
pub fn run_leave_one_out(
    env: &ReplayEnv,
    plan: &ExperimentPlan,
    held_out: &str,
    trial: usize,
    clock: Option<&dyn Clock>,
) -> Result<TrialLog> {
    plan.validate()?;
    let d = env
        .dataset_index(held_out)
        .ok_or_else(|| Error::NotFound(format!("dataset `{held_out}` is not in the knowledge base")))?;
    let mut rec_rng = trial_stream(plan.seed ^ stream_id(held_out), trial, "loo");

    let mut model = plan.strategy.build(env.catalog.clone());
    for mf in &env.metafeatures {
        model.register_metafeatures(mf.clone());
    }
    if plan.pretrain {
        let train: Vec<Rating> = env
            .rows
            .iter()
            .filter(|(e, _)| *e != d)
            .map(|(e, k)| env.rating(*e, *k, env.lookup(*e, *k).expect("row exists").0))
            .collect();
        model.update(&train, &mut rec_rng)?;
    }

    let mut filter = RepeatFilter::new(env.catalog.len());
    let mut progress = Progress::new(env, clock);
    let mut log = TrialLog {
        trial,
        held_out: Some(held_out.to_string()),
        iterations: Vec::new(),
        truncated: false,
        evaluations_to_threshold: None,
    };
    let mut evaluations = 0usize;
    let mut best = f64::NEG_INFINITY;
    for iteration in 1..=plan.n_iterations {
        let recs = match model.recommend(held_out, plan.n_recs, &mut filter, &mut rec_rng) {
            Ok(r) => r,
            Err(Error::Exhausted { .. }) => {
                log.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let evaluated: Vec<Evaluated> = recs.iter().map(|r| env.evaluate(d, r.config, r.predicted)).collect();
        for e in &evaluated {
            evaluations += 1;
            best = best.max(e.holdout);
            if log.evaluations_to_threshold.is_none() && delta_ba(env.best[d], best)? <= plan.threshold {
                log.evaluations_to_threshold = Some(evaluations);
            }
        }
        let feedback: Vec<Rating> = evaluated
            .iter()
            .filter_map(|e| e.train.map(|t| env.rating(d, e.config, t)))
            .collect();
        model.update(&feedback, &mut rec_rng)?;
        log.iterations.push(progress.record(iteration, d, evaluated));
    }
    Ok(log)
}

/// Runs every trial of the plan sequentially and aggregates them.
pub fn run_experiment(env: &ReplayEnv, plan: &ExperimentPlan) -> Result<(Vec<TrialLog>, Report)> {
    let logs = (0..plan.n_trials)
        .map(|t| run_trial(env, plan, t, None))
        .collect::<Result<Vec<_>>>()?;
    let report = aggregate(env, plan, &logs);
    Ok((logs, report))
}
