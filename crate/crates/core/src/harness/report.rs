use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{ExperimentPlan, Mode, ReplayEnv, TrialLog};
use crate::math::{median, percentile_sorted};
use crate::{stream_id, substream, Rng};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRow {
    pub iteration: usize,
    pub median: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Median over trials of the batch-mean ΔBA.
    pub median_mean: f64,
    /// Median over trials of the cumulative-best ΔBA of the drawn dataset.
    pub median_cumulative: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessRow {
    pub iteration: usize,
    pub rate_01: f64,
    pub rate_05: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreqRow {
    pub iteration: usize,
    pub algorithm: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub delta_ba: Vec<DeltaRow>,
    pub success: Vec<SuccessRow>,
    pub freq: Vec<FreqRow>,
}

/// Percentile bootstrap 95% interval of the median.
///
/// The sample is sorted first, so the interval does not depend on the
/// order in which values were collected.
pub fn bootstrap_ci(values: &[f64], resamples: usize, rng: &mut Rng) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() < 2 || resamples == 0 {
        let m = median(&sorted).unwrap_or(f64::NAN);
        return (m, m);
    }
    let mut stats = Vec::with_capacity(resamples);
    let mut buf = alloc::vec![0.0; sorted.len()];
    for _ in 0..resamples {
        for x in buf.iter_mut() {
            *x = sorted[rng.random_range(0..sorted.len())];
        }
        stats.push(median(&buf).expect("nonempty"));
    }
    stats.sort_by(f64::total_cmp);
    (percentile_sorted(&stats, 0.025), percentile_sorted(&stats, 0.975))
}

/// Per-iteration fraction of datasets whose best evaluated holdout score is
/// within `threshold` (relative) of the best known score, averaged over
/// trials. A truncated trial keeps its last state for later iterations.
pub fn success_rate(logs: &[TrialLog], n_datasets: usize, n_iterations: usize, threshold: f64) -> Vec<f64> {
    let mut out = alloc::vec![0.0; n_iterations];
    if logs.is_empty() || n_datasets == 0 {
        return out;
    }
    for log in logs {
        let mut best: BTreeMap<&str, f64> = BTreeMap::new();
        let mut records = log.iterations.iter().peekable();
        for (i, slot) in out.iter_mut().enumerate() {
            while let Some(rec) = records.next_if(|r| r.iteration <= i + 1) {
                let e = best.entry(rec.dataset.as_str()).or_insert(f64::INFINITY);
                *e = e.min(rec.delta_ba_cumulative);
            }
            let hits = best.values().filter(|d| **d <= threshold).count();
            *slot += hits as f64 / n_datasets as f64;
        }
    }
    for x in out.iter_mut() {
        *x /= logs.len() as f64;
    }
    out
}

/// Per-iteration medians with bootstrap intervals, success rates at 1% and
/// 5%, and algorithm recommendation counts.
pub fn aggregate(env: &ReplayEnv, plan: &ExperimentPlan, logs: &[TrialLog]) -> Report {
    let mut rng = substream(plan.seed ^ stream_id("bootstrap"), 0);
    let algorithms = env.catalog().algorithms();
    let mut delta = Vec::new();
    let mut freq = Vec::new();
    for it in 1..=plan.n_iterations {
        let recs: Vec<_> = logs.iter().filter_map(|l| l.iterations.get(it - 1)).filter(|r| r.iteration == it).collect();
        if recs.is_empty() {
            continue;
        }
        let batch: Vec<f64> = recs.iter().map(|r| r.delta_ba).collect();
        let mean: Vec<f64> = recs.iter().map(|r| r.delta_ba_mean).collect();
        let cumulative: Vec<f64> = recs.iter().map(|r| r.delta_ba_cumulative).collect();
        let (ci_lo, ci_hi) = bootstrap_ci(&batch, BOOTSTRAP_RESAMPLES, &mut rng);
        delta.push(DeltaRow {
            iteration: it,
            median: median(&batch).expect("nonempty"),
            ci_lo,
            ci_hi,
            median_mean: median(&mean).expect("nonempty"),
            median_cumulative: median(&cumulative).expect("nonempty"),
            n_trials: recs.len(),
        });
        let mut counts = alloc::vec![0usize; algorithms.len()];
        for r in &recs {
            for e in &r.recs {
                counts[env.catalog().algorithm_index(e.config)] += 1;
            }
        }
        for (name, count) in algorithms.iter().zip(counts) {
            freq.push(FreqRow { iteration: it, algorithm: name.clone(), count });
        }
    }
    let n_datasets = match plan.mode {
        Mode::Replay => env.datasets().len(),
        Mode::LeaveOneOut => 1,
    };
    let r01 = success_rate(logs, n_datasets, plan.n_iterations, 0.01);
    let r05 = success_rate(logs, n_datasets, plan.n_iterations, 0.05);
    let success = r01
        .into_iter()
        .zip(r05)
        .enumerate()
        .map(|(i, (rate_01, rate_05))| SuccessRow { iteration: i + 1, rate_01, rate_05 })
        .collect();
    Report { delta_ba: delta, success, freq }
}
