//! Parallel trial execution and the on-disk harness outputs.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use algorec_core::harness::{self, Clock, ExperimentPlan, ReplayEnv, Report, TrialLog};
use algorec_core::kb::Catalog;
use rayon::prelude::*;
use serde_json::json;

use crate::{Error, Result};

struct WallClock(Instant);

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| algorec_core::Error::Validation(format!("cannot start {jobs} worker threads: {e}")).into())
}

/// Runs all replay trials of `plan` on `jobs` threads (0 = one per core).
/// Results do not depend on `jobs`.
pub fn run_trials(env: &ReplayEnv, plan: &ExperimentPlan, jobs: usize, timings: bool) -> Result<Vec<TrialLog>> {
    pool(jobs)?.install(|| {
        (0..plan.n_trials)
            .into_par_iter()
            .map(|t| {
                let clock = WallClock(Instant::now());
                harness::run_trial(env, plan, t, timings.then_some(&clock as &dyn Clock))
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(Error::from)
    })
}

/// Leave-one-out runs for each named dataset, one log per dataset.
pub fn run_leave_one_out(
    env: &ReplayEnv,
    plan: &ExperimentPlan,
    held_out: &[String],
    jobs: usize,
    timings: bool,
) -> Result<Vec<TrialLog>> {
    pool(jobs)?.install(|| {
        held_out
            .par_iter()
            .enumerate()
            .map(|(i, d)| {
                let clock = WallClock(Instant::now());
                harness::run_leave_one_out(env, plan, d, i, timings.then_some(&clock as &dyn Clock))
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(Error::from)
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn delta_ba_tsv(report: &Report) -> String {
    let mut s = String::from("iteration\tmedian\tci_lo\tci_hi\tmedian_batch_mean\tmedian_cumulative\tn_trials\n");
    for r in &report.delta_ba {
        s += &format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.iteration, r.median, r.ci_lo, r.ci_hi, r.median_mean, r.median_cumulative, r.n_trials
        );
    }
    s
}

pub fn success_tsv(report: &Report) -> String {
    let mut s = String::from("iteration\trate@0.01\trate@0.05\n");
    for r in &report.success {
        s += &format!("{}\t{}\t{}\n", r.iteration, r.rate_01, r.rate_05);
    }
    s
}

pub fn freq_tsv(report: &Report) -> String {
    let mut s = String::from("iteration\talgorithm\tcount\n");
    for r in &report.freq {
        s += &format!("{}\t{}\t{}\n", r.iteration, r.algorithm, r.count);
    }
    s
}

/// One JSON object per iteration.
pub fn trial_jsonl(catalog: &Catalog, log: &TrialLog) -> String {
    let mut s = String::new();
    for rec in &log.iterations {
        let recs: Vec<_> = rec
            .recs
            .iter()
            .map(|e| {
                let cfg = catalog.config(e.config);
                json!({
                    "config_id": cfg.id(),
                    "algorithm": cfg.algorithm(),
                    "params": cfg.params(),
                    "predicted": e.predicted,
                    "train_score": e.train,
                    "holdout_score": e.holdout,
                    "delta_ba": e.delta_ba,
                    "in_kb": e.in_kb(),
                })
            })
            .collect();
        let mut obj = json!({
            "iteration": rec.iteration,
            "dataset_id": rec.dataset,
            "delta_ba": rec.delta_ba,
            "delta_ba_mean": rec.delta_ba_mean,
            "best_holdout": rec.best_holdout,
            "delta_ba_cumulative": rec.delta_ba_cumulative,
            "recommendations": recs,
        });
        if let Some(t) = rec.wall_time {
            obj["wall_time"] = json!(t);
        }
        s += &obj.to_string();
        s.push('\n');
    }
    s
}

/// Writes `delta_ba.tsv`, `success.tsv`, `freq.tsv`, `trials.tsv` and
/// `trials/trial_K.jsonl` under `out`.
pub fn write_outputs(out: &Path, catalog: &Catalog, logs: &[TrialLog], report: &Report) -> Result<()> {
    let trials_dir = out.join("trials");
    fs::create_dir_all(&trials_dir).map_err(|e| Error::io(&trials_dir, e))?;
    write_file(&out.join("delta_ba.tsv"), &delta_ba_tsv(report))?;
    write_file(&out.join("success.tsv"), &success_tsv(report))?;
    write_file(&out.join("freq.tsv"), &freq_tsv(report))?;
    let mut summary = String::from("trial\theld_out\titerations\ttruncated\tevaluations_to_threshold\n");
    for log in logs {
        summary += &format!(
            "{}\t{}\t{}\t{}\t{}\n",
            log.trial,
            log.held_out.as_deref().unwrap_or(""),
            log.iterations.len(),
            log.truncated,
            log.evaluations_to_threshold.map(|n| n.to_string()).unwrap_or_default()
        );
        let path = trials_dir.join(format!("trial_{}.jsonl", log.trial));
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(trial_jsonl(catalog, log).as_bytes()).map_err(|e| Error::io(&path, e))?;
    }
    write_file(&out.join("trials.tsv"), &summary)
}

pub fn bench(env: &ReplayEnv, plan: &ExperimentPlan, jobs: usize, timings: bool, out: &Path) -> Result<Report> {
    let logs = run_trials(env, plan, jobs, timings)?;
    let report = harness::aggregate(env, plan, &logs);
    write_outputs(out, env.catalog(), &logs, &report)?;
    Ok(report)
}
