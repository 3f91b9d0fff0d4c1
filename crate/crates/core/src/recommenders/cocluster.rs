use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{rank_and_filter, validate_ratings, Rating, RatingMatrix, Recommendation, Recommender, RepeatFilter, Strategy, EMPTY_KB_SCORE};
use crate::kb::{Catalog, ConfigKey};
use crate::{Result, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct CoClusterParams {
    pub k_datasets: usize,
    pub k_configs: usize,
    pub iters: usize,
    /// Independent random initializations; the lowest final error wins.
    pub restarts: usize,
}

impl Default for CoClusterParams {
    fn default() -> Self {
        CoClusterParams { k_datasets: 3, k_configs: 3, iters: 20, restarts: 10 }
    }
}

/// Co-cluster assignment and the cluster averages derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CoClusterFit {
    /// Cluster per dataset index of the rating matrix.
    pub dataset_cluster: Vec<usize>,
    /// Cluster per config key; `None` for configs without ratings.
    pub config_cluster: Vec<Option<usize>>,
    pub k_datasets: usize,
    pub k_configs: usize,
    block_mean: Vec<f64>,
    dataset_cluster_mean: Vec<f64>,
    config_cluster_mean: Vec<f64>,
    /// Objective after initialization and after every iteration.
    pub objective_history: Vec<f64>,
}

impl CoClusterFit {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&0.0)
    }

    pub fn block_mean(&self, dc: usize, cc: usize) -> f64 {
        self.block_mean[dc * self.k_configs + cc]
    }

    pub fn dataset_cluster_mean(&self, dc: usize) -> f64 {
        self.dataset_cluster_mean[dc]
    }

    pub fn config_cluster_mean(&self, cc: usize) -> f64 {
        self.config_cluster_mean[cc]
    }

    fn refresh(&mut self, m: &RatingMatrix) {
        let (kd, ka) = (self.k_datasets, self.k_configs);
        let mut block = alloc::vec![(0.0, 0usize); kd * ka];
        let mut rows = alloc::vec![(0.0, 0usize); kd];
        let mut cols = alloc::vec![(0.0, 0usize); ka];
        for (d, a, r) in m.iter() {
            let dc = self.dataset_cluster[d as usize];
            let cc = self.config_cluster[a.index()].expect("rated config has a cluster");
            for slot in [&mut block[dc * ka + cc], &mut rows[dc], &mut cols[cc]] {
                slot.0 += r;
                slot.1 += 1;
            }
        }
        let mu = m.global_mean().unwrap_or(EMPTY_KB_SCORE);
        let avg = |(s, n): (f64, usize)| if n == 0 { mu } else { s / n as f64 };
        self.block_mean = block.into_iter().map(avg).collect();
        self.dataset_cluster_mean = rows.into_iter().map(avg).collect();
        self.config_cluster_mean = cols.into_iter().map(avg).collect();
    }

    fn estimate(&self, m: &RatingMatrix, d: u32, a: ConfigKey, dc: usize, cc: usize) -> f64 {
        let mu_d = m.dataset_mean(d).expect("dataset has ratings");
        let mu_a = m.config_mean(a).expect("config has ratings");
        self.block_mean(dc, cc) + (mu_a - self.config_cluster_mean[cc]) + (mu_d - self.dataset_cluster_mean[dc])
    }

    fn total_error(&self, m: &RatingMatrix) -> f64 {
        m.iter()
            .map(|(d, a, r)| {
                let cc = self.config_cluster[a.index()].expect("rated");
                let e = r - self.estimate(m, d, a, self.dataset_cluster[d as usize], cc);
                e * e
            })
            .sum()
    }
}

/// Sufficient statistics per block: rating count, sum of ratings, and sum of
/// `r - mu_a - mu_d`. The total reconstruction error is a function of these
/// alone, so the effect of moving one member is cheap to evaluate exactly.
struct BlockStats {
    kd: usize,
    ka: usize,
    mu: f64,
    sum_x2: f64,
    n: Vec<f64>,
    sr: Vec<f64>,
    sx: Vec<f64>,
}

impl BlockStats {
    fn new(m: &RatingMatrix, fit: &CoClusterFit) -> Self {
        let (kd, ka) = (fit.k_datasets, fit.k_configs);
        let mut s = BlockStats {
            kd,
            ka,
            mu: m.global_mean().unwrap_or(EMPTY_KB_SCORE),
            sum_x2: 0.0,
            n: alloc::vec![0.0; kd * ka],
            sr: alloc::vec![0.0; kd * ka],
            sx: alloc::vec![0.0; kd * ka],
        };
        for (d, a, r) in m.iter() {
            let x = residual(m, d, a, r);
            s.sum_x2 += x * x;
            let b = fit.dataset_cluster[d as usize] * ka + fit.config_cluster[a.index()].expect("rated");
            s.n[b] += 1.0;
            s.sr[b] += r;
            s.sx[b] += x;
        }
        s
    }

    fn shift(&mut self, b: usize, sign: f64, (n, sr, sx): (f64, f64, f64)) {
        self.n[b] += sign * n;
        self.sr[b] += sign * sr;
        self.sx[b] += sign * sx;
    }

    fn objective(&self) -> f64 {
        let avg = |s: f64, n: f64| if n > 0.0 { s / n } else { self.mu };
        let mut row = alloc::vec![(0.0, 0.0); self.kd];
        let mut col = alloc::vec![(0.0, 0.0); self.ka];
        for dc in 0..self.kd {
            for cc in 0..self.ka {
                let b = dc * self.ka + cc;
                row[dc].0 += self.sr[b];
                row[dc].1 += self.n[b];
                col[cc].0 += self.sr[b];
                col[cc].1 += self.n[b];
            }
        }
        let mut obj = self.sum_x2;
        for dc in 0..self.kd {
            for cc in 0..self.ka {
                let b = dc * self.ka + cc;
                if self.n[b] > 0.0 {
                    let t = avg(self.sr[b], self.n[b]) - avg(col[cc].0, col[cc].1) - avg(row[dc].0, row[dc].1);
                    obj += self.n[b] * t * t - 2.0 * t * self.sx[b];
                }
            }
        }
        obj
    }
}

fn residual(m: &RatingMatrix, d: u32, a: ConfigKey, r: f64) -> f64 {
    r - m.dataset_mean(d).expect("rated") - m.config_mean(a).expect("rated")
}

/// One sequential pass over the members of one side. Each member moves to
/// the cluster that lowers the total error the most; a move that would
/// leave its cluster empty is not considered. `contrib[i]` holds member
/// `i`'s statistics per cluster of the other side, and `block(own, other)`
/// maps to a block index.
fn sequential_pass(
    stats: &mut BlockStats,
    assign: &mut [usize],
    k: usize,
    contrib: &[Vec<(f64, f64, f64)>],
    block: impl Fn(usize, usize) -> usize,
) -> bool {
    let mut sizes = alloc::vec![0usize; k];
    for c in assign.iter() {
        sizes[*c] += 1;
    }
    let mut moved = false;
    let mut current_obj = stats.objective();
    for i in 0..assign.len() {
        let from = assign[i];
        if sizes[from] < 2 {
            continue;
        }
        let mut best = (current_obj, from);
        for to in (0..k).filter(|c| *c != from) {
            for (other, v) in contrib[i].iter().enumerate() {
                stats.shift(block(from, other), -1.0, *v);
                stats.shift(block(to, other), 1.0, *v);
            }
            let obj = stats.objective();
            for (other, v) in contrib[i].iter().enumerate() {
                stats.shift(block(to, other), -1.0, *v);
                stats.shift(block(from, other), 1.0, *v);
            }
            if obj < best.0 - 1e-12 * (1.0 + best.0.abs()) {
                best = (obj, to);
            }
        }
        if best.1 != from {
            let to = best.1;
            for (other, v) in contrib[i].iter().enumerate() {
                stats.shift(block(from, other), -1.0, *v);
                stats.shift(block(to, other), 1.0, *v);
            }
            sizes[from] -= 1;
            sizes[to] += 1;
            assign[i] = to;
            current_obj = best.0;
            moved = true;
        }
    }
    moved
}

fn shuffled_clusters(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out = alloc::vec![0; n];
    for (pos, i) in order.into_iter().enumerate() {
        out[i] = pos % k;
    }
    out
}

/// Alternating k-means-style co-clustering of the observed ratings.
///
/// Runs `restarts` independent fits and keeps the one with the lowest
/// final error (the earliest on ties). Each fit starts from a random
/// balanced assignment. Each iteration passes over the
/// datasets and then the configs, moving one member at a time to the
/// cluster that most reduces the squared reconstruction error. Clusters are
/// never emptied, and a half step whose recomputed error came out higher
/// (rounding only) is rolled back, so the objective never increases.
pub fn fit_coclusters(m: &RatingMatrix, params: &CoClusterParams, rng: &mut Rng) -> CoClusterFit {
    let mut best = fit_once(m, params, rng);
    for _ in 1..params.restarts {
        let next = fit_once(m, params, rng);
        if next.objective() < best.objective() {
            best = next;
        }
    }
    best
}

fn fit_once(m: &RatingMatrix, params: &CoClusterParams, rng: &mut Rng) -> CoClusterFit {
    let n_d = m.n_datasets();
    let rated: Vec<ConfigKey> = (0..m.n_configs() as u32).map(ConfigKey).filter(|a| !m.col(*a).is_empty()).collect();
    let kd = params.k_datasets.min(n_d).max(1);
    let ka = params.k_configs.min(rated.len()).max(1);
    let mut config_cluster = alloc::vec![None; m.n_configs()];
    for (a, c) in rated.iter().zip(shuffled_clusters(rated.len(), ka, rng)) {
        config_cluster[a.index()] = Some(c);
    }
    let mut fit = CoClusterFit {
        dataset_cluster: shuffled_clusters(n_d, kd, rng),
        config_cluster,
        k_datasets: kd,
        k_configs: ka,
        block_mean: Vec::new(),
        dataset_cluster_mean: Vec::new(),
        config_cluster_mean: Vec::new(),
        objective_history: Vec::new(),
    };
    fit.refresh(m);
    let mut objective = fit.total_error(m);
    fit.objective_history.push(objective);

    for _ in 0..params.iters {
        let mut moved = false;

        let snapshot = fit.clone();
        let contrib: Vec<Vec<(f64, f64, f64)>> = (0..n_d as u32)
            .map(|d| {
                let mut v = alloc::vec![(0.0, 0.0, 0.0); ka];
                for (a, r) in m.row(d) {
                    let slot = &mut v[fit.config_cluster[a.index()].expect("rated")];
                    slot.0 += 1.0;
                    slot.1 += r;
                    slot.2 += residual(m, d, *a, *r);
                }
                v
            })
            .collect();
        let mut stats = BlockStats::new(m, &fit);
        let mut rows = fit.dataset_cluster.clone();
        if sequential_pass(&mut stats, &mut rows, kd, &contrib, |own, other| own * ka + other) {
            fit.dataset_cluster = rows;
            fit.refresh(m);
            let next = fit.total_error(m);
            if next <= objective {
                objective = next;
                moved = true;
            } else {
                fit = snapshot;
            }
        }

        let snapshot = fit.clone();
        let contrib: Vec<Vec<(f64, f64, f64)>> = rated
            .iter()
            .map(|a| {
                let mut v = alloc::vec![(0.0, 0.0, 0.0); kd];
                for (d, r) in m.col(*a) {
                    let slot = &mut v[fit.dataset_cluster[*d as usize]];
                    slot.0 += 1.0;
                    slot.1 += r;
                    slot.2 += residual(m, *d, *a, *r);
                }
                v
            })
            .collect();
        let mut stats = BlockStats::new(m, &fit);
        let mut cols: Vec<usize> = rated.iter().map(|a| fit.config_cluster[a.index()].expect("rated")).collect();
        if sequential_pass(&mut stats, &mut cols, ka, &contrib, |own, other| other * ka + own) {
            for (a, c) in rated.iter().zip(cols) {
                fit.config_cluster[a.index()] = Some(c);
            }
            fit.refresh(m);
            let next = fit.total_error(m);
            if next <= objective {
                objective = next;
                moved = true;
            } else {
                fit = snapshot;
            }
        }

        fit.objective_history.push(objective);
        if !moved {
            break;
        }
    }
    fit
}

/// Co-clustering recommender, refit from scratch on every update.
#[derive(Debug, Clone)]
pub struct CoClustering {
    catalog: Arc<Catalog>,
    params: CoClusterParams,
    ratings: RatingMatrix,
    fit: Option<CoClusterFit>,
}

impl CoClustering {
    pub fn new(catalog: Arc<Catalog>, params: CoClusterParams) -> Self {
        let ratings = RatingMatrix::new(catalog.len());
        CoClustering { catalog, params, ratings, fit: None }
    }

    pub fn ratings(&self) -> &RatingMatrix {
        &self.ratings
    }

    pub fn fit(&self) -> Option<&CoClusterFit> {
        self.fit.as_ref()
    }

    /// Block estimate when both sides are clustered; otherwise the config
    /// mean, the dataset mean, or the global mean, whichever is known.
    pub fn predict(&self, a: ConfigKey, dataset: &str) -> f64 {
        let m = &self.ratings;
        let d = m.dataset_index(dataset).filter(|d| !m.row(*d).is_empty());
        let a_known = !m.col(a).is_empty();
        match (d, a_known, &self.fit) {
            (Some(d), true, Some(fit)) => {
                let cc = fit.config_cluster[a.index()].expect("rated");
                fit.estimate(m, d, a, fit.dataset_cluster[d as usize], cc)
            }
            (None, true, _) => m.config_mean(a).expect("rated"),
            (Some(d), false, _) => m.dataset_mean(d).expect("rated"),
            _ => m.global_mean().unwrap_or(EMPTY_KB_SCORE),
        }
    }
}

impl Recommender for CoClustering {
    fn strategy(&self) -> Strategy {
        Strategy::CoCluster
    }

    fn update(&mut self, ratings: &[Rating], rng: &mut Rng) -> Result<()> {
        validate_ratings(ratings, self.catalog.len())?;
        if ratings.is_empty() {
            return Ok(());
        }
        self.ratings.insert_batch(ratings.iter().map(|r| (r.dataset.as_str(), r.config, r.score)));
        self.fit = Some(fit_coclusters(&self.ratings, &self.params, rng));
        Ok(())
    }

    fn recommend(&mut self, dataset: &str, n: usize, filter: &mut RepeatFilter, _rng: &mut Rng) -> Result<Vec<Recommendation>> {
        let catalog = self.catalog.clone();
        rank_and_filter(&catalog, dataset, n, filter, |a| self.predict(a, dataset))
    }
}
