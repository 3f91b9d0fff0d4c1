use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{Catalog, ConfigSpace, ExperimentResult, KnowledgeBase};
use crate::metafeatures::{compute_metafeatures, Column, Table};
use crate::{stream_id, substream, Error, Result};

/// Parameters of a planted low-rank knowledge base.
///
/// Scores are `clip(base_score + u_d . v_a + noise, 0, 1)` with
/// `u_d, v_a ~ N(0, s^2 I)` where `s` is chosen so that `u_d . v_a` has
/// standard deviation `signal_sd`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_datasets: usize,
    pub rank: usize,
    pub noise_sd: f64,
    pub seed: u64,
    pub base_score: f64,
    pub signal_sd: f64,
    /// Rows of the small table generated per dataset to derive metafeatures
    /// from; 0 disables metafeatures.
    pub meta_rows: usize,
}

impl SynthParams {
    pub fn new(n_datasets: usize, rank: usize, noise_sd: f64, seed: u64) -> Self {
        SynthParams { n_datasets, rank, noise_sd, seed, base_score: 0.6, signal_sd: 0.1, meta_rows: 40 }
    }

    pub fn factor_sd(&self) -> f64 {
        libm::pow(self.signal_sd * self.signal_sd / self.rank as f64, 0.25)
    }
}

/// A synthetic knowledge base together with its planted ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticKb {
    pub kb: KnowledgeBase,
    pub dataset_ids: Vec<String>,
    pub dataset_factors: Vec<Vec<f64>>,
    /// Indexed like the catalog built from the same space.
    pub config_factors: Vec<Vec<f64>>,
    /// Noiseless score matrix, `[dataset][config]`, before clipping.
    pub latent: Vec<Vec<f64>>,
    /// Argmax config id of the noiseless matrix per dataset.
    pub planted_best: BTreeMap<String, String>,
}

fn normal_vec(rng: &mut crate::Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Generates a fully observed planted-factor knowledge base over `space`.
pub fn synthesize_kb(params: &SynthParams, space: &ConfigSpace) -> Result<SyntheticKb> {
    if params.n_datasets == 0 {
        return Err(Error::EmptyInput("n_datasets must be at least 1".into()));
    }
    if params.rank == 0 {
        return Err(Error::Validation("rank must be at least 1".into()));
    }
    if !(params.noise_sd >= 0.0 && params.noise_sd.is_finite()) {
        return Err(Error::Validation(format!("noise_sd {} must be >= 0", params.noise_sd)));
    }
    let catalog = Catalog::new(space.clone())?;
    let sd = params.factor_sd();
    let width = format!("{}", params.n_datasets - 1).len().max(3);
    let dataset_ids: Vec<String> = (0..params.n_datasets).map(|i| format!("syn{i:0width$}")).collect();

    let mut rng = substream(params.seed, stream_id("synth.datasets"));
    let dataset_factors: Vec<Vec<f64>> = (0..params.n_datasets).map(|_| normal_vec(&mut rng, params.rank, sd)).collect();
    let mut rng = substream(params.seed, stream_id("synth.configs"));
    let config_factors: Vec<Vec<f64>> = catalog.keys().map(|_| normal_vec(&mut rng, params.rank, sd)).collect();

    let latent: Vec<Vec<f64>> = dataset_factors
        .iter()
        .map(|u| {
            config_factors
                .iter()
                .map(|v| params.base_score + u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
                .collect()
        })
        .collect();

    let mut planted_best = BTreeMap::new();
    for (d, row) in latent.iter().enumerate() {
        let mut best = 0;
        for (a, x) in row.iter().enumerate() {
            let key = crate::kb::ConfigKey(a as u32);
            let cur = crate::kb::ConfigKey(best as u32);
            if *x > row[best] || (*x == row[best] && catalog.id_rank(key) < catalog.id_rank(cur)) {
                best = a;
            }
        }
        planted_best.insert(dataset_ids[d].clone(), String::from(catalog.config(crate::kb::ConfigKey(best as u32)).id()));
    }

    let mut kb = KnowledgeBase::new(space.clone());
    let mut noise = substream(params.seed, stream_id("synth.noise"));
    for (d, row) in latent.iter().enumerate() {
        for (a, mean) in row.iter().enumerate() {
            let e_train: f64 = noise.sample(StandardNormal);
            let e_hold: f64 = noise.sample(StandardNormal);
            let train = (mean + params.noise_sd * e_train).clamp(0.0, 1.0);
            let hold = (mean + params.noise_sd * e_hold).clamp(0.0, 1.0);
            let config = catalog.config(crate::kb::ConfigKey(a as u32)).clone();
            kb.insert(ExperimentResult::new(dataset_ids[d].clone(), config, train, hold))?;
        }
    }

    if params.meta_rows > 0 {
        let mut rng = substream(params.seed, stream_id("synth.metafeatures"));
        for (d, u) in dataset_factors.iter().enumerate() {
            let table = latent_table(&mut rng, u, sd, params.meta_rows);
            kb.set_metafeatures(compute_metafeatures(&dataset_ids[d], &table)?);
        }
    }

    Ok(SyntheticKb { kb, dataset_ids, dataset_factors, config_factors, latent, planted_best })
}

/// A small table whose column locations encode the dataset factors, so that
/// metafeature similarity tracks latent similarity.
fn latent_table(rng: &mut crate::Rng, u: &[f64], sd: f64, rows: usize) -> Table {
    let mut columns = Vec::new();
    let mut first = Vec::new();
    for (j, uj) in u.iter().enumerate() {
        let loc = 3.0 * uj / sd;
        let col: Vec<f64> = (0..rows).map(|_| loc + rng.sample::<f64, _>(StandardNormal)).collect();
        if j == 0 {
            first = col.clone();
        }
        columns.push(Column::Numeric(col.into_iter().map(Some).collect()));
    }
    let target = first
        .iter()
        .map(|x| if x + rng.sample::<f64, _>(StandardNormal) > 0.0 { String::from("1") } else { String::from("0") })
        .collect();
    Table { names: (0..u.len()).map(|j| format!("z{j}")).collect(), columns, target }
}
