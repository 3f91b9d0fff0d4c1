use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::kb::ConfigKey;

/// Sparse dataset x config matrix of training scores with exact row,
/// column and global means.
#[derive(Debug, Clone)]
pub struct RatingMatrix {
    names: Vec<String>,
    index: BTreeMap<String, u32>,
    rows: Vec<BTreeMap<ConfigKey, f64>>,
    cols: Vec<BTreeMap<u32, f64>>,
    row_sum: Vec<f64>,
    col_sum: Vec<f64>,
    total: f64,
    count: usize,
}

/// Mean used when nothing at all has been rated.
pub const EMPTY_KB_SCORE: f64 = 0.5;

impl RatingMatrix {
    pub fn new(n_configs: usize) -> Self {
        RatingMatrix {
            names: Vec::new(),
            index: BTreeMap::new(),
            rows: Vec::new(),
            cols: alloc::vec![BTreeMap::new(); n_configs],
            row_sum: Vec::new(),
            col_sum: alloc::vec![0.0; n_configs],
            total: 0.0,
            count: 0,
        }
    }

    /// Interns a dataset name, creating an empty row if needed.
    pub fn intern(&mut self, dataset: &str) -> u32 {
        if let Some(&i) = self.index.get(dataset) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(String::from(dataset));
        self.index.insert(String::from(dataset), i);
        self.rows.push(BTreeMap::new());
        self.row_sum.push(0.0);
        i
    }

    /// Inserts or replaces a batch of ratings, then refreshes the sums of
    /// the touched rows and columns exactly.
    pub fn insert_batch<'a, I>(&mut self, ratings: I)
    where
        I: IntoIterator<Item = (&'a str, ConfigKey, f64)>,
    {
        let mut rows = BTreeSet::new();
        let mut cols = BTreeSet::new();
        for (dataset, config, score) in ratings {
            let d = self.intern(dataset);
            if self.rows[d as usize].insert(config, score).is_none() {
                self.count += 1;
            }
            self.cols[config.index()].insert(d, score);
            rows.insert(d);
            cols.insert(config);
        }
        for d in rows {
            self.row_sum[d as usize] = self.rows[d as usize].values().sum();
        }
        for a in cols {
            self.col_sum[a.index()] = self.cols[a.index()].values().sum();
        }
        self.total = self.row_sum.iter().sum();
    }

    pub fn dataset_index(&self, dataset: &str) -> Option<u32> {
        self.index.get(dataset).copied()
    }

    pub fn dataset_name(&self, d: u32) -> &str {
        &self.names[d as usize]
    }

    pub fn n_datasets(&self) -> usize {
        self.names.len()
    }

    pub fn n_configs(&self) -> usize {
        self.cols.len()
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn row(&self, d: u32) -> &BTreeMap<ConfigKey, f64> {
        &self.rows[d as usize]
    }

    pub fn col(&self, a: ConfigKey) -> &BTreeMap<u32, f64> {
        &self.cols[a.index()]
    }

    pub fn get(&self, d: u32, a: ConfigKey) -> Option<f64> {
        self.rows[d as usize].get(&a).copied()
    }

    pub fn global_mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.total / self.count as f64)
    }

    pub fn dataset_mean(&self, d: u32) -> Option<f64> {
        let n = self.rows[d as usize].len();
        (n > 0).then(|| self.row_sum[d as usize] / n as f64)
    }

    pub fn config_mean(&self, a: ConfigKey) -> Option<f64> {
        let n = self.cols[a.index()].len();
        (n > 0).then(|| self.col_sum[a.index()] / n as f64)
    }

    /// Cold-start ladder for a config on an unrated dataset:
    /// `mu_a`, then the global mean, then [`EMPTY_KB_SCORE`].
    pub fn config_fallback(&self, a: ConfigKey) -> f64 {
        self.config_mean(a).or_else(|| self.global_mean()).unwrap_or(EMPTY_KB_SCORE)
    }

    /// Iterates all ratings as `(dataset index, config, score)`.
    pub fn iter(&self) -> impl Iterator<Item = (u32, ConfigKey, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(d, row)| row.iter().map(move |(a, r)| (d as u32, *a, *r)))
    }
}
