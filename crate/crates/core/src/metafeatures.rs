//! Dataset metafeatures for metalearning.
//!
//! A [`MetafeatureVector`] has 45 fixed slots:
//!
//! * 5 size counts,
//! * 5 class-distribution statistics,
//! * 25 column aggregates: the mean/min/max/skew/kurtosis across columns of
//!   each column's mean, std, skew, kurtosis and distinct-value count,
//! * 5 statistics of the absolute Pearson correlation with the target,
//! * 5 miscellaneous ratios.
//!
//! Undefined statistics (kurtosis of a constant column, correlation with a
//! constant target, ...) are `None`, never NaN. Every computation sorts its
//! inputs first so the result does not depend on row or column order.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

pub const N_METAFEATURES: usize = 45;

pub const METAFEATURE_NAMES: [&str; N_METAFEATURES] = [
    "n_instances",
    "n_features",
    "n_classes",
    "n_numeric_features",
    "n_categorical_features",
    "majority_class_fraction",
    "minority_class_fraction",
    "class_entropy",
    "class_imbalance_ratio",
    "mean_class_fraction",
    "feature_mean_mean",
    "feature_mean_min",
    "feature_mean_max",
    "feature_mean_skew",
    "feature_mean_kurtosis",
    "feature_std_mean",
    "feature_std_min",
    "feature_std_max",
    "feature_std_skew",
    "feature_std_kurtosis",
    "feature_skew_mean",
    "feature_skew_min",
    "feature_skew_max",
    "feature_skew_skew",
    "feature_skew_kurtosis",
    "feature_kurtosis_mean",
    "feature_kurtosis_min",
    "feature_kurtosis_max",
    "feature_kurtosis_skew",
    "feature_kurtosis_kurtosis",
    "feature_distinct_mean",
    "feature_distinct_min",
    "feature_distinct_max",
    "feature_distinct_skew",
    "feature_distinct_kurtosis",
    "corr_with_target_mean",
    "corr_with_target_min",
    "corr_with_target_max",
    "corr_with_target_std",
    "corr_with_target_frac_gt_0_5",
    "missing_fraction",
    "feature_entropy_mean",
    "log_n_instances",
    "log_n_features",
    "features_to_instances_ratio",
];

/// Looks up the slot index of a metafeature name.
pub fn slot(name: &str) -> Option<usize> {
    METAFEATURE_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetafeatureVector {
    pub dataset_id: String,
    values: Vec<Option<f64>>,
}

impl MetafeatureVector {
    /// Builds a vector from 45 values in [`METAFEATURE_NAMES`] order.
    pub fn new(dataset_id: impl Into<String>, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != N_METAFEATURES {
            return Err(Error::Validation(alloc::format!(
                "expected {N_METAFEATURES} metafeatures, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| v.is_some_and(|x| !x.is_finite())) {
            return Err(Error::Validation(alloc::format!(
                "metafeature `{}` is not finite",
                METAFEATURE_NAMES[i]
            )));
        }
        Ok(MetafeatureVector { dataset_id: dataset_id.into(), values })
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        slot(name).and_then(|i| self.values[i])
    }

    /// Same values under a different dataset id.
    pub fn renamed(&self, dataset_id: impl Into<String>) -> Self {
        MetafeatureVector { dataset_id: dataset_id.into(), values: self.values.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }
}

/// A labeled tabular dataset, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
    pub target: Vec<String>,
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.target.len()
    }
}

struct ColumnSummary {
    mean: Option<f64>,
    std: Option<f64>,
    skew: Option<f64>,
    kurtosis: Option<f64>,
    distinct: f64,
    entropy: Option<f64>,
    missing: usize,
    abs_corr: Option<f64>,
}

fn sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs
}

fn entropy_of_counts<I: IntoIterator<Item = usize>>(counts: I, total: usize) -> f64 {
    let total = total as f64;
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * libm::log(p);
        }
    }
    h
}

const ENTROPY_BINS: usize = 10;

/// Numeric encoding of the class labels: the label values themselves when
/// all parse as numbers, otherwise rank by descending frequency (ties by
/// label).
fn encode_target(target: &[String], counts: &BTreeMap<&str, usize>) -> Vec<f64> {
    let numeric: Option<Vec<f64>> = target.iter().map(|t| t.trim().parse::<f64>().ok().filter(|x| x.is_finite())).collect();
    if let Some(values) = numeric {
        return values;
    }
    let mut by_freq: Vec<(&str, usize)> = counts.iter().map(|(k, v)| (*k, *v)).collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let rank: BTreeMap<&str, f64> = by_freq.iter().enumerate().map(|(i, (k, _))| (*k, i as f64)).collect();
    target.iter().map(|t| rank[t.as_str()]).collect()
}

fn summarize(column: &Column, y: &[f64]) -> ColumnSummary {
    let n = column.len();
    // (encoded value, target) for present cells; distinct count; entropy
    let (pairs, distinct, entropy): (Vec<(f64, f64)>, usize, Option<f64>) = match column {
        Column::Numeric(cells) => {
            let pairs: Vec<(f64, f64)> = cells
                .iter()
                .zip(y)
                .filter_map(|(c, &t)| c.filter(|x| x.is_finite()).map(|x| (x, t)))
                .collect();
            let xs = sorted(pairs.iter().map(|p| p.0).collect());
            let mut distinct = 0;
            for (i, x) in xs.iter().enumerate() {
                if i == 0 || *x != xs[i - 1] {
                    distinct += 1;
                }
            }
            let entropy = if xs.is_empty() {
                None
            } else {
                let (lo, hi) = (xs[0], xs[xs.len() - 1]);
                if hi <= lo {
                    Some(0.0)
                } else {
                    let mut bins = [0usize; ENTROPY_BINS];
                    for x in &xs {
                        let b = (((x - lo) / (hi - lo)) * ENTROPY_BINS as f64) as usize;
                        bins[b.min(ENTROPY_BINS - 1)] += 1;
                    }
                    Some(entropy_of_counts(bins, xs.len()))
                }
            };
            (pairs, distinct, entropy)
        }
        Column::Categorical(cells) => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for c in cells.iter().flatten() {
                *counts.entry(c.as_str()).or_default() += 1;
            }
            let present: usize = counts.values().sum();
            let pairs: Vec<(f64, f64)> = cells
                .iter()
                .zip(y)
                .filter_map(|(c, &t)| c.as_ref().map(|c| (counts[c.as_str()] as f64 / present as f64, t)))
                .collect();
            let entropy = (present > 0).then(|| entropy_of_counts(counts.values().copied(), present));
            (pairs, counts.len(), entropy)
        }
    };
    let mut pairs = pairs;
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    ColumnSummary {
        mean: math::mean(&xs),
        std: math::std_dev(&xs),
        skew: math::skewness(&xs),
        kurtosis: math::excess_kurtosis(&xs),
        distinct: distinct as f64,
        entropy,
        missing: n - xs.len(),
        abs_corr: if xs.len() >= 2 { math::pearson(&xs, &ys).map(libm::fabs) } else { None },
    }
}

/// `[mean, min, max, skew, kurtosis]` of the defined values.
fn aggregate(values: impl Iterator<Item = Option<f64>>) -> [Option<f64>; 5] {
    let xs = sorted(values.flatten().collect());
    if xs.is_empty() {
        return [None; 5];
    }
    [
        math::mean(&xs),
        xs.first().copied(),
        xs.last().copied(),
        math::skewness(&xs),
        math::excess_kurtosis(&xs),
    ]
}

/// Computes the 45-slot metafeature vector of a labeled table.
pub fn compute_metafeatures(dataset_id: &str, table: &Table) -> Result<MetafeatureVector> {
    let n = table.n_rows();
    let m = table.columns.len();
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput(alloc::format!(
            "table `{dataset_id}` needs at least one row and one feature column"
        )));
    }
    if let Some(bad) = table.columns.iter().position(|c| c.len() != n) {
        return Err(Error::Validation(alloc::format!(
            "column {bad} of `{dataset_id}` has {} cells, expected {n}",
            table.columns[bad].len()
        )));
    }

    let mut class_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &table.target {
        *class_counts.entry(t.as_str()).or_default() += 1;
    }
    let y = encode_target(&table.target, &class_counts);
    let summaries: Vec<ColumnSummary> = table.columns.iter().map(|c| summarize(c, &y)).collect();

    let n_numeric = table.columns.iter().filter(|c| matches!(c, Column::Numeric(_))).count();
    let n_classes = class_counts.len();
    let majority = *class_counts.values().max().expect("n > 0") as f64;
    let minority = *class_counts.values().min().expect("n > 0") as f64;

    let mut v: Vec<Option<f64>> = Vec::with_capacity(N_METAFEATURES);
    v.extend([
        Some(n as f64),
        Some(m as f64),
        Some(n_classes as f64),
        Some(n_numeric as f64),
        Some((m - n_numeric) as f64),
        Some(majority / n as f64),
        Some(minority / n as f64),
        Some(entropy_of_counts(class_counts.values().copied(), n)),
        Some(majority / minority),
        Some(1.0 / n_classes as f64),
    ]);
    v.extend(aggregate(summaries.iter().map(|s| s.mean)));
    v.extend(aggregate(summaries.iter().map(|s| s.std)));
    v.extend(aggregate(summaries.iter().map(|s| s.skew)));
    v.extend(aggregate(summaries.iter().map(|s| s.kurtosis)));
    v.extend(aggregate(summaries.iter().map(|s| Some(s.distinct))));

    let corrs = sorted(summaries.iter().filter_map(|s| s.abs_corr).collect());
    if corrs.is_empty() {
        v.extend([None; 5]);
    } else {
        let above = corrs.iter().filter(|c| **c > 0.5).count();
        v.extend([
            math::mean(&corrs),
            corrs.first().copied(),
            corrs.last().copied(),
            math::std_dev(&corrs),
            Some(above as f64 / corrs.len() as f64),
        ]);
    }

    let missing: usize = summaries.iter().map(|s| s.missing).sum();
    let entropies = sorted(summaries.iter().filter_map(|s| s.entropy).collect());
    v.extend([
        Some(missing as f64 / (n * m) as f64),
        math::mean(&entropies),
        Some(libm::log(n as f64)),
        Some(libm::log(m as f64)),
        Some(m as f64 / n as f64),
    ]);
    debug_assert_eq!(v.len(), N_METAFEATURES);
    MetafeatureVector::new(dataset_id.to_string(), v)
}

/// Per-slot mean and standard deviation over a collection of vectors, used
/// to z-score slots before measuring distances.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl NormStats {
    pub fn from_vectors<'a, I>(vectors: I) -> Self
    where
        I: IntoIterator<Item = &'a MetafeatureVector>,
    {
        let mut columns: Vec<Vec<f64>> = (0..N_METAFEATURES).map(|_| Vec::new()).collect();
        for v in vectors {
            for (col, x) in columns.iter_mut().zip(v.values()) {
                if let Some(x) = x {
                    col.push(*x);
                }
            }
        }
        let mut mean = Vec::with_capacity(N_METAFEATURES);
        let mut sd = Vec::with_capacity(N_METAFEATURES);
        for col in columns {
            let col = sorted(col);
            mean.push(math::mean(&col).unwrap_or(0.0));
            sd.push(math::std_dev(&col).unwrap_or(0.0));
        }
        NormStats { mean, sd }
    }

    fn z(&self, slot: usize, value: Option<f64>) -> f64 {
        match value {
            Some(x) if self.sd[slot] > 0.0 => (x - self.mean[slot]) / self.sd[slot],
            _ => 0.0,
        }
    }
}

/// Euclidean distance between z-scored vectors; a missing slot is imputed
/// with the mean (z = 0).
pub fn metafeature_distance(x: &MetafeatureVector, y: &MetafeatureVector, norm: &NormStats) -> f64 {
    let mut acc = 0.0;
    for i in 0..N_METAFEATURES {
        let d = norm.z(i, x.values[i]) - norm.z(i, y.values[i]);
        acc += d * d;
    }
    libm::sqrt(acc)
}
