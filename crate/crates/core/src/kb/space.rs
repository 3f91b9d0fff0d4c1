use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::params::{check_token, AlgorithmConfig, ParamValue};
use crate::{Error, Result};

/// The allowed values of one hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub param: String,
    pub values: Vec<ParamValue>,
}

/// Excludes every config of `algorithm` whose parameters match all `when`
/// pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub algorithm: String,
    pub when: BTreeMap<String, ParamValue>,
}

impl Constraint {
    pub fn excludes(&self, config: &AlgorithmConfig) -> bool {
        config.algorithm() == self.algorithm
            && self.when.iter().all(|(name, value)| {
                config.params().get(name).is_some_and(|v| v.same_value(value))
            })
    }
}

/// Per-algorithm hyperparameter grids plus exclusion constraints.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub entries: BTreeMap<String, Vec<ParamGrid>>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

impl ConfigSpace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an algorithm with its grids, checking names and duplicate values.
    pub fn with_algorithm<I, S>(mut self, algorithm: &str, grids: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<ParamValue>)>,
        S: Into<String>,
    {
        let grids = grids
            .into_iter()
            .map(|(param, values)| ParamGrid { param: param.into(), values })
            .collect();
        self.insert_algorithm(algorithm, grids)?;
        Ok(self)
    }

    pub fn insert_algorithm(&mut self, algorithm: &str, grids: Vec<ParamGrid>) -> Result<()> {
        check_token(algorithm)?;
        let mut seen: Vec<&str> = Vec::new();
        for grid in &grids {
            check_token(&grid.param)?;
            if seen.contains(&grid.param.as_str()) {
                return Err(Error::Validation(format!(
                    "parameter `{}` listed twice for {algorithm}",
                    grid.param
                )));
            }
            seen.push(&grid.param);
            if grid.values.is_empty() {
                return Err(Error::Validation(format!(
                    "parameter `{}` of {algorithm} has no values",
                    grid.param
                )));
            }
            for (i, v) in grid.values.iter().enumerate() {
                // surface bad tokens now rather than at id construction
                AlgorithmConfig::from_pairs(algorithm, [(grid.param.clone(), v.clone())])?;
                if grid.values[..i].iter().any(|w| w.same_value(v)) {
                    return Err(Error::Validation(format!(
                        "value {v} listed twice for {algorithm}.{}",
                        grid.param
                    )));
                }
            }
        }
        self.entries.insert(algorithm.to_string(), grids);
        Ok(())
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Self {
        self.constraints.push(constraint);
        self
    }

    pub fn algorithms(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Size of the raw grid product for one algorithm, ignoring constraints.
    pub fn grid_product(&self, algorithm: &str) -> Option<usize> {
        self.entries
            .get(algorithm)
            .map(|grids| grids.iter().map(|g| g.values.len()).product())
    }

    /// Maps loosely typed parameter values onto the grid's own values
    /// (`C=1` becomes `C=1.0` when the grid holds floats) and validates the
    /// result.
    pub fn canonicalize(
        &self,
        algorithm: &str,
        params: &BTreeMap<String, ParamValue>,
    ) -> Result<AlgorithmConfig> {
        let grids = self
            .entries
            .get(algorithm)
            .ok_or_else(|| Error::Validation(format!("unknown algorithm `{algorithm}`")))?;
        let mut canonical = BTreeMap::new();
        for grid in grids {
            let given = params.get(&grid.param).ok_or_else(|| {
                Error::Validation(format!("{algorithm} is missing parameter `{}`", grid.param))
            })?;
            let value = grid.values.iter().find(|v| v.same_value(given)).ok_or_else(|| {
                Error::Validation(format!(
                    "value {given} for {algorithm}.{} is not in the grid",
                    grid.param
                ))
            })?;
            canonical.insert(grid.param.clone(), value.clone());
        }
        if let Some(extra) = params.keys().find(|k| !canonical.contains_key(*k)) {
            return Err(Error::Validation(format!("{algorithm} has no parameter `{extra}`")));
        }
        let config = AlgorithmConfig::new(algorithm, canonical)?;
        if self.constraints.iter().any(|c| c.excludes(&config)) {
            return Err(Error::Validation(format!(
                "config `{}` is excluded by a constraint",
                config.id()
            )));
        }
        Ok(config)
    }

    /// Checks that a config belongs to the space exactly as given.
    pub fn validate(&self, config: &AlgorithmConfig) -> Result<()> {
        let canonical = self
            .canonicalize(config.algorithm(), config.params())
            .map_err(|e| match e {
                Error::Validation(msg) => Error::Validation(format!("{}: {msg}", config.id())),
                other => other,
            })?;
        if canonical.id() != config.id() {
            return Err(Error::Validation(format!(
                "config `{}` is not canonical (expected `{}`)",
                config.id(),
                canonical.id()
            )));
        }
        Ok(())
    }

    /// Every constraint-satisfying config exactly once: algorithms by name,
    /// then an odometer over parameters in name order (last name fastest),
    /// values in grid order.
    pub fn enumerate(&self) -> Vec<AlgorithmConfig> {
        let mut out = Vec::new();
        for (algorithm, grids) in &self.entries {
            let mut sorted: Vec<&ParamGrid> = grids.iter().collect();
            sorted.sort_by(|a, b| a.param.cmp(&b.param));
            let mut digits = vec![0usize; sorted.len()];
            'odometer: loop {
                let params = sorted
                    .iter()
                    .zip(&digits)
                    .map(|(g, &i)| (g.param.clone(), g.values[i].clone()))
                    .collect();
                let config = AlgorithmConfig::new(algorithm.as_str(), params)
                    .expect("grid tokens are validated on insert");
                if !self.constraints.iter().any(|c| c.excludes(&config)) {
                    out.push(config);
                }
                let mut pos = sorted.len();
                loop {
                    if pos == 0 {
                        break 'odometer;
                    }
                    pos -= 1;
                    digits[pos] += 1;
                    if digits[pos] < sorted[pos].values.len() {
                        break;
                    }
                    digits[pos] = 0;
                }
            }
        }
        out
    }

    /// Compact synthetic space: `n_algorithms` algorithms named `alg00`,
    /// `alg01`, ... each with one integer parameter `p` in `0..per_algorithm`.
    pub fn synthetic(n_algorithms: usize, per_algorithm: usize) -> Self {
        let mut space = ConfigSpace::new();
        for i in 0..n_algorithms {
            let values = (0..per_algorithm as i64).map(ParamValue::Int).collect();
            space
                .insert_algorithm(&format!("alg{i:02}"), vec![ParamGrid { param: "p".into(), values }])
                .expect("synthetic names are valid");
        }
        space
    }

    /// The 12-algorithm scikit-learn grid used with the PMLB benchmark.
    /// Constraints are left empty; the raw product is 9284 configs.
    pub fn pmlb() -> Self {
        use ParamValue::{Bool, Null};
        fn f(xs: &[f64]) -> Vec<ParamValue> {
            xs.iter().map(|&x| ParamValue::Float(x)).collect()
        }
        fn i(xs: &[i64]) -> Vec<ParamValue> {
            xs.iter().map(|&x| ParamValue::Int(x)).collect()
        }
        fn s(xs: &[&str]) -> Vec<ParamValue> {
            xs.iter().map(|&x| ParamValue::from(x)).collect()
        }
        let tf = || vec![Bool(true), Bool(false)];
        let n_estimators = || i(&[10, 50, 100, 500, 1000]);
        let min_weight = || f(&[0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5]);
        let max_features = || {
            let mut v = f(&[0.1, 0.25, 0.5, 0.75]);
            v.extend([ParamValue::from("log2"), Null, ParamValue::from("sqrt")]);
            v
        };
        let criterion = || s(&["entropy", "gini"]);
        let nb_alpha = || f(&[0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 5.0, 10.0, 25.0, 50.0]);
        let lr_c: Vec<f64> = (1..=40).map(|k| k as f64 * 0.5).collect();

        let build = || -> Result<ConfigSpace> {
            ConfigSpace::new()
                .with_algorithm(
                    "AdaBoostClassifier",
                    [
                        ("learning_rate", f(&[0.01, 0.1, 0.5, 1.0, 10.0, 50.0, 100.0])),
                        ("n_estimators", n_estimators()),
                    ],
                )?
                .with_algorithm(
                    "BernoulliNB",
                    [
                        ("alpha", nb_alpha()),
                        ("fit_prior", tf()),
                        ("binarize", f(&[0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0])),
                    ],
                )?
                .with_algorithm(
                    "DecisionTreeClassifier",
                    [
                        ("min_weight_fraction_leaf", min_weight()),
                        ("max_features", max_features()),
                        ("criterion", criterion()),
                    ],
                )?
                .with_algorithm(
                    "ExtraTreesClassifier",
                    [
                        ("n_estimators", n_estimators()),
                        ("min_weight_fraction_leaf", min_weight()),
                        ("max_features", max_features()),
                        ("criterion", criterion()),
                    ],
                )?
                .with_algorithm(
                    "GradientBoostingClassifier",
                    [
                        ("loss", s(&["deviance"])),
                        ("learning_rate", f(&[0.01, 0.1, 0.5, 1.0, 10.0])),
                        ("n_estimators", n_estimators()),
                        ("max_depth", {
                            let mut v = i(&[1, 2, 3, 4, 5, 10, 20, 50]);
                            v.push(Null);
                            v
                        }),
                        ("max_features", vec![ParamValue::from("log2"), ParamValue::from("sqrt"), Null]),
                    ],
                )?
                .with_algorithm(
                    "KNeighborsClassifier",
                    [
                        ("n_neighbors", (1..=25).map(ParamValue::Int).collect()),
                        ("weights", s(&["uniform", "distance"])),
                    ],
                )?
                .with_algorithm(
                    "LogisticRegression",
                    [
                        ("C", f(&lr_c)),
                        ("penalty", s(&["l2", "l1"])),
                        ("fit_intercept", tf()),
                        ("dual", tf()),
                    ],
                )?
                .with_algorithm("MultinomialNB", [("alpha", nb_alpha()), ("fit_prior", tf())])?
                .with_algorithm(
                    "PassiveAggressiveClassifier",
                    [
                        ("C", f(&[0.0, 0.001, 0.01, 0.1, 0.5, 1.0, 10.0, 50.0, 100.0])),
                        ("loss", s(&["hinge", "squared_hinge"])),
                        ("fit_intercept", tf()),
                    ],
                )?
                .with_algorithm(
                    "RandomForestClassifier",
                    [
                        ("n_estimators", n_estimators()),
                        ("min_weight_fraction_leaf", min_weight()),
                        ("max_features", max_features()),
                        ("criterion", criterion()),
                    ],
                )?
                .with_algorithm(
                    "SGDClassifier",
                    [
                        ("loss", s(&["hinge", "perceptron", "log", "squared_hinge", "modified_huber"])),
                        ("penalty", s(&["elasticnet"])),
                        ("alpha", f(&[0.0, 0.001, 0.01])),
                        ("learning_rate", s(&["constant", "invscaling"])),
                        ("fit_intercept", tf()),
                        ("l1_ratio", f(&[0.0, 0.25, 0.5, 0.75, 1.0])),
                        ("eta0", f(&[0.01, 0.1, 1.0])),
                        ("power_t", f(&[0.0, 0.1, 0.5, 1.0, 10.0, 50.0, 100.0])),
                    ],
                )?
                .with_algorithm(
                    "SVC",
                    [
                        ("C", f(&[0.01])),
                        ("gamma", f(&[0.01])),
                        ("kernel", s(&["poly"])),
                        ("degree", i(&[2, 3])),
                        ("coef0", f(&[0.0, 0.1, 0.5, 1.0, 10.0, 50.0, 100.0])),
                    ],
                )
        };
        build().expect("built-in grid is valid")
    }
}
