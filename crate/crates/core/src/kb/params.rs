use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A single hyperparameter value from a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    /// Value equality that treats `Int(1)` and `Float(1.0)` as the same
    /// number; grid files and result files disagree on this routinely.
    pub fn same_value(&self, other: &ParamValue) -> bool {
        match (self, other) {
            (ParamValue::Int(i), ParamValue::Float(f)) | (ParamValue::Float(f), ParamValue::Int(i)) => {
                *i as f64 == *f
            }
            _ => self == other,
        }
    }

    /// Parses the canonical rendering produced by `Display`.
    pub fn parse_canonical(s: &str) -> ParamValue {
        match s {
            "none" => return ParamValue::Null,
            "true" => return ParamValue::Bool(true),
            "false" => return ParamValue::Bool(false),
            _ => {}
        }
        if let Ok(i) = s.parse::<i64>() {
            return ParamValue::Int(i);
        }
        let looks_float = s.contains(['.', 'e', 'E']) || s == "inf" || s == "-inf";
        if looks_float {
            if let Ok(f) = s.parse::<f64>() {
                return ParamValue::Float(f);
            }
        }
        ParamValue::Str(s.to_string())
    }

    fn check_token(&self) -> Result<()> {
        match self {
            ParamValue::Float(f) if !f.is_finite() => {
                Err(Error::Validation(format!("non-finite parameter value {f}")))
            }
            ParamValue::Str(s) => check_token(s),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Null => f.write_str("none"),
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            // Debug gives the shortest round-trip form and keeps the `.0`
            ParamValue::Float(x) => write!(f, "{x:?}"),
            ParamValue::Str(s) => f.write_str(s),
        }
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<bool> for ParamValue {
    fn from(v: bool) -> Self {
        ParamValue::Bool(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Str(v.to_string())
    }
}

pub(crate) fn check_token(s: &str) -> Result<()> {
    if s.is_empty() || s.contains(['|', '=', '\t', '\n']) {
        Err(Error::Validation(format!("invalid name or value `{s}`")))
    } else {
        Ok(())
    }
}

/// An algorithm plus one full hyperparameter assignment.
///
/// The canonical id is `algorithm|name=value|...` with parameters in
/// lexicographic name order, so equal configurations always share an id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct AlgorithmConfig {
    algorithm: String,
    params: BTreeMap<String, ParamValue>,
    id: String,
}

#[derive(Serialize, Deserialize)]
struct RawConfig {
    algorithm: String,
    params: BTreeMap<String, ParamValue>,
}

impl TryFrom<RawConfig> for AlgorithmConfig {
    type Error = Error;
    fn try_from(raw: RawConfig) -> Result<Self> {
        AlgorithmConfig::new(raw.algorithm, raw.params)
    }
}

impl From<AlgorithmConfig> for RawConfig {
    fn from(c: AlgorithmConfig) -> Self {
        RawConfig { algorithm: c.algorithm, params: c.params }
    }
}

impl AlgorithmConfig {
    pub fn new(algorithm: impl Into<String>, params: BTreeMap<String, ParamValue>) -> Result<Self> {
        let algorithm = algorithm.into();
        check_token(&algorithm)?;
        let mut id = algorithm.clone();
        for (name, value) in &params {
            check_token(name)?;
            value.check_token()?;
            id.push('|');
            id.push_str(name);
            id.push('=');
            id.push_str(&value.to_string());
        }
        Ok(AlgorithmConfig { algorithm, params, id })
    }

    /// Builds a config from `(name, value)` pairs in any order.
    pub fn from_pairs<I, K, V>(algorithm: &str, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<ParamValue>,
    {
        let params = pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect();
        Self::new(algorithm, params)
    }

    /// Inverse of [`AlgorithmConfig::id`].
    pub fn from_id(id: &str) -> Result<Self> {
        let mut parts = id.split('|');
        let algorithm = parts.next().unwrap_or_default();
        let mut params = BTreeMap::new();
        for part in parts {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("malformed config id `{id}`")))?;
            params.insert(name.to_string(), ParamValue::parse_canonical(value));
        }
        let config = Self::new(algorithm, params)?;
        if config.id != id {
            return Err(Error::Validation(format!("non-canonical config id `{id}`")));
        }
        Ok(config)
    }

    pub fn algorithm(&self) -> &str {
        &self.algorithm
    }

    pub fn params(&self) -> &BTreeMap<String, ParamValue> {
        &self.params
    }

    pub fn id(&self) -> &str {
        &self.id
    }
}

impl fmt::Display for AlgorithmConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}
