//! Knowledge base of experiment results and the configuration space they
//! are drawn from.

mod base;
mod catalog;
mod params;
mod space;
mod synth;

pub use base::{ExperimentResult, KnowledgeBase};
pub(crate) use base::check_score;
pub use catalog::{Catalog, ConfigKey};
pub use params::{AlgorithmConfig, ParamValue};
pub use space::{ConfigSpace, Constraint, ParamGrid};
pub use synth::{synthesize_kb, SynthParams, SyntheticKb};
