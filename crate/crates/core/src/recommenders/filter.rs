use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::kb::ConfigKey;

/// Per-dataset record of configs already recommended (or already run by
/// the user), so that no `(dataset, config)` pair is offered twice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepeatFilter {
    n_configs: usize,
    seen: BTreeMap<String, (Vec<bool>, usize)>,
}

impl RepeatFilter {
    pub fn new(n_configs: usize) -> Self {
        RepeatFilter { n_configs, seen: BTreeMap::new() }
    }

    pub fn contains(&self, dataset: &str, config: ConfigKey) -> bool {
        self.seen.get(dataset).is_some_and(|(bits, _)| bits[config.index()])
    }

    /// Returns `true` if the pair was not yet present.
    pub fn insert(&mut self, dataset: &str, config: ConfigKey) -> bool {
        let n = self.n_configs;
        let (bits, count) = self
            .seen
            .entry(String::from(dataset))
            .or_insert_with(|| (alloc::vec![false; n], 0));
        if bits[config.index()] {
            false
        } else {
            bits[config.index()] = true;
            *count += 1;
            true
        }
    }

    /// Number of configs still available for a dataset.
    pub fn remaining(&self, dataset: &str) -> usize {
        self.n_configs - self.seen.get(dataset).map_or(0, |(_, c)| *c)
    }

    pub fn filtered(&self, dataset: &str) -> impl Iterator<Item = ConfigKey> + '_ {
        self.seen
            .get(dataset)
            .into_iter()
            .flat_map(|(bits, _)| bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| ConfigKey(i as u32)))
    }

    pub fn n_configs(&self) -> usize {
        self.n_configs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_contains_remaining() {
        let mut f = RepeatFilter::new(3);
        assert!(!f.contains("d", ConfigKey(1)));
        assert!(f.insert("d", ConfigKey(1)));
        assert!(!f.insert("d", ConfigKey(1)));
        assert!(f.contains("d", ConfigKey(1)));
        assert!(!f.contains("e", ConfigKey(1)));
        assert_eq!(f.remaining("d"), 2);
        assert_eq!(f.remaining("e"), 3);
        assert_eq!(f.filtered("d").collect::<Vec<_>>(), [ConfigKey(1)]);
    }
}
