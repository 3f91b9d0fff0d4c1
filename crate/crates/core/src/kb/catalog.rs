use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{AlgorithmConfig, ConfigSpace};
use crate::{Error, Result};

/// Dense index of a configuration within a [`Catalog`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigKey(pub u32);

impl ConfigKey {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// The enumerated configuration space with dense keys.
///
/// Keys follow enumeration order; `id_rank` gives each key's position in
/// canonical-id order, which is the tie-break used everywhere.
#[derive(Debug, Clone)]
pub struct Catalog {
    space: ConfigSpace,
    configs: Vec<AlgorithmConfig>,
    by_id: BTreeMap<String, ConfigKey>,
    id_rank: Vec<u32>,
    algorithms: Vec<String>,
    algorithm_of: Vec<u32>,
    members: Vec<Vec<ConfigKey>>,
}

impl Catalog {
    pub fn new(space: ConfigSpace) -> Result<Self> {
        let configs = space.enumerate();
        if configs.is_empty() {
            return Err(Error::EmptyInput("configuration space has no configs".into()));
        }
        let by_id: BTreeMap<String, ConfigKey> = configs
            .iter()
            .enumerate()
            .map(|(i, c)| (String::from(c.id()), ConfigKey(i as u32)))
            .collect();
        let mut id_rank = alloc::vec![0u32; configs.len()];
        for (rank, key) in by_id.values().enumerate() {
            id_rank[key.index()] = rank as u32;
        }
        let algorithms: Vec<String> = space.algorithms().map(String::from).collect();
        let mut members = alloc::vec![Vec::new(); algorithms.len()];
        let mut algorithm_of = Vec::with_capacity(configs.len());
        for (i, c) in configs.iter().enumerate() {
            let a = algorithms.iter().position(|n| n == c.algorithm()).expect("enumerated from space");
            members[a].push(ConfigKey(i as u32));
            algorithm_of.push(a as u32);
        }
        // algorithms whose whole grid is excluded never get drawn
        let keep: Vec<bool> = members.iter().map(|m| !m.is_empty()).collect();
        let mut remap = Vec::with_capacity(algorithms.len());
        let mut next = 0u32;
        for k in &keep {
            remap.push(next);
            if *k {
                next += 1;
            }
        }
        let algorithms = algorithms.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(a, _)| a).collect();
        let members = members.into_iter().filter(|m| !m.is_empty()).collect();
        let algorithm_of = algorithm_of.into_iter().map(|a| remap[a as usize]).collect();
        Ok(Catalog { space, configs, by_id, id_rank, algorithms, algorithm_of, members })
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = ConfigKey> {
        (0..self.configs.len() as u32).map(ConfigKey)
    }

    pub fn config(&self, key: ConfigKey) -> &AlgorithmConfig {
        &self.configs[key.index()]
    }

    pub fn key_of(&self, id: &str) -> Option<ConfigKey> {
        self.by_id.get(id).copied()
    }

    pub fn key(&self, config: &AlgorithmConfig) -> Result<ConfigKey> {
        self.key_of(config.id())
            .ok_or_else(|| Error::Validation(alloc::format!("config `{}` is not in the space", config.id())))
    }

    /// Position of the key's canonical id in sorted id order.
    pub fn id_rank(&self, key: ConfigKey) -> u32 {
        self.id_rank[key.index()]
    }

    /// Algorithms with at least one config, in name order.
    pub fn algorithms(&self) -> &[String] {
        &self.algorithms
    }

    pub fn algorithm_index(&self, key: ConfigKey) -> usize {
        self.algorithm_of[key.index()] as usize
    }

    pub fn members(&self, algorithm_index: usize) -> &[ConfigKey] {
        &self.members[algorithm_index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_rank_orders_by_canonical_id() {
        let cat = Catalog::new(ConfigSpace::synthetic(2, 12)).unwrap();
        let mut keys: Vec<ConfigKey> = cat.keys().collect();
        keys.sort_by_key(|k| cat.id_rank(*k));
        for w in keys.windows(2) {
            assert!(cat.config(w[0]).id() < cat.config(w[1]).id());
        }
        // "p=10" sorts before "p=2"
        assert!(cat.id_rank(ConfigKey(10)) < cat.id_rank(ConfigKey(2)));
    }

    #[test]
    fn membership() {
        let cat = Catalog::new(ConfigSpace::synthetic(3, 4)).unwrap();
        assert_eq!(cat.algorithms().len(), 3);
        assert_eq!(cat.members(1).len(), 4);
        assert_eq!(cat.algorithm_index(ConfigKey(5)), 1);
        assert_eq!(cat.key_of("alg02|p=3"), Some(ConfigKey(11)));
    }

    #[test]
    fn empty_space_is_an_error() {
        assert!(Catalog::new(ConfigSpace::new()).is_err());
    }
}
