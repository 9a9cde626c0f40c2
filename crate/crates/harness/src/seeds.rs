//! Labeled seed derivation from the master seed.

use fedamp_core::rng::derive_seed;

/// Human-readable form of the rule, recorded in `meta.txt`.
pub const DERIVATION: &str = "replication r: base = derive(master, \"replication/r\"); \
population = derive(base, \"population\"); schedule = derive(base, \"schedule\"); run = derive(base, \"run\"); \
bounds = derive(master, \"bounds\"); derive = FNV-1a of the label mixed into the seed with splitmix64";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSet {
    pub replication: usize,
    pub base: u64,
    pub population: u64,
    pub schedule: u64,
    pub run: u64,
}

pub fn seed_set(master: u64, replication: usize) -> SeedSet {
    let base = derive_seed(master, &format!("replication/{replication}"));
    SeedSet {
        replication,
        base,
        population: derive_seed(base, "population"),
        schedule: derive_seed(base, "schedule"),
        run: derive_seed(base, "run"),
    }
}

pub fn bounds_seed(master: u64) -> u64 {
    derive_seed(master, "bounds")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_separate_streams() {
        let a = seed_set(1, 0);
        assert_eq!(a, seed_set(1, 0));
        assert_ne!(a, seed_set(1, 1));
        assert_ne!(a, seed_set(2, 0));
        let all = [a.base, a.population, a.schedule, a.run, bounds_seed(1)];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }
}
