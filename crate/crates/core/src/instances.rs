//! Seeded random instances for property checks and the verification harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{ResourceKind, Scenario};
use crate::oracle::{brute_force_optimal, Optimum};

/// SplitMix64 finalizer; gives independent-looking per-trial seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shape of generated instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceShape {
    pub apps: (usize, usize),
    pub resources: (usize, usize),
    pub slots: (u32, u32),
    /// Only keep draws whose total slot count is at least the number of
    /// applications.
    pub fits_everyone: bool,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            apps: (2, 6),
            resources: (2, 5),
            slots: (1, 3),
            fits_everyone: true,
        }
    }
}

/// A random single-period assignment problem with a known optimum.
#[derive(Debug, Clone)]
pub struct Instance {
    pub values: Vec<Vec<f64>>,
    pub resources: Vec<ResourceKind>,
    pub optimum: Optimum,
}

impl Instance {
    pub fn slots(&self) -> Vec<u32> {
        self.resources.iter().map(|r| r.slots).collect()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Default epsilon: 1e-3 of the largest valuation.
    pub fn epsilon(&self) -> f64 {
        1e-3 * self.max_value()
    }

    pub fn to_scenario(&self) -> Scenario {
        let mut s = Scenario::from_matrix(self.resources.clone(), &self.values, 1);
        s.config.epsilon = Some(self.epsilon());
        s
    }
}

fn resources(slots: &[u32]) -> Vec<ResourceKind> {
    slots
        .iter()
        .enumerate()
        .map(|(j, &s)| ResourceKind {
            id: format!("r{}", j + 1),
            label: format!("R{}", j + 1),
            slots: s,
        })
        .collect()
}

/// Draws uniform valuations on [0, 1) until the welfare optimum is unique.
pub fn random_instance(shape: InstanceShape, seed: u64) -> Instance {
    let mut rng = rng(seed);
    loop {
        let n = rng.random_range(shape.apps.0..=shape.apps.1);
        let k = rng.random_range(shape.resources.0..=shape.resources.1);
        let slots: Vec<u32> = (0..k)
            .map(|_| rng.random_range(shape.slots.0..=shape.slots.1))
            .collect();
        if shape.fits_everyone && slots.iter().sum::<u32>() < n as u32 {
            continue;
        }
        let values: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.random::<f64>()).collect())
            .collect();
        let optimum = brute_force_optimal(&values, &slots).expect("instances are small");
        if optimum.is_unique(1e-9) {
            return Instance {
                values,
                resources: resources(&slots),
                optimum,
            };
        }
    }
}
