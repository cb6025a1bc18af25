//! Pass@k policy-optimisation advantage estimators, plus small tabular
//! environments (a multi-answer bandit and grid mazes) used to compare them.

pub mod advantage;
pub mod analysis;
pub mod cli;
pub mod combinat;
pub mod error;
pub mod maze;
pub mod policy;
pub mod rewards;
pub mod trainer;

pub use advantage::{
    estimate, AdvantageVector, EstimatorKind, EstimatorSpec, GroupAssignment, OutcomeBatch,
};
pub use error::{Error, Result};

/// Derives an independent seed from a base seed and a list of stream labels.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix(base);
    for &p in parts {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
