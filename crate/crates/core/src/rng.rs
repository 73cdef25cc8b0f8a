//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha8 stream, keyed by a
//! run seed and a [`Purpose`]. Two streams with the same seed but different
//! purposes are independent, and changing how often one purpose draws never
//! perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Which `(x, a)` pair a learner updates.
    PairSelection = 1,
    /// Reward and next state drawn from the kernel.
    Transitions = 2,
    /// Next action drawn from the evaluated policy.
    TargetActions = 3,
    /// Random MDP construction.
    Generator = 4,
    /// Random test-case construction inside experiments.
    Cases = 5,
}

pub fn stream(seed: u64, purpose: Purpose) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}
