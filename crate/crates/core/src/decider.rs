//! Every random choice made by the dynamics goes through a [`Decider`], so the
//! same step code serves seeded simulation, forced-coin tests and exhaustive
//! outcome enumeration.

use rand::Rng;

use crate::attachment::{sample_parent, AttachError, CombinationFactor};
use crate::state::{CkpState, NodeId};

pub trait Decider {
    /// `true` with probability `p`. Degenerate probabilities consume no randomness.
    fn coin(&mut self, p: f64) -> bool;
    /// Uniform index in `0..n`, `n >= 1`.
    fn uniform(&mut self, n: usize) -> usize;
    /// Draw from the combination factor.
    fn combination(&mut self, m: &CombinationFactor) -> usize;
    /// One parent drawn proportionally to attachment weight.
    fn parent(&mut self, state: &CkpState) -> Result<NodeId, AttachError>;
}

/// Decider backed by a random number generator.
#[derive(Debug, Clone)]
pub struct RngDecider<R> {
    pub rng: R,
}

impl<R: Rng> RngDecider<R> {
    pub fn new(rng: R) -> Self {
        Self { rng }
    }
}

impl<R: Rng> Decider for RngDecider<R> {
    fn coin(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.rng.gen::<f64>() < p
        }
    }

    fn uniform(&mut self, n: usize) -> usize {
        if n <= 1 {
            0
        } else {
            self.rng.gen_range(0..n)
        }
    }

    fn combination(&mut self, m: &CombinationFactor) -> usize {
        m.sample(&mut self.rng)
    }

    fn parent(&mut self, state: &CkpState) -> Result<NodeId, AttachError> {
        sample_parent(state, &mut self.rng)
    }
}

/// Wraps a decider and overrides every coin with a fixed outcome.
#[derive(Debug, Clone)]
pub struct ForcedCoins<D> {
    pub inner: D,
    pub outcome: bool,
}

impl<D: Decider> Decider for ForcedCoins<D> {
    fn coin(&mut self, _p: f64) -> bool {
        self.outcome
    }

    fn uniform(&mut self, n: usize) -> usize {
        self.inner.uniform(n)
    }

    fn combination(&mut self, m: &CombinationFactor) -> usize {
        self.inner.combination(m)
    }

    fn parent(&mut self, state: &CkpState) -> Result<NodeId, AttachError> {
        self.inner.parent(state)
    }
}

/// Replays a fixed list of coin outcomes in order, then defers to `inner`.
#[derive(Debug, Clone)]
pub struct CoinScript<D> {
    pub inner: D,
    pub coins: std::collections::VecDeque<bool>,
}

impl<D> CoinScript<D> {
    pub fn new(inner: D, coins: &[bool]) -> Self {
        Self { inner, coins: coins.iter().copied().collect() }
    }
}

impl<D: Decider> Decider for CoinScript<D> {
    fn coin(&mut self, p: f64) -> bool {
        match self.coins.pop_front() {
            Some(c) => c,
            None => self.inner.coin(p),
        }
    }

    fn uniform(&mut self, n: usize) -> usize {
        self.inner.uniform(n)
    }

    fn combination(&mut self, m: &CombinationFactor) -> usize {
        self.inner.combination(m)
    }

    fn parent(&mut self, state: &CkpState) -> Result<NodeId, AttachError> {
        self.inner.parent(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_coins_consume_nothing() {
        let mut a = RngDecider::new(ChaCha8Rng::seed_from_u64(7));
        let mut b = RngDecider::new(ChaCha8Rng::seed_from_u64(7));
        assert!(!a.coin(0.0));
        assert!(a.coin(1.0));
        assert_eq!(a.rng.gen::<u64>(), b.rng.gen::<u64>());
    }

    #[test]
    fn script_then_fallback() {
        let inner = ForcedCoins { inner: RngDecider::new(ChaCha8Rng::seed_from_u64(1)), outcome: true };
        let mut d = CoinScript::new(inner, &[false, true, false]);
        let seen: Vec<bool> = (0..5).map(|_| d.coin(0.5)).collect();
        assert_eq!(seen, vec![false, true, false, true, true]);
    }
}
