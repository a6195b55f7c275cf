//! Uniform-sampling FIFO replay buffer.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use breachsim_core::env::CandidateAction;

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action_enc: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    /// Flat per-device candidate list at the next state (grouped by device on
    /// use); needed to rebuild the greedy target action.
    pub next_candidates: Vec<CandidateAction>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    data: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0);
        ReplayBuffer {
            data: VecDeque::new(),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() == self.capacity {
            self.data.pop_front();
        }
        self.data.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// Uniform sample with replacement.
    pub fn sample<'a>(&'a self, rng: &mut ChaCha8Rng, k: usize) -> Vec<&'a Transition> {
        (0..k).map(|_| &self.data[rng.gen_range(0..self.data.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use breachsim_core::seeds::rng_from;

    fn t(reward: f64) -> Transition {
        Transition {
            obs: vec![0.0],
            action_enc: vec![0.0],
            reward,
            next_obs: vec![0.0],
            done: false,
            next_candidates: vec![],
        }
    }

    #[test]
    fn eviction_is_strictly_fifo() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(t(i as f64));
        }
        assert_eq!(b.len(), 3);
        let rewards: Vec<f64> = (0..3).map(|i| b.get(i).reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn never_exceeds_capacity() {
        let mut b = ReplayBuffer::new(16);
        for i in 0..1000 {
            b.push(t(i as f64));
            assert!(b.len() <= 16);
        }
    }

    #[test]
    fn sampling_is_uniformish_and_seeded() {
        let mut b = ReplayBuffer::new(4);
        for i in 0..4 {
            b.push(t(i as f64));
        }
        let s1: Vec<f64> = b.sample(&mut rng_from(1, &[]), 8).iter().map(|t| t.reward).collect();
        let s2: Vec<f64> = b.sample(&mut rng_from(1, &[]), 8).iter().map(|t| t.reward).collect();
        assert_eq!(s1, s2);
    }
}
