//! Zero-day information asymmetry: the common-knowledge exploit prior, the
//! attacker's private draw, reveal-on-use bookkeeping and ex-ante utility
//! aggregation.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Exploit;
use crate::seeds;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ZeroDayError {
    #[error("zero-day prior has no candidate exploits")]
    EmptyPrior,
    #[error("prior weights do not form a distribution")]
    BadWeights,
    #[error("ex-ante evaluation requested zero rollouts")]
    ZeroRollouts,
}

/// Common-knowledge distribution over candidate zero-day exploits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroDayPrior {
    pub templates: Vec<Exploit>,
    pub weights: Vec<f64>,
    /// Number of private draws the attacker holds (N_e); fixed to 1.
    pub num_draws: usize,
}

impl ZeroDayPrior {
    pub fn uniform(templates: Vec<Exploit>) -> Result<Self, ZeroDayError> {
        if templates.is_empty() {
            return Err(ZeroDayError::EmptyPrior);
        }
        let w = 1.0 / templates.len() as f64;
        let weights = vec![w; templates.len()];
        Ok(ZeroDayPrior {
            templates,
            weights,
            num_draws: 1,
        })
    }

    pub fn validate(&self) -> Result<(), ZeroDayError> {
        if self.templates.is_empty() {
            return Err(ZeroDayError::EmptyPrior);
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.len() != self.templates.len()
            || self.weights.iter().any(|&w| w < 0.0)
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(ZeroDayError::BadWeights);
        }
        Ok(())
    }

    /// Draw the index of the attacker's private zero-day.
    pub fn sample_index(&self, rng: &mut ChaCha8Rng) -> Result<usize, ZeroDayError> {
        self.validate()?;
        let roll: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if roll < acc {
                return Ok(i);
            }
        }
        Ok(self.templates.len() - 1)
    }

    /// Draw the attacker's private zero-day exploit, marked as such.
    pub fn sample_zero_day(&self, rng: &mut ChaCha8Rng) -> Result<Exploit, ZeroDayError> {
        let idx = self.sample_index(rng)?;
        let mut e = self.templates[idx].clone();
        e.zero_day = true;
        Ok(e)
    }
}

/// Tracks which attack actions the defender knows about. The zero-day set is
/// the complement; it only shrinks within an episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeLedger {
    all: BTreeSet<usize>,
    known: BTreeSet<usize>,
}

impl KnowledgeLedger {
    pub fn new(all: impl IntoIterator<Item = usize>, known: impl IntoIterator<Item = usize>) -> Self {
        let all: BTreeSet<usize> = all.into_iter().collect();
        let known: BTreeSet<usize> = known.into_iter().filter(|e| all.contains(e)).collect();
        KnowledgeLedger { all, known }
    }

    pub fn is_known(&self, exploit: usize) -> bool {
        self.known.contains(&exploit)
    }

    /// First use of a zero-day adds it to the defender-known set, permanently.
    /// Revealing twice is idempotent.
    pub fn reveal_on_use(&mut self, exploit: usize) {
        if self.all.contains(&exploit) {
            self.known.insert(exploit);
        }
    }

    pub fn known(&self) -> impl Iterator<Item = usize> + '_ {
        self.known.iter().copied()
    }

    pub fn known_count(&self) -> usize {
        self.known.len()
    }

    /// A^z = A \ A^d.
    pub fn zero_day_set(&self) -> BTreeSet<usize> {
        self.all.difference(&self.known).copied().collect()
    }
}

/// Cost of using an exploit: finite for possessed exploits, infeasible for
/// zero-day parameterizations the attacker does not hold. The action layer
/// must never emit an infeasible exploit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExploitCost {
    Finite(f64),
    Infeasible,
}

pub fn exploit_cost(possessed: &BTreeSet<usize>, e: &Exploit) -> ExploitCost {
    if possessed.contains(&e.id) {
        ExploitCost::Finite(e.value)
    } else {
        ExploitCost::Infeasible
    }
}

/// Ex-ante utilities under the prior: a stratified Monte Carlo average over
/// the zero-day draw and rollout noise. `evaluate(z_index, seed)` must return
/// the (attacker, defender) utilities of one rollout with that zero-day; the
/// attacker side conditions on z, the defender side marginalizes.
pub fn ex_ante_utility(
    prior: &ZeroDayPrior,
    rollouts_per_z: usize,
    master_seed: u64,
    mut evaluate: impl FnMut(usize, u64) -> (f64, f64),
) -> Result<(f64, f64), ZeroDayError> {
    prior.validate()?;
    if rollouts_per_z == 0 {
        return Err(ZeroDayError::ZeroRollouts);
    }
    let mut attacker = 0.0;
    let mut defender = 0.0;
    for (z, &w) in prior.weights.iter().enumerate() {
        let mut att_z = 0.0;
        let mut def_z = 0.0;
        for k in 0..rollouts_per_z {
            let seed = seeds::derive_seed(master_seed, &[seeds::tag("exante"), z as u64, k as u64]);
            let (a, d) = evaluate(z, seed);
            att_z += a;
            def_z += d;
        }
        attacker += w * att_z / rollouts_per_z as f64;
        defender += w * def_z / rollouts_per_z as f64;
    }
    Ok((attacker, defender))
}
