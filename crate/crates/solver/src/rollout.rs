//! Episode rollouts and pairwise policy evaluation, with stratified ex-ante
//! averaging under a zero-day prior.

use std::sync::Arc;

use breachsim_core::env::{Env, EnvError, EpisodeLog, ScenarioData};
use breachsim_core::model::Role;
use breachsim_core::seeds::{derive_seed, rng_from, tag};
use breachsim_core::zeroday::ex_ante_utility;

use crate::policy::Policy;

/// Per-episode aggregates. Returns exclude the shaping term; the shaped
/// attacker return is tracked separately for training diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeStats {
    pub attacker_return: f64,
    pub attacker_return_shaped: f64,
    pub defender_return: f64,
    pub scans: usize,
    pub workloads_completed: usize,
    pub compromised_device_steps: usize,
    pub steps: u64,
    pub defensive_cost: f64,
    pub max_net_size: usize,
}

impl EpisodeStats {
    pub fn scans_per_step(&self) -> f64 {
        self.scans as f64 / self.steps.max(1) as f64
    }

    /// Mean fraction of device slots compromised per step.
    pub fn compromise_rate(&self) -> f64 {
        self.compromised_device_steps as f64
            / (self.steps.max(1) as f64 * self.max_net_size.max(1) as f64)
    }
}

pub fn rollout(
    scenario: &Arc<ScenarioData>,
    attacker: &dyn Policy,
    defender: &dyn Policy,
    seed: u64,
    forced_z: Option<usize>,
) -> Result<EpisodeStats, EnvError> {
    Ok(rollout_logged(scenario, attacker, defender, seed, forced_z)?.0)
}

pub fn rollout_logged(
    scenario: &Arc<ScenarioData>,
    attacker: &dyn Policy,
    defender: &dyn Policy,
    seed: u64,
    forced_z: Option<usize>,
) -> Result<(EpisodeStats, EpisodeLog), EnvError> {
    let mut env = Env::reset_with_zero_day(scenario, seed, forced_z)?;
    let mut att_rng = rng_from(seed, &[tag("att-policy")]);
    let mut def_rng = rng_from(seed, &[tag("def-policy")]);
    let mut stats = EpisodeStats {
        max_net_size: scenario.cfg.max_net_size,
        ..Default::default()
    };
    loop {
        let att_action = attacker.act(&env, Role::Attacker, &mut att_rng);
        let def_action = defender.act(&env, Role::Defender, &mut def_rng);
        let out = env.step(&def_action, &att_action)?;
        stats.attacker_return += out.attacker_reward;
        stats.attacker_return_shaped += out.attacker_reward + out.shaping;
        stats.defender_return += out.defender_reward;
        stats.scans += out.breakdown.scans;
        stats.workloads_completed += out.breakdown.workloads_completed;
        stats.compromised_device_steps += out.breakdown.compromised_count;
        stats.defensive_cost += out.breakdown.defender_cost_paid;
        stats.steps += 1;
        if out.done {
            break;
        }
    }
    Ok((stats, env.log.clone()))
}

/// Aggregate of repeated evaluations of one policy pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairStats {
    pub attacker_mean: f64,
    pub defender_mean: f64,
    pub attacker_std: f64,
    pub defender_std: f64,
    pub n: usize,
    pub scans_per_step: f64,
    pub workloads_completed: f64,
    pub compromise_rate: f64,
    pub defensive_cost: f64,
}

fn aggregate(samples: &[EpisodeStats]) -> PairStats {
    let n = samples.len().max(1) as f64;
    let att: Vec<f64> = samples.iter().map(|s| s.attacker_return).collect();
    let def: Vec<f64> = samples.iter().map(|s| s.defender_return).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let std = |v: &[f64], m: f64| {
        if v.len() < 2 {
            0.0
        } else {
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
        }
    };
    let (am, dm) = (mean(&att), mean(&def));
    PairStats {
        attacker_mean: am,
        defender_mean: dm,
        attacker_std: std(&att, am),
        defender_std: std(&def, dm),
        n: samples.len(),
        scans_per_step: samples.iter().map(|s| s.scans_per_step()).sum::<f64>() / n,
        workloads_completed: samples.iter().map(|s| s.workloads_completed as f64).sum::<f64>() / n,
        compromise_rate: samples.iter().map(|s| s.compromise_rate()).sum::<f64>() / n,
        defensive_cost: samples.iter().map(|s| s.defensive_cost).sum::<f64>() / n,
    }
}

/// Evaluate a policy pair over seeded rollouts. In zero-day scenarios the
/// rollouts stratify over the prior (the attacker conditions on its draw, the
/// defender marginalizes); otherwise they are plain repetitions.
pub fn evaluate_pair(
    scenario: &Arc<ScenarioData>,
    attacker: &dyn Policy,
    defender: &dyn Policy,
    rollouts: usize,
    master_seed: u64,
) -> Result<PairStats, EnvError> {
    assert!(rollouts > 0, "evaluation needs at least one rollout");
    let mut samples = Vec::new();
    match &scenario.prior {
        Some(prior) => {
            let per_z = (rollouts / prior.templates.len()).max(1);
            let mut failure: Option<EnvError> = None;
            {
                let eval = |z: usize, seed: u64| -> (f64, f64) {
                    match rollout(scenario, attacker, defender, seed, Some(z)) {
                        Ok(s) => {
                            samples.push(s);
                            (s.attacker_return, s.defender_return)
                        }
                        Err(e) => {
                            if failure.is_none() {
                                failure = Some(e);
                            }
                            (0.0, 0.0)
                        }
                    }
                };
                // the stratified seed schedule lives in the zero-day module
                ex_ante_utility(prior, per_z, master_seed, eval)?;
            }
            if let Some(e) = failure {
                return Err(e);
            }
        }
        None => {
            for k in 0..rollouts {
                let seed = derive_seed(master_seed, &[tag("rollout"), k as u64]);
                samples.push(rollout(scenario, attacker, defender, seed, None)?);
            }
        }
    }
    Ok(aggregate(&samples))
}

/// Evaluate a mixed-strategy pair: per run one component is drawn from each
/// mixture, and episode seeds depend only on the run index (and the zero-day
/// stratum), so different strategy pairs under one master seed share initial
/// conditions.
pub fn evaluate_mixture_pair(
    scenario: &Arc<ScenarioData>,
    attacker: &crate::policy::MixturePolicy,
    defender: &crate::policy::MixturePolicy,
    runs: usize,
    master_seed: u64,
) -> Result<PairStats, EnvError> {
    assert!(runs > 0);
    let mut pick_rng = rng_from(master_seed, &[tag("mixpick")]);
    let mut samples = Vec::new();
    for k in 0..runs {
        let att = attacker.sample(&mut pick_rng);
        let def = defender.sample(&mut pick_rng);
        match &scenario.prior {
            Some(prior) => {
                for z in 0..prior.templates.len() {
                    let seed = derive_seed(master_seed, &[tag("run"), k as u64, z as u64]);
                    samples.push(rollout(scenario, att.as_ref(), def.as_ref(), seed, Some(z))?);
                }
            }
            None => {
                let seed = derive_seed(master_seed, &[tag("run"), k as u64]);
                samples.push(rollout(scenario, att.as_ref(), def.as_ref(), seed, None)?);
            }
        }
    }
    Ok(aggregate(&samples))
}
