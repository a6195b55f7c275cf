//! Baseline strategies: pass (no defense / no attack), random, and the
//! preset defender that scans every 7 steps and runs a full restore every 30
//! steps (one step per day).

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use breachsim_core::env::{ActionKind, Env, JointAction};
use breachsim_core::model::Role;
use breachsim_solver::policy::{MixturePolicy, PassPolicy, Policy, RandomPolicy};

use crate::error::CliError;

/// Scheduled heuristic defense. Steps are 1-indexed for the schedule: a
/// checkpoint on step 1 gives the step-30 restore a target, scans fire on
/// multiples of `scan_every`, the restore on multiples of `restore_every`.
pub struct PresetPolicy {
    pub scan_every: u64,
    pub restore_every: u64,
}

impl Default for PresetPolicy {
    fn default() -> Self {
        PresetPolicy {
            scan_every: 7,
            restore_every: 30,
        }
    }
}

impl PresetPolicy {
    fn visible_devices(env: &Env) -> Vec<usize> {
        env.devices()
            .iter()
            .enumerate()
            .filter(|(_, d)| d.online && !d.attacker_owned)
            .map(|(i, _)| i)
            .collect()
    }
}

impl Policy for PresetPolicy {
    fn id(&self) -> &str {
        "preset"
    }

    fn act(&self, env: &Env, role: Role, _rng: &mut ChaCha8Rng) -> JointAction {
        if role != Role::Defender {
            return JointAction::pass(role);
        }
        let step_number = env.step_index() + 1;
        let devices = Self::visible_devices(env);
        if devices.is_empty() {
            return JointAction::pass(role);
        }
        let kind = if step_number == 1 {
            ActionKind::Checkpoint
        } else if step_number % self.restore_every == 0 {
            ActionKind::Restore
        } else if step_number % self.scan_every == 0 {
            ActionKind::Scan
        } else {
            return JointAction::pass(role);
        };
        JointAction {
            role,
            kind,
            devices,
            exploits: vec![],
            apps: vec![],
        }
    }
}

/// Resolve a strategy identifier into a mixture. Accepts the baselines
/// (`pass` / `no-attack` / `no-defense`, `random`, `preset`) and `doar:<dir>`
/// for a saved solve.
pub fn resolve_strategy(id: &str, role: Role) -> Result<MixturePolicy, CliError> {
    match id {
        "pass" | "no-attack" | "no-defense" => {
            Ok(MixturePolicy::degenerate(Arc::new(PassPolicy)))
        }
        "random" => Ok(MixturePolicy::degenerate(Arc::new(RandomPolicy))),
        "preset" => {
            if role != Role::Defender {
                return Err(CliError::config("the preset baseline is a defender strategy"));
            }
            Ok(MixturePolicy::degenerate(Arc::new(PresetPolicy::default())))
        }
        other => {
            if let Some(dir) = other.strip_prefix("doar:") {
                breachsim_solver::doar::load_profile_mixture(std::path::Path::new(dir), role)
                    .map_err(|e| CliError::config(format!("cannot load {other}: {e}")))
            } else {
                Err(CliError::config(format!(
                    "unknown strategy `{other}` (expected pass|random|preset|doar:<dir>)"
                )))
            }
        }
    }
}

/// Display label used in cross-table headers.
pub fn strategy_label(id: &str, role: Role) -> String {
    match (id, role) {
        ("pass", Role::Attacker) | ("no-attack", _) => "no_attack".into(),
        ("pass", Role::Defender) | ("no-defense", _) => "no_defense".into(),
        (other, _) => {
            if other.starts_with("doar:") {
                "doar".into()
            } else {
                other.into()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use breachsim_core::env::{EnvConfig, ScenarioData};
    use breachsim_core::seeds::rng_from;

    #[test]
    fn preset_schedule_is_deterministic() {
        let mut cfg = EnvConfig::volt_typhoon();
        cfg.detector.burn_in_steps = 3;
        cfg.detector.subsample = 16;
        let scenario = ScenarioData::prepare(cfg, 8).unwrap();
        for seed in [1u64, 2, 3] {
            let mut env = breachsim_core::env::Env::reset(&scenario, seed).unwrap();
            let preset = PresetPolicy::default();
            let mut rng = rng_from(seed, &[]);
            let mut scans = Vec::new();
            let mut restores = Vec::new();
            let mut checkpoints = Vec::new();
            loop {
                let a = preset.act(&env, Role::Defender, &mut rng);
                let step_number = env.step_index() + 1;
                match a.kind {
                    ActionKind::Scan => scans.push(step_number),
                    ActionKind::Restore => restores.push(step_number),
                    ActionKind::Checkpoint => checkpoints.push(step_number),
                    _ => {}
                }
                let done = env
                    .step(&a, &JointAction::pass(Role::Attacker))
                    .unwrap()
                    .done;
                if done {
                    break;
                }
            }
            assert_eq!(scans, vec![7, 14, 21, 28], "seed {seed}");
            assert_eq!(restores, vec![30], "seed {seed}");
            assert_eq!(checkpoints, vec![1], "seed {seed}");
        }
    }

    #[test]
    fn unknown_strategy_is_a_config_error() {
        let err = resolve_strategy("nonsense", Role::Defender).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn preset_is_defender_only() {
        assert!(resolve_strategy("preset", Role::Attacker).is_err());
        assert!(resolve_strategy("preset", Role::Defender).is_ok());
    }
}
