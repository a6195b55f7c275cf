//! Policies: observation-conditional strategies over the environment's
//! candidate moves.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use breachsim_core::env::{Env, JointAction};
use breachsim_core::model::Role;

use crate::beam::{beam_search, BeamSpec};
use crate::net::Mlp;

pub trait Policy: Send + Sync {
    fn id(&self) -> &str;
    fn act(&self, env: &Env, role: Role, rng: &mut ChaCha8Rng) -> JointAction;
}

/// Does nothing every step.
pub struct PassPolicy;

impl Policy for PassPolicy {
    fn id(&self) -> &str {
        "pass"
    }

    fn act(&self, _env: &Env, role: Role, _rng: &mut ChaCha8Rng) -> JointAction {
        JointAction::pass(role)
    }
}

/// Uniform choice among the role's valid single-device moves plus pass.
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn id(&self) -> &str {
        "random"
    }

    fn act(&self, env: &Env, role: Role, rng: &mut ChaCha8Rng) -> JointAction {
        let flat: Vec<_> = env
            .candidates(role)
            .into_iter()
            .flat_map(|(_, v)| v)
            .collect();
        let i = rng.gen_range(0..=flat.len());
        if i == flat.len() {
            JointAction::pass(role)
        } else {
            flat[i].to_action(role)
        }
    }
}

/// Batch-evaluate Q(obs, a) for a list of joint actions.
pub fn critic_scores(critic: &Mlp, env: &Env, obs: &[f64], actions: &[JointAction]) -> Vec<f64> {
    if actions.is_empty() {
        return Vec::new();
    }
    let enc_w = critic.input_width() - obs.len();
    let mut rows = Vec::with_capacity(actions.len() * critic.input_width());
    for a in actions {
        rows.extend_from_slice(obs);
        let enc = env.encode_action(a);
        debug_assert_eq!(enc.len(), enc_w);
        rows.extend_from_slice(&enc);
    }
    let x = Array2::from_shape_vec((actions.len(), critic.input_width()), rows)
        .expect("row construction");
    critic
        .forward(&x)
        .expect("width checked")
        .column(0)
        .to_vec()
}

/// A stationary policy wrapping a trained critic: at every step it runs the
/// coordinate-ascent beam search on the current observation.
pub struct CriticPolicy {
    id: String,
    pub critic: Arc<Mlp>,
    pub spec: BeamSpec,
}

impl CriticPolicy {
    pub fn new(id: impl Into<String>, critic: Arc<Mlp>, spec: BeamSpec) -> CriticPolicy {
        CriticPolicy {
            id: id.into(),
            critic,
            spec,
        }
    }
}

impl Policy for CriticPolicy {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&self, env: &Env, role: Role, rng: &mut ChaCha8Rng) -> JointAction {
        let obs = env.observation(role);
        let per_device = env.candidates(role);
        let critic = Arc::clone(&self.critic);
        let mut score =
            move |actions: &[JointAction]| critic_scores(&critic, env, &obs, actions);
        beam_search(role, &per_device, &mut score, &self.spec, rng)
    }
}

/// A mixed strategy over policies; one component is drawn per episode.
#[derive(Clone)]
pub struct MixturePolicy {
    pub entries: Vec<(Arc<dyn Policy>, f64)>,
}

impl MixturePolicy {
    pub fn new(entries: Vec<(Arc<dyn Policy>, f64)>) -> MixturePolicy {
        assert!(!entries.is_empty(), "mixture must have at least one entry");
        MixturePolicy { entries }
    }

    pub fn degenerate(policy: Arc<dyn Policy>) -> MixturePolicy {
        MixturePolicy {
            entries: vec![(policy, 1.0)],
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Arc<dyn Policy> {
        let total: f64 = self.entries.iter().map(|(_, w)| w).sum();
        let roll = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        for (p, w) in &self.entries {
            acc += w;
            if roll < acc {
                return Arc::clone(p);
            }
        }
        Arc::clone(&self.entries.last().unwrap().0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use breachsim_core::env::{EnvConfig, ScenarioData};
    use breachsim_core::seeds::rng_from;
    use crate::net::OutputActivation;

    fn tiny_env() -> (Arc<ScenarioData>, Env) {
        let mut cfg = EnvConfig::volt_typhoon();
        cfg.devices = 5;
        cfg.max_net_size = 8;
        cfg.num_attacker_owned = 2;
        cfg.domain_controllers = 1;
        cfg.steps = 6;
        cfg.detector.burn_in_steps = 2;
        cfg.detector.subsample = 8;
        cfg.detector.trees = 10;
        let scenario = ScenarioData::prepare(cfg, 17).unwrap();
        let env = Env::reset(&scenario, 3).unwrap();
        (scenario, env)
    }

    #[test]
    fn pass_policy_passes() {
        let (_, env) = tiny_env();
        let a = PassPolicy.act(&env, Role::Defender, &mut rng_from(1, &[]));
        assert!(a.is_pass());
    }

    #[test]
    fn random_policy_actions_validate() {
        let (_, mut env) = tiny_env();
        let mut rng = rng_from(2, &[]);
        loop {
            let d = RandomPolicy.act(&env, Role::Defender, &mut rng);
            let a = RandomPolicy.act(&env, Role::Attacker, &mut rng);
            env.validate_action(&d).unwrap();
            env.validate_action(&a).unwrap();
            if env.step(&d, &a).unwrap().done {
                break;
            }
        }
    }

    #[test]
    fn critic_policy_actions_validate_and_are_deterministic() {
        let (_, env) = tiny_env();
        let obs_w = env.observation(Role::Defender).len();
        let enc_w = env.encode_action(&JointAction::pass(Role::Defender)).len();
        let mut rng = rng_from(5, &[]);
        let critic = Arc::new(Mlp::new(
            &[obs_w + enc_w, 16, 1],
            OutputActivation::Linear,
            5,
            &mut rng,
        ));
        let policy = CriticPolicy::new("c", critic, BeamSpec::evaluation(5));
        let a1 = policy.act(&env, Role::Defender, &mut rng_from(9, &[]));
        let a2 = policy.act(&env, Role::Defender, &mut rng_from(9, &[]));
        assert_eq!(a1, a2);
        env.validate_action(&a1).unwrap();
    }

    #[test]
    fn mixture_sampling_follows_weights() {
        let mix = MixturePolicy::new(vec![
            (Arc::new(PassPolicy) as Arc<dyn Policy>, 0.0),
            (Arc::new(RandomPolicy) as Arc<dyn Policy>, 1.0),
        ]);
        let mut rng = rng_from(7, &[]);
        for _ in 0..20 {
            assert_eq!(mix.sample(&mut rng).id(), "random");
        }
    }
}
