//! Zero-day scenario assembly: regimes, possession constraints, reveal
//! bookkeeping and the known-zero-day flag.

use std::sync::Arc;

use breachsim_core::env::{ActionKind, Env, EnvConfig, JointAction, ScenarioData, VulnRegime};
use breachsim_core::model::Role;

fn prepare(regime: VulnRegime, candidates: usize, known: bool) -> Arc<ScenarioData> {
    let mut cfg = EnvConfig::volt_typhoon_zero_day(regime, candidates, known);
    cfg.detector.burn_in_steps = 3;
    cfg.detector.subsample = 16;
    cfg.detector.trees = 20;
    ScenarioData::prepare(cfg, 90).unwrap()
}

fn vulnerable_to(env: &Env, exploit: usize) -> usize {
    let scenario = env.scenario();
    env.devices()
        .iter()
        .take(scenario.cfg.devices)
        .filter(|d| {
            breachsim_core::model::config_matches(
                &scenario.layout,
                d.config,
                &scenario.exploits[exploit].requires,
            )
        })
        .count()
}

#[test]
fn fixed_regime_plants_constant_flaw_count() {
    let scenario = prepare(VulnRegime::Fixed, 5, false);
    let env = Env::reset(&scenario, 7).unwrap();
    // 10 flaws over the org, counted across all candidate templates
    let total: usize = (0..5)
        .map(|k| vulnerable_to(&env, scenario.n_common + k))
        .sum();
    assert_eq!(total, 10);
}

#[test]
fn submartingale_surface_grows_with_candidate_count() {
    let small = prepare(VulnRegime::Submartingale, 2, false);
    let large = prepare(VulnRegime::Submartingale, 8, false);
    let env_s = Env::reset(&small, 7).unwrap();
    let env_l = Env::reset(&large, 7).unwrap();
    // any drawn candidate exploits every planted flaw in this regime
    let z_s = small.n_common + env_s.zero_day_index().unwrap();
    let z_l = large.n_common + env_l.zero_day_index().unwrap();
    assert_eq!(vulnerable_to(&env_s, z_s), 2);
    assert_eq!(vulnerable_to(&env_l, z_l), 8);
}

#[test]
fn attacker_possession_is_common_plus_one_draw() {
    let scenario = prepare(VulnRegime::Fixed, 4, false);
    let env = Env::reset(&scenario, 3).unwrap();
    let z = env.zero_day_index().unwrap();
    let expected: Vec<usize> = vec![0, scenario.n_common + z];
    assert_eq!(env.possession().iter().copied().collect::<Vec<_>>(), expected);
    // the action layer never proposes unpossessed zero-day parameterizations
    for (_, cands) in env.candidates(Role::Attacker) {
        for c in cands {
            if let Some(e) = c.exploit {
                assert!(env.possession().contains(&e));
            }
        }
    }
}

#[test]
fn known_flag_matches_reveal_at_reset() {
    let known = prepare(VulnRegime::Fixed, 3, true);
    let unknown = prepare(VulnRegime::Fixed, 3, false);
    let env_known = Env::reset_with_zero_day(&known, 11, Some(1)).unwrap();
    let mut env_unknown = Env::reset_with_zero_day(&unknown, 11, Some(1)).unwrap();
    assert_ne!(env_known.knowledge(), env_unknown.knowledge());
    // ledger equality once the unknown-side z is revealed
    let mut k = env_unknown.knowledge().clone();
    k.reveal_on_use(unknown.n_common + 1);
    assert_eq!(&k, env_known.knowledge());
    // and knowledge grows monotonically within an episode
    let before = env_unknown.knowledge().known_count();
    let target = env_unknown
        .devices()
        .iter()
        .position(|d| d.known_to_attacker && !d.compromised());
    if let Some(t) = target {
        let z_id = unknown.n_common + 1;
        let attack = JointAction {
            role: Role::Attacker,
            kind: ActionKind::Attack,
            devices: vec![t],
            exploits: vec![z_id],
            apps: vec![],
        };
        env_unknown.step(&JointAction::pass(Role::Defender), &attack).unwrap();
        assert!(env_unknown.knowledge().known_count() >= before);
        assert!(env_unknown.knowledge().is_known(z_id), "reveal on use");
    }
}

#[test]
fn known_zero_day_expands_defender_patch_candidates() {
    let known = prepare(VulnRegime::Submartingale, 4, true);
    let unknown = prepare(VulnRegime::Submartingale, 4, false);
    let count_upgrades = |env: &Env| -> usize {
        env.candidates(Role::Defender)
            .iter()
            .flat_map(|(_, v)| v.iter())
            .filter(|c| c.kind == ActionKind::Upgrade)
            .count()
    };
    let env_known = Env::reset_with_zero_day(&known, 5, Some(0)).unwrap();
    let env_unknown = Env::reset_with_zero_day(&unknown, 5, Some(0)).unwrap();
    assert!(
        count_upgrades(&env_known) > count_upgrades(&env_unknown),
        "defender who knows the zero-day sees its patch targets"
    );
}

#[test]
fn forced_draw_is_deterministic_and_sampled_draw_matches_seed() {
    let scenario = prepare(VulnRegime::Fixed, 6, false);
    let a = Env::reset(&scenario, 99).unwrap().zero_day_index();
    let b = Env::reset(&scenario, 99).unwrap().zero_day_index();
    assert_eq!(a, b);
    let f = Env::reset_with_zero_day(&scenario, 99, Some(4)).unwrap();
    assert_eq!(f.zero_day_index(), Some(4));
}
