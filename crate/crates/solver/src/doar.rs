//! The equilibrium engine: restricted-game solving over growing strategy
//! pools, critic-trained better responses extracted by beam search, stall
//! restarts, and an epsilon-improvement admission rule.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use breachsim_core::env::{EnvError, ScenarioData};
use breachsim_core::model::Role;
use breachsim_core::seeds::{derive_seed, rng_from, tag};

use crate::beam::BeamSpec;
use crate::learn::{init_networks, train_best_response, TrainConfig};
use crate::nash::{solve_bimatrix, MixedProfile, NashSolution};
use crate::net::Mlp;
use crate::payoff::{estimate_payoffs, PayoffMatrix};
use crate::policy::{CriticPolicy, MixturePolicy, PassPolicy, Policy, RandomPolicy};
use crate::rollout::evaluate_pair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Baseline,
    Learned { round: usize },
}

pub struct PoolEntry {
    pub id: String,
    pub provenance: Provenance,
    pub policy: Arc<dyn Policy>,
    /// Present for learned entries so pools can be persisted.
    pub critic: Option<Arc<Mlp>>,
}

/// A growing, duplicate-free list of strategies for one role.
pub struct StrategyPool {
    pub role: Role,
    pub entries: Vec<PoolEntry>,
}

impl StrategyPool {
    /// The initial restriction: {pass, random}.
    pub fn initial(role: Role) -> StrategyPool {
        StrategyPool {
            role,
            entries: vec![
                PoolEntry {
                    id: "pass".into(),
                    provenance: Provenance::Baseline,
                    policy: Arc::new(PassPolicy),
                    critic: None,
                },
                PoolEntry {
                    id: "random".into(),
                    provenance: Provenance::Baseline,
                    policy: Arc::new(RandomPolicy),
                    critic: None,
                },
            ],
        }
    }

    pub fn push(&mut self, entry: PoolEntry) {
        assert!(
            self.entries.iter().all(|e| e.id != entry.id),
            "duplicate policy identity {}",
            entry.id
        );
        self.entries.push(entry);
    }

    pub fn named(&self) -> Vec<(String, Arc<dyn Policy>)> {
        self.entries
            .iter()
            .map(|e| (e.id.clone(), Arc::clone(&e.policy)))
            .collect()
    }

    pub fn mixture(&self, profile: &MixedProfile) -> MixturePolicy {
        MixturePolicy::new(
            self.entries
                .iter()
                .zip(&profile.0)
                .map(|(e, &w)| (Arc::clone(&e.policy), w))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoarConfig {
    pub max_rounds: usize,
    /// Admission threshold; None derives 2% of the payoff spread per role.
    pub epsilon: Option<f64>,
    pub rollouts_per_cell: usize,
    pub candidate_eval_rollouts: usize,
    pub train: TrainConfig,
    /// Consecutive non-improving rounds before a learner restarts from fresh
    /// weights.
    pub stall_restart_after: usize,
    /// Beam width of extracted policies.
    pub eval_beam_k: usize,
}

impl Default for DoarConfig {
    fn default() -> Self {
        DoarConfig {
            max_rounds: 15,
            epsilon: None,
            rollouts_per_cell: 10,
            candidate_eval_rollouts: 16,
            train: TrainConfig::default(),
            stall_restart_after: 2,
            eval_beam_k: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapTraceRow {
    pub round: usize,
    pub role: Role,
    pub incumbent_value: f64,
    pub candidate_value: f64,
    pub admitted: bool,
}

pub const GAP_TRACE_CSV_HEADER: &str = "round,role,incumbent_value,candidate_value,admitted";

pub fn gap_trace_csv(rows: &[GapTraceRow]) -> String {
    let mut out = String::from(GAP_TRACE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{}\n",
            r.round,
            match r.role {
                Role::Attacker => "attacker",
                Role::Defender => "defender",
            },
            r.incumbent_value,
            r.candidate_value,
            r.admitted
        ));
    }
    out
}

pub struct DoarResult {
    pub attacker_pool: StrategyPool,
    pub defender_pool: StrategyPool,
    pub profile: (MixedProfile, MixedProfile),
    pub equilibrium_value: (f64, f64),
    pub matrix: PayoffMatrix,
    pub nash: NashSolution,
    pub gap_trace: Vec<GapTraceRow>,
    pub rounds: usize,
    pub master_seed: u64,
}

impl DoarResult {
    pub fn profile_mixture(&self, role: Role) -> MixturePolicy {
        match role {
            Role::Attacker => self.attacker_pool.mixture(&self.profile.0),
            Role::Defender => self.defender_pool.mixture(&self.profile.1),
        }
    }
}

struct LearnerSlot {
    nets: Option<(Mlp, Mlp)>,
    stall: usize,
    restarts: usize,
}

/// The double-oracle outer loop: solve the restricted bimatrix game, train a
/// better response per role against the opponent mixture, admit candidates
/// that clear the epsilon bar, and stop when neither role improves.
pub fn doar_loop(
    scenario: &Arc<ScenarioData>,
    cfg: &DoarConfig,
    master_seed: u64,
) -> Result<DoarResult, EnvError> {
    assert!(cfg.max_rounds >= 1);
    let mut attacker_pool = StrategyPool::initial(Role::Attacker);
    let mut defender_pool = StrategyPool::initial(Role::Defender);
    let mut matrix = PayoffMatrix::default();
    let mut gap_trace = Vec::new();
    let mut learners = [
        LearnerSlot { nets: None, stall: 0, restarts: 0 },
        LearnerSlot { nets: None, stall: 0, restarts: 0 },
    ];
    let mut rounds = 0usize;

    for round in 1..=cfg.max_rounds {
        rounds = round;
        estimate_payoffs(
            &mut matrix,
            &attacker_pool.named(),
            &defender_pool.named(),
            scenario,
            cfg.rollouts_per_cell,
            master_seed,
        )?;
        let nash = solve_bimatrix(&matrix.attacker_values(), &matrix.defender_values());
        let (value_att, value_def) = matrix.profile_value(&nash.row, &nash.col);

        let mut admitted_any = false;
        for role in [Role::Attacker, Role::Defender] {
            let slot_idx = match role {
                Role::Attacker => 0,
                Role::Defender => 1,
            };
            let (own_value, opponent_mixture) = match role {
                Role::Attacker => (value_att, defender_pool.mixture(&nash.col)),
                Role::Defender => (value_def, attacker_pool.mixture(&nash.row)),
            };
            let epsilon = cfg.epsilon.unwrap_or_else(|| {
                0.02 * matrix.payoff_spread(role == Role::Attacker)
            });
            let train_seed = derive_seed(
                master_seed,
                &[tag("learn"), round as u64, slot_idx as u64, learners[slot_idx].restarts as u64],
            );
            let warm = learners[slot_idx].nets.take();
            let br = train_best_response(role, &opponent_mixture, scenario, &cfg.train, train_seed, warm)?;
            let critic = Arc::new(br.critic.clone());
            learners[slot_idx].nets = Some((br.critic, br.actor));
            let candidate_id = format!(
                "{}_r{round}",
                match role {
                    Role::Attacker => "att",
                    Role::Defender => "def",
                }
            );
            let candidate: Arc<dyn Policy> = Arc::new(CriticPolicy::new(
                candidate_id.clone(),
                Arc::clone(&critic),
                BeamSpec::evaluation(cfg.eval_beam_k),
            ));
            let candidate_value = evaluate_candidate(
                scenario,
                role,
                candidate.as_ref(),
                &opponent_mixture,
                cfg.candidate_eval_rollouts,
                derive_seed(master_seed, &[tag("cand"), round as u64, slot_idx as u64]),
            )?;
            let admitted = candidate_value > own_value + epsilon;
            gap_trace.push(GapTraceRow {
                round,
                role,
                incumbent_value: own_value,
                candidate_value,
                admitted,
            });
            if admitted {
                admitted_any = true;
                learners[slot_idx].stall = 0;
                let entry = PoolEntry {
                    id: candidate_id,
                    provenance: Provenance::Learned { round },
                    policy: candidate,
                    critic: Some(critic),
                };
                match role {
                    Role::Attacker => attacker_pool.push(entry),
                    Role::Defender => defender_pool.push(entry),
                }
            } else {
                learners[slot_idx].stall += 1;
                if learners[slot_idx].stall >= cfg.stall_restart_after {
                    // restart from far-apart fresh weights
                    learners[slot_idx].restarts += 1;
                    learners[slot_idx].nets = None;
                    learners[slot_idx].stall = 0;
                }
            }
        }
        if !admitted_any {
            break;
        }
    }

    // final solve on the full matrix
    estimate_payoffs(
        &mut matrix,
        &attacker_pool.named(),
        &defender_pool.named(),
        scenario,
        cfg.rollouts_per_cell,
        master_seed,
    )?;
    let nash = solve_bimatrix(&matrix.attacker_values(), &matrix.defender_values());
    let equilibrium_value = matrix.profile_value(&nash.row, &nash.col);
    Ok(DoarResult {
        profile: (nash.row.clone(), nash.col.clone()),
        equilibrium_value,
        attacker_pool,
        defender_pool,
        matrix,
        nash,
        gap_trace,
        rounds,
        master_seed,
    })
}

/// Mean payoff of `candidate` for `role` against an opponent mixture
/// (component resampled per rollout).
pub fn evaluate_candidate(
    scenario: &Arc<ScenarioData>,
    role: Role,
    candidate: &dyn Policy,
    opponent: &MixturePolicy,
    rollouts: usize,
    seed: u64,
) -> Result<f64, EnvError> {
    let mut pick_rng = rng_from(seed, &[tag("mix")]);
    let mut total = 0.0;
    let mut n = 0usize;
    for k in 0..rollouts.max(1) {
        let opp = opponent.sample(&mut pick_rng);
        let pair_seed = derive_seed(seed, &[tag("pair"), k as u64]);
        let stats = match role {
            Role::Attacker => evaluate_pair(scenario, candidate, opp.as_ref(), 1, pair_seed)?,
            Role::Defender => evaluate_pair(scenario, opp.as_ref(), candidate, 1, pair_seed)?,
        };
        total += match role {
            Role::Attacker => stats.attacker_mean,
            Role::Defender => stats.defender_mean,
        };
        n += stats.n.max(1);
        let _ = n;
    }
    Ok(total / rollouts.max(1) as f64)
}

/// Lower bound on the per-role equilibrium gap: the best deviation among the
/// pool (from the estimated matrix) and a fresh beam-search candidate trained
/// against the final profile.
pub fn equilibrium_gap(
    scenario: &Arc<ScenarioData>,
    result: &DoarResult,
    fresh_candidates: &[(Role, Arc<dyn Policy>)],
    eval_rollouts: usize,
    seed: u64,
) -> Result<(f64, f64), EnvError> {
    let a = result.matrix.attacker_values();
    let b = result.matrix.defender_values();
    let (p, q) = (&result.profile.0, &result.profile.1);
    let (value_att, value_def) = result.matrix.profile_value(p, q);

    let mut gap_att: f64 = 0.0;
    for i in 0..a.len() {
        let vi: f64 = (0..q.0.len()).map(|j| q.0[j] * a[i][j]).sum();
        gap_att = gap_att.max(vi - value_att);
    }
    let mut gap_def: f64 = 0.0;
    for j in 0..q.0.len() {
        let vj: f64 = (0..p.0.len()).map(|i| p.0[i] * b[i][j]).sum();
        gap_def = gap_def.max(vj - value_def);
    }
    for (k, (role, policy)) in fresh_candidates.iter().enumerate() {
        let opponent = result.profile_mixture(role.opponent());
        let v = evaluate_candidate(
            scenario,
            *role,
            policy.as_ref(),
            &opponent,
            eval_rollouts,
            derive_seed(seed, &[tag("gapcand"), k as u64]),
        )?;
        match role {
            Role::Attacker => gap_att = gap_att.max(v - value_att),
            Role::Defender => gap_def = gap_def.max(v - value_def),
        }
    }
    Ok((gap_att.max(0.0), gap_def.max(0.0)))
}

/// Persisted strategy reference inside `profile.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySpec {
    pub id: String,
    pub kind: String,
    pub weight: f64,
    #[serde(default)]
    pub file: Option<String>,
    #[serde(default)]
    pub beam_k: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileFile {
    pub scenario: String,
    pub master_seed: u64,
    pub rounds: usize,
    pub equilibrium_value_attacker: f64,
    pub equilibrium_value_defender: f64,
    pub attacker: Vec<PolicySpec>,
    pub defender: Vec<PolicySpec>,
}

/// Persist a solve: profile.json, matrix.csv, gap_trace.csv and critic
/// checkpoints under policies/.
pub fn save_result(result: &DoarResult, scenario: &ScenarioData, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir.join("policies"))?;
    let spec_of = |pool: &StrategyPool, profile: &MixedProfile| -> std::io::Result<Vec<PolicySpec>> {
        let mut specs = Vec::new();
        for (e, &w) in pool.entries.iter().zip(&profile.0) {
            let (kind, file, beam_k) = match (&e.provenance, &e.critic) {
                (Provenance::Baseline, _) => (e.id.clone(), None, None),
                (Provenance::Learned { .. }, Some(critic)) => {
                    let rel = format!("policies/{}.bsc", e.id);
                    critic
                        .save(&dir.join(&rel))
                        .map_err(|err| std::io::Error::other(err.to_string()))?;
                    ("critic".to_string(), Some(rel), Some(5))
                }
                (Provenance::Learned { .. }, None) => ("critic".to_string(), None, None),
            };
            specs.push(PolicySpec {
                id: e.id.clone(),
                kind,
                weight: w,
                file,
                beam_k,
            });
        }
        Ok(specs)
    };
    let profile = ProfileFile {
        scenario: scenario.cfg.name.clone(),
        master_seed: result.master_seed,
        rounds: result.rounds,
        equilibrium_value_attacker: result.equilibrium_value.0,
        equilibrium_value_defender: result.equilibrium_value.1,
        attacker: spec_of(&result.attacker_pool, &result.profile.0)?,
        defender: spec_of(&result.defender_pool, &result.profile.1)?,
    };
    fs::write(
        dir.join("profile.json"),
        serde_json::to_string_pretty(&profile).expect("profile serializes"),
    )?;
    fs::write(dir.join("matrix.csv"), result.matrix.to_csv())?;
    fs::write(dir.join("gap_trace.csv"), gap_trace_csv(&result.gap_trace))?;
    Ok(())
}

/// Rebuild the mixed strategy of one role from a saved profile.
pub fn load_profile_mixture(dir: &Path, role: Role) -> std::io::Result<MixturePolicy> {
    let text = fs::read_to_string(dir.join("profile.json"))?;
    let profile: ProfileFile = serde_json::from_str(&text)
        .map_err(|e| std::io::Error::other(format!("profile.json: {e}")))?;
    let specs = match role {
        Role::Attacker => &profile.attacker,
        Role::Defender => &profile.defender,
    };
    let mut entries: Vec<(Arc<dyn Policy>, f64)> = Vec::new();
    for s in specs {
        if s.weight <= 0.0 {
            continue;
        }
        let policy: Arc<dyn Policy> = match s.kind.as_str() {
            "pass" => Arc::new(PassPolicy),
            "random" => Arc::new(RandomPolicy),
            "critic" => {
                let rel = s.file.as_ref().ok_or_else(|| {
                    std::io::Error::other(format!("critic entry {} lacks a file", s.id))
                })?;
                let critic = Mlp::load(&dir.join(rel))
                    .map_err(|e| std::io::Error::other(e.to_string()))?;
                Arc::new(CriticPolicy::new(
                    s.id.clone(),
                    Arc::new(critic),
                    BeamSpec::evaluation(s.beam_k.unwrap_or(5)),
                ))
            }
            other => {
                return Err(std::io::Error::other(format!("unknown policy kind {other}")));
            }
        };
        entries.push((policy, s.weight));
    }
    if entries.is_empty() {
        return Err(std::io::Error::other("profile has no supported strategies"));
    }
    Ok(MixturePolicy::new(entries))
}

/// A freshly trained candidate against the final profile, used to tighten the
/// reported gap lower bound.
pub fn fresh_gap_candidate(
    scenario: &Arc<ScenarioData>,
    result: &DoarResult,
    role: Role,
    train: &TrainConfig,
    seed: u64,
) -> Result<Arc<dyn Policy>, EnvError> {
    let opponent = result.profile_mixture(role.opponent());
    let br = train_best_response(role, &opponent, scenario, train, seed, None)?;
    Ok(Arc::new(CriticPolicy::new(
        "fresh",
        Arc::new(br.critic),
        BeamSpec::evaluation(5),
    )))
}

/// Fresh initial networks helper re-exported for restart tests.
pub fn fresh_networks(scenario: &ScenarioData, role: Role, seed: u64) -> (Mlp, Mlp) {
    init_networks(scenario, role, seed)
}
