//! Parameter sweeps: per grid point a full equilibrium solve plus an
//! evaluation of the resulting profile, recorded in long-format CSV.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use breachsim_core::env::{EnvConfig, ScenarioData, VulnRegime};
use breachsim_core::model::Role;
use breachsim_core::seeds::{derive_seed, tag};
use breachsim_solver::doar::{doar_loop, DoarConfig};
use breachsim_solver::learn::TrainConfig;
use breachsim_solver::rollout::evaluate_mixture_pair;

use crate::error::CliError;
use crate::scenario::load_scenario_config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    WorkScale,
    DefenseCost,
    NetworkSize,
    ZeroDayCandidates,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::WorkScale => "work_scale",
            SweepParameter::DefenseCost => "defense_cost",
            SweepParameter::NetworkSize => "network_size",
            SweepParameter::ZeroDayCandidates => "zero_day_candidates",
        }
    }
}

/// Reduced solver budget for sweep points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverBudget {
    pub rounds: usize,
    pub episodes: usize,
    pub rollouts_per_cell: usize,
    pub candidate_eval_rollouts: usize,
}

impl Default for SolverBudget {
    fn default() -> Self {
        SolverBudget {
            rounds: 3,
            episodes: 40,
            rollouts_per_cell: 4,
            candidate_eval_rollouts: 6,
        }
    }
}

impl SolverBudget {
    pub fn doar_config(&self) -> DoarConfig {
        DoarConfig {
            max_rounds: self.rounds,
            rollouts_per_cell: self.rollouts_per_cell,
            candidate_eval_rollouts: self.candidate_eval_rollouts,
            train: TrainConfig {
                episodes: self.episodes,
                batch_size: 32,
                warmup: 64,
                update_every: 4,
                target_device_subsample: Some(4),
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    /// Zero-day regimes to cross with the grid (zero_day_candidates only).
    #[serde(default)]
    pub regimes: Vec<String>,
    /// Known-zero-day flags to cross with the grid.
    #[serde(default)]
    pub known: Vec<bool>,
    pub seeds: Vec<u64>,
    pub eval_rollouts: usize,
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverBudget,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.grid.is_empty() {
            return Err(CliError::config("sweep grid is empty"));
        }
        if self.seeds.is_empty() {
            return Err(CliError::config("sweep needs at least one seed"));
        }
        if self.eval_rollouts == 0 {
            return Err(CliError::config("eval_rollouts must be positive"));
        }
        if self.parameter == SweepParameter::ZeroDayCandidates {
            for r in &self.regimes {
                parse_regime(r)?;
            }
            if self.regimes.is_empty() {
                return Err(CliError::config(
                    "zero_day_candidates sweep needs at least one regime",
                ));
            }
        }
        Ok(())
    }
}

pub fn parse_regime(s: &str) -> Result<VulnRegime, CliError> {
    match s {
        "fixed" => Ok(VulnRegime::Fixed),
        "submartingale" => Ok(VulnRegime::Submartingale),
        other => Err(CliError::config(format!(
            "unknown vulnerability regime `{other}` (fixed|submartingale)"
        ))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub regime: String,
    pub known: bool,
    pub seed: u64,
    pub attacker_payoff: f64,
    pub defender_payoff: f64,
    pub scans_per_step: f64,
    pub workloads_completed: f64,
    pub compromise_rate: f64,
    pub defensive_cost: f64,
    pub rounds: usize,
}

pub const SWEEP_CSV_HEADER: &str = "parameter,value,regime,known,seed,attacker_payoff,defender_payoff,scans_per_step,workloads_completed,compromise_rate,defensive_cost,rounds";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.parameter,
            r.value,
            r.regime,
            r.known,
            r.seed,
            r.attacker_payoff,
            r.defender_payoff,
            r.scans_per_step,
            r.workloads_completed,
            r.compromise_rate,
            r.defensive_cost,
            r.rounds
        ));
    }
    out
}

fn base_config(spec: &SweepSpec) -> Result<EnvConfig, CliError> {
    match &spec.scenario {
        Some(path) => load_scenario_config(path),
        None => Ok(EnvConfig::volt_typhoon()),
    }
}

/// Build the scenario config for one grid point.
pub fn point_config(
    spec: &SweepSpec,
    value: f64,
    regime: Option<VulnRegime>,
    known: bool,
) -> Result<EnvConfig, CliError> {
    let mut cfg = base_config(spec)?;
    match spec.parameter {
        SweepParameter::WorkScale => {
            cfg.work_scale = value;
            cfg.name = format!("{}_work_{}", cfg.name, value);
        }
        SweepParameter::DefenseCost => {
            cfg.defense_cost_multiplier = value;
            cfg.name = format!("{}_cost_{}", cfg.name, value);
        }
        SweepParameter::NetworkSize => {
            let n = value as usize;
            if n < cfg.initial_attach_m + 1 {
                return Err(CliError::config(format!("network size {n} too small")));
            }
            cfg.devices = n;
            cfg.max_net_size = 2 * n;
            cfg.num_attacker_owned = (n / 2).max(1);
            cfg.domain_controllers = cfg.domain_controllers.min(n);
            cfg.churn.min_size = (n / 2).max(1);
            cfg.name = format!("{}_net_{}", cfg.name, n);
        }
        SweepParameter::ZeroDayCandidates => {
            let regime = regime.expect("regime present for zero-day sweeps");
            cfg = EnvConfig::volt_typhoon_zero_day(regime, value as usize, known);
        }
    }
    cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
    Ok(cfg)
}

/// Run the sweep: for each (grid value, regime, known, seed) combination, a
/// full solve followed by profile evaluation at the point's scenario.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, CliError> {
    spec.validate()?;
    let regimes: Vec<Option<VulnRegime>> = if spec.parameter == SweepParameter::ZeroDayCandidates {
        spec.regimes
            .iter()
            .map(|r| parse_regime(r).map(Some))
            .collect::<Result<_, _>>()?
    } else {
        vec![None]
    };
    let knowns: Vec<bool> = if spec.parameter == SweepParameter::ZeroDayCandidates {
        if spec.known.is_empty() {
            vec![false]
        } else {
            spec.known.clone()
        }
    } else {
        vec![false]
    };
    let mut rows = Vec::new();
    for &value in &spec.grid {
        for regime in &regimes {
            for &known in &knowns {
                for &seed in &spec.seeds {
                    let cfg = point_config(spec, value, *regime, known)?;
                    let point_seed = derive_seed(
                        seed,
                        &[
                            tag("sweep"),
                            tag(spec.parameter.name()),
                            value.to_bits(),
                            regime.map(|r| r as u64 + 1).unwrap_or(0),
                            known as u64,
                        ],
                    );
                    let scenario = ScenarioData::prepare(cfg, point_seed)?;
                    let doar_cfg = spec.solver.doar_config();
                    let result = doar_loop(&scenario, &doar_cfg, point_seed)?;
                    let att = result.profile_mixture(Role::Attacker);
                    let def = result.profile_mixture(Role::Defender);
                    let stats = evaluate_mixture_pair(
                        &scenario,
                        &att,
                        &def,
                        spec.eval_rollouts,
                        derive_seed(point_seed, &[tag("eval")]),
                    )?;
                    rows.push(SweepRow {
                        parameter: spec.parameter.name().to_string(),
                        value,
                        regime: regime
                            .map(|r| match r {
                                VulnRegime::Fixed => "fixed".to_string(),
                                VulnRegime::Submartingale => "submartingale".to_string(),
                            })
                            .unwrap_or_else(|| "-".to_string()),
                        known,
                        seed,
                        attacker_payoff: stats.attacker_mean,
                        defender_payoff: stats.defender_mean,
                        scans_per_step: stats.scans_per_step,
                        workloads_completed: stats.workloads_completed,
                        compromise_rate: stats.compromise_rate,
                        defensive_cost: stats.defensive_cost,
                        rounds: result.rounds,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Mean of a metric over seeds for each grid value (rows filtered by regime
/// and known flag first).
pub fn grid_means(
    rows: &[SweepRow],
    grid: &[f64],
    regime: &str,
    known: bool,
    metric: impl Fn(&SweepRow) -> f64,
) -> Vec<f64> {
    grid.iter()
        .map(|&v| {
            let matching: Vec<f64> = rows
                .iter()
                .filter(|r| r.value == v && r.regime == regime && r.known == known)
                .map(&metric)
                .collect();
            matching.iter().sum::<f64>() / matching.len().max(1) as f64
        })
        .collect()
}
