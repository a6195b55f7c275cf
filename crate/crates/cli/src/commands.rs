//! Command implementations shared by the binary and the test suites. Every
//! command is a pure function of its arguments (all randomness seeded), so
//! repeated invocations produce byte-identical outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use breachsim_core::env::ScenarioData;
use breachsim_core::model::Role;
use breachsim_core::seeds::{derive_seed, rng_from, tag};
use breachsim_core::traj;
use breachsim_solver::doar::{doar_loop, save_result, DoarConfig};
use breachsim_solver::learn::TrainConfig;
use breachsim_solver::rollout::rollout_logged;

use crate::baseline::resolve_strategy;
use crate::crosstab::run_cross_table;
use crate::error::CliError;
use crate::nvd::ingest_nvd;
use crate::report::{emit_report, Direction, TrendCheck};
use crate::scenario::load_scenario_config;
use crate::sweep::{grid_means, run_sweep, sweep_csv, SweepParameter, SweepSpec};

pub const EPISODE_STATS_HEADER: &str =
    "episode,attacker_return,defender_return,scans,workloads_completed,compromised_device_steps,defensive_cost";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))
}

fn prepare(scenario_path: &Path, seed: u64) -> Result<Arc<ScenarioData>, CliError> {
    let cfg = load_scenario_config(scenario_path)?;
    ScenarioData::prepare(cfg, seed).map_err(CliError::from)
}

pub struct RunSummary {
    pub episodes: usize,
    pub mean_attacker_return: f64,
    pub mean_defender_return: f64,
}

/// `run`: roll out episodes under the given strategies and write the
/// trajectory log plus per-episode statistics.
pub fn cmd_run(
    scenario_path: &Path,
    seed: u64,
    out_dir: &Path,
    episodes: usize,
    attacker_id: &str,
    defender_id: &str,
) -> Result<RunSummary, CliError> {
    if episodes == 0 {
        return Err(CliError::config("run needs at least one episode"));
    }
    let scenario = prepare(scenario_path, seed)?;
    let attacker = resolve_strategy(attacker_id, Role::Attacker)?;
    let defender = resolve_strategy(defender_id, Role::Defender)?;
    ensure_dir(out_dir)?;
    let mut traj_buf: Vec<u8> = Vec::new();
    let mut stats_csv = String::from(EPISODE_STATS_HEADER);
    stats_csv.push('\n');
    let mut pick_rng = rng_from(seed, &[tag("run-mix")]);
    let mut att_sum = 0.0;
    let mut def_sum = 0.0;
    for ep in 0..episodes {
        let att = attacker.sample(&mut pick_rng);
        let def = defender.sample(&mut pick_rng);
        let episode_seed = derive_seed(seed, &[tag("run-episode"), ep as u64]);
        let (stats, log) = rollout_logged(&scenario, att.as_ref(), def.as_ref(), episode_seed, None)
            .map_err(CliError::from)?;
        traj::write_episode(&mut traj_buf, ep as u64, &log, ep == 0)
            .map_err(|e| CliError::runtime(e))?;
        stats_csv.push_str(&format!(
            "{},{:.6},{:.6},{},{},{},{:.6}\n",
            ep,
            stats.attacker_return,
            stats.defender_return,
            stats.scans,
            stats.workloads_completed,
            stats.compromised_device_steps,
            stats.defensive_cost
        ));
        att_sum += stats.attacker_return;
        def_sum += stats.defender_return;
    }
    fs::write(out_dir.join("trajectory.csv"), &traj_buf)?;
    fs::write(out_dir.join("episode_stats.csv"), stats_csv)?;
    Ok(RunSummary {
        episodes,
        mean_attacker_return: att_sum / episodes as f64,
        mean_defender_return: def_sum / episodes as f64,
    })
}

pub struct SolveArgs {
    pub rounds: usize,
    pub epsilon: Option<f64>,
    pub episodes: usize,
    pub rollouts_per_cell: usize,
    pub candidate_eval_rollouts: usize,
}

impl Default for SolveArgs {
    fn default() -> Self {
        SolveArgs {
            rounds: 15,
            epsilon: None,
            episodes: 120,
            rollouts_per_cell: 8,
            candidate_eval_rollouts: 12,
        }
    }
}

pub struct SolveSummary {
    pub rounds: usize,
    pub attacker_value: f64,
    pub defender_value: f64,
    pub attacker_pool: usize,
    pub defender_pool: usize,
}

/// `solve`: run the double-oracle loop and persist the profile, matrix and
/// gap trace under the output directory.
pub fn cmd_solve(
    scenario_path: &Path,
    seed: u64,
    out_dir: &Path,
    args: &SolveArgs,
) -> Result<SolveSummary, CliError> {
    if args.rounds == 0 {
        return Err(CliError::config("solve needs at least one round"));
    }
    let scenario = prepare(scenario_path, seed)?;
    let cfg = DoarConfig {
        max_rounds: args.rounds,
        epsilon: args.epsilon,
        rollouts_per_cell: args.rollouts_per_cell,
        candidate_eval_rollouts: args.candidate_eval_rollouts,
        train: TrainConfig {
            episodes: args.episodes,
            batch_size: 32,
            warmup: 64,
            update_every: 4,
            target_device_subsample: Some(6),
            ..Default::default()
        },
        ..Default::default()
    };
    let result = doar_loop(&scenario, &cfg, seed).map_err(CliError::from)?;
    ensure_dir(out_dir)?;
    save_result(&result, &scenario, out_dir).map_err(|e| CliError::runtime(e))?;
    Ok(SolveSummary {
        rounds: result.rounds,
        attacker_value: result.equilibrium_value.0,
        defender_value: result.equilibrium_value.1,
        attacker_pool: result.attacker_pool.entries.len(),
        defender_pool: result.defender_pool.entries.len(),
    })
}

/// `cross-table`: evaluate every strategy pairing and write three CSVs.
pub fn cmd_cross_table(
    scenario_path: &Path,
    attacker_ids: &[String],
    defender_ids: &[String],
    runs: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    let scenario = prepare(scenario_path, seed)?;
    let table = run_cross_table(&scenario, attacker_ids, defender_ids, runs, seed)?;
    ensure_dir(out_dir)?;
    fs::write(out_dir.join("attacker_payoffs.csv"), table.attacker_csv())?;
    fs::write(out_dir.join("defender_payoffs.csv"), table.defender_csv())?;
    fs::write(out_dir.join("cross_table_long.csv"), table.long_csv())?;
    Ok(())
}

/// Trend checks derived from a finished sweep, mirroring the qualitative
/// claims each figure panel makes.
pub fn sweep_trend_checks(spec: &SweepSpec, rows: &[crate::sweep::SweepRow]) -> Vec<TrendCheck> {
    let mut checks = Vec::new();
    match spec.parameter {
        SweepParameter::WorkScale => {
            checks.push(TrendCheck {
                name: "scans_per_step vs work_scale".into(),
                values: grid_means(rows, &spec.grid, "-", false, |r| r.scans_per_step),
                direction: Direction::NonIncreasing,
            });
            checks.push(TrendCheck {
                name: "workloads_completed vs work_scale".into(),
                values: grid_means(rows, &spec.grid, "-", false, |r| r.workloads_completed),
                direction: Direction::NonDecreasing,
            });
        }
        SweepParameter::DefenseCost => {
            checks.push(TrendCheck {
                name: "scans_per_step vs defense_cost".into(),
                values: grid_means(rows, &spec.grid, "-", false, |r| r.scans_per_step),
                direction: Direction::NonIncreasing,
            });
        }
        SweepParameter::NetworkSize => {
            checks.push(TrendCheck {
                name: "defender_payoff vs network_size".into(),
                values: grid_means(rows, &spec.grid, "-", false, |r| r.defender_payoff),
                direction: Direction::NonIncreasing,
            });
        }
        SweepParameter::ZeroDayCandidates => {
            for regime in &spec.regimes {
                let direction = if regime == "fixed" {
                    Direction::NonIncreasing
                } else {
                    Direction::NonDecreasing
                };
                checks.push(TrendCheck {
                    name: format!("attacker_payoff vs candidates ({regime})"),
                    values: grid_means(rows, &spec.grid, regime, false, |r| r.attacker_payoff),
                    direction,
                });
                if spec.known.contains(&true) {
                    let known = grid_means(rows, &spec.grid, regime, true, |r| r.defender_payoff);
                    let unknown =
                        grid_means(rows, &spec.grid, regime, false, |r| r.defender_payoff);
                    checks.push(TrendCheck {
                        name: format!("defender known-minus-unknown ({regime})"),
                        values: known
                            .iter()
                            .zip(&unknown)
                            .map(|(k, u)| k - u)
                            .collect(),
                        direction: Direction::NonNegative,
                    });
                }
            }
        }
    }
    checks
}

pub struct SweepSummary {
    pub rows: usize,
    pub checks_passed: usize,
    pub checks_total: usize,
}

/// `sweep`: solve every grid point, emit the long-format CSV and the trend
/// report.
pub fn cmd_sweep(spec_path: &Path, out_dir: &Path) -> Result<SweepSummary, CliError> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", spec_path.display())))?;
    let spec: SweepSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("sweep spec does not parse: {e}")))?;
    let rows = run_sweep(&spec)?;
    let checks = sweep_trend_checks(&spec, &rows);
    ensure_dir(out_dir)?;
    fs::write(out_dir.join("sweep.csv"), sweep_csv(&rows))?;
    fs::write(out_dir.join("report.txt"), emit_report(&checks))?;
    Ok(SweepSummary {
        rows: rows.len(),
        checks_passed: checks.iter().filter(|c| c.passes()).count(),
        checks_total: checks.len(),
    })
}

pub struct IngestSummary {
    pub written: usize,
    pub records_seen: usize,
    pub skipped: usize,
    pub out_file: PathBuf,
}

/// `ingest`: parse an offline NVD feed and write the mapped exploit list as
/// scenario-ready JSON.
pub fn cmd_ingest(
    nvd_path: &Path,
    sample: usize,
    seed: u64,
    out_file: &Path,
) -> Result<IngestSummary, CliError> {
    let apps = breachsim_core::env::EnvConfig::volt_typhoon().apps;
    let outcome = ingest_nvd(nvd_path, sample, seed, &apps)?;
    if let Some(parent) = out_file.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    fs::write(
        out_file,
        serde_json::to_string_pretty(&outcome.exploits)
            .map_err(|e| CliError::runtime(e))?,
    )?;
    Ok(IngestSummary {
        written: outcome.exploits.len(),
        records_seen: outcome.records_seen,
        skipped: outcome.skipped,
        out_file: out_file.to_path_buf(),
    })
}
