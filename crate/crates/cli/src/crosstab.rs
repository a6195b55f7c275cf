//! Payoff cross-tables: every (attacker strategy x defender strategy) cell
//! evaluated over paired seeded runs, emitted as wide per-role CSVs plus a
//! long-format companion.

use std::sync::Arc;

use breachsim_core::env::ScenarioData;
use breachsim_core::model::Role;
use breachsim_solver::policy::MixturePolicy;
use breachsim_solver::rollout::{evaluate_mixture_pair, PairStats};

use crate::baseline::{resolve_strategy, strategy_label};
use crate::error::CliError;

pub struct CrossTable {
    pub attacker_labels: Vec<String>,
    pub defender_labels: Vec<String>,
    pub cells: Vec<Vec<PairStats>>,
}

pub fn run_cross_table(
    scenario: &Arc<ScenarioData>,
    attacker_ids: &[String],
    defender_ids: &[String],
    runs: usize,
    master_seed: u64,
) -> Result<CrossTable, CliError> {
    if attacker_ids.is_empty() || defender_ids.is_empty() || runs == 0 {
        return Err(CliError::config("cross-table needs strategies on both sides and runs > 0"));
    }
    let attackers: Vec<MixturePolicy> = attacker_ids
        .iter()
        .map(|id| resolve_strategy(id, Role::Attacker))
        .collect::<Result<_, _>>()?;
    let defenders: Vec<MixturePolicy> = defender_ids
        .iter()
        .map(|id| resolve_strategy(id, Role::Defender))
        .collect::<Result<_, _>>()?;
    let mut cells = Vec::with_capacity(attackers.len());
    for att in &attackers {
        let mut row = Vec::with_capacity(defenders.len());
        for def in &defenders {
            // one master seed for every cell: runs are paired across cells
            row.push(
                evaluate_mixture_pair(scenario, att, def, runs, master_seed)
                    .map_err(CliError::from)?,
            );
        }
        cells.push(row);
    }
    Ok(CrossTable {
        attacker_labels: attacker_ids
            .iter()
            .map(|id| strategy_label(id, Role::Attacker))
            .collect(),
        defender_labels: defender_ids
            .iter()
            .map(|id| strategy_label(id, Role::Defender))
            .collect(),
        cells,
    })
}

impl CrossTable {
    fn wide_csv(&self, attacker_side: bool) -> String {
        let mut out = String::from("attacker_strategy");
        for d in &self.defender_labels {
            out.push(',');
            out.push_str(d);
        }
        out.push('\n');
        for (i, a) in self.attacker_labels.iter().enumerate() {
            out.push_str(a);
            for cell in &self.cells[i] {
                let (m, s) = if attacker_side {
                    (cell.attacker_mean, cell.attacker_std)
                } else {
                    (cell.defender_mean, cell.defender_std)
                };
                out.push_str(&format!(",{m:.3}±{s:.3}"));
            }
            out.push('\n');
        }
        out
    }

    /// Table of attacker average payoffs (mean±std per cell).
    pub fn attacker_csv(&self) -> String {
        self.wide_csv(true)
    }

    /// Table of defender average payoffs.
    pub fn defender_csv(&self) -> String {
        self.wide_csv(false)
    }

    pub fn long_csv(&self) -> String {
        let mut out = String::from(
            "attacker_strategy,defender_strategy,attacker_mean,attacker_std,defender_mean,defender_std,n\n",
        );
        for (i, a) in self.attacker_labels.iter().enumerate() {
            for (j, d) in self.defender_labels.iter().enumerate() {
                let c = &self.cells[i][j];
                out.push_str(&format!(
                    "{a},{d},{:.6},{:.6},{:.6},{:.6},{}\n",
                    c.attacker_mean, c.attacker_std, c.defender_mean, c.defender_std, c.n
                ));
            }
        }
        out
    }

    pub fn cell(&self, attacker: &str, defender: &str) -> Option<&PairStats> {
        let i = self.attacker_labels.iter().position(|a| a == attacker)?;
        let j = self.defender_labels.iter().position(|d| d == defender)?;
        Some(&self.cells[i][j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use breachsim_core::env::EnvConfig;

    fn scenario() -> Arc<ScenarioData> {
        let mut cfg = EnvConfig::volt_typhoon();
        cfg.devices = 5;
        cfg.max_net_size = 8;
        cfg.num_attacker_owned = 2;
        cfg.domain_controllers = 1;
        cfg.steps = 8;
        cfg.detector.burn_in_steps = 2;
        cfg.detector.subsample = 8;
        cfg.detector.trees = 10;
        ScenarioData::prepare(cfg, 5).unwrap()
    }

    #[test]
    fn table_shape_and_reproducibility() {
        let s = scenario();
        let att = vec!["random".to_string(), "pass".to_string()];
        let def = vec!["pass".to_string(), "random".to_string(), "preset".to_string()];
        let t1 = run_cross_table(&s, &att, &def, 2, 77).unwrap();
        let t2 = run_cross_table(&s, &att, &def, 2, 77).unwrap();
        assert_eq!(t1.cells.len(), 2);
        assert_eq!(t1.cells[0].len(), 3);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(t1.cells[i][j], t2.cells[i][j], "cell {i},{j} not reproducible");
            }
        }
        // 2 wide CSVs with 1 header + 2 rows each
        assert_eq!(t1.attacker_csv().lines().count(), 3);
        assert_eq!(t1.defender_csv().lines().count(), 3);
        assert_eq!(t1.long_csv().lines().count(), 1 + 6);
        assert!(t1.attacker_csv().starts_with("attacker_strategy,no_defense,random,preset"));
        // pass row is labeled no_attack
        assert!(t1.attacker_csv().contains("\nno_attack,"));
    }

    #[test]
    fn bad_strategy_id_fails_config() {
        let s = scenario();
        let err = run_cross_table(&s, &["bogus".into()], &["pass".into()], 1, 1).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
