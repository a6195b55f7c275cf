//! Simulation-estimated restricted-game payoff matrices.

use std::sync::Arc;

use rayon::prelude::*;

use breachsim_core::env::{EnvError, ScenarioData};
use breachsim_core::seeds::{derive_seed, tag};

use crate::nash::MixedProfile;
use crate::policy::Policy;
use crate::rollout::{evaluate_pair, PairStats};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PayoffCell {
    pub attacker_mean: f64,
    pub defender_mean: f64,
    pub attacker_std: f64,
    pub defender_std: f64,
    pub n: usize,
}

impl From<PairStats> for PayoffCell {
    fn from(s: PairStats) -> PayoffCell {
        PayoffCell {
            attacker_mean: s.attacker_mean,
            defender_mean: s.defender_mean,
            attacker_std: s.attacker_std,
            defender_std: s.defender_std,
            n: s.n,
        }
    }
}

/// Rows are attacker strategies, columns defender strategies.
#[derive(Debug, Clone, Default)]
pub struct PayoffMatrix {
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    pub cells: Vec<Vec<PayoffCell>>,
}

pub const MATRIX_CSV_HEADER: &str =
    "row_id,col_id,attacker_mean,defender_mean,attacker_std,defender_std,n";

impl PayoffMatrix {
    pub fn attacker_values(&self) -> Vec<Vec<f64>> {
        self.cells
            .iter()
            .map(|row| row.iter().map(|c| c.attacker_mean).collect())
            .collect()
    }

    pub fn defender_values(&self) -> Vec<Vec<f64>> {
        self.cells
            .iter()
            .map(|row| row.iter().map(|c| c.defender_mean).collect())
            .collect()
    }

    /// Expected payoff of a mixed profile pair for each role.
    pub fn profile_value(&self, p: &MixedProfile, q: &MixedProfile) -> (f64, f64) {
        crate::nash::profile_values(&self.attacker_values(), &self.defender_values(), p, q)
    }

    /// Standard deviation of one role's mean payoffs across cells; the
    /// default admission threshold is a fraction of this spread.
    pub fn payoff_spread(&self, attacker: bool) -> f64 {
        let vals: Vec<f64> = self
            .cells
            .iter()
            .flatten()
            .map(|c| if attacker { c.attacker_mean } else { c.defender_mean })
            .collect();
        if vals.len() < 2 {
            return 0.0;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() as f64 - 1.0)).sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MATRIX_CSV_HEADER);
        out.push('\n');
        for (i, rid) in self.row_ids.iter().enumerate() {
            for (j, cid) in self.col_ids.iter().enumerate() {
                let c = &self.cells[i][j];
                out.push_str(&format!(
                    "{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
                    rid, cid, c.attacker_mean, c.defender_mean, c.attacker_std, c.defender_std, c.n
                ));
            }
        }
        out
    }
}

/// Cell seeds depend only on the (row, col) indices under the master seed, so
/// growing the pools never changes previously estimated cells and
/// re-estimation is bit-identical.
pub fn cell_seed(master_seed: u64, row: usize, col: usize) -> u64 {
    derive_seed(master_seed, &[tag("cell"), row as u64, col as u64])
}

/// Estimate every missing cell for the given pools (in parallel, with
/// per-cell derived seeds). Existing cells are kept as-is.
pub fn estimate_payoffs(
    matrix: &mut PayoffMatrix,
    attacker_pool: &[(String, Arc<dyn Policy>)],
    defender_pool: &[(String, Arc<dyn Policy>)],
    scenario: &Arc<ScenarioData>,
    rollouts_per_cell: usize,
    master_seed: u64,
) -> Result<(), EnvError> {
    assert!(rollouts_per_cell > 0, "zero rollouts per cell");
    matrix.row_ids = attacker_pool.iter().map(|(id, _)| id.clone()).collect();
    matrix.col_ids = defender_pool.iter().map(|(id, _)| id.clone()).collect();
    let missing: Vec<(usize, usize)> = (0..attacker_pool.len())
        .flat_map(|i| (0..defender_pool.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| {
            matrix
                .cells
                .get(i)
                .and_then(|row| row.get(j))
                .map(|c| c.n == 0)
                .unwrap_or(true)
        })
        .collect();
    let computed: Vec<((usize, usize), Result<PairStats, EnvError>)> = missing
        .par_iter()
        .map(|&(i, j)| {
            let stats = evaluate_pair(
                scenario,
                attacker_pool[i].1.as_ref(),
                defender_pool[j].1.as_ref(),
                rollouts_per_cell,
                cell_seed(master_seed, i, j),
            );
            ((i, j), stats)
        })
        .collect();
    while matrix.cells.len() < attacker_pool.len() {
        matrix.cells.push(Vec::new());
    }
    for row in matrix.cells.iter_mut() {
        while row.len() < defender_pool.len() {
            row.push(PayoffCell::default());
        }
    }
    for ((i, j), stats) in computed {
        matrix.cells[i][j] = PayoffCell::from(stats?);
    }
    Ok(())
}
