//! Workload lifecycle: spawning, placement with out-neighbor delegation,
//! capacity enforcement, progress ticking, value accrual and reset clawbacks.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Triangular};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{config_matches, BitLayout, ConfigPredicate, DeviceId, DeviceState, Step};
use crate::netgraph::NetworkGraph;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("reset requested but no checkpoint exists")]
    NoCheckpoint,
}

/// A unit of productive computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub requires: ConfigPredicate,
    /// Steps of execution needed; fractional durations complete on the first
    /// tick where elapsed >= duration.
    pub duration: f64,
    pub value: f64,
    pub origin: DeviceId,
    pub host: Option<DeviceId>,
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    /// Per-device simultaneous execution limit B_i.
    pub capacity: usize,
    /// Triangular duration parameters (min, mode, max).
    pub tri_min: f64,
    pub tri_mode: f64,
    pub tri_max: f64,
    /// Value of each completed workload.
    pub value: f64,
    /// Probability that an online device spawns a workload each step.
    pub spawn_prob: f64,
    /// When true, all workloads are unit jobs (duration 1, value 1).
    pub unit_jobs: bool,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            capacity: 3,
            tri_min: 1.0,
            tri_mode: 2.0,
            tri_max: 4.0,
            value: 1.0,
            spawn_prob: 1.0,
            unit_jobs: false,
        }
    }
}

/// Seeded triangular draw; mean is (a + m + b) / 3.
pub fn triangular(rng: &mut ChaCha8Rng, min: f64, mode: f64, max: f64) -> f64 {
    if min == max {
        return min;
    }
    Triangular::new(min, max, mode).expect("valid triangular parameters").sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    Host(DeviceId),
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedWorkload {
    pub origin: DeviceId,
    pub host: DeviceId,
    pub step: Step,
    pub value: f64,
    /// Set when a later reset clawed this completion back.
    pub clawed_back: bool,
}

/// Episode-owned ledger of in-flight workloads and the completion log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadLedger {
    pub in_flight: Vec<Workload>,
    pub completions: Vec<CompletedWorkload>,
    pub accrued: f64,
}

impl WorkloadLedger {
    pub fn running_on(&self, device: DeviceId) -> usize {
        self.in_flight.iter().filter(|w| w.host == Some(device)).count()
    }

    /// Net accrued value recomputed from the completion log; must equal the
    /// running `accrued` total at all times.
    pub fn replay_accrued(&self) -> f64 {
        self.completions
            .iter()
            .filter(|c| !c.clawed_back)
            .map(|c| c.value)
            .sum()
    }
}

/// Draw the workloads spawned by `device` this step. Offline devices spawn
/// nothing.
pub fn spawn(
    device: &DeviceState,
    cfg: &WorkloadConfig,
    os_requirement: &ConfigPredicate,
    rng: &mut ChaCha8Rng,
) -> Vec<Workload> {
    use rand::Rng;
    if !device.online {
        return Vec::new();
    }
    if rng.gen::<f64>() >= cfg.spawn_prob {
        return Vec::new();
    }
    let (duration, value) = if cfg.unit_jobs {
        (1.0, 1.0)
    } else {
        (triangular(rng, cfg.tri_min, cfg.tri_mode, cfg.tri_max), cfg.value)
    };
    vec![Workload {
        requires: os_requirement.clone(),
        duration,
        value,
        origin: device.id,
        host: None,
        elapsed: 0.0,
    }]
}

/// Place an unassigned workload: the origin runs it if its configuration
/// matches and it has spare capacity, otherwise the first matching
/// out-neighbor (ascending id) takes it, otherwise it fails. A device at
/// capacity behaves as if its configuration did not match.
pub fn place(
    w: &Workload,
    layout: &BitLayout,
    graph: &NetworkGraph,
    states: &[DeviceState],
    ledger: &WorkloadLedger,
    cfg: &WorkloadConfig,
    edge_usable: &dyn Fn(DeviceId, DeviceId) -> bool,
) -> Placement {
    debug_assert!(w.host.is_none());
    let eligible = |d: DeviceId| -> bool {
        let s = &states[d];
        s.online
            && !s.attacker_owned
            && config_matches(layout, s.config, &w.requires)
            && ledger.running_on(d) < cfg.capacity
    };
    if eligible(w.origin) {
        return Placement::Host(w.origin);
    }
    for n in graph.out_neighbors(w.origin) {
        if edge_usable(w.origin, n) && eligible(n) {
            return Placement::Host(n);
        }
    }
    Placement::Failed
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub completed: Vec<CompletedWorkload>,
    pub value: f64,
}

/// Advance all hosted workloads one step. Progress happens only on hosts that
/// are online, not busy, and not attacker-owned; completions accrue value and
/// leave the in-flight set.
pub fn tick(ledger: &mut WorkloadLedger, states: &[DeviceState], now: Step) -> TickOutcome {
    let mut completed = Vec::new();
    let mut remaining = Vec::with_capacity(ledger.in_flight.len());
    for mut w in ledger.in_flight.drain(..) {
        let host = match w.host {
            Some(h) => h,
            None => continue, // unplaced workloads never execute
        };
        let s = &states[host];
        if s.online && !s.busy(now) && !s.attacker_owned {
            w.elapsed += 1.0;
        }
        if w.elapsed >= w.duration {
            completed.push(CompletedWorkload {
                origin: w.origin,
                host,
                step: now,
                value: w.value,
                clawed_back: false,
            });
        } else {
            remaining.push(w);
        }
    }
    ledger.in_flight = remaining;
    let value: f64 = completed.iter().map(|c| c.value).sum();
    ledger.accrued += value;
    ledger.completions.extend(completed.iter().cloned());
    TickOutcome { completed, value }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetDrop {
    pub dropped_in_flight: usize,
    pub clawed_back_value: f64,
}

/// Reset bookkeeping for one device: drop its in-flight workloads and claw
/// back the value of workloads generated on it that completed after the
/// checkpoint time `since`.
pub fn drop_for_reset(
    ledger: &mut WorkloadLedger,
    device: DeviceId,
    since: Step,
) -> ResetDrop {
    let before = ledger.in_flight.len();
    ledger.in_flight.retain(|w| w.host != Some(device));
    let dropped = before - ledger.in_flight.len();
    let mut clawed = 0.0;
    for c in ledger.completions.iter_mut() {
        if !c.clawed_back && c.origin == device && c.step > since {
            c.clawed_back = true;
            clawed += c.value;
        }
    }
    ledger.accrued -= clawed;
    ResetDrop {
        dropped_in_flight: dropped,
        clawed_back_value: clawed,
    }
}

/// Churn removal bookkeeping: in-flight workloads on the device are dropped
/// with no clawback.
pub fn drop_in_flight(ledger: &mut WorkloadLedger, device: DeviceId) -> usize {
    let before = ledger.in_flight.len();
    ledger.in_flight.retain(|w| w.host != Some(device));
    before - ledger.in_flight.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from;

    fn mk_states(n: usize) -> Vec<DeviceState> {
        (0..n)
            .map(|i| {
                let mut d = DeviceState::new(i);
                d.online = true;
                d
            })
            .collect()
    }

    fn line_graph(n: usize) -> NetworkGraph {
        let mut g = NetworkGraph::with_slots(n);
        for i in 0..n {
            g.node_mut(i).online = true;
        }
        for i in 0..n.saturating_sub(1) {
            g.add_edge(i, i + 1);
        }
        g
    }

    fn unit_workload(origin: DeviceId) -> Workload {
        Workload {
            requires: ConfigPredicate::any(),
            duration: 1.0,
            value: 1.0,
            origin,
            host: None,
            elapsed: 0.0,
        }
    }

    #[test]
    fn offline_device_spawns_nothing() {
        let mut d = DeviceState::new(0);
        d.online = false;
        let cfg = WorkloadConfig::default();
        let mut rng = rng_from(1, &[]);
        assert!(spawn(&d, &cfg, &ConfigPredicate::any(), &mut rng).is_empty());
    }

    #[test]
    fn unit_jobs_special_case() {
        let mut d = DeviceState::new(0);
        d.online = true;
        let cfg = WorkloadConfig { unit_jobs: true, ..Default::default() };
        let mut rng = rng_from(1, &[]);
        let ws = spawn(&d, &cfg, &ConfigPredicate::any(), &mut rng);
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].duration, 1.0);
        assert_eq!(ws[0].value, 1.0);
    }

    #[test]
    fn triangular_mean_matches_closed_form() {
        let mut rng = rng_from(77, &[]);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| triangular(&mut rng, 1.0, 2.0, 4.0)).sum::<f64>() / n as f64;
        assert!((mean - 7.0 / 3.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn placement_prefers_origin() {
        let layout = BitLayout::default();
        let g = line_graph(3);
        let states = mk_states(3);
        let ledger = WorkloadLedger::default();
        let cfg = WorkloadConfig::default();
        let w = unit_workload(0);
        assert_eq!(
            place(&w, &layout, &g, &states, &ledger, &cfg, &|_, _| true),
            Placement::Host(0)
        );
    }

    #[test]
    fn placement_delegates_to_matching_neighbor() {
        let layout = BitLayout::default();
        let g = line_graph(3);
        let mut states = mk_states(3);
        // origin mismatched on os code, neighbor 1 matches
        states[1].config.set_os_code(&layout, 2);
        let ledger = WorkloadLedger::default();
        let cfg = WorkloadConfig::default();
        let mut w = unit_workload(0);
        w.requires = ConfigPredicate { os_code: Some(2), ..Default::default() };
        assert_eq!(
            place(&w, &layout, &g, &states, &ledger, &cfg, &|_, _| true),
            Placement::Host(1)
        );
    }

    #[test]
    fn placement_fails_when_everyone_is_full() {
        // brute-force oracle over all graphs on <= 5 nodes with B_i = 1:
        // placement fails exactly when origin and all out-neighbors already
        // run a workload
        let layout = BitLayout::default();
        let cfg = WorkloadConfig { capacity: 1, ..Default::default() };
        let mut rng = rng_from(5, &[]);
        use rand::Rng;
        for _ in 0..200 {
            let n = rng.gen_range(2..=5);
            let mut g = NetworkGraph::with_slots(n);
            for i in 0..n {
                g.node_mut(i).online = true;
            }
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.gen::<f64>() < 0.4 {
                        g.add_edge(i, j);
                    }
                }
            }
            let states = mk_states(n);
            let mut ledger = WorkloadLedger::default();
            // occupy a random subset
            let mut occupied = Vec::new();
            for d in 0..n {
                if rng.gen::<f64>() < 0.5 {
                    let mut w = unit_workload(d);
                    w.host = Some(d);
                    w.duration = 100.0;
                    ledger.in_flight.push(w);
                    occupied.push(d);
                }
            }
            let origin = rng.gen_range(0..n);
            let w = unit_workload(origin);
            let got = place(&w, &layout, &g, &states, &ledger, &cfg, &|_, _| true);
            // oracle
            let free = |d: usize| !occupied.contains(&d);
            let expected = if free(origin) {
                Placement::Host(origin)
            } else if let Some(h) = g.out_neighbors(origin).find(|&j| free(j)) {
                Placement::Host(h)
            } else {
                Placement::Failed
            };
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn busy_host_freezes_progress() {
        let mut states = mk_states(1);
        states[0].busy_until = 10;
        let mut ledger = WorkloadLedger::default();
        let mut w = unit_workload(0);
        w.host = Some(0);
        ledger.in_flight.push(w);
        let out = tick(&mut ledger, &states, 0);
        assert!(out.completed.is_empty());
        assert_eq!(ledger.in_flight[0].elapsed, 0.0);
    }

    #[test]
    fn unit_job_completes_in_one_tick() {
        let states = mk_states(1);
        let mut ledger = WorkloadLedger::default();
        let mut w = unit_workload(0);
        w.host = Some(0);
        ledger.in_flight.push(w);
        let out = tick(&mut ledger, &states, 0);
        assert_eq!(out.value, 1.0);
        assert_eq!(out.completed.len(), 1);
        assert!(ledger.in_flight.is_empty());
    }

    #[test]
    fn concurrent_jobs_up_to_capacity_complete_together() {
        // step-by-step oracle: three unit jobs on one device with B_i = 3 all
        // finish on the same tick
        let states = mk_states(1);
        let mut ledger = WorkloadLedger::default();
        for _ in 0..3 {
            let mut w = unit_workload(0);
            w.host = Some(0);
            ledger.in_flight.push(w);
        }
        let out = tick(&mut ledger, &states, 0);
        assert_eq!(out.completed.len(), 3);
        assert_eq!(out.value, 3.0);
    }

    #[test]
    fn reset_claws_back_completions_since_checkpoint() {
        let states = mk_states(1);
        let mut ledger = WorkloadLedger::default();
        // two completions at steps 3 and 5, checkpoint at 3
        for step in [3u64, 5] {
            let mut w = unit_workload(0);
            w.host = Some(0);
            ledger.in_flight.push(w);
            let _ = tick(&mut ledger, &states, step);
        }
        assert_eq!(ledger.accrued, 2.0);
        let drop = drop_for_reset(&mut ledger, 0, 3);
        assert_eq!(drop.clawed_back_value, 1.0); // only the step-5 completion
        assert_eq!(ledger.accrued, 1.0);
        assert_eq!(ledger.accrued, ledger.replay_accrued());
    }

    #[test]
    fn reset_with_no_completions_claws_nothing() {
        let mut ledger = WorkloadLedger::default();
        let drop = drop_for_reset(&mut ledger, 0, 0);
        assert_eq!(drop.clawed_back_value, 0.0);
        assert_eq!(drop.dropped_in_flight, 0);
    }

    #[test]
    fn in_flight_jobs_drop_without_value() {
        let mut ledger = WorkloadLedger::default();
        let mut w = unit_workload(0);
        w.host = Some(0);
        w.duration = 5.0;
        w.elapsed = 3.0;
        ledger.in_flight.push(w);
        let drop = drop_for_reset(&mut ledger, 0, 0);
        assert_eq!(drop.dropped_in_flight, 1);
        assert_eq!(drop.clawed_back_value, 0.0);
        assert!(ledger.in_flight.is_empty());
    }

    #[test]
    fn ledger_replay_conservation_over_random_history() {
        // independent ledger replay: accrued always equals the sum over the
        // completion log minus clawbacks
        use rand::Rng;
        let layout = BitLayout::default();
        let g = line_graph(4);
        let states = mk_states(4);
        let cfg = WorkloadConfig::default();
        let mut ledger = WorkloadLedger::default();
        let mut rng = rng_from(13, &[]);
        for now in 0..2_000u64 {
            let origin = rng.gen_range(0..4);
            let mut w = unit_workload(origin);
            w.duration = rng.gen_range(1..4) as f64;
            if let Placement::Host(h) =
                place(&w, &layout, &g, &states, &ledger, &cfg, &|_, _| true)
            {
                w.host = Some(h);
                ledger.in_flight.push(w);
            }
            let _ = tick(&mut ledger, &states, now);
            if rng.gen::<f64>() < 0.02 {
                let d = rng.gen_range(0..4);
                let since = now.saturating_sub(rng.gen_range(0..10));
                let _ = drop_for_reset(&mut ledger, d, since);
            }
            assert!((ledger.accrued - ledger.replay_accrued()).abs() < 1e-9);
            // capacity invariant
            for d in 0..4 {
                assert!(ledger.running_on(d) <= cfg.capacity);
            }
        }
    }
}
