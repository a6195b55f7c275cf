//! The partially observable stochastic game: episode loop, simultaneous
//! action intake with attacker-first execution, observation construction,
//! per-action semantics, utility accounting with potential-based shaping,
//! checkpoint/restore, and scenario assembly.

pub mod actions;
pub mod config;
pub mod obs;

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{DetectorError, IsolationForest, TrafficSample};
use crate::model::{
    apply_exploit_delta, apply_update_delta, config_matches, BitLayout, ConfigPredicate,
    DeviceId, DeviceState, Exploit, Probe, Role, SoftwareUpdate, Step, UtilityEvent, UtilityTable,
};
use crate::netgraph::{ChurnEvent, GraphError, NetworkGraph};
use crate::seeds;
use crate::workloads::{self, Placement, WorkloadLedger};
use crate::zeroday::{KnowledgeLedger, ZeroDayError, ZeroDayPrior};

pub use actions::{ActionKind, CandidateAction, JointAction, ATTACKER_TYPES, DEFENDER_TYPES};
pub use config::{ConfigError, EnvConfig, VulnRegime, ZeroDayConfig};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    ZeroDay(#[from] ZeroDayError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("topology file unavailable: {0}")]
    Topology(String),
}

/// Immutable, episode-independent scenario data shared across rollouts.
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub cfg: EnvConfig,
    pub layout: BitLayout,
    pub utility: UtilityTable,
    /// Common exploits first, then the zero-day candidate templates.
    pub exploits: Vec<Exploit>,
    pub n_common: usize,
    pub prior: Option<ZeroDayPrior>,
    pub probes: Vec<Probe>,
    /// Anomaly detector fitted on burn-in traffic; scans fail softly when
    /// absent (burn_in_steps = 0).
    pub forest: Option<IsolationForest>,
    pub master_seed: u64,
    /// Exogenous topology text, loaded once at preparation time.
    pub topology: Option<String>,
    workload_requirement: ConfigPredicate,
}

impl ScenarioData {
    /// Build scenario data, including the detector burn-in: a no-attack
    /// rollout whose traffic trains the isolation forest once per scenario.
    pub fn prepare(cfg: EnvConfig, master_seed: u64) -> Result<Arc<ScenarioData>, EnvError> {
        let mut data = Self::assemble(cfg, master_seed)?;
        if data.cfg.detector.burn_in_steps > 0 {
            let bare = Arc::new(data.clone());
            let mut env = Env::reset(&bare, seeds::derive_seed(master_seed, &[seeds::tag("burnin")]))?;
            let mut samples: Vec<TrafficSample> = Vec::new();
            for _ in 0..data.cfg.detector.burn_in_steps {
                env.step(&JointAction::pass(Role::Defender), &JointAction::pass(Role::Attacker))?;
                for d in 0..env.devices.len() {
                    let dev = &env.devices[d];
                    if dev.online && !dev.attacker_owned {
                        samples.push(env.last_traffic[d]);
                    }
                }
            }
            let subsample = data.cfg.detector.subsample.min(samples.len()).max(1);
            let forest = IsolationForest::fit(
                &samples,
                data.cfg.detector.trees,
                subsample,
                data.cfg.detector_threshold,
                seeds::derive_seed(master_seed, &[seeds::tag("forest")]),
            )?;
            data.forest = Some(forest);
        }
        Ok(Arc::new(data))
    }

    fn assemble(cfg: EnvConfig, master_seed: u64) -> Result<ScenarioData, EnvError> {
        cfg.validate()?;
        let layout = cfg.layout();
        let utility = cfg.utility_table();
        let mut exploits: Vec<Exploit> = Vec::new();
        for (i, spec) in cfg.exploits.iter().enumerate() {
            exploits.push(Exploit {
                id: i,
                name: spec.name.clone(),
                requires: spec.requires.clone(),
                duration: spec.duration,
                value: spec.value,
                success_prob: spec.success_prob,
                delta: crate::model::CompromiseBits::exploit_delta(i, spec.root),
                zero_day: false,
            });
        }
        let n_common = exploits.len();
        let prior = if let Some(z) = &cfg.zero_day {
            for k in 0..z.candidates {
                let id = n_common + k;
                let (app, version) = match z.regime {
                    VulnRegime::Fixed => {
                        let app = (k % cfg.apps.len()) as u32;
                        let version =
                            cfg.default_version_high + 1 + (k / cfg.apps.len()) as u8;
                        (app, version)
                    }
                    // every template exploits the same weak configuration, so
                    // the exploitable surface scales with the flaw count
                    VulnRegime::Submartingale => (0, layout.max_app_version() - 1),
                };
                if version > layout.max_app_version() {
                    return Err(ConfigError::Inconsistent(format!(
                        "zero-day candidate {k} needs app version {version} beyond the bit layout"
                    ))
                    .into());
                }
                let mut e = Exploit::new(
                    id,
                    format!("zeroday_{k}"),
                    ConfigPredicate::app_version(app, version, version),
                    z.success_prob,
                );
                e.zero_day = true;
                exploits.push(e);
            }
            Some(ZeroDayPrior::uniform(
                exploits[n_common..].to_vec(),
            )?)
        } else {
            None
        };
        let probes: Vec<Probe> = cfg
            .probes
            .iter()
            .enumerate()
            .map(|(i, p)| Probe::full(i, &layout, p.success_prob))
            .collect();
        let topology = match &cfg.topology_file {
            Some(path) => Some(
                std::fs::read_to_string(path)
                    .map_err(|e| EnvError::Topology(format!("{path}: {e}")))?,
            ),
            None => None,
        };
        let workload_requirement = ConfigPredicate {
            os_code: Some(cfg.os_code),
            ..Default::default()
        };
        Ok(ScenarioData {
            layout,
            utility,
            exploits,
            n_common,
            prior,
            probes,
            forest: None,
            master_seed,
            topology,
            workload_requirement,
            cfg,
        })
    }

    /// Encoding slot for an exploit id: common exploits keep their index,
    /// every zero-day template shares the next slot.
    pub fn exploit_enc_slot(&self, id: usize) -> usize {
        if id < self.n_common {
            id
        } else {
            self.n_common
        }
    }

    pub fn common_exploit_ids(&self) -> Vec<usize> {
        (0..self.n_common).collect()
    }
}

/// Full-state snapshot for rollback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub devices: Vec<DeviceState>,
    pub graph: NetworkGraph,
    pub blocked: BTreeSet<DeviceId>,
    pub ledger: WorkloadLedger,
    pub t_chi: Step,
    pub freeze: Step,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepWarning {
    RestoreWithoutCheckpoint,
    BlockAlreadyBlocked { device: DeviceId },
    UnblockNotBlocked { device: DeviceId },
    UpgradeAppMissing { device: DeviceId, app: usize },
    UpgradeAtMaxVersion { device: DeviceId, app: usize },
    OfflineTarget { device: DeviceId },
    DetectorUnavailable,
}

/// Reward components of one transition, reported separately so evaluation can
/// exclude the shaping term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub attacker_action: f64,
    pub attacker_stream: f64,
    pub shaping: f64,
    pub value_accrued: f64,
    pub value_clawed_back: f64,
    pub defender_action_utility: f64,
    pub defender_cost_paid: f64,
    pub compromised_count: usize,
    pub workloads_completed: usize,
    pub scans: usize,
}

impl RewardBreakdown {
    pub fn attacker_total(&self) -> f64 {
        self.attacker_action + self.attacker_stream
    }

    pub fn defender_total(&self, table: &UtilityTable) -> f64 {
        table.work_scale * (self.value_accrued - self.value_clawed_back)
            + self.defender_action_utility
            - table.comp_scale * self.compromised_count as f64
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Attacker reward without the shaping term.
    pub attacker_reward: f64,
    pub defender_reward: f64,
    pub shaping: f64,
    pub breakdown: RewardBreakdown,
    pub done: bool,
    pub warnings: Vec<StepWarning>,
    pub churn: Vec<ChurnEvent>,
    pub alerts: Vec<DeviceId>,
    pub new_compromises: Vec<DeviceId>,
    pub discoveries: Vec<DeviceId>,
}

/// Per-step record kept for trajectory logs and the accounting replay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: Step,
    pub attacker_kind: ActionKind,
    pub attacker_devices: Vec<DeviceId>,
    pub defender_kind: ActionKind,
    pub defender_devices: Vec<DeviceId>,
    pub breakdown: RewardBreakdown,
    pub attacker_total: f64,
    pub defender_total: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn attacker_return(&self) -> f64 {
        self.steps.iter().map(|s| s.attacker_total).sum()
    }

    pub fn defender_return(&self) -> f64 {
        self.steps.iter().map(|s| s.defender_total).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    scenario: Arc<ScenarioData>,
    pub episode_seed: u64,
    devices: Vec<DeviceState>,
    graph: NetworkGraph,
    ledger: WorkloadLedger,
    knowledge: KnowledgeLedger,
    possession: BTreeSet<usize>,
    zero_day_index: Option<usize>,
    blocked: BTreeSet<DeviceId>,
    checkpoints: VecDeque<Checkpoint>,
    t: Step,
    done: bool,
    rng: ChaCha8Rng,
    prev_phi: f64,
    probe_traffic: Vec<f64>,
    exploit_traffic: Vec<f64>,
    last_traffic: Vec<TrafficSample>,
    pub log: EpisodeLog,
}

impl Env {
    /// Start an episode; in zero-day scenarios the attacker's private draw is
    /// sampled from the prior under the episode seed.
    pub fn reset(scenario: &Arc<ScenarioData>, episode_seed: u64) -> Result<Env, EnvError> {
        Env::reset_with_zero_day(scenario, episode_seed, None)
    }

    /// Start an episode with a forced zero-day index (used by stratified
    /// ex-ante evaluation).
    pub fn reset_with_zero_day(
        scenario: &Arc<ScenarioData>,
        episode_seed: u64,
        forced_z: Option<usize>,
    ) -> Result<Env, EnvError> {
        let cfg = &scenario.cfg;
        let layout = &scenario.layout;
        let n = cfg.max_net_size;
        let mut init_rng = seeds::rng_from(episode_seed, &[seeds::tag("reset")]);

        // graph: organization devices first, then attacker-owned footholds
        let n_org = cfg.devices;
        let mut graph = match &scenario.topology {
            Some(text) => {
                let g = NetworkGraph::from_edge_list(text, n)?;
                if g.online_count() == 0 {
                    return Err(EnvError::Topology("edge list defines no online nodes".into()));
                }
                g
            }
            None => {
                let mut g = NetworkGraph::with_slots(n);
                for i in 0..n_org {
                    g.node_mut(i).online = true;
                }
                g.seed_clique(cfg.initial_attach_m + 1);
                for i in cfg.initial_attach_m + 1..n_org {
                    g.ba_attach(i, cfg.initial_attach_m, &mut init_rng);
                }
                g
            }
        };
        for dc in 0..cfg.domain_controllers {
            graph.node_mut(dc).domain_controller = true;
        }
        for k in 0..cfg.num_attacker_owned {
            let id = n_org + k;
            graph.node_mut(id).online = true;
            graph.node_mut(id).attacker_owned = true;
            graph.ba_attach(id, 1, &mut init_rng);
        }
        graph.reconnect_attacker_owned();

        // device states
        let mut devices: Vec<DeviceState> = (0..n).map(DeviceState::new).collect();
        let ad_app = cfg.apps.iter().position(|a| a == "active_directory");
        for d in devices.iter_mut() {
            d.config.set_os_code(layout, cfg.os_code);
            let vr = init_rng.gen_range(cfg.default_version..=cfg.default_version_high);
            d.config.set_os_version(layout, vr);
            for app in 0..layout.num_apps {
                if init_rng.gen::<f64>() < cfg.app_install_prob {
                    d.config.set_app_installed(layout, app, true);
                    let v = init_rng.gen_range(cfg.default_version..=cfg.default_version_high);
                    d.config.set_app_version(layout, app, v);
                }
            }
        }
        for i in 0..n {
            let info = *graph.node(i);
            devices[i].online = info.online;
            devices[i].attacker_owned = info.attacker_owned;
            devices[i].domain_controller = info.domain_controller;
            if info.domain_controller {
                if let Some(ad) = ad_app {
                    devices[i].config.set_app_installed(layout, ad as u32, true);
                    if devices[i].config.app_version(layout, ad as u32) == 0 {
                        devices[i].config.set_app_version(layout, ad as u32, cfg.default_version);
                    }
                }
            }
        }

        // zero-day draw, flaw planting and knowledge bookkeeping
        let mut possession: BTreeSet<usize> = scenario.common_exploit_ids().into_iter().collect();
        let mut known: Vec<usize> = scenario.common_exploit_ids();
        let mut zero_day_index = None;
        if let (Some(prior), Some(zcfg)) = (&scenario.prior, &cfg.zero_day) {
            let z = match forced_z {
                Some(z) => z,
                None => prior.sample_index(&mut seeds::rng_from(episode_seed, &[seeds::tag("zdraw")]))?,
            };
            let z_exploit_id = scenario.n_common + z;
            possession.insert(z_exploit_id);
            zero_day_index = Some(z);
            if zcfg.known {
                known.push(z_exploit_id);
            }
            plant_flaws(scenario, zcfg, &mut devices, &mut init_rng);
        }
        let knowledge = KnowledgeLedger::new(scenario.exploits.iter().map(|e| e.id), known);

        // initial compromises: floor(eta * active organization hosts)
        let mut org_ids: Vec<DeviceId> = (0..n_org).collect();
        let n_compromised = (cfg.eta * n_org as f64).floor() as usize;
        for i in 0..n_compromised {
            let j = init_rng.gen_range(i..org_ids.len());
            org_ids.swap(i, j);
        }
        for &d in org_ids.iter().take(n_compromised) {
            devices[d].compromise.set_compromised(true);
            devices[d].known_to_attacker = true;
        }
        for d in devices.iter_mut() {
            if d.attacker_owned {
                d.compromise.set_compromised(true);
                d.known_to_attacker = true;
            }
        }

        let last_traffic = (0..n)
            .map(|d| TrafficSample {
                device: d,
                step: 0,
                workload_traffic: 0.0,
                probe_traffic: 0.0,
                exploit_traffic: 0.0,
                neighbor_fanout: 0.0,
            })
            .collect();
        let mut env = Env {
            scenario: Arc::clone(scenario),
            episode_seed,
            devices,
            graph,
            ledger: WorkloadLedger::default(),
            knowledge,
            possession,
            zero_day_index,
            blocked: BTreeSet::new(),
            checkpoints: VecDeque::new(),
            t: 0,
            done: false,
            rng: seeds::rng_from(episode_seed, &[seeds::tag("dynamics")]),
            prev_phi: 0.0,
            probe_traffic: vec![0.0; n],
            exploit_traffic: vec![0.0; n],
            last_traffic,
            log: EpisodeLog::default(),
        };
        env.prev_phi = env.phi();
        Ok(env)
    }

    pub fn scenario(&self) -> &Arc<ScenarioData> {
        &self.scenario
    }

    pub fn devices(&self) -> &[DeviceState] {
        &self.devices
    }

    /// Direct state access for scenario scripting and test harnesses (e.g.
    /// injecting exogenous compromises).
    pub fn devices_mut(&mut self) -> &mut [DeviceState] {
        &mut self.devices
    }

    pub fn graph_mut(&mut self) -> &mut NetworkGraph {
        &mut self.graph
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn ledger(&self) -> &WorkloadLedger {
        &self.ledger
    }

    pub fn knowledge(&self) -> &KnowledgeLedger {
        &self.knowledge
    }

    pub fn possession(&self) -> &BTreeSet<usize> {
        &self.possession
    }

    pub fn zero_day_index(&self) -> Option<usize> {
        self.zero_day_index
    }

    pub fn blocked(&self) -> &BTreeSet<DeviceId> {
        &self.blocked
    }

    pub fn checkpoint_count(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn checkpoints(&self) -> &VecDeque<Checkpoint> {
        &self.checkpoints
    }

    pub fn step_index(&self) -> Step {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn last_traffic(&self) -> &[TrafficSample] {
        &self.last_traffic
    }

    /// Compromised fraction of the device slots (the shaping potential).
    pub fn phi(&self) -> f64 {
        self.compromised_count() as f64 / self.scenario.cfg.max_net_size as f64
    }

    pub fn compromised_count(&self) -> usize {
        self.devices
            .iter()
            .filter(|d| d.online && d.compromised())
            .count()
    }

    pub fn observation(&self, role: Role) -> Vec<f64> {
        let n = self.scenario.cfg.max_net_size;
        match role {
            Role::Defender => obs::defender_observation(&self.devices, &self.scenario.layout, n),
            Role::Attacker => obs::attacker_observation(&self.devices, &self.scenario.layout, n),
        }
    }

    pub fn encode_action(&self, a: &JointAction) -> Vec<f64> {
        let scenario = Arc::clone(&self.scenario);
        obs::encode_action(
            &self.scenario.cfg.encoding,
            self.scenario.cfg.max_net_size,
            a,
            &move |e| scenario.exploit_enc_slot(e),
        )
    }

    /// Per-device candidate moves for the role, derived only from what the
    /// role legitimately knows: the defender sees configurations and its own
    /// defensive state plus the exploits in its knowledge set; the attacker
    /// sees its discovered devices, its possessions, and its footholds'
    /// out-edges.
    pub fn candidates(&self, role: Role) -> Vec<(DeviceId, Vec<CandidateAction>)> {
        let mut out = Vec::new();
        let layout = &self.scenario.layout;
        match role {
            Role::Defender => {
                let has_checkpoint = !self.checkpoints.is_empty();
                let known_exploits: Vec<&Exploit> = self
                    .knowledge
                    .known()
                    .map(|id| &self.scenario.exploits[id])
                    .collect();
                for (d, dev) in self.devices.iter().enumerate() {
                    if !dev.online || dev.attacker_owned {
                        continue;
                    }
                    let mut v = vec![
                        CandidateAction { kind: ActionKind::Clean, device: d, exploit: None, app: None },
                        CandidateAction { kind: ActionKind::Scan, device: d, exploit: None, app: None },
                        CandidateAction { kind: ActionKind::Checkpoint, device: d, exploit: None, app: None },
                    ];
                    if has_checkpoint {
                        v.push(CandidateAction { kind: ActionKind::Restore, device: d, exploit: None, app: None });
                    }
                    if self.blocked.contains(&d) {
                        v.push(CandidateAction { kind: ActionKind::Unblock, device: d, exploit: None, app: None });
                    } else {
                        v.push(CandidateAction { kind: ActionKind::Block, device: d, exploit: None, app: None });
                    }
                    // patch targets: apps on this device matching an exploit
                    // the defender knows about
                    let mut patch_apps: BTreeSet<usize> = BTreeSet::new();
                    for e in &known_exploits {
                        if config_matches(layout, dev.config, &e.requires) {
                            for app in e.requires.mentioned_apps() {
                                patch_apps.insert(app as usize);
                            }
                        }
                    }
                    for app in patch_apps {
                        v.push(CandidateAction {
                            kind: ActionKind::Upgrade,
                            device: d,
                            exploit: None,
                            app: Some(app),
                        });
                    }
                    out.push((d, v));
                }
            }
            Role::Attacker => {
                for (d, dev) in self.devices.iter().enumerate() {
                    if !dev.online {
                        continue;
                    }
                    let mut v = Vec::new();
                    if dev.known_to_attacker {
                        if !dev.compromised() {
                            for &e_id in &self.possession {
                                let e = &self.scenario.exploits[e_id];
                                if config_matches(layout, dev.config, &e.requires) {
                                    v.push(CandidateAction {
                                        kind: ActionKind::Attack,
                                        device: d,
                                        exploit: Some(e_id),
                                        app: None,
                                    });
                                }
                            }
                        }
                    } else if self.has_probe_source(d) {
                        v.push(CandidateAction { kind: ActionKind::Probe, device: d, exploit: None, app: None });
                    }
                    if !v.is_empty() {
                        out.push((d, v));
                    }
                }
            }
        }
        out
    }

    fn edge_usable(&self, i: DeviceId, j: DeviceId) -> bool {
        !self.blocked.contains(&i) && !self.blocked.contains(&j)
    }

    fn has_probe_source(&self, target: DeviceId) -> bool {
        self.devices.iter().enumerate().any(|(s, dev)| {
            dev.compromised()
                && dev.online
                && self.graph.has_edge(s, target)
                && self.edge_usable(s, target)
        })
    }

    fn via_domain_controller(&self, target: DeviceId) -> bool {
        self.devices.iter().enumerate().any(|(s, dev)| {
            dev.domain_controller
                && dev.compromised()
                && dev.online
                && self.graph.has_edge(s, target)
                && self.edge_usable(s, target)
        })
    }

    /// Structural validation; state-dependent failures are modeled outcomes,
    /// not errors.
    pub fn validate_action(&self, a: &JointAction) -> Result<(), EnvError> {
        let fail = |m: String| Err(EnvError::InvalidAction(m));
        if !a.kind.belongs_to(a.role) {
            return fail(format!("{} is not in the {:?} action set", a.kind.name(), a.role));
        }
        if a.kind == ActionKind::Pass {
            if !(a.devices.is_empty() && a.exploits.is_empty() && a.apps.is_empty()) {
                return fail("pass carries no devices or assignments".into());
            }
            return Ok(());
        }
        if a.devices.is_empty() {
            return fail("device set must be non-empty unless passing".into());
        }
        if !a.devices.windows(2).all(|w| w[0] < w[1]) {
            return fail("device set must be strictly increasing".into());
        }
        let n = self.scenario.cfg.max_net_size;
        if a.devices.iter().any(|&d| d >= n) {
            return fail(format!("device index out of range (max {n})"));
        }
        match a.kind {
            ActionKind::Attack => {
                if a.exploits.len() != a.devices.len() {
                    return fail("attack needs one exploit per device".into());
                }
                for &e in &a.exploits {
                    if !self.possession.contains(&e) {
                        return fail(format!("exploit {e} is not possessed by the attacker"));
                    }
                }
                for &d in &a.devices {
                    if !self.devices[d].known_to_attacker {
                        return fail(format!("attack target {d} unknown to the attacker"));
                    }
                }
            }
            ActionKind::Upgrade => {
                if a.apps.len() != a.devices.len() {
                    return fail("upgrade needs one app per device".into());
                }
                if a.apps.iter().any(|&p| p >= self.scenario.layout.num_apps as usize) {
                    return fail("app index out of range".into());
                }
            }
            _ => {
                if !a.exploits.is_empty() || !a.apps.is_empty() {
                    return fail("exploit/app assignments only valid for attack/upgrade".into());
                }
            }
        }
        if a.role == Role::Defender {
            for &d in &a.devices {
                let dev = &self.devices[d];
                if !dev.online || dev.attacker_owned {
                    return fail(format!("defender cannot target device {d}"));
                }
            }
        }
        Ok(())
    }

    /// Advance one step: the attacker's action resolves first, then the
    /// defender's, then workloads tick, churn evolves, new workloads spawn,
    /// and rewards are computed.
    pub fn step(
        &mut self,
        defender: &JointAction,
        attacker: &JointAction,
    ) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        self.validate_action(attacker)?;
        self.validate_action(defender)?;
        let now = self.t;
        let n = self.scenario.cfg.max_net_size;
        let mut warnings = Vec::new();
        self.probe_traffic = vec![0.0; n];
        self.exploit_traffic = vec![0.0; n];

        let (attacker_action, new_compromises, discoveries) =
            self.apply_attacker_action(attacker, &mut warnings);
        let defender_out = self.apply_defender_action(defender, now, &mut warnings);

        // workload progress (per-device counts feed the traffic features)
        let progressed: Vec<f64> = (0..n)
            .map(|d| {
                let dev = &self.devices[d];
                if dev.online && !dev.busy(now) && !dev.attacker_owned {
                    self.ledger.running_on(d) as f64
                } else {
                    0.0
                }
            })
            .collect();
        let tick_out = workloads::tick(&mut self.ledger, &self.devices, now);

        // network churn
        let churn = if self.scenario.cfg.churn.lambda > 0.0 {
            let pool: Vec<DeviceId> = (0..n)
                .filter(|&d| !self.graph.node(d).online && !self.graph.node(d).attacker_owned)
                .collect();
            let cfg = self.scenario.cfg.churn;
            let events = self.graph.evolve(&cfg, &pool, &mut self.rng);
            for ev in &events {
                match ev {
                    ChurnEvent::Added { node, attacker_owned } => {
                        self.devices[*node].online = true;
                        if *attacker_owned {
                            self.devices[*node].attacker_owned = true;
                            self.devices[*node].known_to_attacker = true;
                        }
                    }
                    ChurnEvent::Removed { node } => {
                        // workloads and busy-time reset; compromise record persists
                        self.devices[*node].online = false;
                        self.devices[*node].busy_until = 0;
                        workloads::drop_in_flight(&mut self.ledger, *node);
                    }
                    _ => {}
                }
            }
            events
        } else {
            Vec::new()
        };

        // spawn and place new workloads
        for d in 0..n {
            let dev = &self.devices[d];
            if !dev.online || dev.attacker_owned || dev.busy(now) {
                continue;
            }
            let spawned = workloads::spawn(
                dev,
                &self.scenario.cfg.workloads,
                &self.scenario.workload_requirement,
                &mut self.rng,
            );
            for mut w in spawned {
                let placement = workloads::place(
                    &w,
                    &self.scenario.layout,
                    &self.graph,
                    &self.devices,
                    &self.ledger,
                    &self.scenario.cfg.workloads,
                    &|i, j| self.edge_usable(i, j),
                );
                if let Placement::Host(h) = placement {
                    w.host = Some(h);
                    self.ledger.in_flight.push(w);
                }
            }
        }

        self.enforce_attacker_owned();
        self.finalize_traffic(now, &progressed);

        // rewards
        let compromised_count = self.compromised_count();
        let phi = self.phi();
        let gamma = self.scenario.cfg.gamma;
        let shaping = self.scenario.cfg.beta_shaping * (gamma * phi - self.prev_phi);
        self.prev_phi = phi;
        let breakdown = RewardBreakdown {
            attacker_action,
            attacker_stream: compromised_count as f64,
            shaping,
            value_accrued: tick_out.value,
            value_clawed_back: defender_out.value_clawed,
            defender_action_utility: defender_out.utility,
            defender_cost_paid: defender_out.cost_paid,
            compromised_count,
            workloads_completed: tick_out.completed.len(),
            scans: defender_out.scans,
        };
        let attacker_reward = breakdown.attacker_total();
        let defender_reward = breakdown.defender_total(&self.scenario.utility);

        self.t += 1;
        self.done = self.t >= self.scenario.cfg.steps;
        self.log.steps.push(StepRecord {
            step: now,
            attacker_kind: attacker.kind,
            attacker_devices: attacker.devices.clone(),
            defender_kind: defender.kind,
            defender_devices: defender.devices.clone(),
            breakdown,
            attacker_total: attacker_reward,
            defender_total: defender_reward,
        });

        Ok(StepOutcome {
            attacker_reward,
            defender_reward,
            shaping,
            breakdown,
            done: self.done,
            warnings,
            churn,
            alerts: defender_out.alerts,
            new_compromises,
            discoveries,
        })
    }

    fn apply_attacker_action(
        &mut self,
        a: &JointAction,
        warnings: &mut Vec<StepWarning>,
    ) -> (f64, Vec<DeviceId>, Vec<DeviceId>) {
        let table = self.scenario.utility.clone();
        let mut reward = 0.0;
        let mut new_compromises = Vec::new();
        let mut discoveries = Vec::new();
        match a.kind {
            ActionKind::Pass => {}
            ActionKind::Attack => {
                for (&d, &e_id) in a.devices.iter().zip(&a.exploits) {
                    let e = self.scenario.exploits[e_id].clone();
                    if !self.devices[d].online {
                        warnings.push(StepWarning::OfflineTarget { device: d });
                        continue;
                    }
                    // any deployment of a zero-day reveals it
                    if e.zero_day {
                        self.knowledge.reveal_on_use(e_id);
                    }
                    self.exploit_traffic[d] += 1.0;
                    if !config_matches(&self.scenario.layout, self.devices[d].config, &e.requires) {
                        continue; // mismatched exploits fail regardless of p_e
                    }
                    let via_dc = self.via_domain_controller(d);
                    let p = if via_dc { 1.0 } else { e.success_prob };
                    if self.rng.gen::<f64>() < p {
                        let newly = !self.devices[d].compromised();
                        self.devices[d] = apply_exploit_delta(&self.devices[d], &e);
                        if newly {
                            new_compromises.push(d);
                            reward += table
                                .immediate_utility(
                                    Role::Attacker,
                                    UtilityEvent::AttackSuccess { via_domain_controller: via_dc },
                                )
                                .expect("attacker event");
                        }
                    }
                }
            }
            ActionKind::Probe => {
                let probe = self.scenario.probes[0].clone();
                for &d in &a.devices {
                    if !self.devices[d].online {
                        continue;
                    }
                    if !self.has_probe_source(d) {
                        continue; // probes require a compromised source with a link
                    }
                    self.probe_traffic[d] += 1.0;
                    if !config_matches(&self.scenario.layout, self.devices[d].config, &probe.requires) {
                        continue;
                    }
                    if self.rng.gen::<f64>() < probe.success_prob
                        && !self.devices[d].known_to_attacker
                    {
                        self.devices[d].known_to_attacker = true;
                        discoveries.push(d);
                        reward += table
                            .immediate_utility(Role::Attacker, UtilityEvent::ProbeDiscovery)
                            .expect("attacker event");
                    }
                }
            }
            _ => unreachable!("validated attacker action"),
        }
        (reward, new_compromises, discoveries)
    }

    fn apply_defender_action(
        &mut self,
        a: &JointAction,
        now: Step,
        warnings: &mut Vec<StepWarning>,
    ) -> DefenderOutcome {
        let table = self.scenario.utility.clone();
        let busy_cfg = self.scenario.cfg.busy;
        let mut out = DefenderOutcome::default();
        let add = |out: &mut DefenderOutcome, u: f64| {
            out.utility += u;
            if u < 0.0 {
                out.cost_paid += -u;
            }
        };
        match a.kind {
            ActionKind::Pass => {}
            ActionKind::Clean => {
                for &d in &a.devices {
                    let was = self.devices[d].compromised();
                    self.devices[d].compromise.clear();
                    self.devices[d].busy_until = self.devices[d].busy_until.max(now) + busy_cfg.clean;
                    let u = table
                        .immediate_utility(Role::Defender, UtilityEvent::Clean { target_compromised: was })
                        .expect("defender event");
                    add(&mut out, u);
                }
            }
            ActionKind::Checkpoint => {
                self.checkpoints.push_back(Checkpoint {
                    devices: self.devices.clone(),
                    graph: self.graph.clone(),
                    blocked: self.blocked.clone(),
                    ledger: self.ledger.clone(),
                    t_chi: now,
                    freeze: busy_cfg.checkpoint_freeze,
                });
                while self.checkpoints.len() > self.scenario.cfg.checkpoint_capacity {
                    self.checkpoints.pop_front();
                }
                for dev in self.devices.iter_mut() {
                    if dev.online {
                        dev.busy_until = dev.busy_until.max(now + busy_cfg.checkpoint_freeze);
                    }
                }
                let u = table
                    .immediate_utility(Role::Defender, UtilityEvent::Checkpoint)
                    .expect("defender event");
                add(&mut out, u);
            }
            ActionKind::Restore => {
                let u = table
                    .immediate_utility(Role::Defender, UtilityEvent::Restore)
                    .expect("defender event");
                add(&mut out, u);
                if let Some(ck) = self.checkpoints.back().cloned() {
                    for d in 0..self.devices.len() {
                        let drop = workloads::drop_for_reset(&mut self.ledger, d, ck.t_chi);
                        out.value_clawed += drop.clawed_back_value;
                    }
                    for (dev, saved) in self.devices.iter_mut().zip(&ck.devices) {
                        dev.config = saved.config;
                        dev.compromise = saved.compromise;
                        dev.online = saved.online;
                        // information is not rolled back: the attacker keeps its
                        // knowledge and anomaly scores stay current
                    }
                    self.graph = ck.graph.clone();
                    self.blocked = ck.blocked.clone();
                    self.graph.reconnect_attacker_owned();
                    let (a_, b_, c_) = (
                        busy_cfg.restore_tri_min,
                        busy_cfg.restore_tri_mode,
                        busy_cfg.restore_tri_max,
                    );
                    for dev in self.devices.iter_mut() {
                        if dev.online {
                            let draw = workloads::triangular(&mut self.rng, a_, b_, c_);
                            dev.busy_until = now + draw.ceil() as Step;
                        }
                    }
                    self.enforce_attacker_owned();
                } else {
                    warnings.push(StepWarning::RestoreWithoutCheckpoint);
                }
            }
            ActionKind::Upgrade => {
                let layout = self.scenario.layout;
                for (&d, &app) in a.devices.iter().zip(&a.apps) {
                    let u = table
                        .immediate_utility(Role::Defender, UtilityEvent::Upgrade)
                        .expect("defender event");
                    add(&mut out, u);
                    let dev = &mut self.devices[d];
                    if !dev.config.app_installed(&layout, app as u32) {
                        warnings.push(StepWarning::UpgradeAppMissing { device: d, app });
                        continue;
                    }
                    let v = dev.config.app_version(&layout, app as u32);
                    if v >= layout.max_app_version() {
                        warnings.push(StepWarning::UpgradeAtMaxVersion { device: d, app });
                        continue;
                    }
                    let update = SoftwareUpdate::app_version_change(
                        0,
                        &layout,
                        app as u32,
                        v,
                        v + 1,
                        busy_cfg.upgrade,
                    );
                    dev.busy_until = dev.busy_until.max(now);
                    *dev = apply_update_delta(&layout, dev, &update).expect("requirement holds");
                }
            }
            ActionKind::Scan => {
                out.scans = a.devices.len();
                match self.scenario.forest.as_ref() {
                    Some(forest) => {
                        for &d in &a.devices {
                            let score = forest.score(&self.last_traffic[d].features());
                            self.devices[d].anomaly_score = score;
                            if score > forest.threshold {
                                out.alerts.push(d);
                            }
                        }
                    }
                    None => warnings.push(StepWarning::DetectorUnavailable),
                }
                for _ in &a.devices {
                    let u = table
                        .immediate_utility(Role::Defender, UtilityEvent::Scan)
                        .expect("defender event");
                    add(&mut out, u);
                }
            }
            ActionKind::Block => {
                for &d in &a.devices {
                    if !self.blocked.insert(d) {
                        warnings.push(StepWarning::BlockAlreadyBlocked { device: d });
                    }
                    let u = table
                        .immediate_utility(Role::Defender, UtilityEvent::Block)
                        .expect("defender event");
                    add(&mut out, u);
                }
            }
            ActionKind::Unblock => {
                for &d in &a.devices {
                    if !self.blocked.remove(&d) {
                        warnings.push(StepWarning::UnblockNotBlocked { device: d });
                    }
                    let u = table
                        .immediate_utility(Role::Defender, UtilityEvent::Unblock)
                        .expect("defender event");
                    add(&mut out, u);
                }
            }
            _ => unreachable!("validated defender action"),
        }
        out
    }

    /// Attacker-owned devices remain permanently compromised and online.
    fn enforce_attacker_owned(&mut self) {
        for (i, dev) in self.devices.iter_mut().enumerate() {
            let owned = dev.attacker_owned || self.graph.node(i).attacker_owned;
            if owned {
                dev.attacker_owned = true;
                dev.online = true;
                dev.compromise.set_compromised(true);
                dev.known_to_attacker = true;
                self.graph.node_mut(i).attacker_owned = true;
                self.graph.node_mut(i).online = true;
            }
        }
    }

    fn finalize_traffic(&mut self, now: Step, progressed: &[f64]) {
        for d in 0..self.devices.len() {
            let dev = &self.devices[d];
            self.last_traffic[d] = TrafficSample {
                device: d,
                step: now,
                workload_traffic: if dev.online { progressed[d] } else { 0.0 },
                probe_traffic: self.probe_traffic[d],
                exploit_traffic: self.exploit_traffic[d],
                neighbor_fanout: if dev.online {
                    self.graph.out_neighbors(d).count() as f64
                } else {
                    0.0
                },
            };
        }
    }

    /// Independent accounting replay: recompute the defender return from the
    /// completion log and the per-step action/compromise records.
    pub fn replay_defender_return(&self) -> f64 {
        let table = &self.scenario.utility;
        let work = table.work_scale * self.ledger.replay_accrued();
        let actions: f64 = self.log.steps.iter().map(|s| s.breakdown.defender_action_utility).sum();
        let penalty: f64 = self
            .log
            .steps
            .iter()
            .map(|s| table.comp_scale * s.breakdown.compromised_count as f64)
            .sum();
        work + actions - penalty
    }
}

#[derive(Debug, Default)]
struct DefenderOutcome {
    utility: f64,
    cost_paid: f64,
    value_clawed: f64,
    scans: usize,
    alerts: Vec<DeviceId>,
}

/// Plant zero-day flaws on the organization's devices: in the fixed regime a
/// constant number of flaws each instantiate a uniformly drawn candidate; in
/// the submartingale regime one flaw per candidate-set element, all matching
/// every candidate.
fn plant_flaws(
    scenario: &ScenarioData,
    zcfg: &ZeroDayConfig,
    devices: &mut [DeviceState],
    rng: &mut ChaCha8Rng,
) {
    let layout = &scenario.layout;
    let n_org = scenario.cfg.devices;
    let max_per_device = 3usize;
    let mut flaw_counts = vec![0usize; n_org];
    let mut flawed: BTreeSet<(DeviceId, u32)> = BTreeSet::new();
    let n_flaws = match zcfg.regime {
        VulnRegime::Fixed => zcfg.fixed_flaws,
        VulnRegime::Submartingale => zcfg.candidates,
    };
    for k in 0..n_flaws {
        let template = match zcfg.regime {
            VulnRegime::Fixed => &scenario.exploits[scenario.n_common + rng.gen_range(0..zcfg.candidates)],
            VulnRegime::Submartingale => &scenario.exploits[scenario.n_common + (k % zcfg.candidates)],
        };
        let req = &template.requires.apps[0];
        let app = req.app;
        let version = req.version.expect("zero-day templates pin a version").lo;
        let eligible: Vec<DeviceId> = (0..n_org)
            .filter(|&d| flaw_counts[d] < max_per_device && !flawed.contains(&(d, app)))
            .collect();
        if eligible.is_empty() {
            continue;
        }
        let d = eligible[rng.gen_range(0..eligible.len())];
        devices[d].config.set_app_installed(layout, app, true);
        devices[d].config.set_app_version(layout, app, version);
        flaw_counts[d] += 1;
        flawed.insert((d, app));
    }
}
