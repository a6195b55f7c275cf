//! Scenario configuration: the JSON-facing description of an encounter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BitLayout, ConfigPredicate, UtilityTable};
use crate::netgraph::ChurnConfig;
use crate::workloads::WorkloadConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config inconsistency: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploitSpec {
    pub name: String,
    #[serde(default)]
    pub requires: ConfigPredicate,
    #[serde(default = "one_step")]
    pub duration: u64,
    #[serde(default = "one_f64")]
    pub value: f64,
    pub success_prob: f64,
    #[serde(default = "default_true")]
    pub root: bool,
}

fn one_step() -> u64 {
    1
}

fn one_f64() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    #[serde(default = "one_f64")]
    pub success_prob: f64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec { success_prob: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VulnRegime {
    /// A fixed count of zero-day flaws regardless of the candidate set size.
    Fixed,
    /// Flaw count grows linearly with the candidate set size (slope 1).
    Submartingale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroDayConfig {
    pub regime: VulnRegime,
    /// Size of the candidate set |D_z|.
    pub candidates: usize,
    /// When true, the sampled zero-day starts in the defender-known set.
    #[serde(default)]
    pub known: bool,
    /// Flaw count in the fixed regime.
    #[serde(default = "ten")]
    pub fixed_flaws: usize,
    /// Success probability of zero-day templates.
    #[serde(default = "default_zero_day_prob")]
    pub success_prob: f64,
}

fn ten() -> usize {
    10
}

fn default_zero_day_prob() -> f64 {
    0.6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusyParams {
    pub clean: u64,
    pub upgrade: u64,
    pub checkpoint_freeze: u64,
    pub restore_tri_min: f64,
    pub restore_tri_mode: f64,
    pub restore_tri_max: f64,
}

impl Default for BusyParams {
    fn default() -> Self {
        BusyParams {
            clean: 1,
            upgrade: 2,
            checkpoint_freeze: 1,
            restore_tri_min: 1.0,
            restore_tri_mode: 2.0,
            restore_tri_max: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub trees: usize,
    pub subsample: usize,
    pub burn_in_steps: u64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            trees: 100,
            subsample: 64,
            burn_in_steps: 10,
        }
    }
}

/// Threshold kept out of `DetectorParams` so it serializes at the top level
/// next to the other scalar knobs.
fn default_threshold() -> f64 {
    0.6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingDims {
    pub defender_types: usize,
    pub attacker_types: usize,
    pub defender_exploit_slots: usize,
    pub defender_app_slots: usize,
    pub attacker_exploit_slots: usize,
    pub attacker_app_slots: usize,
}

impl Default for EncodingDims {
    fn default() -> Self {
        EncodingDims {
            defender_types: 8,
            attacker_types: 3,
            defender_exploit_slots: 5,
            defender_app_slots: 5,
            attacker_exploit_slots: 4,
            attacker_app_slots: 4,
        }
    }
}

/// Everything that defines one encounter scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub name: String,
    /// Initially active organization devices.
    pub devices: usize,
    /// Total device slots (organization + attacker-owned + offline pool).
    pub max_net_size: usize,
    /// Steps per episode T.
    pub steps: u64,
    /// Initial compromised ratio over active organization hosts.
    pub eta: f64,
    pub num_attacker_owned: usize,
    pub domain_controllers: usize,
    pub gamma: f64,
    pub work_scale: f64,
    pub comp_scale: f64,
    pub def_scale: f64,
    #[serde(default = "one_f64")]
    pub defense_cost_multiplier: f64,
    /// Potential-based shaping weight for the attacker.
    pub beta_shaping: f64,
    #[serde(default)]
    pub churn: ChurnConfig,
    #[serde(default)]
    pub workloads: WorkloadConfig,
    #[serde(default)]
    pub detector: DetectorParams,
    #[serde(default = "default_threshold")]
    pub detector_threshold: f64,
    /// Edges used when first wiring the initial organization graph.
    #[serde(default = "two")]
    pub initial_attach_m: usize,
    pub os_code: u8,
    #[serde(default = "one_u8")]
    pub default_version: u8,
    /// Upper bound for initially sampled version numbers ("defaulthigh").
    #[serde(default = "three_u8")]
    pub default_version_high: u8,
    pub apps: Vec<String>,
    #[serde(default = "default_install_prob")]
    pub app_install_prob: f64,
    pub exploits: Vec<ExploitSpec>,
    #[serde(default = "default_probes")]
    pub probes: Vec<ProbeSpec>,
    #[serde(default)]
    pub zero_day: Option<ZeroDayConfig>,
    #[serde(default = "one_usize")]
    pub checkpoint_capacity: usize,
    #[serde(default)]
    pub busy: BusyParams,
    #[serde(default)]
    pub encoding: EncodingDims,
    /// Optional exogenous topology (edge-list text file) replacing the
    /// generated initial graph.
    #[serde(default)]
    pub topology_file: Option<String>,
    /// Overrides of the immediate-utility table entries.
    #[serde(default)]
    pub utilities: Option<UtilityTable>,
}

fn two() -> usize {
    2
}

fn one_u8() -> u8 {
    1
}

fn three_u8() -> u8 {
    3
}

fn one_usize() -> usize {
    1
}

fn default_install_prob() -> f64 {
    0.8
}

fn default_probes() -> Vec<ProbeSpec> {
    vec![ProbeSpec::default()]
}

impl EnvConfig {
    pub fn layout(&self) -> BitLayout {
        BitLayout {
            num_apps: self.apps.len() as u32,
            ..BitLayout::default()
        }
    }

    /// The utility table with this scenario's scaling knobs applied.
    pub fn utility_table(&self) -> UtilityTable {
        let mut t = self.utilities.clone().unwrap_or_default();
        t.work_scale = self.work_scale;
        t.comp_scale = self.comp_scale;
        t.def_scale = self.def_scale;
        t.defense_cost_multiplier = self.defense_cost_multiplier;
        t
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Inconsistent(msg));
        if self.devices == 0 || self.steps == 0 {
            return fail("devices and steps must be positive".into());
        }
        if self.domain_controllers > self.devices {
            return fail(format!(
                "{} domain controllers but only {} devices",
                self.domain_controllers, self.devices
            ));
        }
        if self.devices + self.num_attacker_owned > self.max_net_size {
            return fail(format!(
                "devices ({}) + attacker-owned ({}) exceed max_net_size ({})",
                self.devices, self.num_attacker_owned, self.max_net_size
            ));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return fail(format!("eta {} outside [0, 1]", self.eta));
        }
        if self.checkpoint_capacity == 0 {
            return fail("checkpoint capacity must be at least 1".into());
        }
        if self.devices < self.initial_attach_m + 1 {
            return fail("devices must exceed initial_attach_m".into());
        }
        self.layout().validate().map_err(|e| ConfigError::Inconsistent(e.to_string()))?;
        let n_exploit_slots = self.encoding.attacker_exploit_slots;
        let needs = self.exploits.len() + usize::from(self.zero_day.is_some());
        if needs > n_exploit_slots {
            return fail(format!(
                "{} exploit encoding slots cannot hold {} common exploits plus zero-day",
                n_exploit_slots, needs
            ));
        }
        if let Some(z) = &self.zero_day {
            if z.candidates == 0 {
                return fail("zero-day candidate set must be non-empty".into());
            }
        }
        if self.probes.is_empty() {
            return fail("at least one probe must be defined".into());
        }
        Ok(())
    }

    /// The scenario studied throughout: a Windows Server fleet with remotely
    /// accessible services, two seeded critical CVEs, domain controllers and
    /// persistent attacker footholds.
    pub fn volt_typhoon() -> EnvConfig {
        EnvConfig {
            name: "volt_typhoon".into(),
            devices: 10,
            max_net_size: 20,
            steps: 30,
            eta: 0.4,
            num_attacker_owned: 5,
            domain_controllers: 3,
            gamma: 0.99,
            work_scale: 1.0,
            comp_scale: 30.0,
            def_scale: 1.0,
            defense_cost_multiplier: 1.0,
            beta_shaping: 0.05,
            churn: ChurnConfig::default(),
            workloads: WorkloadConfig::default(),
            detector: DetectorParams::default(),
            detector_threshold: 0.6,
            initial_attach_m: 2,
            os_code: 2,
            default_version: 1,
            default_version_high: 3,
            apps: vec![
                "vpn".into(),
                "rdp".into(),
                "active_directory".into(),
                "password_mgmt".into(),
                "fortios".into(),
            ],
            app_install_prob: 0.8,
            exploits: vec![
                ExploitSpec {
                    name: "ED3A999C-9184-4D27-A62E-3D8A3F0D4F27".into(),
                    requires: ConfigPredicate::app_version(0, 1, 2),
                    duration: 1,
                    value: 1.0,
                    success_prob: 0.6,
                    root: true,
                },
                ExploitSpec {
                    name: "0A5713AE-B7C5-4599-8E4F-9C235E73E5F6".into(),
                    requires: ConfigPredicate::app_version(4, 1, 2),
                    duration: 1,
                    value: 1.0,
                    success_prob: 0.6,
                    root: true,
                },
            ],
            probes: default_probes(),
            zero_day: None,
            checkpoint_capacity: 1,
            busy: BusyParams::default(),
            encoding: EncodingDims::default(),
            topology_file: None,
            utilities: None,
        }
    }

    /// The Bayesian variant: one common exploit plus one private zero-day
    /// drawn from a candidate set of the given size. Workload value drops to
    /// 0.01 in the zero-day experiments.
    pub fn volt_typhoon_zero_day(regime: VulnRegime, candidates: usize, known: bool) -> EnvConfig {
        let mut cfg = EnvConfig::volt_typhoon();
        cfg.name = format!(
            "volt_typhoon_zeroday_{}_{}{}",
            match regime {
                VulnRegime::Fixed => "fixed",
                VulnRegime::Submartingale => "submartingale",
            },
            candidates,
            if known { "_known" } else { "" }
        );
        cfg.exploits.truncate(1);
        cfg.work_scale = 0.01;
        cfg.zero_day = Some(ZeroDayConfig {
            regime,
            candidates,
            known,
            fixed_flaws: 10,
            success_prob: 0.6,
        });
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volt_config_is_valid_and_round_trips() {
        let cfg = EnvConfig::volt_typhoon();
        cfg.validate().unwrap();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: EnvConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        let mut cfg = EnvConfig::volt_typhoon();
        cfg.domain_controllers = 11;
        assert!(cfg.validate().is_err());

        let mut cfg = EnvConfig::volt_typhoon();
        cfg.eta = 1.5;
        assert!(cfg.validate().is_err());

        let mut cfg = EnvConfig::volt_typhoon();
        cfg.max_net_size = 12;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sparse_json_uses_defaults() {
        let json = r#"{
            "name": "tiny",
            "devices": 4,
            "max_net_size": 8,
            "steps": 10,
            "eta": 0.25,
            "num_attacker_owned": 1,
            "domain_controllers": 1,
            "gamma": 0.99,
            "work_scale": 1.0,
            "comp_scale": 30.0,
            "def_scale": 1.0,
            "beta_shaping": 0.05,
            "os_code": 2,
            "apps": ["vpn", "rdp"],
            "exploits": [
                {"name": "e0", "success_prob": 0.6,
                 "requires": {"apps": [{"app": 0, "version": {"lo": 1, "hi": 2}}]}}
            ]
        }"#;
        let cfg: EnvConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.checkpoint_capacity, 1);
        assert_eq!(cfg.detector.trees, 100);
        assert_eq!(cfg.churn.lambda, 0.7);
        assert_eq!(cfg.probes.len(), 1);
    }

    #[test]
    fn zero_day_variant_scales_work_value() {
        let cfg = EnvConfig::volt_typhoon_zero_day(VulnRegime::Fixed, 5, true);
        cfg.validate().unwrap();
        assert_eq!(cfg.work_scale, 0.01);
        assert_eq!(cfg.exploits.len(), 1);
        assert!(cfg.zero_day.unwrap().known);
    }
}
