//! Device state algebra: configuration and compromise bit vectors, exploit /
//! probe / update tuples, and the immediate-utility table.
//!
//! All operations here are pure value transformations. The bit layout of a
//! device configuration is fixed per scenario:
//!
//! ```text
//! [os code][os version][app 0: installed flag | version][app 1: ...]...[port flags]
//! ```
//!
//! Compromise state is a second, independent vector:
//!
//! ```text
//! [compromised flag][root access flag][compromising exploit id + 1]
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type DeviceId = usize;
pub type Step = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("update {update} not applicable: device config does not satisfy its requirement")]
    UpdateNotApplicable { update: usize },
    #[error("bit layout exceeds 64 bits ({0})")]
    LayoutTooWide(u32),
    #[error("utility event does not belong to role {0:?}")]
    RoleMismatch(Role),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Attacker,
    Defender,
}

impl Role {
    pub fn opponent(self) -> Role {
        match self {
            Role::Attacker => Role::Defender,
            Role::Defender => Role::Attacker,
        }
    }
}

/// Fixed per-scenario layout of the configuration bit vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitLayout {
    pub os_code_bits: u32,
    pub os_version_bits: u32,
    pub num_apps: u32,
    pub app_version_bits: u32,
    pub num_ports: u32,
}

impl Default for BitLayout {
    fn default() -> Self {
        BitLayout {
            os_code_bits: 2,
            os_version_bits: 4,
            num_apps: 5,
            app_version_bits: 4,
            num_ports: 0,
        }
    }
}

impl BitLayout {
    pub fn config_width(&self) -> u32 {
        self.os_code_bits
            + self.os_version_bits
            + self.num_apps * (1 + self.app_version_bits)
            + self.num_ports
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let w = self.config_width();
        if w > 64 {
            return Err(ModelError::LayoutTooWide(w));
        }
        Ok(())
    }

    fn os_version_shift(&self) -> u32 {
        self.os_code_bits
    }

    fn app_base(&self, app: u32) -> u32 {
        debug_assert!(app < self.num_apps);
        self.os_code_bits + self.os_version_bits + app * (1 + self.app_version_bits)
    }

    fn port_base(&self) -> u32 {
        self.os_code_bits + self.os_version_bits + self.num_apps * (1 + self.app_version_bits)
    }

    pub fn max_os_version(&self) -> u8 {
        ((1u64 << self.os_version_bits) - 1) as u8
    }

    pub fn max_app_version(&self) -> u8 {
        ((1u64 << self.app_version_bits) - 1) as u8
    }
}

fn field_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Configuration bits of one device (OS, app install flags, versions, ports).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ConfigBits(pub u64);

impl ConfigBits {
    pub fn os_code(&self, l: &BitLayout) -> u8 {
        (self.0 & field_mask(l.os_code_bits)) as u8
    }

    pub fn set_os_code(&mut self, l: &BitLayout, code: u8) {
        let m = field_mask(l.os_code_bits);
        self.0 = (self.0 & !m) | (u64::from(code) & m);
    }

    pub fn os_version(&self, l: &BitLayout) -> u8 {
        ((self.0 >> l.os_version_shift()) & field_mask(l.os_version_bits)) as u8
    }

    pub fn set_os_version(&mut self, l: &BitLayout, v: u8) {
        let m = field_mask(l.os_version_bits) << l.os_version_shift();
        self.0 = (self.0 & !m) | ((u64::from(v) << l.os_version_shift()) & m);
    }

    pub fn app_installed(&self, l: &BitLayout, app: u32) -> bool {
        (self.0 >> l.app_base(app)) & 1 == 1
    }

    pub fn set_app_installed(&mut self, l: &BitLayout, app: u32, installed: bool) {
        let bit = 1u64 << l.app_base(app);
        if installed {
            self.0 |= bit;
        } else {
            self.0 &= !bit;
        }
    }

    pub fn app_version(&self, l: &BitLayout, app: u32) -> u8 {
        ((self.0 >> (l.app_base(app) + 1)) & field_mask(l.app_version_bits)) as u8
    }

    pub fn set_app_version(&mut self, l: &BitLayout, app: u32, v: u8) {
        let sh = l.app_base(app) + 1;
        let m = field_mask(l.app_version_bits) << sh;
        self.0 = (self.0 & !m) | ((u64::from(v) << sh) & m);
    }

    pub fn port_open(&self, l: &BitLayout, port: u32) -> bool {
        debug_assert!(port < l.num_ports);
        (self.0 >> (l.port_base() + port)) & 1 == 1
    }

    pub fn set_port_open(&mut self, l: &BitLayout, port: u32, open: bool) {
        let bit = 1u64 << (l.port_base() + port);
        if open {
            self.0 |= bit;
        } else {
            self.0 &= !bit;
        }
    }

    pub fn popcount(&self) -> u32 {
        self.0.count_ones()
    }
}

/// Compromise bits of one device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CompromiseBits(pub u64);

/// Number of bits reserved for the compromising-exploit id field.
pub const EXPLOIT_ID_BITS: u32 = 6;

impl CompromiseBits {
    pub fn compromised(&self) -> bool {
        self.0 & 1 == 1
    }

    pub fn set_compromised(&mut self, on: bool) {
        if on {
            self.0 |= 1;
        } else {
            self.0 &= !1;
        }
    }

    pub fn root_access(&self) -> bool {
        (self.0 >> 1) & 1 == 1
    }

    /// Compromising exploit id, if attributed. Stored as id + 1 so zero means
    /// "compromised by unknown means" (or not compromised at all).
    pub fn exploit_id(&self) -> Option<usize> {
        let raw = (self.0 >> 2) & field_mask(EXPLOIT_ID_BITS);
        if raw == 0 {
            None
        } else {
            Some((raw - 1) as usize)
        }
    }

    pub fn clear(&mut self) {
        self.0 = 0;
    }

    pub fn popcount(&self) -> u32 {
        self.0.count_ones()
    }

    /// OR-mask for an exploit that sets the compromised flag, optionally root
    /// access, and stamps the exploit id.
    pub fn exploit_delta(exploit_id: usize, root: bool) -> CompromiseBits {
        let mut bits = 1u64;
        if root {
            bits |= 1 << 1;
        }
        let id = (exploit_id as u64 + 1) & field_mask(EXPLOIT_ID_BITS);
        bits |= id << 2;
        CompromiseBits(bits)
    }

    pub fn width() -> u32 {
        2 + EXPLOIT_ID_BITS
    }
}

/// Full state of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub id: DeviceId,
    pub config: ConfigBits,
    pub compromise: CompromiseBits,
    pub anomaly_score: f64,
    pub busy_until: Step,
    pub online: bool,
    pub attacker_owned: bool,
    pub domain_controller: bool,
    pub known_to_attacker: bool,
}

impl DeviceState {
    pub fn new(id: DeviceId) -> Self {
        DeviceState {
            id,
            config: ConfigBits::default(),
            compromise: CompromiseBits::default(),
            anomaly_score: 0.0,
            busy_until: 0,
            online: false,
            attacker_owned: false,
            domain_controller: false,
            known_to_attacker: false,
        }
    }

    pub fn compromised(&self) -> bool {
        self.compromise.compromised()
    }

    pub fn busy(&self, now: Step) -> bool {
        self.busy_until > now
    }
}

/// A half-open inclusive version window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionWindow {
    pub lo: u8,
    pub hi: u8,
}

impl VersionWindow {
    pub fn contains(&self, v: u8) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRequirement {
    pub app: u32,
    #[serde(default = "default_true")]
    pub installed: bool,
    #[serde(default)]
    pub version: Option<VersionWindow>,
}

fn default_true() -> bool {
    true
}

/// Conjunction of constraints over configuration bits. An empty predicate is
/// vacuously true.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigPredicate {
    #[serde(default)]
    pub os_code: Option<u8>,
    #[serde(default)]
    pub os_version: Option<VersionWindow>,
    #[serde(default)]
    pub apps: Vec<AppRequirement>,
    #[serde(default)]
    pub ports: Vec<(u32, bool)>,
}

impl ConfigPredicate {
    pub fn any() -> Self {
        ConfigPredicate::default()
    }

    pub fn app_installed(app: u32) -> Self {
        ConfigPredicate {
            apps: vec![AppRequirement {
                app,
                installed: true,
                version: None,
            }],
            ..Default::default()
        }
    }

    pub fn app_version(app: u32, lo: u8, hi: u8) -> Self {
        ConfigPredicate {
            apps: vec![AppRequirement {
                app,
                installed: true,
                version: Some(VersionWindow { lo, hi }),
            }],
            ..Default::default()
        }
    }

    /// Apps this predicate constrains.
    pub fn mentioned_apps(&self) -> impl Iterator<Item = u32> + '_ {
        self.apps.iter().map(|a| a.app)
    }
}

/// True iff every constraint in `req` is satisfied by `config`.
pub fn config_matches(layout: &BitLayout, config: ConfigBits, req: &ConfigPredicate) -> bool {
    if let Some(code) = req.os_code {
        if config.os_code(layout) != code {
            return false;
        }
    }
    if let Some(w) = req.os_version {
        if !w.contains(config.os_version(layout)) {
            return false;
        }
    }
    for a in &req.apps {
        if a.app >= layout.num_apps {
            return false;
        }
        if config.app_installed(layout, a.app) != a.installed {
            return false;
        }
        if let Some(w) = a.version {
            if !a.installed || !w.contains(config.app_version(layout, a.app)) {
                return false;
            }
        }
    }
    for &(port, open) in &req.ports {
        if port >= layout.num_ports || config.port_open(layout, port) != open {
            return false;
        }
    }
    true
}

/// An exploit tuple: requirement, duration, value, success probability and
/// compromise-state delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exploit {
    pub id: usize,
    pub name: String,
    pub requires: ConfigPredicate,
    pub duration: Step,
    pub value: f64,
    pub success_prob: f64,
    pub delta: CompromiseBits,
    pub zero_day: bool,
}

impl Exploit {
    pub fn new(id: usize, name: impl Into<String>, requires: ConfigPredicate, p: f64) -> Self {
        Exploit {
            id,
            name: name.into(),
            requires,
            duration: 1,
            value: 1.0,
            success_prob: p,
            delta: CompromiseBits::exploit_delta(id, true),
            zero_day: false,
        }
    }
}

/// A reconnaissance probe: requirement, success probability and the set of
/// configuration features it reveals (as a bit mask over config bits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub id: usize,
    pub requires: ConfigPredicate,
    pub success_prob: f64,
    pub reveal_mask: u64,
}

impl Probe {
    /// A probe that reveals the full configuration.
    pub fn full(id: usize, layout: &BitLayout, p: f64) -> Self {
        Probe {
            id,
            requires: ConfigPredicate::any(),
            success_prob: p,
            reveal_mask: field_mask(layout.config_width()),
        }
    }
}

/// A software update: requirement, install duration and a config-bit XOR mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftwareUpdate {
    pub id: usize,
    pub requires: ConfigPredicate,
    pub duration: Step,
    pub delta: u64,
}

impl SoftwareUpdate {
    /// Update flipping app `app` from version `from` to version `to`.
    pub fn app_version_change(
        id: usize,
        layout: &BitLayout,
        app: u32,
        from: u8,
        to: u8,
        duration: Step,
    ) -> Self {
        let mut a = ConfigBits::default();
        a.set_app_version(layout, app, from);
        let mut b = ConfigBits::default();
        b.set_app_version(layout, app, to);
        SoftwareUpdate {
            id,
            requires: ConfigPredicate::app_version(app, from, from),
            duration,
            delta: a.0 ^ b.0,
        }
    }
}

/// Returns `x` with the exploit's OR-delta applied to the compromise bits.
/// Configuration bits are untouched; idempotent.
pub fn apply_exploit_delta(x: &DeviceState, e: &Exploit) -> DeviceState {
    let mut next = x.clone();
    next.compromise.0 |= e.delta.0;
    next
}

/// Applies the update's XOR-delta to the configuration bits and advances the
/// busy timer by the install duration. Compromise bits are untouched.
pub fn apply_update_delta(
    layout: &BitLayout,
    x: &DeviceState,
    u: &SoftwareUpdate,
) -> Result<DeviceState, ModelError> {
    if !config_matches(layout, x.config, &u.requires) {
        return Err(ModelError::UpdateNotApplicable { update: u.id });
    }
    let mut next = x.clone();
    next.config.0 ^= u.delta;
    next.busy_until += u.duration;
    Ok(next)
}

/// Immediate-utility events, one per (role, action type) pair plus the
/// context that selects between table rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilityEvent {
    Clean { target_compromised: bool },
    Checkpoint,
    Restore,
    Upgrade,
    Scan,
    Block,
    Unblock,
    DefenderPass,
    AttackSuccess { via_domain_controller: bool },
    ProbeDiscovery,
    AttackerPass,
}

impl UtilityEvent {
    pub fn role(&self) -> Role {
        match self {
            UtilityEvent::Clean { .. }
            | UtilityEvent::Checkpoint
            | UtilityEvent::Restore
            | UtilityEvent::Upgrade
            | UtilityEvent::Scan
            | UtilityEvent::Block
            | UtilityEvent::Unblock
            | UtilityEvent::DefenderPass => Role::Defender,
            UtilityEvent::AttackSuccess { .. }
            | UtilityEvent::ProbeDiscovery
            | UtilityEvent::AttackerPass => Role::Attacker,
        }
    }
}

/// Per-action immediate utilities plus the scenario scaling knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityTable {
    pub clean_compromised: f64,
    pub clean_clean: f64,
    pub checkpoint: f64,
    pub restore: f64,
    pub upgrade: f64,
    pub scan: f64,
    pub block: f64,
    pub unblock: f64,
    pub attack_success: f64,
    pub attack_dc_bonus: f64,
    pub probe_discovery: f64,
    pub work_scale: f64,
    pub comp_scale: f64,
    pub def_scale: f64,
    /// Multiplier on defender cost magnitudes (negative entries only); used by
    /// the defense-cost sweep.
    pub defense_cost_multiplier: f64,
}

impl Default for UtilityTable {
    fn default() -> Self {
        UtilityTable {
            clean_compromised: 0.30,
            clean_clean: -0.01,
            checkpoint: -0.50,
            restore: -1.00,
            upgrade: -1.00,
            scan: -0.50,
            block: -0.50,
            unblock: -0.50,
            attack_success: 1.00,
            attack_dc_bonus: 10.0,
            probe_discovery: 0.10,
            work_scale: 1.0,
            comp_scale: 30.0,
            def_scale: 1.0,
            defense_cost_multiplier: 1.0,
        }
    }
}

impl UtilityTable {
    fn scale_defender(&self, v: f64) -> f64 {
        let v = v * self.def_scale;
        if v < 0.0 {
            v * self.defense_cost_multiplier
        } else {
            v
        }
    }

    /// Per-event immediate utility for `role`. Pass actions map to exactly 0.
    pub fn immediate_utility(&self, role: Role, event: UtilityEvent) -> Result<f64, ModelError> {
        if event.role() != role {
            return Err(ModelError::RoleMismatch(role));
        }
        Ok(match event {
            UtilityEvent::Clean { target_compromised } => self.scale_defender(if target_compromised {
                self.clean_compromised
            } else {
                self.clean_clean
            }),
            UtilityEvent::Checkpoint => self.scale_defender(self.checkpoint),
            UtilityEvent::Restore => self.scale_defender(self.restore),
            UtilityEvent::Upgrade => self.scale_defender(self.upgrade),
            UtilityEvent::Scan => self.scale_defender(self.scan),
            UtilityEvent::Block => self.scale_defender(self.block),
            UtilityEvent::Unblock => self.scale_defender(self.unblock),
            UtilityEvent::DefenderPass => 0.0,
            UtilityEvent::AttackSuccess { via_domain_controller } => {
                self.attack_success
                    + if via_domain_controller {
                        self.attack_dc_bonus
                    } else {
                        0.0
                    }
            }
            UtilityEvent::ProbeDiscovery => self.probe_discovery,
            UtilityEvent::AttackerPass => 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> BitLayout {
        BitLayout::default()
    }

    fn device_with(config: ConfigBits) -> DeviceState {
        let mut d = DeviceState::new(0);
        d.config = config;
        d.online = true;
        d
    }

    #[test]
    fn vacuous_predicate_matches_anything() {
        let l = layout();
        for raw in [0u64, 0b1010, u64::MAX >> (64 - l.config_width())] {
            assert!(config_matches(&l, ConfigBits(raw), &ConfigPredicate::any()));
        }
    }

    #[test]
    fn os_code_predicate_matches_exhaustively() {
        // Brute-force truth table over every 2-bit OS code against the
        // "os code = 3" predicate, with a version inside the window.
        let l = layout();
        let pred = ConfigPredicate {
            os_code: Some(3),
            os_version: Some(VersionWindow { lo: 1, hi: 3 }),
            ..Default::default()
        };
        for code in 0u8..4 {
            for version in 0u8..=l.max_os_version() {
                let mut c = ConfigBits::default();
                c.set_os_code(&l, code);
                c.set_os_version(&l, version);
                let expected = code == 3 && (1..=3).contains(&version);
                assert_eq!(config_matches(&l, c, &pred), expected, "code={code} v={version}");
            }
        }
    }

    #[test]
    fn missing_app_fails_predicate() {
        let l = layout();
        let pred = ConfigPredicate::app_installed(2);
        let c = ConfigBits::default();
        assert!(!config_matches(&l, c, &pred));
        let mut c2 = c;
        c2.set_app_installed(&l, 2, true);
        assert!(config_matches(&l, c2, &pred));
    }

    #[test]
    fn exploit_delta_is_bitwise_or() {
        let mut e = Exploit::new(0, "e", ConfigPredicate::any(), 1.0);
        e.delta = CompromiseBits(0b0000);
        let x = device_with(ConfigBits(0));
        let mut x = x;
        x.compromise = CompromiseBits(0b0101);
        assert_eq!(apply_exploit_delta(&x, &e).compromise.0, 0b0101);
        e.delta = CompromiseBits(0b0011);
        assert_eq!(apply_exploit_delta(&x, &e).compromise.0, 0b0111);
        // idempotent
        let once = apply_exploit_delta(&x, &e);
        let twice = apply_exploit_delta(&once, &e);
        assert_eq!(once, twice);
    }

    #[test]
    fn exploit_delta_preserves_config() {
        let l = layout();
        let mut c = ConfigBits::default();
        c.set_os_code(&l, 2);
        c.set_app_installed(&l, 1, true);
        let x = device_with(c);
        let e = Exploit::new(3, "e", ConfigPredicate::any(), 1.0);
        let next = apply_exploit_delta(&x, &e);
        assert_eq!(next.config, x.config);
        assert!(next.compromised());
        assert_eq!(next.compromise.exploit_id(), Some(3));
    }

    #[test]
    fn update_delta_is_xor() {
        let l = layout();
        let mut u = SoftwareUpdate {
            id: 0,
            requires: ConfigPredicate::any(),
            duration: 2,
            delta: 0b0011,
        };
        let x = device_with(ConfigBits(0b0101));
        let next = apply_update_delta(&l, &x, &u).unwrap();
        assert_eq!(next.config.0, 0b0110);
        assert_eq!(next.busy_until, x.busy_until + 2);
        // involution
        let back = apply_update_delta(&l, &next, &u).unwrap();
        assert_eq!(back.config, x.config);
        // requirement gate
        u.requires = ConfigPredicate {
            os_code: Some(3),
            ..Default::default()
        };
        assert_eq!(
            apply_update_delta(&l, &x, &u),
            Err(ModelError::UpdateNotApplicable { update: 0 })
        );
    }

    #[test]
    fn version_upgrade_mask_flips_exactly_old_and_new_bits() {
        // Exhaustive 8-bit check on the app-version field: the XOR mask built
        // for version a -> b flips exactly the bits where a and b differ.
        let l = layout();
        for from in 0u8..16 {
            for to in 0u8..16 {
                let u = SoftwareUpdate::app_version_change(0, &l, 1, from, to, 1);
                let mut c = ConfigBits::default();
                c.set_app_installed(&l, 1, true);
                c.set_app_version(&l, 1, from);
                let x = device_with(c);
                let next = apply_update_delta(&l, &x, &u).unwrap();
                assert_eq!(next.config.app_version(&l, 1), to, "{from}->{to}");
                assert!(next.config.app_installed(&l, 1));
                // only the version field changed
                let diff = next.config.0 ^ x.config.0;
                let mut expect = ConfigBits::default();
                expect.set_app_version(&l, 1, from ^ to);
                assert_eq!(diff, expect.0);
            }
        }
    }

    #[test]
    fn utility_table_rows() {
        let t = UtilityTable::default();
        assert_eq!(
            t.immediate_utility(Role::Defender, UtilityEvent::Clean { target_compromised: true })
                .unwrap(),
            0.30
        );
        assert_eq!(
            t.immediate_utility(Role::Defender, UtilityEvent::Clean { target_compromised: false })
                .unwrap(),
            -0.01
        );
        assert_eq!(
            t.immediate_utility(Role::Attacker, UtilityEvent::AttackerPass).unwrap(),
            0.0
        );
        assert_eq!(
            t.immediate_utility(Role::Defender, UtilityEvent::DefenderPass).unwrap(),
            0.0
        );
        assert_eq!(
            t.immediate_utility(
                Role::Attacker,
                UtilityEvent::AttackSuccess { via_domain_controller: true }
            )
            .unwrap(),
            11.0
        );
        assert_eq!(
            t.immediate_utility(Role::Attacker, UtilityEvent::ProbeDiscovery).unwrap(),
            0.10
        );
        // role mismatch is a contract violation
        assert!(t.immediate_utility(Role::Attacker, UtilityEvent::Scan).is_err());
    }

    #[test]
    fn defender_cost_multiplier_scales_costs_only() {
        let t = UtilityTable {
            defense_cost_multiplier: 3.0,
            ..Default::default()
        };
        assert_eq!(t.immediate_utility(Role::Defender, UtilityEvent::Scan).unwrap(), -1.5);
        assert_eq!(
            t.immediate_utility(Role::Defender, UtilityEvent::Clean { target_compromised: true })
                .unwrap(),
            0.30
        );
    }
}
