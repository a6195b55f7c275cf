//! Joint actions: role-tagged combinatorial (type, device set, per-device
//! exploit/app assignment) moves, plus the per-device candidate enumeration
//! used by policies.

use serde::{Deserialize, Serialize};

use crate::model::{DeviceId, Role};

/// All action types across both roles. The defender's set has eight entries,
/// the attacker's three; `Pass` belongs to both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Clean,
    Checkpoint,
    Restore,
    Upgrade,
    Scan,
    Block,
    Unblock,
    Attack,
    Probe,
    Pass,
}

pub const DEFENDER_TYPES: [ActionKind; 8] = [
    ActionKind::Clean,
    ActionKind::Checkpoint,
    ActionKind::Restore,
    ActionKind::Upgrade,
    ActionKind::Scan,
    ActionKind::Block,
    ActionKind::Unblock,
    ActionKind::Pass,
];

pub const ATTACKER_TYPES: [ActionKind; 3] = [ActionKind::Attack, ActionKind::Probe, ActionKind::Pass];

impl ActionKind {
    pub fn belongs_to(self, role: Role) -> bool {
        match role {
            Role::Defender => DEFENDER_TYPES.contains(&self),
            Role::Attacker => ATTACKER_TYPES.contains(&self),
        }
    }

    /// Index into the role's type one-hot block.
    pub fn type_index(self, role: Role) -> Option<usize> {
        let table: &[ActionKind] = match role {
            Role::Defender => &DEFENDER_TYPES,
            Role::Attacker => &ATTACKER_TYPES,
        };
        table.iter().position(|k| *k == self)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Clean => "clean",
            ActionKind::Checkpoint => "checkpoint",
            ActionKind::Restore => "restore",
            ActionKind::Upgrade => "upgrade",
            ActionKind::Scan => "scan",
            ActionKind::Block => "block",
            ActionKind::Unblock => "unblock",
            ActionKind::Attack => "attack",
            ActionKind::Probe => "probe",
            ActionKind::Pass => "pass",
        }
    }
}

/// A combinatorial joint action: one type, a device set, and per-device
/// exploit/app assignments (parallel to `devices` where the type uses them).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointAction {
    pub role: Role,
    pub kind: ActionKind,
    pub devices: Vec<DeviceId>,
    /// Parallel to `devices` for `Attack`.
    pub exploits: Vec<usize>,
    /// Parallel to `devices` for `Upgrade`.
    pub apps: Vec<usize>,
}

impl JointAction {
    pub fn pass(role: Role) -> JointAction {
        JointAction {
            role,
            kind: ActionKind::Pass,
            devices: Vec::new(),
            exploits: Vec::new(),
            apps: Vec::new(),
        }
    }

    pub fn is_pass(&self) -> bool {
        self.kind == ActionKind::Pass
    }

    pub fn single(role: Role, kind: ActionKind, device: DeviceId) -> JointAction {
        JointAction {
            role,
            kind,
            devices: vec![device],
            exploits: Vec::new(),
            apps: Vec::new(),
        }
    }

    pub fn devices_csv(&self) -> String {
        self.devices
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// One single-device move considered by the per-device search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateAction {
    pub kind: ActionKind,
    pub device: DeviceId,
    pub exploit: Option<usize>,
    pub app: Option<usize>,
}

impl CandidateAction {
    pub fn to_action(&self, role: Role) -> JointAction {
        JointAction {
            role,
            kind: self.kind,
            devices: vec![self.device],
            exploits: self.exploit.into_iter().collect(),
            apps: self.app.into_iter().collect(),
        }
    }
}
