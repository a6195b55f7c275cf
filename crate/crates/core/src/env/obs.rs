//! Observation vectors and action encodings.
//!
//! Defender: 6 features per device slot, -1 padded. The compromise and
//! attacker-knowledge slots are masked for the defender; attacker-owned and
//! offline devices are masked entirely.
//!
//! Attacker: 4 features per device slot; devices it has not discovered (and
//! inactive ones) are -1.

use crate::env::actions::{ActionKind, JointAction};
use crate::env::config::EncodingDims;
use crate::model::{BitLayout, DeviceState, Role};

pub const DEFENDER_FEATURES: usize = 6;
pub const ATTACKER_FEATURES: usize = 4;

const MASKED: f64 = -1.0;

pub fn defender_observation(devices: &[DeviceState], layout: &BitLayout, n_slots: usize) -> Vec<f64> {
    let mut v = vec![MASKED; DEFENDER_FEATURES * n_slots];
    for (i, d) in devices.iter().enumerate().take(n_slots) {
        if !d.online || d.attacker_owned {
            continue;
        }
        let base = i * DEFENDER_FEATURES;
        v[base] = f64::from(d.config.os_code(layout));
        v[base + 1] = f64::from(d.config.os_version(layout));
        v[base + 2] = MASKED; // compromise flag hidden from the defender
        v[base + 3] = d.anomaly_score;
        v[base + 4] = MASKED; // attacker-knowledge flag hidden as well
        v[base + 5] = 1.0; // presence
    }
    v
}

pub fn attacker_observation(devices: &[DeviceState], layout: &BitLayout, n_slots: usize) -> Vec<f64> {
    let mut v = vec![MASKED; ATTACKER_FEATURES * n_slots];
    for (i, d) in devices.iter().enumerate().take(n_slots) {
        if !d.known_to_attacker || !d.online {
            continue;
        }
        let base = i * ATTACKER_FEATURES;
        v[base] = f64::from(d.config.os_code(layout));
        v[base + 1] = f64::from(d.config.os_version(layout));
        v[base + 2] = if d.compromised() { 1.0 } else { 0.0 };
        v[base + 3] = if d.domain_controller { 10.0 } else { 1.0 };
    }
    v
}

pub fn observation_width(role: Role, n_slots: usize) -> usize {
    match role {
        Role::Defender => DEFENDER_FEATURES * n_slots,
        Role::Attacker => ATTACKER_FEATURES * n_slots,
    }
}

pub fn encoding_width(dims: &EncodingDims, role: Role, n_slots: usize) -> usize {
    match role {
        Role::Defender => {
            dims.defender_types + n_slots + dims.defender_exploit_slots + dims.defender_app_slots
        }
        Role::Attacker => {
            dims.attacker_types + n_slots + dims.attacker_exploit_slots + dims.attacker_app_slots
        }
    }
}

/// Encode a joint action: type one-hot, device multi-hot, then exploit and
/// app slots (multi-hot over the per-device assignments). `exploit_slot`
/// maps exploit ids onto encoding slots; every zero-day template shares one
/// slot so critic input widths stay fixed.
pub fn encode_action(
    dims: &EncodingDims,
    n_slots: usize,
    a: &JointAction,
    exploit_slot: &dyn Fn(usize) -> usize,
) -> Vec<f64> {
    let (n_types, e_slots, p_slots) = match a.role {
        Role::Defender => (
            dims.defender_types,
            dims.defender_exploit_slots,
            dims.defender_app_slots,
        ),
        Role::Attacker => (
            dims.attacker_types,
            dims.attacker_exploit_slots,
            dims.attacker_app_slots,
        ),
    };
    let mut v = vec![0.0; n_types + n_slots + e_slots + p_slots];
    let ti = a
        .kind
        .type_index(a.role)
        .expect("action kind validated against role");
    v[ti] = 1.0;
    if a.kind != ActionKind::Pass {
        for &d in &a.devices {
            if d < n_slots {
                v[n_types + d] = 1.0;
            }
        }
    }
    for &e in &a.exploits {
        let slot = exploit_slot(e);
        if slot < e_slots {
            v[n_types + n_slots + slot] = 1.0;
        }
    }
    for &p in &a.apps {
        if p < p_slots {
            v[n_types + n_slots + e_slots + p] = 1.0;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Role;

    #[test]
    fn volt_widths_match_critic_architecture() {
        let dims = EncodingDims::default();
        assert_eq!(observation_width(Role::Defender, 20), 120);
        assert_eq!(observation_width(Role::Attacker, 20), 80);
        assert_eq!(encoding_width(&dims, Role::Defender, 20), 38);
        assert_eq!(encoding_width(&dims, Role::Attacker, 20), 31);
        // critic inputs: observation + action encoding
        assert_eq!(120 + 38, 158);
        assert_eq!(80 + 31, 111);
    }

    #[test]
    fn pass_encodes_as_type_only() {
        let dims = EncodingDims::default();
        let a = JointAction::pass(Role::Attacker);
        let v = encode_action(&dims, 20, &a, &|e| e);
        assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
        assert_eq!(v[2], 1.0); // attacker pass type index
    }

    #[test]
    fn attack_encoding_sets_device_and_exploit_bits() {
        let dims = EncodingDims::default();
        let a = JointAction {
            role: Role::Attacker,
            kind: ActionKind::Attack,
            devices: vec![1, 4],
            exploits: vec![0, 2],
            apps: vec![],
        };
        let v = encode_action(&dims, 20, &a, &|e| e);
        assert_eq!(v[0], 1.0); // attack type
        assert_eq!(v[3 + 1], 1.0);
        assert_eq!(v[3 + 4], 1.0);
        assert_eq!(v[3 + 20], 1.0); // exploit slot 0
        assert_eq!(v[3 + 20 + 2], 1.0); // exploit slot 2
        assert_eq!(v.len(), 31);
    }
}
