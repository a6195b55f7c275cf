//! Trajectory log emission: one CSV row per role per step.

use std::io::{self, Write};

use crate::env::{EpisodeLog, StepRecord};

pub const TRAJECTORY_HEADER: &str = "episode,step,role,action_type,devices,reward_action,reward_stream,reward_shaping,reward_total,compromised_count,workloads_completed";

fn devices_field(devices: &[usize]) -> String {
    devices
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn write_record<W: Write>(w: &mut W, episode: u64, s: &StepRecord) -> io::Result<()> {
    let b = &s.breakdown;
    writeln!(
        w,
        "{},{},attacker,{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
        episode,
        s.step,
        s.attacker_kind.name(),
        devices_field(&s.attacker_devices),
        b.attacker_action,
        b.attacker_stream,
        b.shaping,
        s.attacker_total,
        b.compromised_count,
        b.workloads_completed,
    )?;
    writeln!(
        w,
        "{},{},defender,{},{},{:.6},{:.6},{:.6},{:.6},{},{}",
        episode,
        s.step,
        s.defender_kind.name(),
        devices_field(&s.defender_devices),
        b.defender_action_utility,
        b.value_accrued - b.value_clawed_back,
        0.0,
        s.defender_total,
        b.compromised_count,
        b.workloads_completed,
    )
}

/// Write a whole episode log (header included when `with_header`).
pub fn write_episode<W: Write>(
    w: &mut W,
    episode: u64,
    log: &EpisodeLog,
    with_header: bool,
) -> io::Result<()> {
    if with_header {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
    }
    for s in &log.steps {
        write_record(w, episode, s)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ActionKind, RewardBreakdown};

    #[test]
    fn header_is_stable() {
        assert_eq!(
            TRAJECTORY_HEADER,
            "episode,step,role,action_type,devices,reward_action,reward_stream,reward_shaping,reward_total,compromised_count,workloads_completed"
        );
    }

    #[test]
    fn rows_render_both_roles() {
        let log = EpisodeLog {
            steps: vec![StepRecord {
                step: 0,
                attacker_kind: ActionKind::Probe,
                attacker_devices: vec![3, 5],
                defender_kind: ActionKind::Pass,
                defender_devices: vec![],
                breakdown: RewardBreakdown {
                    attacker_action: 0.1,
                    attacker_stream: 9.0,
                    compromised_count: 9,
                    workloads_completed: 2,
                    value_accrued: 2.0,
                    ..Default::default()
                },
                attacker_total: 9.1,
                defender_total: -268.0,
            }],
        };
        let mut buf = Vec::new();
        write_episode(&mut buf, 7, &log, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("7,0,attacker,probe,3;5,"));
        assert!(lines[2].starts_with("7,0,defender,pass,,"));
    }
}
