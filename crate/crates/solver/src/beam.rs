//! Critic-guided coordinate-ascent beam search over combinatorial actions.
//!
//! Per device the search scores every single-device move plus no-op, keeps
//! the top-K, and softmax-samples one pick. The picks are merged into one
//! joint action: for each action type appearing among the picks, a merged
//! variant takes per-device the best same-type assignment that beats the
//! no-op baseline; the final action is softmax-sampled among the scored
//! variants and the no-op. At low temperature this recovers the per-device
//! argmax merge exactly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use breachsim_core::env::{ActionKind, CandidateAction, JointAction};
use breachsim_core::model::{DeviceId, Role};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec {
    /// Beam width K per device.
    pub k: usize,
    /// Softmax temperature.
    pub tau: f64,
    /// When set, only this many devices (sampled uniformly) are searched;
    /// used for reduced-width greedy targets during training.
    pub device_subsample: Option<usize>,
}

impl BeamSpec {
    pub fn greedy() -> BeamSpec {
        BeamSpec {
            k: 1,
            tau: 1e-6,
            device_subsample: None,
        }
    }

    pub fn evaluation(k: usize) -> BeamSpec {
        BeamSpec {
            k,
            tau: 1e-6,
            device_subsample: None,
        }
    }
}

/// Softmax-sample an index from scores at temperature tau. Deterministic
/// argmax as tau -> 0 (ties resolved to the first maximal entry).
fn softmax_sample(scores: &[f64], tau: f64, rng: &mut ChaCha8Rng) -> usize {
    debug_assert!(!scores.is_empty());
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| ((s - max) / tau.max(1e-12)).exp()).collect();
    let total: f64 = weights.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return scores
            .iter()
            .position(|&s| s == max)
            .unwrap_or(0);
    }
    let roll = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if roll < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Run the search. `score` evaluates a batch of joint actions against the
/// current observation (the critic closure).
pub fn beam_search(
    role: Role,
    per_device: &[(DeviceId, Vec<CandidateAction>)],
    score: &mut dyn FnMut(&[JointAction]) -> Vec<f64>,
    spec: &BeamSpec,
    rng: &mut ChaCha8Rng,
) -> JointAction {
    let noop = JointAction::pass(role);
    let q_base = score(std::slice::from_ref(&noop))[0];

    // optional device subsample (order-preserving)
    let searched: Vec<&(DeviceId, Vec<CandidateAction>)> = match spec.device_subsample {
        Some(m) if m < per_device.len() => {
            let mut idx: Vec<usize> = (0..per_device.len()).collect();
            for i in 0..m {
                let j = rng.gen_range(i..idx.len());
                idx.swap(i, j);
            }
            idx.truncate(m);
            idx.sort_unstable();
            idx.into_iter().map(|i| &per_device[i]).collect()
        }
        _ => per_device.iter().collect(),
    };
    if searched.is_empty() {
        return noop;
    }

    // score every candidate in one batch
    let mut flat: Vec<JointAction> = Vec::new();
    let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(searched.len());
    for (_, cands) in &searched {
        let start = flat.len();
        flat.extend(cands.iter().map(|c| c.to_action(role)));
        ranges.push((start, flat.len()));
    }
    let scores = if flat.is_empty() { Vec::new() } else { score(&flat) };

    // per-device: keep top-K (no-op included), sample one pick
    struct Scored {
        cand: Option<CandidateAction>, // None = no-op
        q: f64,
    }
    let mut picks: Vec<(DeviceId, Option<CandidateAction>)> = Vec::new();
    let mut kept: Vec<Vec<Scored>> = Vec::with_capacity(searched.len());
    for (di, (device, cands)) in searched.iter().enumerate() {
        let (start, end) = ranges[di];
        let mut scored: Vec<Scored> = vec![Scored { cand: None, q: q_base }];
        scored.extend(
            cands
                .iter()
                .zip(&scores[start..end])
                .map(|(c, &q)| Scored { cand: Some(*c), q }),
        );
        scored.sort_by(|a, b| b.q.partial_cmp(&a.q).unwrap_or(std::cmp::Ordering::Equal));
        scored.truncate(spec.k.max(1));
        let qs: Vec<f64> = scored.iter().map(|s| s.q).collect();
        let chosen = softmax_sample(&qs, spec.tau, rng);
        picks.push((*device, scored[chosen].cand));
        kept.push(scored);
    }

    // all-no-op -> pass
    let active_types: Vec<ActionKind> = {
        let mut ts: Vec<ActionKind> = picks.iter().filter_map(|(_, c)| c.map(|c| c.kind)).collect();
        ts.sort_by_key(|k| k.type_index(role));
        ts.dedup();
        ts
    };
    if active_types.is_empty() {
        return noop;
    }

    // coordinate refinement: for each picked type, take per device the best
    // same-type candidate that beats the no-op baseline
    let mut variants: Vec<JointAction> = Vec::new();
    for t in active_types {
        let mut devices = Vec::new();
        let mut exploits = Vec::new();
        let mut apps = Vec::new();
        for (di, (device, _)) in searched.iter().enumerate() {
            let best = kept[di]
                .iter()
                .filter(|s| s.cand.map(|c| c.kind) == Some(t) && s.q > q_base)
                .max_by(|a, b| a.q.partial_cmp(&b.q).unwrap_or(std::cmp::Ordering::Equal));
            if let Some(s) = best {
                let c = s.cand.expect("filtered on Some");
                devices.push(*device);
                if let Some(e) = c.exploit {
                    exploits.push(e);
                }
                if let Some(p) = c.app {
                    apps.push(p);
                }
            }
        }
        if devices.is_empty() {
            continue;
        }
        variants.push(JointAction {
            role,
            kind: t,
            devices,
            exploits,
            apps,
        });
    }
    if variants.is_empty() {
        return noop;
    }

    // choose among variants and no-op by critic value
    let mut variant_scores = score(&variants);
    variant_scores.push(q_base);
    let chosen = softmax_sample(&variant_scores, spec.tau, rng);
    if chosen == variants.len() {
        noop
    } else {
        variants.swap_remove(chosen)
    }
}

/// Exhaustive oracle over the merged-action space: every action type, every
/// subset of participating devices, every per-device assignment choice.
/// Exponential; only for tests and acceptance checks on tiny spaces.
pub fn exhaustive_best(
    role: Role,
    per_device: &[(DeviceId, Vec<CandidateAction>)],
    score: &mut dyn FnMut(&[JointAction]) -> Vec<f64>,
) -> (JointAction, f64) {
    let noop = JointAction::pass(role);
    let mut best_q = score(std::slice::from_ref(&noop))[0];
    let mut best = noop;
    let mut types: Vec<ActionKind> = per_device
        .iter()
        .flat_map(|(_, v)| v.iter().map(|c| c.kind))
        .collect();
    types.sort_by_key(|k| k.type_index(role));
    types.dedup();
    for t in types {
        // per device: the list of type-t candidates plus "absent"
        let options: Vec<(DeviceId, Vec<Option<&CandidateAction>>)> = per_device
            .iter()
            .map(|(d, v)| {
                let mut opts: Vec<Option<&CandidateAction>> = vec![None];
                opts.extend(v.iter().filter(|c| c.kind == t).map(Some));
                (*d, opts)
            })
            .collect();
        let mut counter: Vec<usize> = vec![0; options.len()];
        loop {
            let mut devices = Vec::new();
            let mut exploits = Vec::new();
            let mut apps = Vec::new();
            for (i, (d, opts)) in options.iter().enumerate() {
                if let Some(c) = opts[counter[i]] {
                    devices.push(*d);
                    if let Some(e) = c.exploit {
                        exploits.push(e);
                    }
                    if let Some(p) = c.app {
                        apps.push(p);
                    }
                }
            }
            if !devices.is_empty() {
                let action = JointAction {
                    role,
                    kind: t,
                    devices,
                    exploits,
                    apps,
                };
                let q = score(std::slice::from_ref(&action))[0];
                if q > best_q {
                    best_q = q;
                    best = action;
                }
            }
            // odometer increment
            let mut i = 0;
            loop {
                if i == counter.len() {
                    break;
                }
                counter[i] += 1;
                if counter[i] < options[i].1.len() {
                    break;
                }
                counter[i] = 0;
                i += 1;
            }
            if i == counter.len() {
                break;
            }
        }
    }
    (best, best_q)
}
