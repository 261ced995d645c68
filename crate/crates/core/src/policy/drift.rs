use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SlotView;
use crate::age::{debt_step, relay_update, RelayUpdate};
use crate::error::PolicyError;
use crate::network::Action;

pub const DEFAULT_RELEVANT_LINK_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftOptions {
    /// Largest number of links feeding one queue whose outcomes are
    /// enumerated exactly.
    pub relevant_link_cap: usize,
    /// Sample count for the Monte-Carlo fallback beyond the cap; `None`
    /// turns the cap into an error.
    pub monte_carlo_samples: Option<usize>,
}

impl Default for DriftOptions {
    fn default() -> Self {
        DriftOptions {
            relevant_link_cap: DEFAULT_RELEVANT_LINK_CAP,
            monte_carlo_samples: None,
        }
    }
}

/// Exact `E[L(t+1) - L(t)]` under `action`, the expectation taken over the
/// Bernoulli outcomes of the links that can change each queue.
pub fn expected_drift(action: &Action, view: &SlotView<'_>, options: &DriftOptions) -> Result<f64, PolicyError> {
    let relays_by_pair = view.layout.relays_by_pair();
    let mut total = 0.0;
    for p in 0..view.layout.pairs.len() {
        total += pair_drift(action, view, p, &relays_by_pair[p], options)?;
    }
    Ok(total)
}

#[inline]
fn sq_change(q: f64, increment: f64) -> f64 {
    let next = debt_step(q, increment);
    next * next - q * q
}

/// Drift contribution of pair `p`'s destination queue and its relay queues.
pub(crate) fn pair_drift(
    action: &Action,
    view: &SlotView<'_>,
    p: usize,
    relays: &[usize],
    options: &DriftOptions,
) -> Result<f64, PolicyError> {
    let pair = view.layout.pairs[p];
    let (k, j) = (pair.flow, pair.destination);
    let cost = &view.costs[p];
    let alpha = view.targets.alpha[p];
    let q = view.debt.dest[p];
    let age_now = view.age.age(k, j);

    // (success probability, age of the packet on the wire)
    let mut links: Vec<(f64, u64)> = Vec::new();
    for a in action.assignments() {
        if a.flow == k && a.to == j {
            if let Some(tg) = view.buffer.outgoing(k, a.from, view.t) {
                let prob = view.instance.reliability(a.from, a.to).unwrap_or(0.0);
                links.push((prob, (view.t - tg) as u64));
            }
        }
    }

    let mut deterministic = 0.0;
    let mut tracking: Vec<f64> = Vec::new();
    for &r in relays {
        let rq = &view.layout.relays[r];
        let qr = view.debt.intermediate[r];
        match relay_update(rq, &pair, action, view.age, view.buffer, view.hops, cost, alpha) {
            RelayUpdate::Forwarding { increment } => deterministic += sq_change(qr, increment),
            _ => tracking.push(qr),
        }
    }

    let outcome = |next_age: u64| -> f64 {
        let inc = cost.eval(next_age) - alpha;
        sq_change(q, inc) + tracking.iter().map(|&qr| sq_change(qr, inc)).sum::<f64>()
    };

    let r = links.len();
    let expected = if r <= options.relevant_link_cap {
        let mut acc = 0.0;
        for mask in 0u64..(1u64 << r) {
            let mut prob = 1.0;
            let mut best = age_now;
            for (b, &(pl, wire_age)) in links.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    prob *= pl;
                    best = best.min(wire_age);
                } else {
                    prob *= 1.0 - pl;
                }
            }
            if prob > 0.0 {
                acc += prob * outcome(best + 1);
            }
        }
        acc
    } else if let Some(samples) = options.monte_carlo_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(view.t as u64 ^ ((p as u64) << 40));
        let mut acc = 0.0;
        for _ in 0..samples {
            let mut best = age_now;
            for &(pl, wire_age) in &links {
                if rng.random::<f64>() < pl {
                    best = best.min(wire_age);
                }
            }
            acc += outcome(best + 1);
        }
        acc / samples as f64
    } else {
        return Err(PolicyError::RelevantLinkCap {
            links: r,
            cap: options.relevant_link_cap,
        });
    };
    Ok(deterministic + expected)
}
