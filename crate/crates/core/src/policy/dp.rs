//! Average-cost dynamic programming over capped age vectors.
//!
//! The state is the vector of ages of every tracked (flow, node) coordinate:
//! each destination, plus each non-destination node that can forward the
//! flow. A relay's age equals the age of the packet it would forward, so a
//! relay with nothing buffered behaves exactly like one holding a packet
//! older than anything downstream. Ages saturate at `cap`.
//!
//! Solved with relative value iteration on the aperiodicity-transformed
//! operator `(1 - tau) h + tau T h`, which has the same optimal policy and
//! a gain scaled by `tau`.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use super::{Policy, PolicyDecision, SlotView};
use crate::age::CostFunction;
use crate::error::PolicyError;
use crate::network::{FlowId, NetworkInstance, NodeId};

pub const DEFAULT_MAX_STATES: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpOptions {
    /// Largest representable age per coordinate.
    pub cap: u64,
    /// Stop once the span of the Bellman residual falls below this.
    pub tolerance: f64,
    pub max_states: usize,
    pub max_iterations: usize,
    /// Self-loop weight of the aperiodicity transform, in (0, 1).
    pub tau: f64,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions {
            cap: 30,
            tolerance: 1e-6,
            max_states: DEFAULT_MAX_STATES,
            max_iterations: 200_000,
            tau: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    pub cap: u64,
    /// Tracked (flow, node) coordinates, in state-encoding order.
    pub coords: Vec<(FlowId, NodeId)>,
    /// Best action index per encoded state.
    pub policy: Vec<u32>,
    pub relative_values: Vec<f64>,
    /// Optimal gain.
    pub average_cost: f64,
    /// Long-run average cost per source-destination pair under the optimal
    /// policy, started from all ages equal to 1. Ordered like the instance's
    /// flows and their sorted destinations.
    pub per_pair_average: Vec<f64>,
    pub iterations: usize,
    pub residual_span: f64,
}

struct Model {
    cap: u64,
    coords: Vec<(FlowId, NodeId)>,
    /// Coordinate index of each cost-bearing pair, with its cost function.
    cost_coords: Vec<(usize, CostFunction)>,
    state_count: usize,
    action_count: usize,
    /// Per action: (sender coordinate or None for a source, receiver coordinate, reliability).
    links: Vec<Vec<(Option<usize>, usize, f64)>>,
}

impl Model {
    fn new(instance: &NetworkInstance, costs: &[CostFunction], options: &DpOptions) -> Result<Self, PolicyError> {
        if options.cap < 2 {
            return Err(PolicyError::CapTooSmall(options.cap));
        }
        let n = instance.node_count();
        let mut coords = Vec::new();
        let mut index = BTreeMap::new();
        for (k, flow) in instance.flows.iter().enumerate() {
            let mut forwards = vec![false; n];
            for action in instance.action_space.actions() {
                for a in action.assignments().iter().filter(|a| a.flow == k) {
                    forwards[a.from] = true;
                }
            }
            for i in 0..n {
                if i != flow.source && (flow.is_destination(i) || forwards[i]) {
                    index.insert((k, i), coords.len());
                    coords.push((k, i));
                }
            }
        }
        let mut cost_coords = Vec::new();
        let mut p = 0;
        for (k, flow) in instance.flows.iter().enumerate() {
            for &d in &flow.destinations {
                cost_coords.push((index[&(k, d)], costs[p].clone()));
                p += 1;
            }
        }
        let states = (options.cap as u128).checked_pow(coords.len() as u32).unwrap_or(u128::MAX);
        if states > options.max_states as u128 {
            return Err(PolicyError::StateSpaceTooLarge {
                states,
                cap: options.max_states,
            });
        }
        let links = instance
            .action_space
            .actions()
            .iter()
            .map(|action| {
                action
                    .assignments()
                    .iter()
                    .filter_map(|a| {
                        let to = *index.get(&(a.flow, a.to))?;
                        let from = if instance.flows[a.flow].source == a.from {
                            None
                        } else {
                            Some(index[&(a.flow, a.from)])
                        };
                        Some((from, to, instance.reliability(a.from, a.to).unwrap_or(0.0)))
                    })
                    .collect()
            })
            .collect();
        Ok(Model {
            cap: options.cap,
            coords,
            cost_coords,
            state_count: states as usize,
            action_count: instance.action_space.len(),
            links,
        })
    }

    fn decode(&self, mut s: usize, ages: &mut [u64]) {
        let cap = self.cap as usize;
        for a in ages.iter_mut() {
            *a = (s % cap) as u64 + 1;
            s /= cap;
        }
    }

    fn encode(&self, ages: &[u64]) -> usize {
        let cap = self.cap as usize;
        ages.iter().rev().fold(0, |acc, &a| acc * cap + (a.min(self.cap) as usize - 1))
    }

    /// Calls `visit(probability, next_ages)` for every channel outcome.
    fn for_each_outcome(&self, ages: &[u64], action: usize, next: &mut [u64], mut visit: impl FnMut(f64, &[u64])) {
        let links = &self.links[action];
        for mask in 0u64..(1u64 << links.len()) {
            let mut prob = 1.0;
            for (c, a) in next.iter_mut().enumerate() {
                *a = ages[c];
            }
            for (b, &(from, to, p)) in links.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    prob *= p;
                    let wire = from.map_or(0, |f| ages[f]);
                    next[to] = next[to].min(wire);
                } else {
                    prob *= 1.0 - p;
                }
            }
            if prob <= 0.0 {
                continue;
            }
            // Received packets are compared against pre-slot ages; every age then moves one slot on.
            for a in next.iter_mut() {
                *a = (*a + 1).min(self.cap);
            }
            visit(prob, next);
        }
    }
}

/// Flat transition table: for state `s` and action `a`, entries
/// `offsets[s * A + a] .. offsets[s * A + a + 1]`.
struct Transitions {
    offsets: Vec<u64>,
    next: Vec<u32>,
    prob: Vec<f64>,
    cost: Vec<f64>,
}

fn build_transitions(model: &Model) -> Transitions {
    let m = model.coords.len();
    let (sa, a_count) = (model.state_count * model.action_count, model.action_count);
    let mut offsets = Vec::with_capacity(sa + 1);
    let mut next = Vec::with_capacity(sa);
    let mut prob = Vec::with_capacity(sa);
    let mut cost = Vec::with_capacity(sa);
    offsets.push(0);
    let mut ages = vec![0; m];
    let mut buf = vec![0; m];
    for s in 0..model.state_count {
        model.decode(s, &mut ages);
        for a in 0..a_count {
            let mut expected = 0.0;
            model.for_each_outcome(&ages, a, &mut buf, |p, nx| {
                let c: f64 = model.cost_coords.iter().map(|(ci, f)| f.eval(nx[*ci])).sum();
                expected += p * c;
                next.push(model.encode(nx) as u32);
                prob.push(p);
            });
            cost.push(expected);
            offsets.push(next.len() as u64);
        }
    }
    Transitions {
        offsets,
        next,
        prob,
        cost,
    }
}

impl Transitions {
    #[inline]
    fn q_value(&self, sa: usize, h: &[f64]) -> f64 {
        let (lo, hi) = (self.offsets[sa] as usize, self.offsets[sa + 1] as usize);
        let mut v = self.cost[sa];
        for e in lo..hi {
            v += self.prob[e] * h[self.next[e] as usize];
        }
        v
    }
}

fn greedy(t: &Transitions, h: &[f64], s: usize, actions: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for a in 0..actions {
        let v = t.q_value(s * actions + a, h);
        if v < best.1 - 1e-12 * (1.0 + v.abs()) {
            best = (a, v);
        }
    }
    best
}

/// Relative value iteration for the minimum average age cost.
pub fn dp_optimal(instance: &NetworkInstance, costs: &[CostFunction], options: &DpOptions) -> Result<DpSolution, PolicyError> {
    let model = Model::new(instance, costs, options)?;
    let trans = build_transitions(&model);
    let (states, actions, tau) = (model.state_count, model.action_count, options.tau);

    let mut h = vec![0.0; states];
    let mut next_h = vec![0.0; states];
    let mut iterations = 0;
    let mut span = f64::INFINITY;
    let mut gain = 0.0;
    while iterations < options.max_iterations {
        iterations += 1;
        next_h.par_iter_mut().enumerate().for_each(|(s, out)| {
            let (_, best) = greedy(&trans, &h, s, actions);
            *out = (1.0 - tau) * h[s] + tau * best;
        });
        let (lo, hi) = next_h
            .par_iter()
            .zip(h.par_iter())
            .map(|(n, o)| (n - o, n - o))
            .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)));
        span = (hi - lo) / tau;
        gain = (hi + lo) / (2.0 * tau);
        let reference = next_h[0];
        next_h.par_iter_mut().for_each(|v| *v -= reference);
        std::mem::swap(&mut h, &mut next_h);
        if span < options.tolerance {
            break;
        }
    }
    if span >= options.tolerance {
        return Err(PolicyError::NotConverged {
            iterations,
            residual: span,
        });
    }

    let policy: Vec<u32> = (0..states).into_par_iter().map(|s| greedy(&trans, &h, s, actions).0 as u32).collect();
    let per_pair_average = pair_averages(&model, &policy, tau);
    Ok(DpSolution {
        cap: model.cap,
        coords: model.coords,
        policy,
        relative_values: h,
        average_cost: gain,
        per_pair_average,
        iterations,
        residual_span: span,
    })
}

/// Stationary per-pair costs of the policy chain started at all-ones, by
/// sparse power iteration on the lazy chain.
fn pair_averages(model: &Model, policy: &[u32], tau: f64) -> Vec<f64> {
    let m = model.coords.len();
    let mut ages = vec![0; m];
    let mut buf = vec![0; m];
    let start = model.encode(&vec![1; m]);
    let mut mu: BTreeMap<usize, f64> = BTreeMap::from([(start, 1.0)]);
    for _ in 0..1_000_000 {
        let mut next: BTreeMap<usize, f64> = BTreeMap::new();
        for (&s, &w) in &mu {
            *next.entry(s).or_insert(0.0) += (1.0 - tau) * w;
            model.decode(s, &mut ages);
            model.for_each_outcome(&ages, policy[s] as usize, &mut buf, |p, nx| {
                *next.entry(model.encode(nx)).or_insert(0.0) += tau * w * p;
            });
        }
        next.retain(|_, w| *w > 1e-300);
        let change: f64 = next
            .iter()
            .map(|(s, w)| (w - mu.get(s).copied().unwrap_or(0.0)).abs())
            .sum::<f64>()
            + mu.iter().filter(|(s, _)| !next.contains_key(s)).map(|(_, w)| w.abs()).sum::<f64>();
        mu = next;
        if change < 1e-13 {
            break;
        }
    }
    let mut out = vec![0.0; model.cost_coords.len()];
    for (&s, &w) in &mu {
        model.decode(s, &mut ages);
        model.for_each_outcome(&ages, policy[s] as usize, &mut buf, |p, nx| {
            for (o, (ci, f)) in out.iter_mut().zip(&model.cost_coords) {
                *o += w * p * f.eval(nx[*ci]);
            }
        });
    }
    out
}

impl DpSolution {
    pub fn action_for(&self, ages: &[u64]) -> usize {
        let cap = self.cap as usize;
        let s = ages.iter().rev().fold(0, |acc, &a| acc * cap + (a.min(self.cap) as usize - 1));
        self.policy[s] as usize
    }

    /// Writes `A_<k>_<j>..., action_index, relative_value` rows, one per state.
    pub fn write_table<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = self.coords.iter().map(|(k, j)| format!("A_{}_{}", k + 1, j + 1)).collect();
        header.push("action_index".into());
        header.push("relative_value".into());
        w.write_record(&header)?;
        let cap = self.cap as usize;
        for (s, (&a, &v)) in self.policy.iter().zip(&self.relative_values).enumerate() {
            let mut rec = Vec::with_capacity(self.coords.len() + 2);
            let mut rest = s;
            for _ in &self.coords {
                rec.push((rest % cap + 1).to_string());
                rest /= cap;
            }
            rec.push(a.to_string());
            rec.push(format!("{v:.9e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Plays the DP policy in simulation.
pub struct DpPolicy {
    solution: DpSolution,
}

impl DpPolicy {
    pub fn new(solution: DpSolution) -> Self {
        DpPolicy { solution }
    }
}

impl Policy for DpPolicy {
    fn decide(&mut self, view: &SlotView<'_>) -> Result<PolicyDecision, PolicyError> {
        let ages: Vec<u64> = self.solution.coords.iter().map(|&(k, i)| view.age.age(k, i)).collect();
        Ok(PolicyDecision::plain(self.solution.action_for(&ages)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{gen_line, LineInterference};

    #[test]
    fn state_encoding_round_trips() {
        // Line 1-2-3: coordinates are the relay and the destination.
        let inst = gen_line(3, LineInterference::SingleTransmitter, 0.5).unwrap();
        let model = Model::new(&inst, &[CostFunction::linear(1.0)], &DpOptions { cap: 6, ..Default::default() }).unwrap();
        assert_eq!(model.coords, vec![(0, 1), (0, 2)]);
        assert_eq!(model.state_count, 36);
        let mut ages = vec![0; 2];
        for s in 0..model.state_count {
            model.decode(s, &mut ages);
            assert!(ages.iter().all(|&a| (1..=6).contains(&a)));
            assert_eq!(model.encode(&ages), s);
        }
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        let inst = gen_line(3, LineInterference::SingleTransmitter, 0.3).unwrap();
        let model = Model::new(&inst, &[CostFunction::linear(1.0)], &DpOptions { cap: 5, ..Default::default() }).unwrap();
        let mut next = vec![0; 2];
        for a in 0..model.action_count {
            let mut total = 0.0;
            model.for_each_outcome(&[5, 2], a, &mut next, |p, n| {
                total += p;
                assert!(n.iter().all(|&x| (1..=5).contains(&x)));
            });
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_below_two_rejected() {
        let inst = gen_line(2, LineInterference::Parity, 1.0).unwrap();
        assert!(matches!(
            dp_optimal(&inst, &[CostFunction::linear(1.0)], &DpOptions { cap: 1, ..Default::default() }),
            Err(PolicyError::CapTooSmall(1))
        ));
    }
}
