//! Age processes, cost functions, freshest-packet buffers and the age debt
//! virtual queues (destination and intermediate).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::AgeError;
use crate::network::{bfs_distances, Action, FlowId, NodeId, NetworkInstance};

/// Default cost cap: large enough never to bind in practice.
pub const DEFAULT_COST_CAP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CostKind {
    /// `weight * h`
    Linear { weight: f64 },
    /// `h^exponent`
    Power { exponent: f64 },
    /// `e^h`
    Exponential,
    /// `1` once `h >= threshold`, else `0`.
    Indicator { threshold: u64 },
}

/// Monotone nondecreasing age cost, clamped to `cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFunction {
    pub kind: CostKind,
    pub cap: f64,
}

impl CostFunction {
    pub fn new(kind: CostKind) -> Self {
        let cap = match kind {
            CostKind::Indicator { .. } => 1.0,
            _ => DEFAULT_COST_CAP,
        };
        CostFunction { kind, cap }
    }

    pub fn linear(weight: f64) -> Self {
        CostFunction::new(CostKind::Linear { weight })
    }

    pub fn power(exponent: f64) -> Self {
        CostFunction::new(CostKind::Power { exponent })
    }

    pub fn exponential() -> Self {
        CostFunction::new(CostKind::Exponential)
    }

    pub fn indicator(threshold: u64) -> Self {
        CostFunction::new(CostKind::Indicator { threshold })
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = cap;
        self
    }

    pub fn eval(&self, age: u64) -> f64 {
        let h = age as f64;
        let raw = match self.kind {
            CostKind::Linear { weight } => weight * h,
            CostKind::Power { exponent } => h.powf(exponent),
            CostKind::Exponential => h.exp(),
            CostKind::Indicator { threshold } => {
                if age >= threshold {
                    1.0
                } else {
                    0.0
                }
            }
        };
        raw.min(self.cap)
    }

    /// Weight used by max-weight style baselines; 1 for non-linear costs.
    pub fn linear_weight(&self) -> f64 {
        match self.kind {
            CostKind::Linear { weight } => weight,
            _ => 1.0,
        }
    }
}

/// Source-destination pair carrying a cost and a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pair {
    pub flow: FlowId,
    pub destination: NodeId,
}

/// Intermediate debt queue for `pair` held at relay node `relay`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelayQueue {
    pub pair: usize,
    pub relay: NodeId,
}

/// Index of every virtual queue in a run.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueLayout {
    pub pairs: Vec<Pair>,
    pub relays: Vec<RelayQueue>,
    pair_lookup: BTreeMap<(FlowId, NodeId), usize>,
}

impl QueueLayout {
    /// Destination queues for every (flow, destination). With
    /// `intermediate`, also one queue per pair at every non-destination node
    /// that forwards the flow in some action.
    pub fn new(instance: &NetworkInstance, intermediate: bool) -> Self {
        let mut pairs = Vec::new();
        for (k, flow) in instance.flows.iter().enumerate() {
            for &d in &flow.destinations {
                pairs.push(Pair { flow: k, destination: d });
            }
        }
        let pair_lookup = pairs.iter().enumerate().map(|(i, p)| ((p.flow, p.destination), i)).collect();
        let mut relays = Vec::new();
        if intermediate {
            let n = instance.node_count();
            let mut forwards = vec![vec![false; n]; instance.flows.len()];
            for action in instance.action_space.actions() {
                for a in action.assignments() {
                    forwards[a.flow][a.from] = true;
                }
            }
            for (p_idx, pair) in pairs.iter().enumerate() {
                let flow = &instance.flows[pair.flow];
                for i in 0..n {
                    if i != flow.source && !flow.is_destination(i) && forwards[pair.flow][i] {
                        relays.push(RelayQueue { pair: p_idx, relay: i });
                    }
                }
            }
        }
        QueueLayout {
            pairs,
            relays,
            pair_lookup,
        }
    }

    pub fn pair_index(&self, flow: FlowId, destination: NodeId) -> Option<usize> {
        self.pair_lookup.get(&(flow, destination)).copied()
    }

    /// Intermediate queue indices attached to each pair.
    pub fn relays_by_pair(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.pairs.len()];
        for (r, q) in self.relays.iter().enumerate() {
            out[q.pair].push(r);
        }
        out
    }
}

/// Freshest generation timestamp per (flow, node).
#[derive(Debug, Clone, PartialEq)]
pub struct PacketBuffer {
    freshest: Vec<Vec<Option<i64>>>,
    sources: Vec<NodeId>,
}

impl PacketBuffer {
    /// Sources start holding a packet stamped `-1`; every other buffer is empty.
    pub fn new(instance: &NetworkInstance) -> Self {
        let n = instance.node_count();
        let sources: Vec<NodeId> = instance.flows.iter().map(|f| f.source).collect();
        let freshest = sources
            .iter()
            .map(|&s| (0..n).map(|i| if i == s { Some(-1) } else { None }).collect())
            .collect();
        PacketBuffer { freshest, sources }
    }

    pub fn freshest(&self, flow: FlowId, node: NodeId) -> Option<i64> {
        self.freshest[flow][node]
    }

    pub fn holds(&self, flow: FlowId, node: NodeId) -> bool {
        self.freshest[flow][node].is_some()
    }

    /// Timestamp of the packet `node` would send at slot `t`: sources
    /// generate at will, relays forward their freshest copy.
    pub fn outgoing(&self, flow: FlowId, node: NodeId, t: i64) -> Option<i64> {
        if self.sources[flow] == node {
            Some(t)
        } else {
            self.freshest[flow][node]
        }
    }

    fn offer(&mut self, flow: FlowId, node: NodeId, generated: i64) {
        let slot = &mut self.freshest[flow][node];
        if slot.is_none_or(|old| generated > old) {
            *slot = Some(generated);
        }
    }

    /// Records a fresh generation at the source.
    pub fn stamp_source(&mut self, flow: FlowId, t: i64) {
        let s = self.sources[flow];
        self.offer(flow, s, t);
    }
}

/// `A_kj(t)` for every flow and every node other than the flow's source.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeState {
    ages: Vec<Vec<u64>>,
    sources: Vec<NodeId>,
}

/// A packet of `flow`, generated at `generated`, received by `node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub flow: FlowId,
    pub node: NodeId,
    pub generated: i64,
}

impl AgeState {
    /// Every tracked age starts at 1.
    pub fn new(instance: &NetworkInstance) -> Self {
        let n = instance.node_count();
        let sources: Vec<NodeId> = instance.flows.iter().map(|f| f.source).collect();
        AgeState {
            ages: vec![vec![1; n]; sources.len()],
            sources,
        }
    }

    pub fn from_ages(ages: Vec<Vec<u64>>, sources: Vec<NodeId>) -> Self {
        AgeState { ages, sources }
    }

    pub fn age(&self, flow: FlowId, node: NodeId) -> u64 {
        self.ages[flow][node]
    }

    pub fn set_age(&mut self, flow: FlowId, node: NodeId, age: u64) {
        self.ages[flow][node] = age;
    }

    pub fn max_age(&self) -> u64 {
        self.ages
            .iter()
            .enumerate()
            .flat_map(|(k, row)| row.iter().enumerate().filter(move |(i, _)| *i != self.sources[k]).map(|(_, &a)| a))
            .max()
            .unwrap_or(1)
    }

    /// Checks `A_ki(t) = t - t_g(i, k)` wherever a relay or destination
    /// holds a packet.
    pub fn consistent_with(&self, buffer: &PacketBuffer, t: i64) -> bool {
        self.ages.iter().enumerate().all(|(k, row)| {
            row.iter().enumerate().all(|(i, &a)| {
                i == self.sources[k] || buffer.freshest(k, i).is_none_or(|tg| a as i64 == t - tg)
            })
        })
    }
}

/// Advances every tracked age by one slot and moves delivered packets into
/// the buffers. Delivered pairs follow `min(A(t), t - t_g) + 1`.
pub fn advance_age(age: &mut AgeState, buffer: &mut PacketBuffer, deliveries: &[Delivery], t: i64) -> Result<(), AgeError> {
    if let Some(bad) = deliveries.iter().find(|d| d.generated > t) {
        return Err(AgeError::CausalityViolation {
            generated: bad.generated,
            slot: t,
        });
    }
    let mut best: BTreeMap<(FlowId, NodeId), i64> = BTreeMap::new();
    for d in deliveries {
        if d.node == age.sources[d.flow] {
            continue;
        }
        let delay = t - d.generated;
        best.entry((d.flow, d.node)).and_modify(|v| *v = (*v).min(delay)).or_insert(delay);
    }
    for (k, row) in age.ages.iter_mut().enumerate() {
        for (i, a) in row.iter_mut().enumerate() {
            if i == age.sources[k] {
                continue;
            }
            *a = match best.get(&(k, i)) {
                Some(&delay) => (*a).min(delay as u64) + 1,
                None => *a + 1,
            };
        }
    }
    for d in deliveries {
        if d.node != age.sources[d.flow] {
            buffer.offer(d.flow, d.node, d.generated);
        }
    }
    Ok(())
}

/// Per-pair targets `alpha_kj`, indexed like [`QueueLayout::pairs`].
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub alpha: Vec<f64>,
}

impl TargetVector {
    pub fn uniform(pairs: usize, value: f64) -> Self {
        TargetVector {
            alpha: vec![value; pairs],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebtState {
    pub dest: Vec<f64>,
    pub intermediate: Vec<f64>,
}

impl DebtState {
    pub fn new(layout: &QueueLayout) -> Self {
        DebtState {
            dest: vec![0.0; layout.pairs.len()],
            intermediate: vec![0.0; layout.relays.len()],
        }
    }

    pub fn reset(&mut self) {
        self.dest.iter_mut().for_each(|q| *q = 0.0);
        self.intermediate.iter_mut().for_each(|q| *q = 0.0);
    }
}

/// `[q + increment]^+`
#[inline]
pub fn debt_step(q: f64, increment: f64) -> f64 {
    (q + increment).max(0.0)
}

/// `Q_kj(t+1) = [Q_kj(t) + f_kj(A_kj(t+1)) - alpha_kj]^+` for every pair.
pub fn update_destination_debt(
    debt: &mut DebtState,
    layout: &QueueLayout,
    costs: &[CostFunction],
    age_next: &AgeState,
    targets: &TargetVector,
) {
    for (p, pair) in layout.pairs.iter().enumerate() {
        let b = costs[p].eval(age_next.age(pair.flow, pair.destination));
        debt.dest[p] = debt_step(debt.dest[p], b - targets.alpha[p]);
    }
}

/// Shortest walk length from `i` to `j` whose first hop is one of
/// `first_hops` (directed edges leaving `i`).
pub fn restricted_hop_distance(adjacency: &[Vec<NodeId>], i: NodeId, j: NodeId, first_hops: &[(NodeId, NodeId)]) -> Option<u32> {
    first_hops
        .iter()
        .filter(|(from, _)| *from == i)
        .filter_map(|&(_, head)| bfs_distances(adjacency, head)[j].map(|d| d + 1))
        .min()
}

/// All-pairs hop distances, for repeated restricted-distance queries.
#[derive(Debug, Clone)]
pub struct HopTable {
    dist: Vec<Vec<Option<u32>>>,
}

impl HopTable {
    pub fn new(adjacency: &[Vec<NodeId>]) -> Self {
        HopTable {
            dist: (0..adjacency.len()).map(|s| bfs_distances(adjacency, s)).collect(),
        }
    }

    pub fn distance(&self, from: NodeId, to: NodeId) -> Option<u32> {
        self.dist[from][to]
    }

    /// Same as [`restricted_hop_distance`] given the heads of the first hops.
    pub fn restricted(&self, heads: impl IntoIterator<Item = NodeId>, j: NodeId) -> Option<u32> {
        heads.into_iter().filter_map(|h| self.dist[h][j].map(|d| d + 1)).min()
    }
}

/// How one intermediate queue evolves in a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RelayUpdate {
    /// Forwarding: deterministic increment `f(min(A_ki, A_kj) + h) - alpha`.
    Forwarding { increment: f64 },
    /// Tracks the destination: `B_kj(t+1) - alpha`.
    TrackDestination,
    /// Forwarding with no route from the first hops to the destination;
    /// falls back to tracking the destination.
    Unreachable,
}

/// Classifies the update of relay queue `rq` under `action`.
#[allow(clippy::too_many_arguments)]
pub fn relay_update(
    rq: &RelayQueue,
    pair: &Pair,
    action: &Action,
    age: &AgeState,
    buffer: &PacketBuffer,
    hops: &HopTable,
    cost: &CostFunction,
    alpha: f64,
) -> RelayUpdate {
    let i = rq.relay;
    let k = pair.flow;
    let mut heads = action.assignments().iter().filter(|a| a.from == i && a.flow == k).map(|a| a.to).peekable();
    if heads.peek().is_none() || !buffer.holds(k, i) {
        return RelayUpdate::TrackDestination;
    }
    match hops.restricted(heads, pair.destination) {
        Some(h) => {
            let base = age.age(k, i).min(age.age(k, pair.destination));
            RelayUpdate::Forwarding {
                increment: cost.eval(base + h as u64) - alpha,
            }
        }
        None => RelayUpdate::Unreachable,
    }
}

/// Updates every intermediate queue for the realized slot. `age` and
/// `buffer` are the pre-slot state; `age_next` is `A(t+1)`. Returns the
/// number of unreachable-route fallbacks.
#[allow(clippy::too_many_arguments)]
pub fn update_intermediate_debt(
    debt: &mut DebtState,
    layout: &QueueLayout,
    hops: &HopTable,
    age: &AgeState,
    buffer: &PacketBuffer,
    action: &Action,
    targets: &TargetVector,
    costs: &[CostFunction],
    age_next: &AgeState,
) -> usize {
    let mut fallbacks = 0;
    for (r, rq) in layout.relays.iter().enumerate() {
        let pair = &layout.pairs[rq.pair];
        let alpha = targets.alpha[rq.pair];
        let cost = &costs[rq.pair];
        let increment = match relay_update(rq, pair, action, age, buffer, hops, cost, alpha) {
            RelayUpdate::Forwarding { increment } => increment,
            other => {
                if other == RelayUpdate::Unreachable {
                    fallbacks += 1;
                }
                cost.eval(age_next.age(pair.flow, pair.destination)) - alpha
            }
        };
        debt.intermediate[r] = debt_step(debt.intermediate[r], increment);
    }
    fallbacks
}

/// Sum of squares of every destination and intermediate queue.
pub fn lyapunov(debt: &DebtState) -> f64 {
    debt.dest.iter().chain(debt.intermediate.iter()).map(|q| q * q).sum()
}
