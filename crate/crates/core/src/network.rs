//! Static network description: topology, link reliabilities, flows and the
//! explicit set of interference-free activation choices.
//!
//! Node identifiers are zero-based internally. Configuration files and CSV
//! output use one-based labels; conversion happens at those boundaries.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::NetworkError;

pub type NodeId = usize;
pub type FlowId = usize;

/// Default upper bound on the number of enumerated actions.
pub const DEFAULT_MAX_ACTIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    /// Per-slot success probability of a transmission over this edge.
    pub reliability: f64,
}

impl Edge {
    pub fn new(a: NodeId, b: NodeId, reliability: f64) -> Self {
        Edge { a, b, reliability }
    }

    fn key(&self) -> (NodeId, NodeId) {
        (self.a.min(self.b), self.a.max(self.b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    Unicast,
    Multicast,
    Broadcast,
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowKind::Unicast => "unicast",
            FlowKind::Multicast => "multicast",
            FlowKind::Broadcast => "broadcast",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub source: NodeId,
    /// Sorted, duplicate-free destination set.
    pub destinations: Vec<NodeId>,
    pub kind: FlowKind,
}

impl Flow {
    /// Builds a flow and infers its kind from the destination set.
    pub fn new(source: NodeId, destinations: impl IntoIterator<Item = NodeId>, node_count: usize) -> Self {
        let destinations: Vec<NodeId> = destinations.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let kind = Self::infer_kind(source, &destinations, node_count);
        Flow {
            source,
            destinations,
            kind,
        }
    }

    pub fn broadcast(source: NodeId, node_count: usize) -> Self {
        Flow::new(source, (0..node_count).filter(|&j| j != source), node_count)
    }

    pub fn infer_kind(source: NodeId, destinations: &[NodeId], node_count: usize) -> FlowKind {
        let others = (0..node_count).filter(|&j| j != source).count();
        if destinations.len() == 1 {
            FlowKind::Unicast
        } else if destinations.len() == others && !destinations.contains(&source) {
            FlowKind::Broadcast
        } else {
            FlowKind::Multicast
        }
    }

    pub fn is_destination(&self, node: NodeId) -> bool {
        self.destinations.binary_search(&node).is_ok()
    }
}

/// One packet transmission: node `from` sends its freshest flow-`flow`
/// packet to neighbour `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub from: NodeId,
    pub to: NodeId,
    pub flow: FlowId,
}

impl Assignment {
    pub fn new(from: NodeId, to: NodeId, flow: FlowId) -> Self {
        Assignment { from, to, flow }
    }

    fn sort_key(&self) -> (NodeId, NodeId, NodeId, FlowId) {
        (self.from.min(self.to), self.from.max(self.to), self.from, self.flow)
    }

    pub fn undirected(&self) -> (NodeId, NodeId) {
        (self.from.min(self.to), self.from.max(self.to))
    }
}

impl Ord for Assignment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for Assignment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// A set of simultaneous transmissions. The empty action is idle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Action {
    assignments: Vec<Assignment>,
}

impl Action {
    pub fn idle() -> Self {
        Action::default()
    }

    pub fn new(mut assignments: Vec<Assignment>) -> Self {
        assignments.sort();
        assignments.dedup();
        Action { assignments }
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn is_idle(&self) -> bool {
        self.assignments.is_empty()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_idle() {
            return f.write_str("idle");
        }
        let parts: Vec<String> = self
            .assignments
            .iter()
            .map(|a| format!("{}>{}:{}", a.from + 1, a.to + 1, a.flow + 1))
            .collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    actions: Vec<Action>,
}

impl ActionSpace {
    /// Wraps an explicit list, prepending the idle action when it is missing.
    pub fn from_actions(actions: Vec<Action>) -> Self {
        let mut actions = actions;
        if !actions.iter().any(Action::is_idle) {
            actions.insert(0, Action::idle());
        }
        ActionSpace { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> &Action {
        &self.actions[index]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn idle_index(&self) -> Option<usize> {
        self.actions.iter().position(Action::is_idle)
    }

    pub fn position(&self, action: &Action) -> Option<usize> {
        self.actions.iter().position(|a| a == action)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InterferenceModel {
    Explicit(Vec<Action>),
    /// Exactly one assignment per slot.
    SingleTransmitter,
    /// Active edges form a matching.
    NodeExclusive,
    /// Line networks: all odd-numbered or all even-numbered nodes forward
    /// to their right-hand neighbour.
    LineParity,
    /// One node per slot sends one flow's packet to every neighbour that
    /// may carry that flow (a wireless broadcast).
    SingleBroadcaster,
}

/// Which flows may be carried on a directed edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowEligibility {
    /// Flow k may use u->v only if some simple path from k to one of its
    /// destinations traverses u->v.
    #[default]
    OnPath,
    /// Every flow on every edge in both directions.
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSpaceOptions {
    pub eligibility: FlowEligibility,
    pub max_actions: usize,
}

impl Default for ActionSpaceOptions {
    fn default() -> Self {
        ActionSpaceOptions {
            eligibility: FlowEligibility::OnPath,
            max_actions: DEFAULT_MAX_ACTIONS,
        }
    }
}

/// Undirected simple graph with per-edge reliabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub node_count: usize,
    pub edges: Vec<Edge>,
}

impl Topology {
    pub fn new(node_count: usize, edges: Vec<Edge>) -> Self {
        Topology { node_count, edges }
    }

    /// Sorted neighbour lists; out-of-range endpoints are ignored.
    pub fn adjacency(&self) -> Vec<Vec<NodeId>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for e in &self.edges {
            if e.a < self.node_count && e.b < self.node_count && e.a != e.b {
                adj[e.a].push(e.b);
                adj[e.b].push(e.a);
            }
        }
        for nbrs in &mut adj {
            nbrs.sort_unstable();
            nbrs.dedup();
        }
        adj
    }

    pub fn edge_index(&self, u: NodeId, v: NodeId) -> Option<usize> {
        let key = (u.min(v), u.max(v));
        self.edges.iter().position(|e| e.key() == key)
    }

    fn sorted_edge_keys(&self) -> Vec<(NodeId, NodeId)> {
        let set: BTreeSet<_> = self.edges.iter().map(Edge::key).collect();
        set.into_iter().collect()
    }
}

/// Breadth-first hop distances from `from`; `None` marks unreachable nodes.
pub fn bfs_distances(adjacency: &[Vec<NodeId>], from: NodeId) -> Vec<Option<u32>> {
    let mut dist = vec![None; adjacency.len()];
    let mut queue = VecDeque::new();
    dist[from] = Some(0);
    queue.push_back(from);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap_or(0);
        for &v in &adjacency[u] {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Directed (from, to, flow) triples a flow may use under `eligibility`,
/// sorted by edge, then direction, then flow.
pub fn eligible_assignments(topology: &Topology, flows: &[Flow], eligibility: FlowEligibility) -> Vec<Assignment> {
    let adjacency = topology.adjacency();
    let mut out = BTreeSet::new();
    match eligibility {
        FlowEligibility::Any => {
            for (a, b) in topology.sorted_edge_keys() {
                for k in 0..flows.len() {
                    out.insert(Assignment::new(a, b, k));
                    out.insert(Assignment::new(b, a, k));
                }
            }
        }
        FlowEligibility::OnPath => {
            for (k, flow) in flows.iter().enumerate() {
                let mut marked = BTreeSet::new();
                let mut on_path = vec![false; topology.node_count];
                let mut path = vec![flow.source];
                on_path[flow.source] = true;
                mark_simple_paths(&adjacency, flow, &mut path, &mut on_path, &mut marked);
                out.extend(marked.into_iter().map(|(u, v)| Assignment::new(u, v, k)));
            }
        }
    }
    out.into_iter().collect()
}

fn mark_simple_paths(
    adjacency: &[Vec<NodeId>],
    flow: &Flow,
    path: &mut Vec<NodeId>,
    on_path: &mut [bool],
    marked: &mut BTreeSet<(NodeId, NodeId)>,
) {
    let last = *path.last().expect("path starts at the source");
    if path.len() > 1 && flow.is_destination(last) {
        for w in path.windows(2) {
            marked.insert((w[0], w[1]));
        }
    }
    for &next in &adjacency[last] {
        if !on_path[next] {
            on_path[next] = true;
            path.push(next);
            mark_simple_paths(adjacency, flow, path, on_path, marked);
            path.pop();
            on_path[next] = false;
        }
    }
}

/// Materializes the action set for the chosen interference model.
pub fn build_action_space(
    topology: &Topology,
    flows: &[Flow],
    model: &InterferenceModel,
    options: &ActionSpaceOptions,
) -> Result<ActionSpace, NetworkError> {
    let cap = options.max_actions;
    let too_large = || NetworkError::ActionSpaceTooLarge { cap };
    let space = match model {
        InterferenceModel::Explicit(actions) => ActionSpace::from_actions(actions.clone()),
        InterferenceModel::SingleTransmitter => {
            let eligible = eligible_assignments(topology, flows, options.eligibility);
            if eligible.len() + 1 > cap {
                return Err(too_large());
            }
            let mut actions = vec![Action::idle()];
            actions.extend(eligible.into_iter().map(|a| Action::new(vec![a])));
            ActionSpace { actions }
        }
        InterferenceModel::SingleBroadcaster => {
            let eligible = eligible_assignments(topology, flows, options.eligibility);
            let mut groups: BTreeMap<(NodeId, FlowId), Vec<Assignment>> = BTreeMap::new();
            for a in eligible {
                groups.entry((a.from, a.flow)).or_default().push(a);
            }
            if groups.len() + 1 > cap {
                return Err(too_large());
            }
            let mut actions = vec![Action::idle()];
            actions.extend(groups.into_values().map(Action::new));
            ActionSpace { actions }
        }
        InterferenceModel::NodeExclusive => {
            let eligible = eligible_assignments(topology, flows, options.eligibility);
            let mut by_edge: Vec<((NodeId, NodeId), Vec<Assignment>)> = Vec::new();
            for a in eligible {
                match by_edge.last_mut() {
                    Some((key, list)) if *key == a.undirected() => list.push(a),
                    _ => by_edge.push((a.undirected(), vec![a])),
                }
            }
            let mut actions = Vec::new();
            let mut busy = vec![false; topology.node_count];
            let mut current = Vec::new();
            enumerate_matchings(&by_edge, 0, &mut busy, &mut current, &mut actions, cap)?;
            actions.sort();
            ActionSpace { actions }
        }
        InterferenceModel::LineParity => {
            let n = topology.node_count;
            let keys = topology.sorted_edge_keys();
            let line: Vec<(NodeId, NodeId)> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
            if keys != line || topology.edges.len() != line.len() {
                return Err(NetworkError::NotALine);
            }
            let eligible = eligible_assignments(topology, flows, options.eligibility);
            let mut actions = BTreeSet::new();
            actions.insert(Action::idle());
            // Zero-based index parity 0 holds the one-based odd nodes.
            for parity in 0..2 {
                let choices: Vec<Vec<Assignment>> = (0..n.saturating_sub(1))
                    .filter(|i| i % 2 == parity)
                    .map(|i| {
                        eligible
                            .iter()
                            .copied()
                            .filter(|a| a.from == i && a.to == i + 1)
                            .collect::<Vec<_>>()
                    })
                    .filter(|c| !c.is_empty())
                    .collect();
                if choices.is_empty() {
                    continue;
                }
                let mut current = Vec::new();
                cartesian(&choices, 0, &mut current, &mut |set| {
                    actions.insert(Action::new(set.to_vec()));
                    if actions.len() > cap {
                        Err(too_large())
                    } else {
                        Ok(())
                    }
                })?;
            }
            ActionSpace {
                actions: actions.into_iter().collect(),
            }
        }
    };
    if space.len() > cap {
        return Err(too_large());
    }
    Ok(space)
}

fn enumerate_matchings(
    by_edge: &[((NodeId, NodeId), Vec<Assignment>)],
    idx: usize,
    busy: &mut [bool],
    current: &mut Vec<Assignment>,
    out: &mut Vec<Action>,
    cap: usize,
) -> Result<(), NetworkError> {
    if idx == by_edge.len() {
        out.push(Action::new(current.clone()));
        if out.len() > cap {
            return Err(NetworkError::ActionSpaceTooLarge { cap });
        }
        return Ok(());
    }
    enumerate_matchings(by_edge, idx + 1, busy, current, out, cap)?;
    let ((a, b), choices) = &by_edge[idx];
    if !busy[*a] && !busy[*b] {
        busy[*a] = true;
        busy[*b] = true;
        for &choice in choices {
            current.push(choice);
            enumerate_matchings(by_edge, idx + 1, busy, current, out, cap)?;
            current.pop();
        }
        busy[*a] = false;
        busy[*b] = false;
    }
    Ok(())
}

fn cartesian<F>(choices: &[Vec<Assignment>], idx: usize, current: &mut Vec<Assignment>, emit: &mut F) -> Result<(), NetworkError>
where
    F: FnMut(&[Assignment]) -> Result<(), NetworkError>,
{
    if idx == choices.len() {
        return emit(current);
    }
    for &c in &choices[idx] {
        current.push(c);
        cartesian(choices, idx + 1, current, emit)?;
        current.pop();
    }
    Ok(())
}

/// Immutable network description shared by every run on it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    pub topology: Topology,
    pub flows: Vec<Flow>,
    pub action_space: ActionSpace,
    adjacency: Vec<Vec<NodeId>>,
}

impl NetworkInstance {
    /// Validates and assembles an instance; every invariant violation is
    /// reported at once.
    pub fn new(topology: Topology, flows: Vec<Flow>, action_space: ActionSpace) -> Result<Self, NetworkError> {
        let issues = validate_parts(&topology, &flows, &action_space);
        if !issues.is_empty() {
            return Err(NetworkError::Invalid(issues));
        }
        let adjacency = topology.adjacency();
        Ok(NetworkInstance {
            topology,
            flows,
            action_space,
            adjacency,
        })
    }

    /// Builds the action space with `model` and validates the result.
    pub fn with_interference(
        topology: Topology,
        flows: Vec<Flow>,
        model: &InterferenceModel,
        options: &ActionSpaceOptions,
    ) -> Result<Self, NetworkError> {
        let pre = validate_parts(&topology, &flows, &ActionSpace::from_actions(Vec::new()));
        if !pre.is_empty() {
            return Err(NetworkError::Invalid(pre));
        }
        let space = build_action_space(&topology, &flows, model, options)?;
        NetworkInstance::new(topology, flows, space)
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count
    }

    pub fn adjacency(&self) -> &[Vec<NodeId>] {
        &self.adjacency
    }

    pub fn reliability(&self, u: NodeId, v: NodeId) -> Option<f64> {
        self.topology.edge_index(u, v).map(|i| self.topology.edges[i].reliability)
    }

    pub fn validate(&self) -> Vec<String> {
        validate_parts(&self.topology, &self.flows, &self.action_space)
    }
}

/// Returns every invariant violation of the given parts (empty when valid).
pub fn validate_instance(instance: &NetworkInstance) -> Result<(), Vec<String>> {
    let issues = instance.validate();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

pub fn validate_parts(topology: &Topology, flows: &[Flow], space: &ActionSpace) -> Vec<String> {
    let n = topology.node_count;
    let mut issues = Vec::new();
    if n < 2 {
        issues.push(format!("node count {n} must be at least 2"));
    }
    let mut seen = BTreeSet::new();
    for e in &topology.edges {
        let label = format!("edge {}-{}", e.a + 1, e.b + 1);
        if e.a >= n || e.b >= n {
            issues.push(format!("{label}: node out of range"));
            continue;
        }
        if e.a == e.b {
            issues.push(format!("{label}: self-loop"));
        }
        if !seen.insert(e.key()) {
            issues.push(format!("{label}: duplicate edge"));
        }
        if !(e.reliability > 0.0 && e.reliability <= 1.0) {
            issues.push(format!("{label}: reliability out of range ({})", e.reliability));
        }
    }
    if flows.is_empty() || flows.len() > n {
        issues.push(format!("flow count {} must lie in 1..={n}", flows.len()));
    }
    let adjacency = topology.adjacency();
    let mut sources = BTreeSet::new();
    for (k, flow) in flows.iter().enumerate() {
        let label = format!("flow {}", k + 1);
        if flow.source >= n {
            issues.push(format!("{label}: source out of range"));
            continue;
        }
        if !sources.insert(flow.source) {
            issues.push(format!("{label}: duplicate source {}", flow.source + 1));
        }
        if flow.destinations.is_empty() {
            issues.push(format!("{label}: empty destination set"));
        }
        if flow.destinations.iter().any(|&d| d >= n) {
            issues.push(format!("{label}: destination out of range"));
            continue;
        }
        if flow.is_destination(flow.source) {
            issues.push(format!("{label}: source in destination set"));
        }
        let others = n - 1;
        let expected = if flow.destinations.len() == others && !flow.is_destination(flow.source) {
            FlowKind::Broadcast
        } else if flow.destinations.len() == 1 {
            FlowKind::Unicast
        } else {
            FlowKind::Multicast
        };
        // A single destination in a 2-node network is both unicast and broadcast.
        let two_node_ok = others == 1 && flow.destinations.len() == 1 && flow.kind != FlowKind::Multicast;
        if flow.kind != expected && !two_node_ok {
            issues.push(format!("{label}: kind {} inconsistent with destination set (expected {expected})", flow.kind));
        }
        let dist = bfs_distances(&adjacency, flow.source);
        for &d in &flow.destinations {
            if dist[d].is_none() {
                issues.push(format!("{label}: destination {} unreachable from source", d + 1));
            }
        }
    }
    if space.idle_index().is_none() {
        issues.push("action space lacks the idle action".to_string());
    }
    for (idx, action) in space.actions().iter().enumerate() {
        let mut used = BTreeSet::new();
        for a in action.assignments() {
            if a.flow >= flows.len() {
                issues.push(format!("action {idx}: unknown flow {}", a.flow + 1));
            }
            if a.from >= n || a.to >= n || !seen.contains(&a.undirected()) {
                issues.push(format!("action {idx}: {}>{} is not an edge", a.from + 1, a.to + 1));
            }
            if !used.insert(a.undirected()) {
                issues.push(format!("action {idx}: edge {}-{} used twice", a.from + 1, a.to + 1));
            }
        }
    }
    issues
}
