//! Generators for the standard experiment families: stars, lines and
//! all-to-all broadcast on enumerated graphs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::age::CostFunction;
use crate::error::NetworkError;
use crate::graphs::Graph;
use crate::network::{ActionSpaceOptions, Edge, Flow, InterferenceModel, NetworkInstance, Topology};

/// An instance together with one cost function per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub instance: NetworkInstance,
    pub costs: Vec<CostFunction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StarCosts {
    /// `w_i A` with `w_i = i / N`.
    #[default]
    WeightedLinear,
    /// Cycles through `15A, e^A, A^2, A^3`.
    FunctionsOfAge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ReliabilityRule {
    Reliable,
    Uniform { low: f64, high: f64 },
}

impl Default for ReliabilityRule {
    fn default() -> Self {
        ReliabilityRule::Uniform { low: 0.6, high: 1.0 }
    }
}

impl ReliabilityRule {
    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            ReliabilityRule::Reliable => 1.0,
            ReliabilityRule::Uniform { low, high } => rng.random_range(low..=high),
        }
    }
}

/// `15A, e^A, A^2, A^3`.
pub fn functions_of_age_costs() -> [CostFunction; 4] {
    [
        CostFunction::linear(15.0),
        CostFunction::exponential(),
        CostFunction::power(2.0),
        CostFunction::power(3.0),
    ]
}

/// Star on `n` nodes: sources `1..n-1` send to hub `n` (zero-based `0..n-2`
/// to `n-1`), one transmission per slot.
pub fn gen_star(n: usize, costs: StarCosts, reliability: ReliabilityRule, rng: &mut impl Rng) -> Result<Scenario, NetworkError> {
    if n < 2 {
        return Err(NetworkError::Invalid(vec!["a star needs at least 2 nodes".into()]));
    }
    let hub = n - 1;
    let edges = (0..hub).map(|i| Edge::new(i, hub, reliability.draw(rng))).collect();
    let flows = (0..hub).map(|i| Flow::new(i, [hub], n)).collect();
    let instance = NetworkInstance::with_interference(
        Topology::new(n, edges),
        flows,
        &InterferenceModel::SingleTransmitter,
        &ActionSpaceOptions::default(),
    )?;
    let costs = (0..hub)
        .map(|i| match costs {
            StarCosts::WeightedLinear => CostFunction::linear((i + 1) as f64 / n as f64),
            StarCosts::FunctionsOfAge => functions_of_age_costs()[i % 4].clone(),
        })
        .collect();
    Ok(Scenario { instance, costs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineInterference {
    /// All odd-numbered or all even-numbered nodes forward.
    #[default]
    Parity,
    SingleTransmitter,
}

/// Line `1 - 2 - ... - n` with one unicast flow from node 1 to node `n`.
pub fn gen_line(n: usize, interference: LineInterference, reliability: f64) -> Result<NetworkInstance, NetworkError> {
    if n < 2 {
        return Err(NetworkError::Invalid(vec!["a line needs at least 2 nodes".into()]));
    }
    let edges = (0..n - 1).map(|i| Edge::new(i, i + 1, reliability)).collect();
    let model = match interference {
        LineInterference::Parity => InterferenceModel::LineParity,
        LineInterference::SingleTransmitter => InterferenceModel::SingleTransmitter,
    };
    NetworkInstance::with_interference(Topology::new(n, edges), vec![Flow::new(0, [n - 1], n)], &model, &ActionSpaceOptions::default())
}

/// Every node broadcasts its own flow to all others over `graph`, with
/// unit linear costs.
pub fn gen_broadcast(graph: &Graph, reliability: f64, model: &InterferenceModel) -> Result<Scenario, NetworkError> {
    let n = graph.n;
    let edges = graph.edges.iter().map(|&(a, b)| Edge::new(a, b, reliability)).collect();
    let flows: Vec<Flow> = (0..n).map(|s| Flow::broadcast(s, n)).collect();
    let pairs = flows.iter().map(|f| f.destinations.len()).sum();
    let instance = NetworkInstance::with_interference(Topology::new(n, edges), flows, model, &ActionSpaceOptions::default())?;
    Ok(Scenario {
        instance,
        costs: vec![CostFunction::linear(1.0); pairs],
    })
}
