//! TOML experiment configuration.
//!
//! Node, flow and pair references are one-based in the file and zero-based
//! everywhere else. Unknown keys are rejected.
//!
//! ```toml
//! [network]
//! nodes = 3
//! edges = ["1-2:1.0", "2-3:0.8"]
//!
//! [[flows]]
//! source = 1
//! destinations = [3]
//!
//! [interference]
//! model = "single-transmitter"
//!
//! [costs]
//! default = { kind = "linear", weight = 1.0 }
//!
//! [[policy]]
//! name = "age-debt"
//! target_mode = { mode = "flow-control", v = 100.0, alpha_max = 100.0 }
//!
//! [sim]
//! horizon = 100000
//! seeds = [0, 1, 2, 3, 4]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::age::{CostFunction, CostKind, DEFAULT_COST_CAP};
use crate::error::{ConfigError, ConfigIssue};
use crate::graphs::enumerate_connected_graphs;
use crate::network::{
    Action, ActionSpaceOptions, Assignment, Edge, Flow, FlowEligibility, FlowKind, InterferenceModel, NetworkInstance,
    Topology, DEFAULT_MAX_ACTIONS,
};
use crate::policy::{DpOptions, DriftOptions, PolicySelector, SearchBudget, TieBreak};
use crate::scenario::{gen_broadcast, gen_line, gen_star, LineInterference, ReliabilityRule, Scenario, StarCosts};
use crate::sim::{SimConfig, TargetMode, TraceDetail};
use crate::target::{FlowControlConfig, GradientDescentConfig};

pub const DEFAULT_HORIZON: u64 = 100_000;
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flows: Vec<Spanned<FlowSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interference: Option<InterferenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<CostsSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policy: Vec<PolicySpec>,
    #[serde(default)]
    pub sim: SimSpec,
    /// Default output path for `run` and `sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Star,
    Line,
    GraphEnum,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    /// `"i-j:p"` or `"i-j"` (reliability 1).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<Spanned<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorKind>,
    /// Node count(s) for a generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<OneOrMany<usize>>,
    /// Star cost family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_family: Option<StarCosts>,
    /// Star: all links reliable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliable: Option<bool>,
    /// Star: reliabilities drawn uniformly from `[low, high]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability_range: Option<[f64; 2]>,
    /// Line and graph-enum: reliability of every edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_interference: Option<LineInterference>,
    /// Graph-enum: one-based indices into the enumeration, all if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graphs: Option<Vec<usize>>,
    /// Star: seed for the reliability draw; defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Destinations {
    List(Vec<usize>),
    /// Must be `"broadcast"`.
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub source: usize,
    pub destinations: Destinations,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<FlowKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterferenceName {
    SingleTransmitter,
    NodeExclusive,
    LineParity,
    SingleBroadcaster,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceSpec {
    pub model: InterferenceName,
    /// Explicit actions: lists of `"i>j:k"` (sender, receiver, flow number).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<Spanned<Vec<String>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eligibility: Option<FlowEligibility>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_actions: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostName {
    Linear,
    Power,
    Exponential,
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub kind: CostName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    /// Pair selector for per-pair overrides: flow number and destination node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<CostSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<Spanned<CostSpec>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    AgeDebt,
    AgeDebtClosedForm,
    MaxWeight,
    Randomized,
    Dp,
}

impl PolicyName {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyName::AgeDebt => "age-debt",
            PolicyName::AgeDebtClosedForm => "age-debt-closed-form",
            PolicyName::MaxWeight => "max-weight",
            PolicyName::Randomized => "randomized",
            PolicyName::Dp => "dp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetModeName {
    Fixed,
    OracleDp,
    Baseline,
    GradientDescent,
    FlowControl,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_states: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

impl DpSpec {
    pub fn options(&self) -> DpOptions {
        let d = DpOptions::default();
        DpOptions {
            cap: self.cap.unwrap_or(d.cap),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            max_states: self.max_states.unwrap_or(d.max_states),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            tau: d.tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub mode: TargetModeName,
    /// Fixed targets: one value for every pair, or one per pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<OneOrMany<f64>>,
    /// Baseline policy whose measured averages become the targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<PolicyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_length: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub name: PolicyName,
    /// Name used in CSV output; derived from the policy and target mode if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_break: Option<TieBreak>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<DpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_mode: Option<TargetSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceDetailName {
    #[default]
    MetricsOnly,
    Full,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<OneOrMany<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_detail: Option<TraceDetailName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_link_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo_samples: Option<usize>,
}

/// A concrete network with costs, and its identifiers for CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub id: String,
    /// One-based graph index for graph-enum scenarios.
    pub graph_id: Option<usize>,
    pub scenario: Scenario,
}

/// A policy from the config, ready to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPolicy {
    pub label: String,
    pub selector: PolicySelector,
    pub target: TargetMode,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Issues<'a> {
    text: Option<&'a str>,
    list: Vec<ConfigIssue>,
}

impl Issues<'_> {
    fn push(&mut self, span: Option<std::ops::Range<usize>>, message: impl Into<String>) {
        let line = match (self.text, span) {
            (Some(t), Some(s)) => Some(line_of(t, s.start)),
            _ => None,
        };
        self.list.push(ConfigIssue {
            line,
            message: message.into(),
        });
    }

    fn finish(self) -> Result<(), ConfigError> {
        if self.list.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(self.list))
        }
    }
}

/// Parses and validates a config. Every problem found is reported, with a
/// line number where one is known.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
        ConfigError(vec![ConfigIssue {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        }])
    })?;
    config.validate_with(Some(text))?;
    Ok(config)
}

/// `"i-j:p"` to a zero-based edge.
fn parse_edge(s: &str) -> Result<Edge, String> {
    let (pair, p) = match s.split_once(':') {
        Some((pair, p)) => (pair, p.trim().parse::<f64>().map_err(|_| format!("bad reliability in edge \"{s}\""))?),
        None => (s, 1.0),
    };
    let (a, b) = pair.split_once('-').ok_or_else(|| format!("edge \"{s}\" is not of the form i-j:p"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad node in edge \"{s}\""))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad node in edge \"{s}\""))?;
    if a == 0 || b == 0 {
        return Err(format!("node ids are one-based in edge \"{s}\""));
    }
    Ok(Edge::new(a - 1, b - 1, p))
}

/// `"i>j:k"` to a zero-based assignment.
fn parse_assignment(s: &str) -> Result<Assignment, String> {
    let bad = || format!("assignment \"{s}\" is not of the form i>j:k");
    let (edge, k) = s.split_once(':').ok_or_else(bad)?;
    let (i, j) = edge.split_once('>').ok_or_else(bad)?;
    let num = |x: &str| x.trim().parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(bad);
    Ok(Assignment::new(num(i)? - 1, num(j)? - 1, num(k)? - 1))
}

fn cost_from_spec(spec: &CostSpec) -> Result<CostFunction, String> {
    let kind = match spec.kind {
        CostName::Linear => CostKind::Linear {
            weight: spec.weight.unwrap_or(1.0),
        },
        CostName::Power => CostKind::Power {
            exponent: spec.exponent.ok_or("power cost needs an exponent")?,
        },
        CostName::Exponential => CostKind::Exponential,
        CostName::Indicator => CostKind::Indicator {
            threshold: spec.threshold.ok_or("indicator cost needs a threshold")?,
        },
    };
    let stray = match spec.kind {
        CostName::Linear => spec.exponent.is_some() || spec.threshold.is_some(),
        CostName::Power => spec.weight.is_some() || spec.threshold.is_some(),
        CostName::Exponential => spec.weight.is_some() || spec.exponent.is_some() || spec.threshold.is_some(),
        CostName::Indicator => spec.weight.is_some() || spec.exponent.is_some(),
    };
    if stray {
        return Err(format!("parameter does not apply to a {:?} cost", spec.kind).to_lowercase());
    }
    if let CostKind::Linear { weight } = kind {
        if !(weight >= 0.0) {
            return Err("linear weight must be nonnegative".into());
        }
    }
    if let CostKind::Power { exponent } = kind {
        if !(exponent >= 0.0) {
            return Err("power exponent must be nonnegative".into());
        }
    }
    let f = CostFunction::new(kind);
    Ok(match spec.cap {
        Some(cap) if cap > 0.0 => f.with_cap(cap),
        Some(_) => return Err("cost cap must be positive".into()),
        None => f,
    })
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_with(None)
    }

    fn validate_with(&self, text: Option<&str>) -> Result<(), ConfigError> {
        let mut issues = Issues { text, list: Vec::new() };
        let net = &self.network;
        match net.generator {
            None => {
                if net.nodes.is_none() {
                    issues.push(None, "network.nodes is required without a generator");
                }
                if self.flows.is_empty() {
                    issues.push(None, "at least one [[flows]] entry is required without a generator");
                }
                if net.n.is_some() || net.graphs.is_some() || net.cost_family.is_some() {
                    issues.push(None, "network.n, graphs and cost_family only apply to generators");
                }
            }
            Some(kind) => {
                if net.nodes.is_some() || !net.edges.is_empty() || !self.flows.is_empty() {
                    issues.push(None, "nodes, edges and flows cannot be combined with a generator");
                }
                match &net.n {
                    None => issues.push(None, "network.n is required for a generator"),
                    Some(n) => {
                        for v in n.to_vec() {
                            let ok = match kind {
                                GeneratorKind::Star | GeneratorKind::Line => v >= 2,
                                GeneratorKind::GraphEnum => (2..=crate::graphs::MAX_VERTICES).contains(&v),
                            };
                            if !ok {
                                issues.push(None, format!("network.n = {v} is out of range for this generator"));
                            }
                        }
                    }
                }
                if let Some([lo, hi]) = net.reliability_range {
                    if !(0.0 < lo && lo <= hi && hi <= 1.0) {
                        issues.push(None, "reliability_range must satisfy 0 < low <= high <= 1");
                    }
                }
            }
        }
        if let Some(p) = net.reliability {
            if !(p > 0.0 && p <= 1.0) {
                issues.push(None, "network.reliability must lie in (0, 1]");
            }
        }
        if let Some(nodes) = net.nodes {
            for e in &net.edges {
                match parse_edge(e.get_ref()) {
                    Err(m) => issues.push(Some(e.span()), m),
                    Ok(edge) if edge.a >= nodes || edge.b >= nodes => {
                        issues.push(Some(e.span()), format!("edge \"{}\" references a node outside 1..={nodes}", e.get_ref()))
                    }
                    Ok(_) => {}
                }
            }
            for f in &self.flows {
                let spec = f.get_ref();
                if spec.source == 0 || spec.source > nodes {
                    issues.push(Some(f.span()), format!("flow source {} is outside 1..={nodes}", spec.source));
                }
                match &spec.destinations {
                    Destinations::List(d) => {
                        for &j in d {
                            if j == 0 || j > nodes {
                                issues.push(Some(f.span()), format!("flow destination {j} is outside 1..={nodes}"));
                            }
                        }
                        if d.is_empty() {
                            issues.push(Some(f.span()), "flow needs at least one destination");
                        }
                    }
                    Destinations::Keyword(k) if k != "broadcast" => {
                        issues.push(Some(f.span()), format!("destinations must be a list or \"broadcast\", got \"{k}\""))
                    }
                    Destinations::Keyword(_) => {}
                }
            }
        }
        if let Some(int) = &self.interference {
            match (int.model, &int.actions) {
                (InterferenceName::Explicit, None) => issues.push(None, "explicit interference needs an actions list"),
                (InterferenceName::Explicit, Some(actions)) => {
                    for a in actions {
                        for s in a.get_ref() {
                            if let Err(m) = parse_assignment(s) {
                                issues.push(Some(a.span()), m);
                            }
                        }
                    }
                }
                (_, Some(_)) => issues.push(None, "interference.actions only applies to the explicit model"),
                _ => {}
            }
        }
        if let Some(costs) = &self.costs {
            if let Some(d) = &costs.default {
                if d.flow.is_some() || d.destination.is_some() {
                    issues.push(None, "costs.default cannot name a pair");
                }
                if let Err(m) = cost_from_spec(d) {
                    issues.push(None, format!("costs.default: {m}"));
                }
            }
            for p in &costs.pairs {
                if let Err(m) = cost_from_spec(p.get_ref()) {
                    issues.push(Some(p.span()), m);
                }
            }
        }
        for p in &self.policy {
            if let Err(m) = p.resolve_checks() {
                issues.push(None, format!("policy {}: {m}", p.name.as_str()));
            }
        }
        if let Some(0) = self.sim.horizon {
            issues.push(None, "sim.horizon must be at least 1");
        }
        if !issues.list.is_empty() {
            return issues.finish();
        }
        // Structural checks that need the assembled instance.
        if let Err(e) = self.scenarios(0) {
            issues.list.extend(e.0);
        }
        issues.finish()
    }

    pub fn horizon(&self) -> u64 {
        self.sim.horizon.unwrap_or(DEFAULT_HORIZON)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.sim.seeds.as_ref().map(|s| s.to_vec()).unwrap_or_else(|| DEFAULT_SEEDS.to_vec())
    }

    pub fn drift_options(&self) -> DriftOptions {
        let d = DriftOptions::default();
        DriftOptions {
            relevant_link_cap: self.sim.relevant_link_cap.unwrap_or(d.relevant_link_cap),
            monte_carlo_samples: self.sim.monte_carlo_samples,
        }
    }

    pub fn trace_detail(&self) -> TraceDetail {
        match self.sim.trace_detail.unwrap_or_default() {
            TraceDetailName::MetricsOnly => TraceDetail::MetricsOnly,
            TraceDetailName::Full => TraceDetail::Full,
        }
    }

    fn interference_model(&self, default: InterferenceModel, flows: usize) -> Result<(InterferenceModel, ActionSpaceOptions), String> {
        let mut options = ActionSpaceOptions::default();
        let Some(spec) = &self.interference else {
            return Ok((default, options));
        };
        options.eligibility = spec.eligibility.unwrap_or_default();
        options.max_actions = spec.max_actions.unwrap_or(DEFAULT_MAX_ACTIONS);
        let model = match spec.model {
            InterferenceName::SingleTransmitter => InterferenceModel::SingleTransmitter,
            InterferenceName::NodeExclusive => InterferenceModel::NodeExclusive,
            InterferenceName::LineParity => InterferenceModel::LineParity,
            InterferenceName::SingleBroadcaster => InterferenceModel::SingleBroadcaster,
            InterferenceName::Explicit => {
                let mut actions = Vec::new();
                for a in spec.actions.iter().flatten() {
                    let assignments = a.get_ref().iter().map(|s| parse_assignment(s)).collect::<Result<Vec<_>, _>>()?;
                    if let Some(bad) = assignments.iter().find(|x| x.flow >= flows) {
                        return Err(format!("assignment references flow {} but only {flows} flows exist", bad.flow + 1));
                    }
                    actions.push(Action::new(assignments));
                }
                InterferenceModel::Explicit(actions)
            }
        };
        Ok((model, options))
    }

    fn explicit_flows(&self, nodes: usize) -> Vec<Flow> {
        self.flows
            .iter()
            .map(|f| {
                let f = f.get_ref();
                let source = f.source - 1;
                match &f.destinations {
                    Destinations::List(d) => Flow::new(source, d.iter().map(|j| j - 1), nodes),
                    Destinations::Keyword(_) => Flow::broadcast(source, nodes),
                }
            })
            .collect()
    }

    fn costs_for(&self, instance: &NetworkInstance, generated: Option<Vec<CostFunction>>) -> Result<Vec<CostFunction>, ConfigError> {
        let pairs: Vec<(usize, usize)> = instance
            .flows
            .iter()
            .enumerate()
            .flat_map(|(k, f)| f.destinations.iter().map(move |&d| (k, d)))
            .collect();
        let fallback = CostFunction::linear(1.0);
        let mut costs = match (&self.costs, generated) {
            (Some(CostsSpec { default: Some(d), .. }), _) => vec![cost_from_spec(d).map_err(ConfigError::single)?; pairs.len()],
            (_, Some(g)) => g,
            _ => vec![fallback; pairs.len()],
        };
        if let Some(spec) = &self.costs {
            for p in &spec.pairs {
                let c = p.get_ref();
                let (Some(k), Some(j)) = (c.flow, c.destination) else {
                    return Err(ConfigError::single("each costs.pairs entry needs flow and destination"));
                };
                let idx = pairs.iter().position(|&(pk, pj)| pk + 1 == k && pj + 1 == j).ok_or_else(|| {
                    ConfigError::single(format!("costs.pairs names flow {k} to node {j}, which is not a source-destination pair"))
                })?;
                costs[idx] = cost_from_spec(c).map_err(ConfigError::single)?;
            }
        }
        if costs.iter().any(|c| c.cap > DEFAULT_COST_CAP) {
            return Err(ConfigError::single("cost caps above 1e12 are not supported"));
        }
        Ok(costs)
    }

    /// Expands the network section into concrete scenarios. `run_seed`
    /// seeds random star reliabilities unless `network.seed` is set.
    pub fn scenarios(&self, run_seed: u64) -> Result<Vec<ResolvedScenario>, ConfigError> {
        let net = &self.network;
        let invalid = |e: crate::error::NetworkError| ConfigError::single(e.to_string());
        let mut out = Vec::new();
        match net.generator {
            None => {
                let nodes = net.nodes.unwrap_or(0);
                let edges = net.edges.iter().map(|e| parse_edge(e.get_ref())).collect::<Result<Vec<_>, _>>().map_err(ConfigError::single)?;
                let flows = self.explicit_flows(nodes);
                for (f, spec) in flows.iter().zip(&self.flows) {
                    if let Some(kind) = spec.get_ref().kind {
                        if kind != f.kind {
                            return Err(ConfigError(vec![ConfigIssue {
                                line: None,
                                message: format!("flow from node {} is declared {kind} but its destinations make it {}", f.source + 1, f.kind),
                            }]));
                        }
                    }
                }
                let (model, options) = self.interference_model(InterferenceModel::SingleTransmitter, flows.len()).map_err(ConfigError::single)?;
                let instance = NetworkInstance::with_interference(Topology::new(nodes, edges), flows, &model, &options).map_err(invalid)?;
                let costs = self.costs_for(&instance, None)?;
                out.push(ResolvedScenario {
                    id: "custom".into(),
                    graph_id: None,
                    scenario: Scenario { instance, costs },
                });
            }
            Some(GeneratorKind::Star) => {
                let reliability = match (net.reliable, net.reliability_range) {
                    (Some(true), _) => ReliabilityRule::Reliable,
                    (_, Some([low, high])) => ReliabilityRule::Uniform { low, high },
                    _ => ReliabilityRule::default(),
                };
                for n in net.n.as_ref().map(|n| n.to_vec()).unwrap_or_default() {
                    let mut rng = ChaCha8Rng::seed_from_u64(net.seed.unwrap_or(run_seed));
                    let s = gen_star(n, net.cost_family.unwrap_or_default(), reliability, &mut rng).map_err(invalid)?;
                    let generated = Some(s.costs.clone());
                    let costs = self.costs_for(&s.instance, generated)?;
                    out.push(ResolvedScenario {
                        id: format!("star-n{n}"),
                        graph_id: None,
                        scenario: Scenario {
                            instance: s.instance,
                            costs,
                        },
                    });
                }
            }
            Some(GeneratorKind::Line) => {
                for n in net.n.as_ref().map(|n| n.to_vec()).unwrap_or_default() {
                    let li = net.line_interference.unwrap_or_default();
                    let instance = gen_line(n, li, net.reliability.unwrap_or(1.0)).map_err(invalid)?;
                    let costs = self.costs_for(&instance, None)?;
                    let tag = match li {
                        LineInterference::Parity => "parity",
                        LineInterference::SingleTransmitter => "single",
                    };
                    out.push(ResolvedScenario {
                        id: format!("line-{tag}-n{n}"),
                        graph_id: None,
                        scenario: Scenario { instance, costs },
                    });
                }
            }
            Some(GeneratorKind::GraphEnum) => {
                let (model, _) = self.interference_model(InterferenceModel::SingleBroadcaster, usize::MAX).map_err(ConfigError::single)?;
                for n in net.n.as_ref().map(|n| n.to_vec()).unwrap_or_default() {
                    let graphs = enumerate_connected_graphs(n).map_err(|e| ConfigError::single(e.to_string()))?;
                    let chosen: Vec<usize> = match &net.graphs {
                        Some(list) => list.clone(),
                        None => (1..=graphs.len()).collect(),
                    };
                    for g in chosen {
                        let graph = graphs
                            .get(g.wrapping_sub(1))
                            .ok_or_else(|| ConfigError::single(format!("graph {g} does not exist for n = {n} ({} graphs)", graphs.len())))?;
                        let s = gen_broadcast(graph, net.reliability.unwrap_or(1.0), &model).map_err(invalid)?;
                        let costs = self.costs_for(&s.instance, Some(s.costs.clone()))?;
                        out.push(ResolvedScenario {
                            id: format!("graph-n{n}"),
                            graph_id: Some(g),
                            scenario: Scenario {
                                instance: s.instance,
                                costs,
                            },
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Resolved policies in file order; `age-debt` with default settings when none are listed.
    pub fn policies(&self) -> Vec<ResolvedPolicy> {
        self.policy.iter().map(PolicySpec::resolve).collect()
    }

    pub fn sim_config(&self, policy: &ResolvedPolicy, seed: u64) -> SimConfig {
        SimConfig {
            horizon: self.horizon(),
            seed,
            policy: policy.selector.clone(),
            target_mode: policy.target.clone(),
            trace_detail: self.trace_detail(),
            drift: self.drift_options(),
        }
    }

    /// TOML text that parses back to an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

impl PolicySpec {
    fn resolve_checks(&self) -> Result<(), String> {
        let applies = |field: bool, what: &str, names: &[PolicyName]| -> Result<(), String> {
            if field && !names.contains(&self.name) {
                Err(format!("{what} does not apply"))
            } else {
                Ok(())
            }
        };
        applies(self.tie_break.is_some(), "tie_break", &[PolicyName::AgeDebt])?;
        applies(self.intermediate.is_some(), "intermediate", &[PolicyName::AgeDebt])?;
        applies(self.distribution.is_some() || self.search.is_some(), "distribution/search", &[PolicyName::Randomized])?;
        if let Some(t) = &self.target_mode {
            let target = self.resolve_target(t);
            match target {
                TargetMode::GradientDescent(gd) => gd.validate()?,
                TargetMode::FlowControl(fc) => fc.validate()?,
                TargetMode::Fixed(v) if v.iter().any(|a| !a.is_finite() || *a < 0.0) => return Err("targets must be finite and nonnegative".into()),
                TargetMode::Uniform(a) if !a.is_finite() || a < 0.0 => return Err("targets must be finite and nonnegative".into()),
                _ => {}
            }
            if t.mode == TargetModeName::Baseline && t.baseline.is_none() {
                return Err("baseline target mode needs target_mode.baseline".into());
            }
        }
        Ok(())
    }

    fn resolve_target(&self, t: &TargetSpec) -> TargetMode {
        match t.mode {
            TargetModeName::Fixed => match &t.alpha {
                Some(OneOrMany::Many(v)) => TargetMode::Fixed(v.clone()),
                Some(OneOrMany::One(a)) => TargetMode::Uniform(*a),
                None => TargetMode::default(),
            },
            TargetModeName::OracleDp => TargetMode::OracleDp(self.dp.clone().unwrap_or_default().options()),
            TargetModeName::Baseline => {
                let base = PolicySpec {
                    name: t.baseline.unwrap_or(PolicyName::MaxWeight),
                    label: None,
                    tie_break: None,
                    intermediate: None,
                    distribution: None,
                    search: self.search.clone(),
                    dp: self.dp.clone(),
                    target_mode: None,
                };
                TargetMode::Baseline(Box::new(base.selector()))
            }
            TargetModeName::GradientDescent => {
                let d = GradientDescentConfig::default();
                TargetMode::GradientDescent(GradientDescentConfig {
                    epoch_length: t.epoch_length.unwrap_or(d.epoch_length),
                    epochs: t.epochs.unwrap_or(d.epochs),
                    step: t.step.unwrap_or(d.step),
                    threshold: t.threshold.unwrap_or(d.threshold),
                    initial: t.initial.clone(),
                    floor: t.floor,
                })
            }
            TargetModeName::FlowControl => {
                let d = FlowControlConfig::default();
                TargetMode::FlowControl(FlowControlConfig {
                    v: t.v.unwrap_or(d.v),
                    alpha_max: t.alpha_max.unwrap_or(d.alpha_max),
                })
            }
        }
    }

    fn selector(&self) -> PolicySelector {
        match self.name {
            PolicyName::AgeDebt => PolicySelector::AgeDebt {
                tie_break: self.tie_break.unwrap_or_default(),
                intermediate: self.intermediate.unwrap_or(true),
            },
            PolicyName::AgeDebtClosedForm => PolicySelector::AgeDebtClosedForm,
            PolicyName::MaxWeight => PolicySelector::MaxWeight,
            PolicyName::Randomized => {
                let d = SearchBudget::default();
                let s = self.search.clone().unwrap_or_default();
                PolicySelector::Randomized {
                    distribution: self.distribution.clone(),
                    search: SearchBudget {
                        evaluations: s.evaluations.unwrap_or(d.evaluations),
                        horizon: s.horizon.unwrap_or(d.horizon),
                        eval_seed: s.eval_seed.unwrap_or(d.eval_seed),
                    },
                }
            }
            PolicyName::Dp => PolicySelector::Dp(self.dp.clone().unwrap_or_default().options()),
        }
    }

    pub fn resolve(&self) -> ResolvedPolicy {
        let target = self.target_mode.as_ref().map(|t| self.resolve_target(t)).unwrap_or_default();
        let label = self.label.clone().unwrap_or_else(|| match &self.target_mode {
            Some(t) if t.mode != TargetModeName::Fixed => format!("{}+{}", self.name.as_str(), target.label()),
            _ => self.name.as_str().to_string(),
        });
        ResolvedPolicy {
            label,
            selector: self.selector(),
            target,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[network]
nodes = 2
edges = ["1-2"]

[[flows]]
source = 1
destinations = [2]
"#;

    #[test]
    fn minimal_unicast_is_valid() {
        let cfg = parse_config(MINIMAL).unwrap();
        let s = cfg.scenarios(0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].scenario.instance.action_space.len(), 2);
        assert_eq!(cfg.horizon(), DEFAULT_HORIZON);
        assert_eq!(cfg.seeds(), DEFAULT_SEEDS.to_vec());
    }

    #[test]
    fn out_of_range_node_is_anchored() {
        let text = "[network]\nnodes = 5\nedges = [\"1-2\", \"2-7\"]\n\n[[flows]]\nsource = 1\ndestinations = [2]\n";
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].line, Some(3));
        assert!(err.0[0].message.contains("2-7"));
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let text = "[network]\nnodes = 2\nedges = [\"1-2\"]\ncolour = 3\n";
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.0[0].line, Some(4));
        assert!(err.0[0].message.contains("colour"));
    }

    #[test]
    fn type_mismatch_rejected() {
        let err = parse_config("[network]\nnodes = \"two\"\n").unwrap_err();
        assert_eq!(err.0[0].line, Some(2));
    }

    #[test]
    fn round_trip() {
        let text = r#"
[network]
generator = "star"
n = [3, 4]
reliability_range = [0.6, 1.0]
seed = 11

[costs]
default = { kind = "power", exponent = 2.0, cap = 1e9 }

[[policy]]
name = "age-debt"
tie_break = "last"
target_mode = { mode = "flow-control", v = 50.0, alpha_max = 80.0 }

[[policy]]
name = "randomized"
search = { evaluations = 10, horizon = 100 }

[sim]
horizon = 5000
seeds = [1, 2]
trace_detail = "full"
"#;
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.policies()[0].label, "age-debt+flow-control");
    }

    #[test]
    fn explicit_actions() {
        let text = r#"
[network]
nodes = 3
edges = ["1-2", "2-3"]
[[flows]]
source = 1
destinations = [3]
[interference]
model = "explicit"
actions = [["1>2:1"], ["2>3:1"]]
"#;
        let cfg = parse_config(text).unwrap();
        let inst = &cfg.scenarios(0).unwrap()[0].scenario.instance;
        assert_eq!(inst.action_space.len(), 3);
        assert!(inst.action_space.get(0).is_idle());
    }

    #[test]
    fn star_generator_matches_gen_star() {
        let cfg = parse_config("[network]\ngenerator = \"star\"\nn = [3, 5]\nseed = 4\n").unwrap();
        let s = cfg.scenarios(99).unwrap();
        assert_eq!(s.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["star-n3", "star-n5"]);
        let direct = gen_star(5, StarCosts::WeightedLinear, ReliabilityRule::default(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(s[1].scenario, direct);
    }

    #[test]
    fn graph_enum_subset() {
        let cfg = parse_config("[network]\ngenerator = \"graph-enum\"\nn = 4\ngraphs = [1, 6]\n").unwrap();
        let s = cfg.scenarios(0).unwrap();
        assert_eq!(s.iter().map(|r| r.graph_id).collect::<Vec<_>>(), [Some(1), Some(6)]);
        assert!(parse_config("[network]\ngenerator = \"graph-enum\"\nn = 4\ngraphs = [7]\n").is_err());
    }

    fn random_config(seed: u64) -> String {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut text = match rng.random_range(0..3) {
            0 => format!("[network]\ngenerator = \"star\"\nn = [{}, {}]\nreliability_range = [0.5, 0.9]\n", rng.random_range(2..6), rng.random_range(2..6)),
            1 => format!("[network]\ngenerator = \"line\"\nn = {}\nline_interference = \"single-transmitter\"\nreliability = 0.75\n", rng.random_range(2..7)),
            _ => "[network]\nnodes = 3\nedges = [\"1-2:0.5\", \"2-3\"]\n\n[[flows]]\nsource = 1\ndestinations = \"broadcast\"\n\n[interference]\nmodel = \"node-exclusive\"\neligibility = \"any\"\n".to_string(),
        };
        if rng.random_bool(0.5) {
            text += &format!("\n[costs]\ndefault = {{ kind = \"indicator\", threshold = {} }}\n", rng.random_range(1..9));
        }
        let policies = ["age-debt", "age-debt-closed-form", "max-weight", "randomized", "dp"];
        let modes = [
            "{ mode = \"fixed\", alpha = [1.5, 2.5] }",
            "{ mode = \"oracle-dp\" }",
            "{ mode = \"baseline\", baseline = \"max-weight\" }",
            "{ mode = \"gradient-descent\", epoch_length = 50, step = 0.25 }",
            "{ mode = \"flow-control\", v = 3.5 }",
        ];
        for _ in 0..rng.random_range(0..4) {
            let name = policies[rng.random_range(0..policies.len())];
            text += &format!("\n[[policy]]\nname = \"{name}\"\n");
            match name {
                "age-debt" => text += "tie_break = \"random\"\nintermediate = false\n",
                "randomized" => text += "search = { evaluations = 7 }\n",
                "dp" => text += "dp = { cap = 9, tolerance = 1e-5 }\n",
                _ => {}
            }
            if rng.random_bool(0.7) {
                text += &format!("target_mode = {}\n", modes[rng.random_range(0..modes.len())]);
            }
        }
        text += &format!("\n[sim]\nhorizon = {}\nseeds = {}\n", rng.random_range(1..100_000), rng.random_range(0..9));
        text
    }

    proptest::proptest! {
        #[test]
        fn serialize_then_parse_is_identity(seed in proptest::prelude::any::<u64>()) {
            let text = random_config(seed);
            let cfg = parse_config(&text).unwrap();
            let again = parse_config(&cfg.to_toml()).unwrap();
            proptest::prop_assert_eq!(&again, &cfg);
            proptest::prop_assert_eq!(again.to_toml(), cfg.to_toml());
        }
    }

    #[test]
    fn declared_kind_must_match() {
        let text = "[network]\nnodes = 3\nedges = [\"1-2\", \"2-3\"]\n[[flows]]\nsource = 1\ndestinations = [3]\nkind = \"broadcast\"\n";
        assert!(parse_config(text).is_err());
    }
}
