//! The slotted simulation loop and its metrics.
//!
//! Slot order: flow-control target update, policy decision, channel
//! sampling, packet movement, age advance, destination debt, intermediate
//! debt, metrics (and epoch-end target updates for gradient descent).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::age::{
    advance_age, update_destination_debt, update_intermediate_debt, AgeState, CostFunction, DebtState, Delivery,
    HopTable, PacketBuffer, QueueLayout, TargetVector,
};
use crate::error::SimError;
use crate::network::NetworkInstance;
use crate::policy::{dp_optimal, DpOptions, DriftOptions, PolicySelector, SlotView};
use crate::target::{flow_control_update, gd_epoch_update, FlowControlConfig, GradientDescentConfig};

/// Ages above this abort the run.
pub const RUNAWAY_AGE: u64 = 1 << 40;
/// Ages at or above this share the last histogram bin.
pub const HISTOGRAM_BINS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum TargetMode {
    /// The same target for every pair.
    Uniform(f64),
    /// One target per pair, in layout order.
    Fixed(Vec<f64>),
    /// Per-pair averages of the average-cost optimal policy.
    OracleDp(DpOptions),
    /// Per-pair averages measured by another policy on the same seed and horizon.
    Baseline(Box<PolicySelector>),
    GradientDescent(GradientDescentConfig),
    FlowControl(FlowControlConfig),
}

impl Default for TargetMode {
    fn default() -> Self {
        TargetMode::Uniform(1.0)
    }
}

impl TargetMode {
    pub fn label(&self) -> &'static str {
        match self {
            TargetMode::Uniform(_) | TargetMode::Fixed(_) => "fixed",
            TargetMode::OracleDp(_) => "oracle-dp",
            TargetMode::Baseline(_) => "baseline",
            TargetMode::GradientDescent(_) => "gradient-descent",
            TargetMode::FlowControl(_) => "flow-control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceDetail {
    #[default]
    MetricsOnly,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: u64,
    pub seed: u64,
    pub policy: PolicySelector,
    pub target_mode: TargetMode,
    pub trace_detail: TraceDetail,
    pub drift: DriftOptions,
}

impl SimConfig {
    pub fn new(horizon: u64, seed: u64, policy: PolicySelector, target_mode: TargetMode) -> Self {
        SimConfig {
            horizon,
            seed,
            policy,
            target_mode,
            trace_detail: TraceDetail::MetricsOnly,
            drift: DriftOptions::default(),
        }
    }

    pub fn with_trace(mut self, detail: TraceDetail) -> Self {
        self.trace_detail = detail;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub pair: usize,
    pub age: u64,
    pub cost: f64,
    pub debt: f64,
    pub alpha: f64,
    pub action_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub horizon: u64,
    pub seed: u64,
    /// `(flow, destination)` of every pair, zero-based.
    pub pairs: Vec<(usize, usize)>,
    /// `(1/T) sum_t f(A(t+1))` per pair.
    pub per_pair_cost: Vec<f64>,
    pub sum_cost: f64,
    /// Time-average age per pair.
    pub per_pair_age: Vec<f64>,
    /// Destination `Q(T)/T` per pair.
    pub q_over_t: Vec<f64>,
    /// Intermediate `Q(T)/T`, in layout order.
    pub intermediate_q_over_t: Vec<f64>,
    /// Largest destination debt seen during the run.
    pub max_debt: f64,
    pub final_targets: Vec<f64>,
    pub mean_targets: Vec<f64>,
    /// Targets after every gradient-descent epoch.
    pub target_trajectory: Vec<Vec<f64>>,
    /// Visits to each age value per pair; the last bin collects everything larger.
    pub age_histogram: Vec<Vec<u64>>,
    pub action_counts: Vec<u64>,
    /// Intermediate updates that fell back to tracking for lack of a route.
    pub route_fallbacks: u64,
    pub trace: Vec<TraceRow>,
}

impl RunMetrics {
    /// `P(A >= m)` for one pair, from the histogram.
    pub fn age_tail(&self, pair: usize, m: u64) -> f64 {
        let h = &self.age_histogram[pair];
        let total: u64 = h.iter().sum();
        let above: u64 = h.iter().skip(m as usize).sum();
        above as f64 / total.max(1) as f64
    }
}

/// Independent Bernoulli outcome per edge per slot. Each edge owns a ChaCha
/// stream and draws exactly once per slot, so the sequence of outcomes
/// depends only on the run seed and the edge.
pub struct ChannelSampler {
    streams: Vec<ChaCha8Rng>,
    reliability: Vec<f64>,
}

impl ChannelSampler {
    pub fn new(instance: &NetworkInstance, seed: u64) -> Self {
        let streams = (0..instance.topology.edges.len())
            .map(|e| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(e as u64 + 1);
                rng
            })
            .collect();
        ChannelSampler {
            streams,
            reliability: instance.topology.edges.iter().map(|e| e.reliability).collect(),
        }
    }

    /// Success bit per edge, in topology edge order.
    pub fn sample(&mut self, out: &mut Vec<bool>) {
        out.clear();
        for (rng, &p) in self.streams.iter_mut().zip(&self.reliability) {
            out.push(rng.random::<f64>() < p);
        }
    }
}

/// Convenience wrapper: the outcome vector for the next slot.
pub fn sample_channels(sampler: &mut ChannelSampler) -> Vec<bool> {
    let mut out = Vec::new();
    sampler.sample(&mut out);
    out
}

fn initial_targets(
    instance: &NetworkInstance,
    costs: &[CostFunction],
    config: &SimConfig,
    layout: &QueueLayout,
) -> Result<TargetVector, SimError> {
    let n = layout.pairs.len();
    let alpha = match &config.target_mode {
        TargetMode::Uniform(a) => vec![*a; n],
        TargetMode::Fixed(v) => {
            if v.len() != n {
                return Err(SimError::Config(format!("{} targets for {n} pairs", v.len())));
            }
            v.clone()
        }
        TargetMode::OracleDp(options) => dp_optimal(instance, costs, options)?.per_pair_average,
        TargetMode::Baseline(selector) => {
            let baseline = SimConfig::new(config.horizon, config.seed, (**selector).clone(), TargetMode::default());
            run(instance, costs, &baseline)?.per_pair_cost
        }
        TargetMode::GradientDescent(gd) => {
            gd.validate().map_err(SimError::Config)?;
            match &gd.initial {
                Some(v) if v.len() == n => v.clone(),
                Some(v) => return Err(SimError::Config(format!("{} initial targets for {n} pairs", v.len()))),
                None => costs.iter().map(|c| c.eval(1) + 1.0).collect(),
            }
        }
        TargetMode::FlowControl(fc) => {
            fc.validate().map_err(SimError::Config)?;
            vec![1.0; n]
        }
    };
    Ok(TargetVector { alpha })
}

/// Simulates `config.horizon` slots.
pub fn run(instance: &NetworkInstance, costs: &[CostFunction], config: &SimConfig) -> Result<RunMetrics, SimError> {
    if config.horizon < 1 {
        return Err(SimError::Config("horizon must be at least 1".into()));
    }
    let layout = QueueLayout::new(instance, config.policy.uses_intermediate_queues());
    if costs.len() != layout.pairs.len() {
        return Err(SimError::Config(format!("{} cost functions for {} pairs", costs.len(), layout.pairs.len())));
    }
    let hops = HopTable::new(instance.adjacency());
    let mut policy = config.policy.build(instance, &layout, costs, config.seed, &config.drift)?;
    let mut targets = initial_targets(instance, costs, config, &layout)?;
    let gd_floor = match &config.target_mode {
        TargetMode::GradientDescent(gd) => gd
            .floor
            .unwrap_or_else(|| costs.iter().map(|c| c.eval(1)).fold(f64::INFINITY, f64::min)),
        _ => 0.0,
    };

    let pairs = layout.pairs.len();
    let mut age = AgeState::new(instance);
    let mut buffer = PacketBuffer::new(instance);
    let mut debt = DebtState::new(&layout);
    let mut channels = ChannelSampler::new(instance, config.seed);
    let mut success = Vec::new();
    let edge_of: Vec<Vec<usize>> = instance
        .action_space
        .actions()
        .iter()
        .map(|a| {
            a.assignments()
                .iter()
                .map(|x| instance.topology.edge_index(x.from, x.to).expect("action edge exists"))
                .collect()
        })
        .collect();

    let mut cost_sum = vec![0.0; pairs];
    let mut age_sum = vec![0.0; pairs];
    let mut target_sum = vec![0.0; pairs];
    let mut histogram = vec![Vec::<u64>::new(); pairs];
    let mut action_counts = vec![0u64; instance.action_space.len()];
    let mut max_debt: f64 = 0.0;
    let mut route_fallbacks = 0u64;
    let mut trajectory = Vec::new();
    let mut trace = Vec::new();
    let mut deliveries = Vec::new();
    let track_relays = !layout.relays.is_empty();

    for slot in 0..config.horizon {
        let t = slot as i64;
        if let TargetMode::FlowControl(fc) = &config.target_mode {
            targets = flow_control_update(&debt.dest, fc);
        }
        let decision = policy.decide(&SlotView {
            instance,
            layout: &layout,
            hops: &hops,
            costs,
            age: &age,
            buffer: &buffer,
            debt: &debt,
            targets: &targets,
            t,
        })?;
        let action_index = decision.action;
        let action = instance.action_space.get(action_index);
        action_counts[action_index] += 1;

        channels.sample(&mut success);
        deliveries.clear();
        for (a, &e) in action.assignments().iter().zip(&edge_of[action_index]) {
            if !success[e] {
                continue;
            }
            if let Some(generated) = buffer.outgoing(a.flow, a.from, t) {
                deliveries.push(Delivery {
                    flow: a.flow,
                    node: a.to,
                    generated,
                });
            }
        }
        for a in action.assignments() {
            if instance.flows[a.flow].source == a.from {
                buffer.stamp_source(a.flow, t);
            }
        }

        let before = track_relays.then(|| (age.clone(), buffer.clone()));
        advance_age(&mut age, &mut buffer, &deliveries, t)?;
        update_destination_debt(&mut debt, &layout, costs, &age, &targets);
        if let Some((age_before, buffer_before)) = &before {
            route_fallbacks += update_intermediate_debt(
                &mut debt,
                &layout,
                &hops,
                age_before,
                buffer_before,
                action,
                &targets,
                costs,
                &age,
            ) as u64;
        }

        for (p, pair) in layout.pairs.iter().enumerate() {
            let a = age.age(pair.flow, pair.destination);
            let b = costs[p].eval(a);
            cost_sum[p] += b;
            age_sum[p] += a as f64;
            target_sum[p] += targets.alpha[p];
            let bin = (a as usize).min(HISTOGRAM_BINS - 1);
            let h = &mut histogram[p];
            if h.len() <= bin {
                h.resize(bin + 1, 0);
            }
            h[bin] += 1;
            max_debt = max_debt.max(debt.dest[p]);
            if config.trace_detail == TraceDetail::Full {
                trace.push(TraceRow {
                    t: slot,
                    pair: p,
                    age: a,
                    cost: b,
                    debt: debt.dest[p],
                    alpha: targets.alpha[p],
                    action_index,
                });
            }
        }

        if let TargetMode::GradientDescent(gd) = &config.target_mode {
            let done = (slot + 1) / gd.epoch_length;
            if (slot + 1) % gd.epoch_length == 0 && done <= gd.epochs {
                targets = gd_epoch_update(&targets, &debt.dest, gd, gd_floor);
                trajectory.push(targets.alpha.clone());
                debt.reset();
            }
        }

        let oldest = age.max_age();
        if oldest > RUNAWAY_AGE {
            return Err(SimError::Runaway { age: oldest, slot });
        }
    }

    let horizon = config.horizon as f64;
    let per_pair_cost: Vec<f64> = cost_sum.iter().map(|c| c / horizon).collect();
    Ok(RunMetrics {
        horizon: config.horizon,
        seed: config.seed,
        pairs: layout.pairs.iter().map(|p| (p.flow, p.destination)).collect(),
        sum_cost: per_pair_cost.iter().sum(),
        per_pair_cost,
        per_pair_age: age_sum.iter().map(|a| a / horizon).collect(),
        q_over_t: debt.dest.iter().map(|q| q / horizon).collect(),
        intermediate_q_over_t: debt.intermediate.iter().map(|q| q / horizon).collect(),
        max_debt,
        final_targets: targets.alpha,
        mean_targets: target_sum.iter().map(|a| a / horizon).collect(),
        target_trajectory: trajectory,
        age_histogram: histogram,
        action_counts,
        route_fallbacks,
        trace,
    })
}

/// Default stability threshold for a pair with target `alpha`.
pub fn default_delta(alpha: f64) -> f64 {
    (0.01 * alpha).max(0.1)
}

/// `true` per pair when `Q(T)/T` is below the threshold; `delta = None`
/// uses [`default_delta`] of the pair's final target.
pub fn stability_diagnostic(metrics: &RunMetrics, delta: Option<f64>) -> Vec<bool> {
    metrics
        .q_over_t
        .iter()
        .zip(&metrics.final_targets)
        .map(|(&q, &a)| q < delta.unwrap_or_else(|| default_delta(a)))
        .collect()
}

/// Runs one replication per seed in parallel; results come back in seed order.
pub fn run_replications(
    instance: &NetworkInstance,
    costs: &[CostFunction],
    config: &SimConfig,
    seeds: &[u64],
) -> Vec<Result<RunMetrics, SimError>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = config.clone();
            cfg.seed = seed;
            run(instance, costs, &cfg)
        })
        .collect()
}

/// Sample mean and standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Writes the full per-slot trace as `t,pair,A,B,Q,alpha,action_index`.
/// Pairs are labelled `k_j` with one-based flow and node ids.
pub fn write_trace<W: Write>(metrics: &RunMetrics, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "pair", "A", "B", "Q", "alpha", "action_index"])?;
    for row in &metrics.trace {
        let (k, j) = metrics.pairs[row.pair];
        w.write_record(&[
            row.t.to_string(),
            format!("{}_{}", k + 1, j + 1),
            row.age.to_string(),
            format!("{}", row.cost),
            format!("{}", row.debt),
            format!("{}", row.alpha),
            row.action_index.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Edge, Flow, InterferenceModel, Topology};
    use crate::policy::TieBreak;

    fn single_source() -> NetworkInstance {
        let topo = Topology::new(2, vec![Edge::new(0, 1, 1.0)]);
        NetworkInstance::with_interference(topo, vec![Flow::new(0, [1], 2)], &InterferenceModel::SingleTransmitter, &Default::default())
            .unwrap()
    }

    fn serve_always(n: usize) -> PolicySelector {
        let mut d = vec![0.0; n];
        d[n - 1] = 1.0;
        PolicySelector::Randomized {
            distribution: Some(d),
            search: Default::default(),
        }
    }

    #[test]
    fn serve_always_reliable_source() {
        let inst = single_source();
        let cfg = SimConfig::new(1000, 1, serve_always(2), TargetMode::Uniform(1.0));
        let m = run(&inst, &[CostFunction::linear(1.0)], &cfg).unwrap();
        assert_eq!(m.sum_cost, 1.0);
        assert_eq!(m.q_over_t, vec![0.0]);
        assert_eq!(stability_diagnostic(&m, None), vec![true]);
    }

    #[test]
    fn channel_frequency_matches_reliability() {
        let topo = Topology::new(2, vec![Edge::new(0, 1, 0.6)]);
        let inst = NetworkInstance::with_interference(topo, vec![Flow::new(0, [1], 2)], &InterferenceModel::SingleTransmitter, &Default::default())
            .unwrap();
        let mut s = ChannelSampler::new(&inst, 42);
        let hits = (0..100_000).filter(|_| sample_channels(&mut s)[0]).count();
        // 0.005 is about 3.2 binomial standard deviations at this horizon.
        assert!((hits as f64 / 1e5 - 0.6).abs() < 0.005);
        let mut a = ChannelSampler::new(&inst, 7);
        let mut b = ChannelSampler::new(&inst, 7);
        for _ in 0..100 {
            assert_eq!(sample_channels(&mut a), sample_channels(&mut b));
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let topo = Topology::new(3, vec![Edge::new(0, 2, 0.7), Edge::new(1, 2, 0.8)]);
        let flows = vec![Flow::new(0, [2], 3), Flow::new(1, [2], 3)];
        let inst = NetworkInstance::with_interference(topo, flows, &InterferenceModel::SingleTransmitter, &Default::default()).unwrap();
        let costs = [CostFunction::linear(1.0), CostFunction::linear(2.0)];
        let cfg = SimConfig::new(2000, 9, PolicySelector::age_debt(TieBreak::Random), TargetMode::Uniform(3.0)).with_trace(TraceDetail::Full);
        let a = run(&inst, &costs, &cfg).unwrap();
        let b = run(&inst, &costs, &cfg).unwrap();
        assert_eq!(a, b);
        assert!((a.sum_cost - a.per_pair_cost.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn gradient_descent_resets_debt_each_epoch() {
        let inst = single_source();
        let gd = GradientDescentConfig {
            epoch_length: 50,
            epochs: 4,
            step: 0.25,
            threshold: 0.1,
            initial: Some(vec![3.0]),
            floor: None,
        };
        let cfg = SimConfig::new(400, 1, PolicySelector::age_debt(TieBreak::First), TargetMode::GradientDescent(gd));
        let m = run(&inst, &[CostFunction::linear(1.0)], &cfg).unwrap();
        assert_eq!(m.target_trajectory, vec![vec![2.75], vec![2.5], vec![2.25], vec![2.0]]);
    }

    #[test]
    fn mean_stderr_examples() {
        assert_eq!(mean_stderr(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }
}
