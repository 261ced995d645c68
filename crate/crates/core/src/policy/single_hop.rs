//! Fast paths for single-hop stars: one source transmits to the hub per slot.

use super::{Policy, PolicyDecision, SlotView};
use crate::age::{CostFunction, QueueLayout};
use crate::error::PolicyError;
use crate::network::{NetworkInstance, NodeId};

/// Star structure extracted from an instance: source `i` maps to one action.
#[derive(Debug, Clone, PartialEq)]
pub struct StarView {
    pub hub: NodeId,
    /// Per flow: action index that serves it.
    pub action_of_flow: Vec<usize>,
    pub reliability: Vec<f64>,
    /// Per flow: destination-queue index in the layout.
    pub pair_of_flow: Vec<usize>,
}

impl StarView {
    pub fn detect(instance: &NetworkInstance, layout: &QueueLayout) -> Result<Self, PolicyError> {
        let bad = |m: &str| PolicyError::NotSingleHop(m.to_string());
        let flows = &instance.flows;
        let hub = flows.first().ok_or_else(|| bad("no flows"))?.destinations[0];
        if flows.iter().any(|f| f.destinations != [hub]) {
            return Err(bad("every flow must be unicast to the same hub"));
        }
        let mut action_of_flow = vec![None; flows.len()];
        for (idx, action) in instance.action_space.actions().iter().enumerate() {
            match action.assignments() {
                [] => {}
                [a] if a.to == hub && a.from == flows[a.flow].source => {
                    if action_of_flow[a.flow].replace(idx).is_some() {
                        return Err(bad("a source has more than one serving action"));
                    }
                }
                _ => return Err(bad("every non-idle action must be a single source-to-hub transmission")),
            }
        }
        let action_of_flow: Vec<usize> = action_of_flow
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| bad("some source can never transmit"))?;
        let reliability = flows.iter().map(|f| instance.reliability(f.source, hub).unwrap_or(0.0)).collect();
        let pair_of_flow = (0..flows.len())
            .map(|k| layout.pair_index(k, hub).ok_or_else(|| bad("missing destination queue")))
            .collect::<Result<_, _>>()?;
        Ok(StarView {
            hub,
            action_of_flow,
            reliability,
            pair_of_flow,
        })
    }
}

/// `p_i Q_i (f_i(A_i + 1) - f_i(1))` for every source.
pub fn closed_form_scores(ages: &[u64], debts: &[f64], reliabilities: &[f64], costs: &[CostFunction]) -> Vec<f64> {
    (0..ages.len())
        .map(|i| reliabilities[i] * debts[i] * (costs[i].eval(ages[i] + 1) - costs[i].eval(1)))
        .collect()
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Source with the largest closed-form drift score; lowest index wins ties.
pub fn single_hop_age_debt_action(ages: &[u64], debts: &[f64], reliabilities: &[f64], costs: &[CostFunction]) -> usize {
    argmax_first(&closed_form_scores(ages, debts, reliabilities, costs))
}

/// `p_i w_i A_i (A_i + 2)` for every source.
pub fn max_weight_scores(ages: &[u64], reliabilities: &[f64], weights: &[f64]) -> Vec<f64> {
    (0..ages.len())
        .map(|i| {
            let a = ages[i] as f64;
            reliabilities[i] * weights[i] * a * (a + 2.0)
        })
        .collect()
}

pub fn max_weight_action(ages: &[u64], reliabilities: &[f64], weights: &[f64]) -> usize {
    argmax_first(&max_weight_scores(ages, reliabilities, weights))
}

fn star_ages(star: &StarView, view: &SlotView<'_>) -> Vec<u64> {
    (0..star.action_of_flow.len()).map(|k| view.age.age(k, star.hub)).collect()
}

pub struct ClosedFormAgeDebt {
    star: StarView,
}

impl ClosedFormAgeDebt {
    pub fn new(instance: &NetworkInstance, layout: &QueueLayout) -> Result<Self, PolicyError> {
        Ok(ClosedFormAgeDebt {
            star: StarView::detect(instance, layout)?,
        })
    }
}

impl Policy for ClosedFormAgeDebt {
    fn decide(&mut self, view: &SlotView<'_>) -> Result<PolicyDecision, PolicyError> {
        let ages = star_ages(&self.star, view);
        let debts: Vec<f64> = self.star.pair_of_flow.iter().map(|&p| view.debt.dest[p]).collect();
        let costs: Vec<CostFunction> = self.star.pair_of_flow.iter().map(|&p| view.costs[p].clone()).collect();
        let k = single_hop_age_debt_action(&ages, &debts, &self.star.reliability, &costs);
        Ok(PolicyDecision::plain(self.star.action_of_flow[k]))
    }
}

pub struct MaxWeight {
    star: StarView,
    weights: Vec<f64>,
}

impl MaxWeight {
    pub fn new(instance: &NetworkInstance, layout: &QueueLayout, costs: &[CostFunction]) -> Result<Self, PolicyError> {
        let star = StarView::detect(instance, layout)?;
        let weights = star.pair_of_flow.iter().map(|&p| costs[p].linear_weight()).collect();
        Ok(MaxWeight { star, weights })
    }
}

impl Policy for MaxWeight {
    fn decide(&mut self, view: &SlotView<'_>) -> Result<PolicyDecision, PolicyError> {
        let ages = star_ages(&self.star, view);
        let k = max_weight_action(&ages, &self.star.reliability, &self.weights);
        Ok(PolicyDecision::plain(self.star.action_of_flow[k]))
    }
}
