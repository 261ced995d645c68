use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Policy, PolicyDecision, PolicySelector, SlotView};
use crate::age::CostFunction;
use crate::error::{PolicyError, SimError};
use crate::network::NetworkInstance;
use crate::sim::{run, SimConfig, TargetMode};

/// A fixed probability vector over the action space.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedPolicy {
    pub distribution: Vec<f64>,
}

impl RandomizedPolicy {
    pub fn new(distribution: Vec<f64>) -> Result<Self, PolicyError> {
        if distribution.is_empty() {
            return Err(PolicyError::InvalidDistribution("empty".into()));
        }
        if distribution.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(PolicyError::InvalidDistribution("negative or non-finite probability".into()));
        }
        let total: f64 = distribution.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(PolicyError::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(RandomizedPolicy { distribution })
    }

    pub fn point_mass(len: usize, index: usize) -> Self {
        let mut distribution = vec![0.0; len];
        distribution[index] = 1.0;
        RandomizedPolicy { distribution }
    }

    pub fn uniform(len: usize) -> Self {
        RandomizedPolicy {
            distribution: vec![1.0 / len as f64; len],
        }
    }
}

/// Draws one action index from the policy's distribution.
pub fn randomized_action(policy: &RandomizedPolicy, rng: &mut impl Rng) -> usize {
    WeightedIndex::new(&policy.distribution).expect("validated distribution").sample(rng)
}

/// I.i.d. sampling of the action space every slot.
pub struct StationaryRandomized {
    sampler: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl StationaryRandomized {
    pub fn new(policy: &RandomizedPolicy, action_count: usize, seed: u64) -> Result<Self, PolicyError> {
        if policy.distribution.len() != action_count {
            return Err(PolicyError::InvalidDistribution(format!(
                "{} probabilities for {action_count} actions",
                policy.distribution.len()
            )));
        }
        let sampler = WeightedIndex::new(&policy.distribution).map_err(|e| PolicyError::InvalidDistribution(e.to_string()))?;
        Ok(StationaryRandomized {
            sampler,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl Policy for StationaryRandomized {
    fn decide(&mut self, _view: &SlotView<'_>) -> Result<PolicyDecision, PolicyError> {
        Ok(PolicyDecision::plain(self.sampler.sample(&mut self.rng)))
    }
}

/// Budget for the simplex search in [`optimize_randomized`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBudget {
    /// Number of candidate evaluations.
    pub evaluations: usize,
    /// Slots simulated per evaluation.
    pub horizon: u64,
    /// Channel seed shared by every evaluation (common random numbers).
    pub eval_seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            evaluations: 300,
            horizon: 20_000,
            eval_seed: 0x5eed,
        }
    }
}

fn simulated_cost(instance: &NetworkInstance, costs: &[CostFunction], dist: &[f64], budget: &SearchBudget) -> Result<f64, SimError> {
    let cfg = SimConfig::new(
        budget.horizon,
        budget.eval_seed,
        PolicySelector::Randomized {
            distribution: Some(dist.to_vec()),
            search: *budget,
        },
        TargetMode::default(),
    );
    Ok(run(instance, costs, &cfg)?.sum_cost)
}

/// Tunes a stationary randomized policy by random mass-transfer moves on
/// the simplex, scoring each candidate by its simulated average cost.
///
/// Starts from the uniform distribution over the whole action space. A move
/// shifts a fraction `step` of one action's mass to another action; after
/// a run of rejected moves the step is halved.
pub fn optimize_randomized(
    instance: &NetworkInstance,
    costs: &[CostFunction],
    budget: &SearchBudget,
    rng: &mut impl Rng,
) -> Result<RandomizedPolicy, SimError> {
    let n = instance.action_space.len();
    let mut best = vec![1.0 / n as f64; n];
    if n == 1 {
        return Ok(RandomizedPolicy { distribution: best });
    }
    let mut best_cost = simulated_cost(instance, costs, &best, budget)?;
    let mut step = 0.5;
    let mut rejected = 0;
    for _ in 0..budget.evaluations {
        let support: Vec<usize> = (0..n).filter(|&i| best[i] > 0.0).collect();
        let from = support[rng.random_range(0..support.len())];
        let mut to = rng.random_range(0..n - 1);
        if to >= from {
            to += 1;
        }
        // Occasionally empty an action entirely so dominated actions can vanish.
        let amount = if rng.random_bool(0.2) { best[from] } else { step * best[from] };
        let mut cand = best.clone();
        cand[from] -= amount;
        cand[to] += amount;
        if cand[from] < 1e-12 {
            cand[from] = 0.0;
        }
        let total: f64 = cand.iter().sum();
        cand.iter_mut().for_each(|p| *p /= total);
        let cost = simulated_cost(instance, costs, &cand, budget)?;
        if cost < best_cost {
            best = cand;
            best_cost = cost;
            rejected = 0;
        } else {
            rejected += 1;
            if rejected >= 2 * n {
                step = (step * 0.5).max(1e-3);
                rejected = 0;
            }
        }
    }
    Ok(RandomizedPolicy { distribution: best })
}
