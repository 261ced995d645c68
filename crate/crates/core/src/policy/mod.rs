//! Scheduling and routing policies.
//!
//! Every policy is a decision function of the current slot state plus, for
//! randomized policies, its own random stream.

mod age_debt;
pub mod dp;
mod drift;
mod randomized;
mod single_hop;

pub use age_debt::{age_debt_action, AgeDebtPolicy};
pub use dp::{dp_optimal, DpOptions, DpPolicy, DpSolution};
pub use drift::{expected_drift, DriftOptions, DEFAULT_RELEVANT_LINK_CAP};
pub use randomized::{optimize_randomized, randomized_action, RandomizedPolicy, SearchBudget, StationaryRandomized};
pub use single_hop::{
    closed_form_scores, max_weight_action, max_weight_scores, single_hop_age_debt_action, ClosedFormAgeDebt, MaxWeight,
    StarView,
};

use serde::{Deserialize, Serialize};

use crate::age::{AgeState, CostFunction, DebtState, HopTable, PacketBuffer, QueueLayout, TargetVector};
use crate::error::PolicyError;
use crate::network::NetworkInstance;

/// Everything a policy may look at when deciding slot `t`.
#[derive(Clone, Copy)]
pub struct SlotView<'a> {
    pub instance: &'a NetworkInstance,
    pub layout: &'a QueueLayout,
    pub hops: &'a HopTable,
    /// Indexed like `layout.pairs`.
    pub costs: &'a [CostFunction],
    pub age: &'a AgeState,
    pub buffer: &'a PacketBuffer,
    pub debt: &'a DebtState,
    pub targets: &'a TargetVector,
    pub t: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    /// Index into the instance's action space.
    pub action: usize,
    /// Expected drift per action for drift-based policies, empty otherwise.
    pub score_table: Vec<f64>,
}

impl PolicyDecision {
    pub fn plain(action: usize) -> Self {
        PolicyDecision {
            action,
            score_table: Vec::new(),
        }
    }
}

pub trait Policy: Send {
    fn decide(&mut self, view: &SlotView<'_>) -> Result<PolicyDecision, PolicyError>;
}

/// How exact ties in an argmin/argmax over the action list are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Lowest-index tied action that transmits; idle only when it is the
    /// sole minimizer.
    #[default]
    BusyFirst,
    First,
    Last,
    /// Uniform among the tied actions, from the policy's own seeded stream.
    Random,
}

/// Relative tolerance under which two scores are treated as tied.
pub(crate) const TIE_TOLERANCE: f64 = 1e-9;

pub(crate) fn is_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * (1.0 + a.abs().max(b.abs()))
}

/// Which policy a run uses, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySelector {
    /// Exact drift minimization over the action space.
    AgeDebt { tie_break: TieBreak, intermediate: bool },
    /// Closed-form single-hop drift score (stars only).
    AgeDebtClosedForm,
    /// `p_i w_i A_i (A_i + 2)` on stars.
    MaxWeight,
    /// Fixed distribution, or tuned by simulation when `distribution` is `None`.
    Randomized {
        distribution: Option<Vec<f64>>,
        search: SearchBudget,
    },
    /// Average-cost optimal policy from relative value iteration.
    Dp(DpOptions),
}

impl PolicySelector {
    pub fn age_debt(tie_break: TieBreak) -> Self {
        PolicySelector::AgeDebt {
            tie_break,
            intermediate: true,
        }
    }

    pub fn uses_intermediate_queues(&self) -> bool {
        matches!(self, PolicySelector::AgeDebt { intermediate: true, .. })
    }

    /// Short stable label used in CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            PolicySelector::AgeDebt { .. } => "age-debt",
            PolicySelector::AgeDebtClosedForm => "age-debt-closed-form",
            PolicySelector::MaxWeight => "max-weight",
            PolicySelector::Randomized { .. } => "randomized",
            PolicySelector::Dp(_) => "dp",
        }
    }

    pub fn build(
        &self,
        instance: &NetworkInstance,
        layout: &QueueLayout,
        costs: &[CostFunction],
        seed: u64,
        drift: &DriftOptions,
    ) -> Result<Box<dyn Policy>, crate::error::SimError> {
        use rand::SeedableRng;
        let policy_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
        Ok(match self {
            PolicySelector::AgeDebt { tie_break, .. } => Box::new(AgeDebtPolicy::new(*tie_break, *drift, policy_seed)),
            PolicySelector::AgeDebtClosedForm => Box::new(ClosedFormAgeDebt::new(instance, layout)?),
            PolicySelector::MaxWeight => Box::new(MaxWeight::new(instance, layout, costs)?),
            PolicySelector::Randomized { distribution, search } => {
                let policy = match distribution {
                    Some(d) => RandomizedPolicy::new(d.clone())?,
                    None => {
                        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(search.eval_seed);
                        optimize_randomized(instance, costs, search, &mut rng)?
                    }
                };
                Box::new(StationaryRandomized::new(&policy, instance.action_space.len(), policy_seed)?)
            }
            PolicySelector::Dp(options) => {
                let solution = dp_optimal(instance, costs, options)?;
                Box::new(DpPolicy::new(solution))
            }
        })
    }
}
