use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::drift::{pair_drift, DriftOptions};
use super::{is_tie, Policy, PolicyDecision, SlotView, TieBreak};
use crate::error::PolicyError;
use crate::network::Action;

/// Exhaustive argmin of the expected one-slot drift over the action space.
///
/// Only pairs an action can influence are re-evaluated; every other pair
/// contributes its idle-action drift, which is shared by all actions.
pub fn age_debt_action(
    view: &SlotView<'_>,
    tie_break: TieBreak,
    rng: &mut impl Rng,
    options: &DriftOptions,
) -> Result<PolicyDecision, PolicyError> {
    let layout = view.layout;
    let relays_by_pair = layout.relays_by_pair();
    let idle = Action::idle();
    let mut baseline = Vec::with_capacity(layout.pairs.len());
    for p in 0..layout.pairs.len() {
        baseline.push(pair_drift(&idle, view, p, &relays_by_pair[p], options)?);
    }
    let base_total: f64 = baseline.iter().sum();

    let actions = view.instance.action_space.actions();
    let mut scores = Vec::with_capacity(actions.len());
    for action in actions {
        let mut delta = 0.0;
        for (p, pair) in layout.pairs.iter().enumerate() {
            let touched = action.assignments().iter().any(|a| {
                a.flow == pair.flow
                    && (a.to == pair.destination || relays_by_pair[p].iter().any(|&r| layout.relays[r].relay == a.from))
            });
            if touched {
                delta += pair_drift(action, view, p, &relays_by_pair[p], options)? - baseline[p];
            }
        }
        scores.push(base_total + delta);
    }

    let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let tied: Vec<usize> = (0..scores.len()).filter(|&i| is_tie(scores[i], best)).collect();
    let action = match tie_break {
        TieBreak::BusyFirst => tied.iter().copied().find(|&i| !actions[i].is_idle()).unwrap_or(tied[0]),
        TieBreak::First => tied[0],
        TieBreak::Last => tied[tied.len() - 1],
        TieBreak::Random => tied[rng.random_range(0..tied.len())],
    };
    debug_assert!(is_tie(scores[action], best));
    Ok(PolicyDecision {
        action,
        score_table: scores,
    })
}

pub struct AgeDebtPolicy {
    tie_break: TieBreak,
    options: DriftOptions,
    rng: ChaCha8Rng,
}

impl AgeDebtPolicy {
    pub fn new(tie_break: TieBreak, options: DriftOptions, seed: u64) -> Self {
        AgeDebtPolicy {
            tie_break,
            options,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for AgeDebtPolicy {
    fn decide(&mut self, view: &SlotView<'_>) -> Result<PolicyDecision, PolicyError> {
        age_debt_action(view, self.tie_break, &mut self.rng, &self.options)
    }
}
