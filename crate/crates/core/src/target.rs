//! Target selection: epoch gradient descent and per-slot flow control.

use crate::age::TargetVector;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientDescentConfig {
    /// Epoch length `W` in slots.
    pub epoch_length: u64,
    pub epochs: u64,
    /// Step size `eta`.
    pub step: f64,
    /// A queue is unstable when `Q(W) > threshold * W`.
    pub threshold: f64,
    /// Starting targets; `None` means `f(1) + 1` for every pair.
    pub initial: Option<Vec<f64>>,
    /// Lower bound for every target; `None` floors at the smallest `f(1)`.
    pub floor: Option<f64>,
}

impl Default for GradientDescentConfig {
    fn default() -> Self {
        GradientDescentConfig {
            epoch_length: 1000,
            epochs: 100,
            step: 0.1,
            threshold: 0.1,
            initial: None,
            floor: None,
        }
    }
}

impl GradientDescentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epoch_length < 1 || self.epochs < 1 {
            return Err("epoch_length and epochs must be at least 1".into());
        }
        if !(self.step > 0.0) || !(self.threshold > 0.0) {
            return Err("step and threshold must be positive".into());
        }
        Ok(())
    }
}

/// Raises the target of every queue with `Q(W) > eps W` by `eta`; when no
/// queue qualifies, lowers every target by `eta`. Results never go below `floor`.
pub fn gd_epoch_update(targets: &TargetVector, debt_at_epoch_end: &[f64], cfg: &GradientDescentConfig, floor: f64) -> TargetVector {
    let limit = cfg.threshold * cfg.epoch_length as f64;
    let unstable: Vec<bool> = debt_at_epoch_end.iter().map(|&q| q > limit).collect();
    let any = unstable.iter().any(|&u| u);
    let alpha = targets
        .alpha
        .iter()
        .zip(&unstable)
        .map(|(&a, &u)| match (any, u) {
            (true, true) => a + cfg.step,
            (true, false) => a,
            (false, _) => (a - cfg.step).max(floor),
        })
        .collect();
    TargetVector { alpha }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowControlConfig {
    pub v: f64,
    pub alpha_max: f64,
}

impl Default for FlowControlConfig {
    fn default() -> Self {
        FlowControlConfig { v: 10.0, alpha_max: 100.0 }
    }
}

impl FlowControlConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v > 0.0) {
            return Err("V must be positive".into());
        }
        if !(self.alpha_max >= 1.0) {
            return Err("alpha_max must be at least 1".into());
        }
        Ok(())
    }
}

/// `alpha_max` where `Q > V`, else 1.
pub fn flow_control_update(debt_now: &[f64], cfg: &FlowControlConfig) -> TargetVector {
    TargetVector {
        alpha: debt_now.iter().map(|&q| if q > cfg.v { cfg.alpha_max } else { 1.0 }).collect(),
    }
}

/// Per-coordinate objective `V a - a Q` of the flow-control program.
pub fn flow_control_objective(alpha: f64, q: f64, v: f64) -> f64 {
    v * alpha - alpha * q
}

/// Whether the threshold rule minimizes `V a - a Q` over `a` in `[1, alpha_max]`
/// for every coordinate. The objective is linear, so comparing both box
/// corners is exact.
pub fn closed_form_matches_program(debt: &[f64], cfg: &FlowControlConfig) -> bool {
    let chosen = flow_control_update(debt, cfg);
    debt.iter().zip(&chosen.alpha).all(|(&q, &a)| {
        let best = flow_control_objective(1.0, q, cfg.v).min(flow_control_objective(cfg.alpha_max, q, cfg.v));
        flow_control_objective(a, q, cfg.v) <= best + 1e-12 * (1.0 + best.abs())
    })
}
