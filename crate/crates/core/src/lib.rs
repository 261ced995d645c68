//! Age-of-Information scheduling with age debt virtual queues.
//!
//! The crate models slotted wireless networks with generate-at-will
//! sources, tracks per-pair ages and their debt against target values, and
//! schedules transmissions by minimizing the one-slot drift of the debt
//! queues. Baselines (max-weight, stationary randomized) and an
//! average-cost dynamic-programming oracle are included for comparison.

pub mod age;
pub mod error;
pub mod network;
pub mod policy;
pub mod sim;
pub mod target;
pub mod graphs;
pub mod scenario;
pub mod config;
pub mod sweep;
