use thiserror::Error;

/// Errors raised while building or validating a network.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("instance too large for enumerative scheduling: more than {cap} actions")]
    ActionSpaceTooLarge { cap: usize },
    #[error("line-parity interference requires a line topology 1-2-...-N")]
    NotALine,
    #[error("invalid instance: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgeError {
    #[error("causality violation: packet generated at {generated} delivered at slot {slot}")]
    CausalityViolation { generated: i64, slot: i64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("relevant-link cap exceeded: {links} links feed one queue (cap {cap})")]
    RelevantLinkCap { links: usize, cap: usize },
    #[error("closed-form single-hop policy requires a star with one source per slot: {0}")]
    NotSingleHop(String),
    #[error("state space too large: {states} states (cap {cap})")]
    StateSpaceTooLarge { states: u128, cap: usize },
    #[error("relative value iteration not converged within {iterations} iterations (residual span {residual})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("A_cap must be at least 2, got {0}")]
    CapTooSmall(u64),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Age(#[from] AgeError),
    #[error("runaway instance: age {age} exceeded 2^40 at slot {slot}")]
    Runaway { age: u64, slot: u64 },
    #[error("invalid simulation config: {0}")]
    Config(String),
}

/// A configuration problem, optionally anchored to a line in the source text.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("config error: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ConfigError(pub Vec<ConfigIssue>);

impl ConfigError {
    pub fn single(message: impl Into<String>) -> Self {
        ConfigError(vec![ConfigIssue {
            line: None,
            message: message.into(),
        }])
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph enumeration supports 2 <= n <= 7, got {0}")]
    OutOfRange(usize),
}
