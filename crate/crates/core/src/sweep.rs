//! Batch runs over every (scenario, policy, seed) in a config.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, PolicyName, PolicySpec, ResolvedPolicy, ResolvedScenario};
use crate::error::ConfigError;
use crate::sim::{mean_stderr, run, stability_diagnostic, RunMetrics, TraceDetail};

pub const FIXED_COLUMNS: [&str; 9] = [
    "scenario_id",
    "graph_id",
    "policy",
    "seed",
    "T",
    "sum_cost",
    "stability_violations",
    "max_QT_over_T",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
    /// Record wall-clock time per row. Off by default so output is reproducible.
    pub timing: bool,
    /// Overrides `sim.horizon`.
    pub horizon: Option<u64>,
    /// Runs only this seed instead of `sim.seeds`.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub scenario_id: String,
    pub graph_id: Option<usize>,
    pub policy: String,
    pub seed: u64,
    pub horizon: u64,
    /// Order of the scenario and policy in the config, for sorting.
    pub scenario_index: usize,
    pub policy_index: usize,
    pub wall_ms: u128,
    pub outcome: Result<RowMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowMetrics {
    pub sum_cost: f64,
    pub stability_violations: usize,
    pub max_q_over_t: f64,
    /// `(k, j, average cost)` with zero-based ids.
    pub per_pair_cost: Vec<(usize, usize, f64)>,
}

impl RowMetrics {
    fn from_metrics(m: &RunMetrics) -> Self {
        RowMetrics {
            sum_cost: m.sum_cost,
            stability_violations: stability_diagnostic(m, None).iter().filter(|s| !**s).count(),
            max_q_over_t: m.q_over_t.iter().copied().fold(0.0, f64::max),
            per_pair_cost: m.pairs.iter().zip(&m.per_pair_cost).map(|(&(k, j), &c)| (k, j, c)).collect(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.outcome.is_err())
    }
}

/// Picks the policy called `name` (by label, then by policy name), or the
/// first configured one. A bare policy name works even if the config
/// lists no policies.
pub fn select_policy(config: &ExperimentConfig, name: Option<&str>) -> Result<ResolvedPolicy, ConfigError> {
    let policies = config.policies();
    match name {
        None => Ok(policies.into_iter().next().unwrap_or_else(|| default_spec(PolicyName::AgeDebt).resolve())),
        Some(name) => {
            if let Some(p) = policies.iter().find(|p| p.label == name) {
                return Ok(p.clone());
            }
            if let Some(p) = config.policy.iter().find(|p| p.name.as_str() == name) {
                return Ok(p.resolve());
            }
            let parsed: PolicyName = serde::Deserialize::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(name))
                .map_err(|_| ConfigError::single(format!("unknown policy \"{name}\"")))?;
            Ok(default_spec(parsed).resolve())
        }
    }
}

fn default_spec(name: PolicyName) -> PolicySpec {
    PolicySpec {
        name,
        label: None,
        tie_break: None,
        intermediate: None,
        distribution: None,
        search: None,
        dp: None,
        target_mode: None,
    }
}

struct Task {
    scenario_index: usize,
    policy_index: usize,
    seed: u64,
    scenario: ResolvedScenario,
}

/// Runs every combination. Individual failures are kept in their rows and do
/// not stop the sweep; only an invalid config is an error.
pub fn sweep(config: &ExperimentConfig, options: &SweepOptions) -> Result<SweepReport, ConfigError> {
    let policies = config.policies();
    let seeds = options.seed.map(|s| vec![s]).unwrap_or_else(|| config.seeds());
    let horizon = options.horizon.unwrap_or_else(|| config.horizon());
    let mut tasks = Vec::new();
    for &seed in &seeds {
        for (si, scenario) in config.scenarios(seed)?.into_iter().enumerate() {
            for pi in 0..policies.len() {
                tasks.push(Task {
                    scenario_index: si,
                    policy_index: pi,
                    seed,
                    scenario: scenario.clone(),
                });
            }
        }
    }
    let work = || -> Vec<SweepRow> {
        tasks
            .par_iter()
            .map(|task| {
                let policy = &policies[task.policy_index];
                let mut sim = config.sim_config(policy, task.seed);
                sim.horizon = horizon;
                sim.trace_detail = TraceDetail::MetricsOnly;
                let start = Instant::now();
                let outcome = run(&task.scenario.scenario.instance, &task.scenario.scenario.costs, &sim)
                    .map(|m| RowMetrics::from_metrics(&m))
                    .map_err(|e| e.to_string());
                SweepRow {
                    scenario_id: task.scenario.id.clone(),
                    graph_id: task.scenario.graph_id,
                    policy: policy.label.clone(),
                    seed: task.seed,
                    horizon,
                    scenario_index: task.scenario_index,
                    policy_index: task.policy_index,
                    wall_ms: if options.timing { start.elapsed().as_millis() } else { 0 },
                    outcome,
                }
            })
            .collect()
    };
    let mut rows = match options.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| ConfigError::single(format!("cannot start {j} workers: {e}")))?
            .install(work),
        None => work(),
    };
    rows.sort_by_key(|r| (r.scenario_index, r.policy_index, r.seed));
    Ok(SweepReport { rows })
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes one row per run, then `mean` and `stderr` rows per scenario and
/// policy over the successful seeds. Failed runs have empty metric fields.
pub fn write_sweep_csv<W: Write>(report: &SweepReport, out: W) -> Result<(), csv::Error> {
    let mut pairs: Vec<(usize, usize)> = report
        .rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok())
        .flat_map(|m| m.per_pair_cost.iter().map(|&(k, j, _)| (k, j)))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(pairs.iter().map(|(k, j)| format!("cost_{}_{}", k + 1, j + 1)));
    w.write_record(&header)?;

    let ident = |r: &SweepRow, seed: String, horizon: String| {
        vec![r.scenario_id.clone(), r.graph_id.map(|g| g.to_string()).unwrap_or_default(), r.policy.clone(), seed, horizon]
    };
    for r in &report.rows {
        let mut rec = ident(r, r.seed.to_string(), r.horizon.to_string());
        match &r.outcome {
            Ok(m) => {
                rec.push(fmt_f64(m.sum_cost));
                rec.push(m.stability_violations.to_string());
                rec.push(fmt_f64(m.max_q_over_t));
                rec.push(r.wall_ms.to_string());
                for &(k, j) in &pairs {
                    rec.push(m.per_pair_cost.iter().find(|p| (p.0, p.1) == (k, j)).map(|p| fmt_f64(p.2)).unwrap_or_default());
                }
            }
            Err(_) => rec.extend(std::iter::repeat_n(String::new(), 4 + pairs.len())),
        }
        w.write_record(&rec)?;
    }

    let mut start = 0;
    while start < report.rows.len() {
        let first = &report.rows[start];
        let end = start + report.rows[start..].iter().take_while(|r| (r.scenario_index, r.policy_index) == (first.scenario_index, first.policy_index)).count();
        let ok: Vec<&RowMetrics> = report.rows[start..end].iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
        if !ok.is_empty() {
            let column = |f: &dyn Fn(&RowMetrics) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|m| f(m)).collect() };
            let mut series: Vec<Vec<f64>> = vec![
                column(&|m| Some(m.sum_cost)),
                column(&|m| Some(m.stability_violations as f64)),
                column(&|m| Some(m.max_q_over_t)),
                report.rows[start..end].iter().filter(|r| r.outcome.is_ok()).map(|r| r.wall_ms as f64).collect(),
            ];
            for &(k, j) in &pairs {
                series.push(column(&|m| m.per_pair_cost.iter().find(|p| (p.0, p.1) == (k, j)).map(|p| p.2)));
            }
            for (name, pick) in [("mean", 0usize), ("stderr", 1)] {
                let mut rec = ident(first, name.to_string(), first.horizon.to_string());
                for s in &series {
                    rec.push(if s.is_empty() {
                        String::new()
                    } else {
                        let (m, e) = mean_stderr(s);
                        fmt_f64(if pick == 0 { m } else { e })
                    });
                }
                w.write_record(&rec)?;
            }
        }
        start = end;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    const STAR: &str = r#"
[network]
generator = "star"
n = 3
reliable = true

[[policy]]
name = "max-weight"

[[policy]]
name = "age-debt"

[sim]
horizon = 500
seeds = [0, 1]
"#;

    fn csv_of(report: &SweepReport) -> String {
        let mut buf = Vec::new();
        write_sweep_csv(report, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn rows_and_aggregates() {
        let cfg = parse_config(STAR).unwrap();
        let report = sweep(&cfg, &SweepOptions::default()).unwrap();
        assert_eq!(report.rows.len(), 4);
        let text = csv_of(&report);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "scenario_id,graph_id,policy,seed,T,sum_cost,stability_violations,max_QT_over_T,wall_ms,cost_1_3,cost_2_3");
        assert_eq!(lines.len(), 1 + 4 + 4);
        assert!(lines[1].starts_with("star-n3,,max-weight,0,500,"));
        assert!(lines[5].starts_with("star-n3,,max-weight,mean,500,"));
    }

    #[test]
    fn job_count_does_not_change_output() {
        let cfg = parse_config(STAR).unwrap();
        let a = csv_of(&sweep(&cfg, &SweepOptions { jobs: Some(1), ..Default::default() }).unwrap());
        let b = csv_of(&sweep(&cfg, &SweepOptions { jobs: Some(4), ..Default::default() }).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn no_policies_gives_header_only() {
        let cfg = parse_config("[network]\ngenerator = \"star\"\nn = 3\n").unwrap();
        let text = csv_of(&sweep(&cfg, &SweepOptions::default()).unwrap());
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn failures_are_recorded_and_skipped() {
        let text = STAR.replace("name = \"age-debt\"", "name = \"dp\"\ndp = { max_states = 10 }");
        let cfg = parse_config(&text).unwrap();
        let report = sweep(&cfg, &SweepOptions::default()).unwrap();
        assert_eq!(report.failures().count(), 2);
        let csv = csv_of(&report);
        assert!(csv.lines().any(|l| l.starts_with("star-n3,,dp,0,500,,,,,")));
        assert!(!csv.lines().any(|l| l.starts_with("star-n3,,dp,mean")));
    }

    #[test]
    fn policy_selection() {
        let cfg = parse_config(STAR).unwrap();
        assert_eq!(select_policy(&cfg, None).unwrap().label, "max-weight");
        assert_eq!(select_policy(&cfg, Some("age-debt")).unwrap().label, "age-debt");
        assert_eq!(select_policy(&cfg, Some("dp")).unwrap().label, "dp");
        assert!(select_policy(&cfg, Some("nope")).is_err());
    }
}
