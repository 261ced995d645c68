use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use agedebt::config::{parse_config, ExperimentConfig, PolicyName};
use agedebt::error::ConfigError;
use agedebt::graphs::enumerate_connected_graphs;
use agedebt::policy::{dp_optimal, DpOptions, PolicySelector};
use agedebt::sim::{run, stability_diagnostic, write_trace, TraceDetail};
use agedebt::sweep::{select_policy, sweep, write_sweep_csv, SweepOptions};

#[derive(Parser)]
#[command(name = "agedebt", version, about = "Age debt scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one policy on one seed and write the per-slot trace.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        /// Policy label or name; the first configured policy by default.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Run every scenario, policy and seed and write one CSV row per run.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        /// Only run policies with this label or name.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Fill the wall_ms column (makes output non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Solve the average-cost DP and export its policy and relative values.
    Dp {
        #[command(flatten)]
        common: Common,
        /// Seed for randomly generated reliabilities.
        #[arg(long)]
        seed: Option<u64>,
        /// Takes DP options from this configured policy.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Count connected graphs up to isomorphism.
    Graphs {
        /// Vertex counts; 5 and 6 by default.
        #[arg(long = "n")]
        n: Vec<usize>,
        /// Also write every graph as an edge list.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and report every problem with its line.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n"))
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

fn output(out: Option<&Path>, config: Option<&ExperimentConfig>) -> Result<Box<dyn Write>, Failure> {
    let path = out.map(Path::to_path_buf).or_else(|| config.and_then(|c| c.output.as_ref().map(PathBuf::from)));
    match path {
        Some(p) => Ok(Box::new(BufWriter::new(File::create(&p).map_err(|e| runtime(format!("cannot create {}: {e}", p.display())))?))),
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn single_scenario(config: &ExperimentConfig, seed: u64) -> Result<agedebt::config::ResolvedScenario, Failure> {
    let mut scenarios = config.scenarios(seed)?;
    if scenarios.len() != 1 {
        return Err(Failure::Config(format!(
            "this command needs exactly one scenario, the config expands to {}",
            scenarios.len()
        )));
    }
    Ok(scenarios.remove(0))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            common,
            seed,
            horizon,
            policy,
        } => {
            let config = load(&common.config)?;
            let seed = seed.unwrap_or_else(|| config.seeds()[0]);
            let scenario = single_scenario(&config, seed)?;
            let policy = select_policy(&config, policy.as_deref())?;
            let mut sim = config.sim_config(&policy, seed).with_trace(TraceDetail::Full);
            if let Some(h) = horizon {
                sim.horizon = h;
            }
            let m = run(&scenario.scenario.instance, &scenario.scenario.costs, &sim).map_err(runtime)?;
            write_trace(&m, output(common.out.as_deref(), Some(&config))?).map_err(runtime)?;
            let unstable = stability_diagnostic(&m, None).iter().filter(|s| !**s).count();
            eprintln!(
                "{} seed {} T {}: average cost {} ({} of {} queues flagged unstable, {} route fallbacks)",
                policy.label,
                seed,
                m.horizon,
                m.sum_cost,
                unstable,
                m.pairs.len(),
                m.route_fallbacks
            );
        }
        Command::Sweep {
            common,
            seed,
            horizon,
            policy,
            jobs,
            timing,
        } => {
            let mut config = load(&common.config)?;
            if let Some(name) = policy {
                let keep: Vec<_> = config
                    .policy
                    .iter()
                    .zip(config.policies())
                    .filter(|(spec, p)| p.label == name || spec.name.as_str() == name)
                    .map(|(spec, _)| spec.clone())
                    .collect();
                if keep.is_empty() {
                    return Err(Failure::Config(format!("no configured policy matches \"{name}\"")));
                }
                config.policy = keep;
            }
            let report = sweep(
                &config,
                &SweepOptions {
                    jobs,
                    timing,
                    horizon,
                    seed,
                },
            )?;
            write_sweep_csv(&report, output(common.out.as_deref(), Some(&config))?).map_err(runtime)?;
            let failed: Vec<_> = report.failures().collect();
            for r in &failed {
                eprintln!(
                    "{} {} seed {}: {}",
                    r.scenario_id,
                    r.policy,
                    r.seed,
                    r.outcome.as_ref().err().map(String::as_str).unwrap_or_default()
                );
            }
            if !failed.is_empty() {
                return Err(Failure::Runtime(format!("{} of {} runs failed", failed.len(), report.rows.len())));
            }
        }
        Command::Dp { common, seed, policy } => {
            let config = load(&common.config)?;
            let scenario = single_scenario(&config, seed.unwrap_or_else(|| config.seeds()[0]))?;
            let options = match policy {
                Some(name) => match select_policy(&config, Some(&name))?.selector {
                    PolicySelector::Dp(o) => o,
                    _ => return Err(Failure::Config(format!("policy \"{name}\" is not a dp policy"))),
                },
                None => config
                    .policy
                    .iter()
                    .find(|p| p.name == PolicyName::Dp)
                    .map(|p| p.dp.clone().unwrap_or_default().options())
                    .unwrap_or_else(DpOptions::default),
            };
            let sol = dp_optimal(&scenario.scenario.instance, &scenario.scenario.costs, &options).map_err(runtime)?;
            sol.write_table(output(common.out.as_deref(), Some(&config))?).map_err(runtime)?;
            let per_pair: Vec<String> = sol.per_pair_average.iter().map(|v| format!("{v:.6}")).collect();
            eprintln!(
                "optimal average cost {:.6} after {} iterations (residual span {:.3e}); per pair [{}]",
                sol.average_cost,
                sol.iterations,
                sol.residual_span,
                per_pair.join(", ")
            );
        }
        Command::Graphs { n, out } => {
            let ns = if n.is_empty() { vec![5, 6] } else { n };
            let mut listing = match &out {
                Some(p) => {
                    let mut w = csv::Writer::from_writer(File::create(p).map_err(|e| runtime(format!("cannot create {}: {e}", p.display())))?);
                    w.write_record(["n", "graph_id", "edges"]).map_err(runtime)?;
                    Some(w)
                }
                None => None,
            };
            let mut total = 0;
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "n,count").map_err(runtime)?;
            for &v in &ns {
                let graphs = enumerate_connected_graphs(v).map_err(|e| Failure::Config(e.to_string()))?;
                writeln!(stdout, "{v},{}", graphs.len()).map_err(runtime)?;
                total += graphs.len();
                if let Some(w) = listing.as_mut() {
                    for (i, g) in graphs.iter().enumerate() {
                        let edges: Vec<String> = g.edges.iter().map(|(a, b)| format!("{}-{}", a + 1, b + 1)).collect();
                        w.write_record([v.to_string(), (i + 1).to_string(), edges.join(" ")]).map_err(runtime)?;
                    }
                }
            }
            writeln!(stdout, "total,{total}").map_err(runtime)?;
            if let Some(mut w) = listing {
                w.flush().map_err(runtime)?;
            }
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            let scenarios = cfg.scenarios(cfg.seeds()[0])?;
            println!(
                "ok: {} scenario(s), {} policy(ies), {} seed(s), horizon {}",
                scenarios.len(),
                cfg.policy.len(),
                cfg.seeds().len(),
                cfg.horizon()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error:\n{m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
