use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ltlbt_cli::bench::{InterventionBench, InterventionKind};
use ltlbt_cli::*;
use ltlbt_core::sim::{BtVariant, GraphMode, PlannerConfig};

#[derive(Parser)]
#[command(name = "ltlbt", version, about = "Reactive LTL task planning with behavior trees")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct PlannerOpts {
    #[arg(long, default_value = "astar-exp", value_parser = ["astar-exp", "astar", "dijkstra"])]
    planner: String,
    #[arg(long, default_value = "partial")]
    graph: GraphMode,
    #[arg(long = "provider-latency-ms")]
    provider_latency_ms: Option<f64>,
}

impl PlannerOpts {
    fn config(&self, default_latency_ms: f64) -> PlannerConfig {
        PlannerConfig::parse(&self.planner)
            .expect("validated by clap")
            .with_graph(self.graph)
            .with_latency_ms(self.provider_latency_ms.unwrap_or(default_latency_ms))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan once from the initial state.
    Plan {
        #[arg(long)]
        scenario: String,
        #[command(flatten)]
        planner: PlannerOpts,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Execute a scenario with an optional intervention script.
    Run {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        script: Option<PathBuf>,
        #[command(flatten)]
        planner: PlannerOpts,
        #[arg(long, default_value = "online-action")]
        bt: BtVariant,
        #[arg(long)]
        seed: Option<u64>,
        /// Run seeds seed..seed+N.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long = "timeout-s")]
        timeout_s: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Randomized relocation/add/remove suite.
    BenchInterventions {
        #[arg(long, default_value = "three_block_tray")]
        scenario: String,
        #[arg(long, default_value_t = 30)]
        seeds: u64,
        /// Planners to compare (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "astar-exp,astar,dijkstra")]
        planner: Vec<String>,
        #[arg(long, default_value = "partial")]
        graph: GraphMode,
        #[arg(long, value_delimiter = ',', default_value = "online-action")]
        bt: Vec<BtVariant>,
        #[arg(long, value_delimiter = ',', default_value = "relocate,add,remove")]
        kinds: Vec<InterventionKind>,
        #[arg(long = "provider-latency-ms", default_value_t = 1.0)]
        provider_latency_ms: f64,
        #[arg(long = "timeout-s")]
        timeout_s: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Partial vs. full product construction as the object count grows.
    BenchScaling {
        #[arg(long, default_value_t = 5)]
        regions: usize,
        #[arg(long, default_value_t = 2)]
        min_objects: usize,
        #[arg(long, default_value_t = 6)]
        max_objects: usize,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// BT variants on an unrelated-relocation script.
    BenchBt {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[command(flatten)]
        planner: PlannerOpts,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.cmd {
        Cmd::Plan { scenario, planner, out } => {
            let latency = load_scenario(&scenario)?.cost.latency_ms;
            cmd_plan(&PlanArgs { scenario, planner: planner.config(latency), out })
        }
        Cmd::Run { scenario, script, planner, bt, seed, seeds, timeout_s, out } => {
            let sc = load_scenario(&scenario)?;
            let first = seed.unwrap_or(sc.seed);
            let seeds = (first..first + seeds.unwrap_or(1).max(1)).collect();
            cmd_run(&RunArgs {
                planner: planner.config(sc.cost.latency_ms),
                scenario,
                script,
                variant: bt,
                seeds,
                timeout_s,
                out,
            })
        }
        Cmd::BenchInterventions {
            scenario,
            seeds,
            planner,
            graph,
            bt,
            kinds,
            provider_latency_ms,
            timeout_s,
            out,
        } => {
            let mut bench = InterventionBench::table_defaults(load_scenario(&scenario)?);
            bench.seeds = (0..seeds).collect();
            bench.kinds = kinds;
            bench.variants = bt;
            bench.planners = planner
                .iter()
                .map(|p| PlannerConfig::parse(p).map(|c| c.with_graph(graph).with_latency_ms(provider_latency_ms)))
                .collect::<Result<_, _>>()
                .map_err(anyhow::Error::msg)?;
            if let Some(t) = timeout_s {
                bench.timeout_s = t;
            }
            let (_, _, table) = cmd_bench_interventions(&bench, &out)?;
            print!("{table}");
            Ok(EXIT_OK)
        }
        Cmd::BenchScaling { regions, min_objects, max_objects, seeds, out } => {
            let seeds: Vec<u64> = (0..seeds).collect();
            let (_, _, table) = cmd_bench_scaling(regions, min_objects..=max_objects, &seeds, &out)?;
            print!("{table}");
            Ok(EXIT_OK)
        }
        Cmd::BenchBt { seeds, planner, out } => {
            let seeds: Vec<u64> = (0..seeds).collect();
            let (_, table) = cmd_bench_bt(&seeds, planner.config(1.0), &out)?;
            print!("{table}");
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
