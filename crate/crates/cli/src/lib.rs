//! Command implementations behind the `ltlbt` binary.

pub mod bench;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ltlbt_core::ltl::build_buchi;
use ltlbt_core::scenario::{three_block, three_block_tray, Scenario};
use ltlbt_core::search::{ExperienceCache, GeometricCost, ProductState, SearchError, SearchProblem};
use ltlbt_core::sim::{
    run_session, trace_to_jsonl, BtVariant, InterventionScript, Outcome, PlannerConfig, SessionConfig, SessionMetrics,
};
use serde::Serialize;

use bench::{CurvePoint, InterventionBench, ScalingSample, Summary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NO_PLAN: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;

pub const PRESETS: [&str; 2] = ["three_block", "three_block_tray"];

/// A preset name or a path to a scenario JSON file.
pub fn load_scenario(arg: &str) -> Result<Scenario> {
    match arg {
        "three_block" => return Ok(three_block()),
        "three_block_tray" => return Ok(three_block_tray()),
        _ => {}
    }
    let text = fs::read_to_string(arg).with_context(|| format!("reading scenario {arg}"))?;
    Scenario::from_json(&text).map_err(|e| {
        let detail: Vec<String> = e.field_errors().iter().map(|f| f.to_string()).collect();
        if detail.is_empty() {
            anyhow::anyhow!("invalid scenario {arg}: {e}")
        } else {
            anyhow::anyhow!("invalid scenario {arg}:\n  {}", detail.join("\n  "))
        }
    })
}

pub fn load_script(path: Option<&Path>) -> Result<InterventionScript> {
    match path {
        None => Ok(InterventionScript::empty()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading script {}", p.display()))?;
            InterventionScript::from_json(&text).map_err(|e| anyhow::anyhow!("invalid script {}: {e}", p.display()))
        }
    }
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn write_csv<R: Serialize>(dir: &Path, name: &str, rows: &[R]) -> Result<()> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Debug, Clone)]
pub struct PlanArgs {
    pub scenario: String,
    pub planner: PlannerConfig,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct PlanFile<'a> {
    schema: &'static str,
    scenario: &'a str,
    planner: &'static str,
    graph: String,
    cost: f64,
    actions: Vec<String>,
    plan: &'a ltlbt_core::Plan64,
}

#[derive(Serialize)]
struct PlanStatsFile<'a> {
    schema: &'static str,
    planner: &'static str,
    graph: String,
    outcome: &'a str,
    error: Option<String>,
    stats: Option<&'a ltlbt_core::search::PlanStats>,
    modelled_time_s: Option<f64>,
}

/// Plans once from the scenario's initial state.
///
/// Writes `plan.json` (on success) and `stats.json`; returns the exit code.
pub fn cmd_plan(args: &PlanArgs) -> Result<i32> {
    let sc = load_scenario(&args.scenario)?;
    ensure_dir(&args.out)?;
    let ts = sc.transition_system();
    let ba = build_buchi(&sc.formula().to_nnf());
    let geometry = sc.geometry::<f64>();
    let problem = SearchProblem::new(&ts, &ba, &geometry, &GeometricCost);
    let start = ProductState::new(ts.initial().clone(), ba.initial());
    let graph = format!("{:?}", args.planner.graph).to_lowercase();
    let result = args.planner.plan(&problem, &start, &mut ExperienceCache::new());
    match result {
        Ok(plan) => {
            plan.validate(&problem).map_err(|e| anyhow::anyhow!("planner returned an invalid plan: {e}"))?;
            let modelled = plan.stats.provider_calls as f64 * args.planner.latency_s
                + (plan.stats.nodes_expanded + plan.stats.nodes_generated) as f64 * args.planner.node_cost_s;
            write_json(
                &args.out,
                "plan.json",
                &PlanFile {
                    schema: "v1",
                    scenario: &sc.name,
                    planner: args.planner.name(),
                    graph: graph.clone(),
                    cost: plan.cost,
                    actions: plan.action_names(),
                    plan: &plan,
                },
            )?;
            write_json(
                &args.out,
                "stats.json",
                &PlanStatsFile {
                    schema: "v1",
                    planner: args.planner.name(),
                    graph,
                    outcome: "plan",
                    error: None,
                    stats: Some(&plan.stats),
                    modelled_time_s: Some(modelled),
                },
            )?;
            println!("{} actions, cost {:.4}: {}", plan.len(), plan.cost, plan.action_names().join(" "));
            Ok(EXIT_OK)
        }
        Err(e) => {
            let outcome = match e {
                SearchError::NoPlan => "no_plan",
                SearchError::GraphTooLarge { .. } => "graph_too_large",
                SearchError::InvalidStart(_) => "invalid_start",
            };
            write_json(
                &args.out,
                "stats.json",
                &PlanStatsFile {
                    schema: "v1",
                    planner: args.planner.name(),
                    graph,
                    outcome,
                    error: Some(e.to_string()),
                    stats: None,
                    modelled_time_s: None,
                },
            )?;
            eprintln!("{e}");
            Ok(if e == SearchError::NoPlan { EXIT_NO_PLAN } else { EXIT_ERROR })
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub scenario: String,
    pub script: Option<PathBuf>,
    pub planner: PlannerConfig,
    pub variant: BtVariant,
    pub seeds: Vec<u64>,
    pub timeout_s: Option<f64>,
    pub out: PathBuf,
}

/// Runs one session per seed.
///
/// `trace.jsonl` holds the first seed's trace (all seeds' traces go to
/// `trace_<seed>.jsonl` when more than one is run), `metrics.csv` one row
/// per seed and `stats.json` the aggregate.
pub fn cmd_run(args: &RunArgs) -> Result<i32> {
    let sc = load_scenario(&args.scenario)?;
    let script = load_script(args.script.as_deref())?;
    ensure_dir(&args.out)?;
    let mut rows = Vec::new();
    for (i, &seed) in args.seeds.iter().enumerate() {
        let mut cfg = SessionConfig::for_scenario(&sc);
        cfg.planner = args.planner;
        cfg.variant = args.variant;
        cfg.seed = seed;
        if let Some(t) = args.timeout_s {
            cfg.timeout_s = t;
        }
        let (m, trace) = run_session(&sc, cfg, &script);
        let jsonl = trace_to_jsonl(&trace);
        if i == 0 {
            fs::write(args.out.join("trace.jsonl"), &jsonl)?;
        }
        if args.seeds.len() > 1 {
            fs::write(args.out.join(format!("trace_{seed}.jsonl")), &jsonl)?;
        }
        println!(
            "seed {seed}: {} in {:.2} s, {} replans, {} bt changes",
            m.outcome, m.completion_time_s, m.replans, m.bt_changes
        );
        rows.push(m);
    }
    write_csv(&args.out, "metrics.csv", &rows)?;
    let summary = bench::summarize(&rows);
    write_json(&args.out, "stats.json", &serde_json::json!({ "schema": "v1", "summary": summary }))?;
    let timeout = Outcome::Timeout;
    let timeout_name = serde_json::to_value(timeout)?.as_str().unwrap_or_default().to_string();
    if rows.iter().any(|m| m.outcome == timeout_name) {
        return Ok(EXIT_TIMEOUT);
    }
    if rows.iter().any(|m| !m.success) {
        return Ok(EXIT_NO_PLAN);
    }
    Ok(EXIT_OK)
}

/// Runs the intervention grid, writes `metrics.csv` and `summary.csv`, and
/// returns the human-readable table.
pub fn cmd_bench_interventions(bench: &InterventionBench, out: &Path) -> Result<(Vec<SessionMetrics>, Vec<Summary>, String)> {
    ensure_dir(out)?;
    let rows = bench.run();
    let summary = bench::summarize(&rows);
    write_csv(out, "metrics.csv", &rows)?;
    write_csv(out, "summary.csv", &summary)?;
    let table = bench::render_summaries(&summary);
    fs::write(out.join("summary.txt"), &table)?;
    Ok((rows, summary, table))
}

pub fn cmd_bench_scaling(
    regions: usize,
    objects: std::ops::RangeInclusive<usize>,
    seeds: &[u64],
    out: &Path,
) -> Result<(Vec<ScalingSample>, Vec<CurvePoint>, String)> {
    ensure_dir(out)?;
    let samples = bench::run_scaling(regions, objects, seeds);
    let curves = bench::curves(&samples);
    write_csv(out, "scaling.csv", &samples)?;
    write_csv(out, "curves.csv", &curves)?;
    let mut table = format!(
        "{:>3} {:>10} {:>14} {:>22} {:>22} {:>10}\n",
        "|O|", "full nodes", "partial nodes", "partial (s)", "full (s)", "full/part"
    );
    for c in &curves {
        table.push_str(&format!(
            "{:>3} {:>10} {:>14.1} {:>22} {:>22} {:>10.2}\n",
            c.objects,
            c.full_nodes,
            c.partial_nodes_mean,
            format!("{:.5}±{:.5}", c.partial_time_mean, c.partial_time_std),
            format!("{:.5}±{:.5}", c.full_time_mean, c.full_time_std),
            c.ratio_mean,
        ));
    }
    let failed = samples.iter().filter(|s| !s.error.is_empty()).count();
    if failed > 0 {
        table.push_str(&format!("{failed} failed data points (see scaling.csv)\n"));
    }
    fs::write(out.join("curves.txt"), &table)?;
    Ok((samples, curves, table))
}

/// BT-variant comparison on both presets; also checks that without
/// interventions every variant executes plans of the same length.
pub fn cmd_bench_bt(seeds: &[u64], planner: PlannerConfig, out: &Path) -> Result<(Vec<SessionMetrics>, String)> {
    ensure_dir(out)?;
    let mut rows = Vec::new();
    for sc in [three_block(), three_block_tray()] {
        rows.extend(bench::run_bt_bench(&sc, seeds, planner));
        let lens: Vec<u32> = BtVariant::ALL
            .iter()
            .map(|&v| {
                let mut cfg = SessionConfig::for_scenario(&sc);
                cfg.planner = planner;
                cfg.variant = v;
                cfg.snapshot_period_s = 0.0;
                run_session(&sc, cfg, &InterventionScript::empty()).0.actions_completed
            })
            .collect();
        if lens.windows(2).any(|w| w[0] != w[1]) {
            bail!("{}: variants executed different plan lengths without interventions: {lens:?}", sc.name);
        }
    }
    write_csv(out, "metrics.csv", &rows)?;
    let mut table = format!("{:<18} {:<15} {:>12} {:>18} {:>8}\n", "scenario", "bt", "bt changes", "completion (s)", "replans");
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in &rows {
        let k = (r.scenario.clone(), r.variant.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (scenario, variant) in keys {
        let cell: Vec<&SessionMetrics> = rows.iter().filter(|r| r.scenario == scenario && r.variant == variant).collect();
        let changes = bench::Stat::of(&cell.iter().map(|r| r.bt_changes as f64).collect::<Vec<_>>());
        let completion = bench::Stat::of(&cell.iter().map(|r| r.completion_time_s as f64).collect::<Vec<_>>());
        let replans = bench::Stat::of(&cell.iter().map(|r| r.replans as f64).collect::<Vec<_>>());
        table.push_str(&format!(
            "{:<18} {:<15} {:>12} {:>18} {:>8.2}\n",
            scenario,
            variant,
            format!("{:.2}±{:.2}", changes.mean, changes.ci95),
            format!("{:.2}±{:.2}", completion.mean, completion.ci95),
            replans.mean
        ));
    }
    fs::write(out.join("bt.txt"), &table)?;
    Ok((rows, table))
}
