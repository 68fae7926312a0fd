//! Benchmark harnesses: randomized intervention suites, partial-vs-full
//! scaling curves and the behavior-tree variant comparison.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use ltlbt_core::domain::{ActionSpec, ObjectId};
use ltlbt_core::ltl::build_buchi;
use ltlbt_core::scenario::{random_scaling_scenario, Scenario};
use ltlbt_core::search::{
    full_graph_construct, plan_astar, search_full, ExperienceCache, GeometricCost, ProductState, SearchProblem,
};
use ltlbt_core::sim::{
    run_session, BtVariant, Intervention, InterventionEvent, InterventionScript, PlannerConfig, SessionConfig,
    SessionMetrics, TraceBody,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    Relocate,
    Add,
    Remove,
}

impl InterventionKind {
    pub const ALL: [InterventionKind; 3] = [InterventionKind::Relocate, InterventionKind::Add, InterventionKind::Remove];

    pub fn name(self) -> &'static str {
        match self {
            InterventionKind::Relocate => "relocate",
            InterventionKind::Add => "add",
            InterventionKind::Remove => "remove",
        }
    }
}

impl FromStr for InterventionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown intervention kind {s:?}"))
    }
}

/// One random intervention of `kind` at a uniform time in `window`.
///
/// Relocations and removals pick a random object; relocations and
/// additions pick a random fixed region. Added objects get the next free
/// `o<n>` id.
pub fn random_script(sc: &Scenario, kind: InterventionKind, seed: u64, window: (f64, f64)) -> InterventionScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let t = rng.gen_range(window.0..=window.1);
    let objects: Vec<&str> = sc.objects.iter().map(|o| o.id.as_str()).collect();
    let regions: Vec<&str> = sc.regions.iter().map(|r| r.id.as_str()).collect();
    let event = match kind {
        InterventionKind::Relocate => Intervention::RelocateObject {
            object: (*objects.choose(&mut rng).expect("scenario has objects")).into(),
            region: (*regions.choose(&mut rng).expect("scenario has regions")).into(),
        },
        InterventionKind::Add => {
            let n = (1..).find(|i| !objects.contains(&format!("o{i}").as_str())).expect("free id");
            Intervention::AddObject {
                object: ObjectId::new(format!("o{n}")),
                region: (*regions.choose(&mut rng).expect("scenario has regions")).into(),
            }
        }
        InterventionKind::Remove => {
            Intervention::RemoveObject { object: (*objects.choose(&mut rng).expect("scenario has objects")).into() }
        }
    };
    InterventionScript::new(vec![InterventionEvent { t, event }])
}

/// Three relocations of random objects to random regions (trays
/// included) at sorted times in `window`. Relocations keep the geometry
/// version, so cached motion costs stay valid across the replans they cause.
pub fn reposition_script(sc: &Scenario, seed: u64, window: (f64, f64)) -> InterventionScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let objects: Vec<&str> = sc.objects.iter().map(|o| o.id.as_str()).collect();
    let regions: Vec<&str> =
        sc.regions.iter().map(|r| r.id.as_str()).chain(sc.trays.iter().map(|t| t.id.as_str())).collect();
    let mut times: Vec<f64> = (0..3).map(|_| rng.gen_range(window.0..=window.1)).collect();
    times.sort_by(f64::total_cmp);
    InterventionScript::new(
        times
            .into_iter()
            .map(|t| InterventionEvent {
                t,
                event: Intervention::RelocateObject {
                    object: (*objects.choose(&mut rng).expect("objects")).into(),
                    region: (*regions.choose(&mut rng).expect("regions")).into(),
                },
            })
            .collect(),
    )
}

/// Runs `reposition_script` for every (planner, seed).
pub fn run_reposition(sc: &Scenario, seeds: &[u64], planners: &[PlannerConfig]) -> Vec<SessionMetrics> {
    let jobs: Vec<(PlannerConfig, u64)> = planners.iter().flat_map(|&p| seeds.iter().map(move |&s| (p, s))).collect();
    jobs.par_iter()
        .map(|&(planner, seed)| {
            let mut cfg = SessionConfig::for_scenario(sc);
            cfg.planner = planner;
            cfg.seed = seed;
            cfg.snapshot_period_s = 0.0;
            run_session(sc, cfg, &reposition_script(sc, seed, (1.0, 14.0))).0
        })
        .collect()
}

/// A grid of sessions: kinds × planners × BT variants × seeds.
#[derive(Debug, Clone)]
pub struct InterventionBench {
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub kinds: Vec<InterventionKind>,
    /// Intervention time window, simulated seconds.
    pub window: (f64, f64),
    pub planners: Vec<PlannerConfig>,
    pub variants: Vec<BtVariant>,
    pub timeout_s: f64,
}

impl InterventionBench {
    /// 30 seeds, all three kinds, A* with experience, action-condition BT,
    /// 1 ms provider latency.
    pub fn table_defaults(scenario: Scenario) -> Self {
        Self {
            timeout_s: scenario.sim.timeout_s,
            scenario,
            seeds: (0..30).collect(),
            kinds: InterventionKind::ALL.to_vec(),
            window: (1.0, 12.0),
            planners: vec![PlannerConfig::astar_exp().with_latency_ms(1.0)],
            variants: vec![BtVariant::OnlineAction],
        }
    }

    pub fn session_config(&self, planner: PlannerConfig, variant: BtVariant, seed: u64) -> SessionConfig {
        let mut cfg = SessionConfig::for_scenario(&self.scenario);
        cfg.planner = planner;
        cfg.variant = variant;
        cfg.seed = seed;
        cfg.timeout_s = self.timeout_s;
        cfg.snapshot_period_s = 0.0;
        cfg
    }

    /// Runs every cell; rows come back in grid order regardless of
    /// scheduling.
    pub fn run(&self) -> Vec<SessionMetrics> {
        let mut jobs = Vec::new();
        for &kind in &self.kinds {
            for &planner in &self.planners {
                for &variant in &self.variants {
                    for &seed in &self.seeds {
                        jobs.push((kind, planner, variant, seed));
                    }
                }
            }
        }
        jobs.par_iter()
            .map(|&(kind, planner, variant, seed)| {
                let script = random_script(&self.scenario, kind, seed, self.window);
                run_session(&self.scenario, self.session_config(planner, variant, seed), &script).0
            })
            .collect()
    }
}

/// Mean, 95% confidence half-width and median of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Stat {
    pub mean: f64,
    pub ci95: f64,
    pub median: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        let std = var.sqrt();
        let ci95 = if n > 1 {
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof").inverse_cdf(0.975);
            t * std / (n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, ci95, median: median(xs), std }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Aggregate over the seeds of one (script, planner, graph, variant) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub script: String,
    pub planner: String,
    pub graph: String,
    pub variant: String,
    pub sessions: usize,
    pub successes: usize,
    pub init_plan_time_mean: f64,
    pub init_plan_time_ci95: f64,
    pub replan_time_mean: f64,
    pub replan_time_ci95: f64,
    pub replans_mean: f64,
    pub replans_median: f64,
    pub completion_time_mean: f64,
    pub completion_time_ci95: f64,
    pub completion_time_median: f64,
    pub bt_changes_mean: f64,
    pub bt_changes_median: f64,
    pub replan_provider_calls_mean: f64,
    pub repeat_provider_calls: u64,
}

/// Groups rows by cell, keeping first-appearance order.
pub fn summarize(rows: &[SessionMetrics]) -> Vec<Summary> {
    let mut keys: Vec<(String, String, String, String)> = Vec::new();
    for r in rows {
        let k = (r.script.clone(), r.planner.clone(), r.graph.clone(), r.variant.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(script, planner, graph, variant)| {
            let cell: Vec<&SessionMetrics> = rows
                .iter()
                .filter(|r| r.script == script && r.planner == planner && r.graph == graph && r.variant == variant)
                .collect();
            let col = |f: &dyn Fn(&SessionMetrics) -> f64| cell.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let init = Stat::of(&col(&|r| r.init_plan_time_s));
            let replan = Stat::of(&col(&|r| r.total_replan_time_s));
            let replans = Stat::of(&col(&|r| r.replans as f64));
            let completion = Stat::of(&col(&|r| r.completion_time_s));
            let changes = Stat::of(&col(&|r| r.bt_changes as f64));
            let calls = Stat::of(&col(&|r| r.replan_provider_calls as f64));
            Summary {
                sessions: cell.len(),
                successes: cell.iter().filter(|r| r.success).count(),
                init_plan_time_mean: init.mean,
                init_plan_time_ci95: init.ci95,
                replan_time_mean: replan.mean,
                replan_time_ci95: replan.ci95,
                replans_mean: replans.mean,
                replans_median: replans.median,
                completion_time_mean: completion.mean,
                completion_time_ci95: completion.ci95,
                completion_time_median: completion.median,
                bt_changes_mean: changes.mean,
                bt_changes_median: changes.median,
                replan_provider_calls_mean: calls.mean,
                repeat_provider_calls: cell.iter().map(|r| r.repeat_provider_calls).sum(),
                script,
                planner,
                graph,
                variant,
            }
        })
        .collect()
}

pub fn render_summaries(rows: &[Summary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:<10} {:<8} {:<15} {:>7} {:>16} {:>18} {:>13} {:>18} {:>12}",
        "script", "planner", "graph", "bt", "success", "init plan (s)", "replan time (s)", "# replan", "completion (s)", "bt changes"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:<10} {:<8} {:<15} {:>7} {:>16} {:>18} {:>13} {:>18} {:>12}",
            if r.script.is_empty() { "none" } else { &r.script },
            r.planner,
            r.graph,
            r.variant,
            format!("{}/{}", r.successes, r.sessions),
            format!("{:.4}±{:.4}", r.init_plan_time_mean, r.init_plan_time_ci95),
            format!("{:.4}±{:.4}", r.replan_time_mean, r.replan_time_ci95),
            format!("{:.2} ({})", r.replans_mean, r.replans_median),
            format!("{:.2}±{:.2}", r.completion_time_mean, r.completion_time_ci95),
            format!("{:.2} ({})", r.bt_changes_mean, r.bt_changes_median),
        );
    }
    out
}

/// One (geometry, object count) sample of the scaling sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSample {
    pub seed: u64,
    pub regions: usize,
    pub objects: usize,
    pub full_nodes: usize,
    pub full_edges: usize,
    pub partial_nodes: usize,
    pub partial_expanded: usize,
    /// Wall-clock construction + search, seconds.
    pub partial_time_s: f64,
    pub full_time_s: f64,
    pub partial_cost: f64,
    pub full_cost: f64,
    pub error: String,
}

/// Replanning after an object is added, with partial construction (A*)
/// and with full construction (Dijkstra over the explicit product).
///
/// The added object bumps the geometry version, so no cached cost can be
/// reused; both sides start from an empty cache and zero provider latency.
pub fn scaling_sample(seed: u64, regions: usize, objects: usize) -> ScalingSample {
    let sc = random_scaling_scenario(seed, regions, objects);
    let ts = sc.transition_system();
    let ba = build_buchi(&sc.formula().to_nnf());
    let geometry = sc.geometry::<f64>();
    let problem = SearchProblem::new(&ts, &ba, &geometry, &GeometricCost);
    let start = ProductState::new(ts.initial().clone(), ba.initial());

    let t0 = Instant::now();
    let partial = plan_astar(&problem, &start, &mut ExperienceCache::new());
    let partial_time_s = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let full = full_graph_construct(&problem, &mut ExperienceCache::new())
        .and_then(|g| search_full(&problem, &g, &start, false).map(|p| (g, p)));
    let full_time_s = t0.elapsed().as_secs_f64();

    let mut s = ScalingSample {
        seed,
        regions,
        objects,
        full_nodes: 0,
        full_edges: 0,
        partial_nodes: 0,
        partial_expanded: 0,
        partial_time_s,
        full_time_s,
        partial_cost: f64::NAN,
        full_cost: f64::NAN,
        error: String::new(),
    };
    match partial {
        Ok(p) => {
            s.partial_nodes = p.stats.nodes_generated;
            s.partial_expanded = p.stats.nodes_expanded;
            s.partial_cost = p.cost;
        }
        Err(e) => s.error = format!("partial: {e}"),
    }
    match full {
        Ok((g, p)) => {
            s.full_nodes = g.node_count();
            s.full_edges = g.edge_count();
            s.full_cost = p.cost;
        }
        Err(e) => {
            if !s.error.is_empty() {
                s.error.push_str("; ");
            }
            s.error.push_str(&format!("full: {e}"));
        }
    }
    s
}

/// Samples run one at a time so the timings do not compete for cores.
pub fn run_scaling(regions: usize, objects: impl IntoIterator<Item = usize>, seeds: &[u64]) -> Vec<ScalingSample> {
    let mut out = Vec::new();
    for n in objects {
        for &seed in seeds {
            out.push(scaling_sample(seed, regions, n));
        }
    }
    out
}

/// Mean ± std per object count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub objects: usize,
    pub samples: usize,
    pub full_nodes: usize,
    pub partial_nodes_mean: f64,
    pub partial_time_mean: f64,
    pub partial_time_std: f64,
    pub full_time_mean: f64,
    pub full_time_std: f64,
    /// Mean over geometries of full_time / partial_time.
    pub ratio_mean: f64,
}

pub fn curves(samples: &[ScalingSample]) -> Vec<CurvePoint> {
    let mut ns: Vec<usize> = samples.iter().map(|s| s.objects).collect();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let pts: Vec<&ScalingSample> = samples.iter().filter(|s| s.objects == n).collect();
            let col = |f: &dyn Fn(&ScalingSample) -> f64| pts.iter().map(|s| f(s)).collect::<Vec<f64>>();
            let p = Stat::of(&col(&|s| s.partial_time_s));
            let f = Stat::of(&col(&|s| s.full_time_s));
            CurvePoint {
                objects: n,
                samples: pts.len(),
                full_nodes: pts.first().map_or(0, |s| s.full_nodes),
                partial_nodes_mean: Stat::of(&col(&|s| s.partial_nodes as f64)).mean,
                partial_time_mean: p.mean,
                partial_time_std: p.std,
                full_time_mean: f.mean,
                full_time_std: f.std,
                ratio_mean: Stat::of(&col(&|s| s.full_time_s / s.partial_time_s)).mean,
            }
        })
        .collect()
}

/// Two relocations unrelated to the action in flight.
///
/// First, early on, the object the initial plan moves last is put straight
/// into its destination. Then, once the robot has delivered its first
/// object and started on the next action, that delivered object is knocked
/// back to where it started. The second time is read off a reference run of
/// the same seed.
pub fn bt_script(sc: &Scenario, seed: u64) -> InterventionScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x2545_f491_4f6c_dd1d);
    let ts = sc.transition_system();
    let ba = build_buchi(&sc.formula().to_nnf());
    let geometry = sc.geometry::<f64>();
    let problem = SearchProblem::new(&ts, &ba, &geometry, &GeometricCost);
    let start = ProductState::new(ts.initial().clone(), ba.initial());
    let plan = plan_astar(&problem, &start, &mut ExperienceCache::new()).expect("scenario is feasible");
    let deliveries: Vec<(String, ObjectId)> = plan
        .steps
        .iter()
        .filter_map(|st| match &st.action {
            ActionSpec::MoveObject { object, dest } if !ts.is_tray(dest) => Some((st.action.name(), object.clone())),
            _ => None,
        })
        .collect();
    let (_, bystander) = deliveries.last().cloned().expect("plan delivers an object");
    let dest = match &plan.steps.iter().rev().find(|st| st.action.entity() == bystander.as_str()).expect("moved").action {
        ActionSpec::MoveObject { dest, .. } => dest.clone(),
        ActionSpec::MoveRegion { .. } => unreachable!("bystander is an object"),
    };
    let early = InterventionEvent {
        t: rng.gen_range(0.5..=3.0),
        event: Intervention::RelocateObject { object: bystander.clone(), region: dest },
    };

    let mut cfg = SessionConfig::for_scenario(sc);
    cfg.seed = seed;
    cfg.snapshot_period_s = 0.0;
    let (_, trace) = run_session(sc, cfg, &InterventionScript::new(vec![early.clone()]));
    let mut delivered: Option<ObjectId> = None;
    let mut knock = None;
    for ev in &trace {
        match (&ev.body, &delivered) {
            (TraceBody::ActionCompleted { action }, None) => {
                delivered = deliveries.iter().find(|(name, o)| name == action && *o != bystander).map(|(_, o)| o.clone());
            }
            (TraceBody::ActionStarted { .. }, Some(o)) => {
                knock = Some((ev.t, o.clone()));
                break;
            }
            _ => {}
        }
    }
    let mut events = vec![early];
    if let Some((t, object)) = knock {
        let home = sc.objects.iter().find(|o| o.id == object.as_str()).expect("scenario object").region.clone();
        events.push(InterventionEvent {
            t: t + rng.gen_range(0.2..=1.0),
            event: Intervention::RelocateObject { object, region: home.as_str().into() },
        });
    }
    InterventionScript::new(events)
}

/// Every BT variant on `bt_script` for each seed.
pub fn run_bt_bench(sc: &Scenario, seeds: &[u64], planner: PlannerConfig) -> Vec<SessionMetrics> {
    let jobs: Vec<(BtVariant, u64)> =
        BtVariant::ALL.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    jobs.par_iter()
        .map(|&(variant, seed)| {
            let mut cfg = SessionConfig::for_scenario(sc);
            cfg.planner = planner;
            cfg.variant = variant;
            cfg.seed = seed;
            cfg.snapshot_period_s = 0.0;
            run_session(sc, cfg, &bt_script(sc, seed)).0
        })
        .collect()
}
