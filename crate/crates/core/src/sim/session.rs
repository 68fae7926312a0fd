use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Intervention, InterventionEvent, InterventionScript, SimError, SimWorld, WorldEvent, WorldSnapshot};
use crate::bt::{plan_to_action_tuples, ActionProgress, Executor, ActionTuple, ConditionStyle, NodeStatus, ReconfigureDiff, TaskTree, TickContext, TreeSnapshot};
use crate::domain::{reconstruct_ts, ActionSpec, SymbolicState, TransitionSystem, TsDelta, WorldGeometry};
use crate::ltl::{build_buchi, BuchiAutomaton};
use crate::scenario::{Scenario, SCHEMA};
use crate::search::{
    plan_astar, plan_dijkstra, plan_full, search, CostProvider, ExperienceCache, GeometricCost, PartialGraph, Plan, ProductState,
    SearchError, SearchProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BtVariant {
    /// Reconfigure in place; conditions on the moved entity only.
    OnlineAction,
    /// Reconfigure in place; conditions on the whole state.
    OnlineState,
    /// Abort, wait for the plan, rebuild from scratch.
    OfflineAction,
}

impl BtVariant {
    pub const ALL: [BtVariant; 3] = [BtVariant::OnlineAction, BtVariant::OnlineState, BtVariant::OfflineAction];

    pub fn style(self) -> ConditionStyle {
        match self {
            BtVariant::OnlineState => ConditionStyle::State,
            _ => ConditionStyle::Action,
        }
    }

    pub fn online(self) -> bool {
        self != BtVariant::OfflineAction
    }

    pub fn name(self) -> &'static str {
        match self {
            BtVariant::OnlineAction => "online_action",
            BtVariant::OnlineState => "online_state",
            BtVariant::OfflineAction => "offline_action",
        }
    }
}

impl fmt::Display for BtVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BtVariant {
    type Err = String;

    /// Accepts `online_action` and `online-action` spellings.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.replace('-', "_");
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| format!("unknown BT variant {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Astar,
    Dijkstra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    Partial,
    Full,
}

impl FromStr for GraphMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "partial" => Ok(GraphMode::Partial),
            "full" => Ok(GraphMode::Full),
            _ => Err(format!("unknown graph mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub algorithm: Algorithm,
    pub graph: GraphMode,
    /// Keep the experience cache across planner calls.
    pub experience: bool,
    /// Simulated cost of one uncached provider call, in seconds.
    pub latency_s: f64,
    /// Simulated cost of expanding or generating one node, in seconds.
    pub node_cost_s: f64,
}

impl PlannerConfig {
    pub const NODE_COST_S: f64 = 1e-4;

    fn new(algorithm: Algorithm, experience: bool) -> Self {
        Self { algorithm, graph: GraphMode::Partial, experience, latency_s: 0.0, node_cost_s: Self::NODE_COST_S }
    }

    pub fn astar_exp() -> Self {
        Self::new(Algorithm::Astar, true)
    }

    pub fn astar() -> Self {
        Self::new(Algorithm::Astar, false)
    }

    pub fn dijkstra() -> Self {
        Self::new(Algorithm::Dijkstra, true)
    }

    pub fn with_graph(mut self, graph: GraphMode) -> Self {
        self.graph = graph;
        self
    }

    pub fn with_latency_ms(mut self, ms: f64) -> Self {
        self.latency_s = ms / 1000.0;
        self
    }

    /// `astar_exp`, `astar` or `dijkstra`.
    pub fn name(&self) -> &'static str {
        match (self.algorithm, self.experience) {
            (Algorithm::Astar, true) => "astar_exp",
            (Algorithm::Astar, false) => "astar",
            (Algorithm::Dijkstra, true) => "dijkstra",
            (Algorithm::Dijkstra, false) => "dijkstra_noexp",
        }
    }

    /// Parses a planner name (`astar-exp` spelling accepted).
    pub fn parse(name: &str) -> Result<Self, String> {
        match name.replace('-', "_").as_str() {
            "astar_exp" => Ok(Self::astar_exp()),
            "astar" => Ok(Self::astar()),
            "dijkstra" => Ok(Self::dijkstra()),
            "dijkstra_noexp" => Ok(Self::new(Algorithm::Dijkstra, false)),
            other => Err(format!("unknown planner {other:?}")),
        }
    }

    pub fn plan(
        &self,
        problem: &SearchProblem<'_, f64>,
        start: &ProductState,
        cache: &mut ExperienceCache<f64>,
    ) -> Result<Plan<f64>, SearchError> {
        match (self.graph, self.algorithm) {
            (GraphMode::Partial, Algorithm::Astar) => plan_astar(problem, start, cache),
            (GraphMode::Partial, Algorithm::Dijkstra) => plan_dijkstra(problem, start, cache),
            (GraphMode::Full, alg) => plan_full(problem, start, cache, alg == Algorithm::Astar),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub variant: BtVariant,
    pub planner: PlannerConfig,
    pub seed: u64,
    pub tick_hz: f64,
    pub timeout_s: f64,
    /// End-effector speed, m/s.
    pub speed: f64,
    /// Placement scatter as a fraction of the region radius.
    pub jitter: f64,
    /// Period of world/tree snapshots in the trace; 0 disables them.
    pub snapshot_period_s: f64,
}

impl SessionConfig {
    /// Defaults taken from the scenario's `sim`, `cost` and `seed` fields.
    pub fn for_scenario(sc: &Scenario) -> Self {
        Self {
            variant: BtVariant::OnlineAction,
            planner: PlannerConfig::astar_exp().with_latency_ms(sc.cost.latency_ms),
            seed: sc.seed,
            tick_hz: sc.sim.tick_hz,
            timeout_s: sc.sim.timeout_s,
            speed: sc.sim.speed,
            jitter: 0.5,
            snapshot_period_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Timeout,
    Infeasible,
}

/// One row of results per session. All times are simulated seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SessionMetrics {
    pub scenario: String,
    pub variant: String,
    pub planner: String,
    pub graph: String,
    pub seed: u64,
    /// Kinds of the scripted interventions, `+`-joined.
    pub script: String,
    pub success: bool,
    pub outcome: String,
    pub init_plan_time_s: f64,
    /// Sum of modelled planning delays after the initial plan.
    pub total_replan_time_s: f64,
    pub replans: u32,
    pub ts_reconstructions: u32,
    pub recoveries: u32,
    pub completion_time_s: f64,
    pub bt_changes: u32,
    pub actions_completed: u32,
    pub actions_aborted: u32,
    pub interventions: u32,
    pub interventions_rejected: u32,
    pub provider_calls: u64,
    /// Provider calls after the initial plan.
    pub replan_provider_calls: u64,
    /// Calls for a (state, action, version) key that was evaluated before.
    pub repeat_provider_calls: u64,
    pub nodes_expanded: u64,
    pub init_plan_cost: f64,
    pub init_plan_len: u32,
    pub path_length_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub id: u64,
    pub t: f64,
    #[serde(flatten)]
    pub body: TraceBody,
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        self.body.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceBody {
    ScenarioLoaded { schema: String, scenario: String, variant: BtVariant, planner: String, graph: GraphMode, seed: u64 },
    InitialPlanStarted { state: String },
    ReplanStarted { reason: String, state: String },
    ReplanFinished {
        actions: Vec<String>,
        cost: f64,
        delay_s: f64,
        nodes_expanded: usize,
        provider_calls: u64,
        cache_hits: u64,
        ready_at: f64,
    },
    PlanFailed { error: String },
    PlanInstalled { actions: Vec<String>, diff: ReconfigureDiff },
    Intervention { event: Intervention },
    InterventionDeferred { event: Intervention, reason: String },
    InterventionRejected { event: Intervention, reason: String },
    TsReconstructed { version: u64, objects: usize, states: String },
    Recovery { subtree: Option<usize>, action: Option<String>, goal: bool },
    RecoveryFailed { state: String },
    PerceptionGap,
    ActionStarted { action: String },
    ActionPicked { action: String },
    ActionCompleted { action: String },
    ActionAborted { action: String },
    TreeStatus { status: NodeStatus, running: Option<String> },
    State { state: String },
    World { world: WorldSnapshot },
    Bt { tree: TreeSnapshot },
    Done { metrics: SessionMetrics },
}

impl TraceBody {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceBody::ScenarioLoaded { .. } => "scenario_loaded",
            TraceBody::InitialPlanStarted { .. } => "initial_plan_started",
            TraceBody::ReplanStarted { .. } => "replan_started",
            TraceBody::ReplanFinished { .. } => "replan_finished",
            TraceBody::PlanFailed { .. } => "plan_failed",
            TraceBody::PlanInstalled { .. } => "plan_installed",
            TraceBody::Intervention { .. } => "intervention",
            TraceBody::InterventionDeferred { .. } => "intervention_deferred",
            TraceBody::InterventionRejected { .. } => "intervention_rejected",
            TraceBody::TsReconstructed { .. } => "ts_reconstructed",
            TraceBody::Recovery { .. } => "recovery",
            TraceBody::RecoveryFailed { .. } => "recovery_failed",
            TraceBody::PerceptionGap => "perception_gap",
            TraceBody::ActionStarted { .. } => "action_started",
            TraceBody::ActionPicked { .. } => "action_picked",
            TraceBody::ActionCompleted { .. } => "action_completed",
            TraceBody::ActionAborted { .. } => "action_aborted",
            TraceBody::TreeStatus { .. } => "tree_status",
            TraceBody::State { .. } => "state",
            TraceBody::World { .. } => "world",
            TraceBody::Bt { .. } => "bt",
            TraceBody::Done { .. } => "done",
        }
    }
}

/// Geometric cost that remembers which edges it has been asked about.
#[derive(Default)]
struct RecordingCost {
    seen: Mutex<HashSet<(String, String, u64)>>,
    calls: AtomicU64,
    repeats: AtomicU64,
}

impl CostProvider<f64> for RecordingCost {
    fn cost(&self, geometry: &WorldGeometry<f64>, s: &SymbolicState, a: &ActionSpec) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let fresh = self.seen.lock().expect("cost log poisoned").insert((s.encode(), a.name(), geometry.version()));
        if !fresh {
            self.repeats.fetch_add(1, Ordering::Relaxed);
        }
        GeometricCost.cost(geometry, s, a)
    }
}

/// Lets running actions continue but dispatches nothing new while a
/// replan is in flight: the old tree's remaining steps may be stale.
struct Gate<'a> {
    world: &'a mut SimWorld,
    hold: bool,
}

impl Executor for Gate<'_> {
    fn progress(&self, action: &ActionSpec) -> ActionProgress {
        self.world.progress(action)
    }
    fn start(&mut self, action: &ActionSpec) -> bool {
        !self.hold && self.world.start(action)
    }
    fn acknowledge(&mut self, action: &ActionSpec) {
        self.world.acknowledge(action)
    }
    fn abort(&mut self) {
        self.world.abort()
    }
    fn busy(&self) -> bool {
        self.world.busy()
    }
}

#[derive(Debug, Clone)]
struct Pending {
    ready_at: f64,
    tuples: Vec<ActionTuple>,
    plan: Plan<f64>,
}

/// A reactive execution session: one world, one tree, one planner.
///
/// Each [`Session::step`] is one loop iteration: apply due interventions,
/// react to the changes they caused (recover, or reconstruct and replan),
/// install a finished plan, tick the tree, then advance the world by one
/// tick. Planning is instantaneous in wall-clock terms but its modelled
/// delay postpones delivery; online variants keep ticking meanwhile.
pub struct Session {
    cfg: SessionConfig,
    name: String,
    world: SimWorld,
    ts: TransitionSystem,
    ba: BuchiAutomaton,
    provider: RecordingCost,
    cache: ExperienceCache<f64>,
    tree: TaskTree,
    plan: Option<Plan<f64>>,
    pending: Option<Pending>,
    frozen: bool,
    script: VecDeque<InterventionEvent>,
    retry: Vec<Intervention>,
    delta: TsDelta,
    relocated: bool,
    started: bool,
    outcome: Option<Outcome>,
    metrics: SessionMetrics,
    trace: Vec<TraceEvent>,
    last_state: String,
    last_status: (NodeStatus, Option<String>),
    next_snapshot: f64,
}

impl Session {
    /// Builds an idle session; nothing is planned until the first step.
    pub fn new(scenario: &Scenario, cfg: SessionConfig, script: &InterventionScript) -> Self {
        let geometry = scenario.geometry::<f64>();
        let world = SimWorld::new(geometry, cfg.speed, cfg.jitter, cfg.seed);
        let mut events = script.events.clone();
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut s = Self {
            name: scenario.name.clone(),
            world,
            ts: scenario.transition_system(),
            ba: build_buchi(&scenario.formula().to_nnf()),
            provider: RecordingCost::default(),
            cache: ExperienceCache::new(),
            tree: TaskTree::new(cfg.variant.style(), &[]),
            plan: None,
            pending: None,
            frozen: false,
            script: events.into(),
            retry: Vec::new(),
            delta: TsDelta::default(),
            relocated: false,
            started: false,
            outcome: None,
            metrics: SessionMetrics {
                scenario: scenario.name.clone(),
                variant: cfg.variant.name().into(),
                planner: cfg.planner.name().into(),
                graph: match cfg.planner.graph {
                    GraphMode::Partial => "partial".into(),
                    GraphMode::Full => "full".into(),
                },
                seed: cfg.seed,
                script: script.kinds(),
                ..SessionMetrics::default()
            },
            trace: Vec::new(),
            last_state: String::new(),
            last_status: (NodeStatus::Invalid, None),
            next_snapshot: 0.0,
            cfg,
        };
        s.emit(TraceBody::ScenarioLoaded {
            schema: SCHEMA.into(),
            scenario: s.name.clone(),
            variant: s.cfg.variant,
            planner: s.cfg.planner.name().into(),
            graph: s.cfg.planner.graph,
            seed: s.cfg.seed,
        });
        s
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn clock(&self) -> f64 {
        self.world.clock()
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    pub fn tree(&self) -> &TaskTree {
        &self.tree
    }

    pub fn transition_system(&self) -> &TransitionSystem {
        &self.ts
    }

    pub fn automaton(&self) -> &BuchiAutomaton {
        &self.ba
    }

    pub fn cache(&self) -> &ExperienceCache<f64> {
        &self.cache
    }

    /// The plan most recently installed in the tree.
    pub fn plan(&self) -> Option<&Plan<f64>> {
        self.plan.as_ref()
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn metrics(&self) -> &SessionMetrics {
        &self.metrics
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// The trace as JSON lines, one event per line.
    pub fn trace_jsonl(&self) -> String {
        trace_to_jsonl(&self.trace)
    }

    fn emit(&mut self, body: TraceBody) {
        let id = self.trace.len() as u64;
        self.trace.push(TraceEvent { id, t: self.world.clock(), body });
    }

    fn problem(&self) -> SearchProblem<'_, f64> {
        SearchProblem::new(&self.ts, &self.ba, self.world.geometry(), &self.provider)
    }

    fn goal_holds(&self, s: &SymbolicState) -> bool {
        self.problem().goal_witness(s, self.ba.initial()).is_some()
    }

    fn finish(&mut self, outcome: Outcome) {
        self.outcome = Some(outcome);
        self.metrics.success = outcome == Outcome::Success;
        self.metrics.outcome = match outcome {
            Outcome::Success => "success",
            Outcome::Timeout => "timeout",
            Outcome::Infeasible => "infeasible",
        }
        .into();
        self.metrics.completion_time_s = self.world.clock();
        self.metrics.bt_changes = self.tree.changes() as u32;
        self.metrics.path_length_m = self.world.travelled();
        self.metrics.provider_calls = self.provider.calls.load(Ordering::Relaxed);
        self.metrics.repeat_provider_calls = self.provider.repeats.load(Ordering::Relaxed);
        let metrics = self.metrics.clone();
        self.emit(TraceBody::Done { metrics });
    }

    /// Runs the planner from `state`; returns the plan and its modelled delay.
    fn compute_plan(&mut self, state: SymbolicState) -> Option<(Plan<f64>, f64)> {
        if !self.cfg.planner.experience {
            self.cache = ExperienceCache::new();
        }
        let calls0 = self.provider.calls.load(Ordering::Relaxed);
        let start = ProductState::new(state, self.ba.initial());
        let mut cache = std::mem::take(&mut self.cache);
        let result = self.cfg.planner.plan(&self.problem(), &start, &mut cache);
        self.cache = cache;
        let calls = self.provider.calls.load(Ordering::Relaxed) - calls0;
        match result {
            Ok(plan) => {
                let nodes = plan.stats.nodes_expanded + plan.stats.nodes_generated;
                let delay = calls as f64 * self.cfg.planner.latency_s + nodes as f64 * self.cfg.planner.node_cost_s;
                self.metrics.nodes_expanded += plan.stats.nodes_expanded as u64;
                Some((plan, delay))
            }
            Err(e) => {
                self.emit(TraceBody::PlanFailed { error: e.to_string() });
                self.finish(Outcome::Infeasible);
                None
            }
        }
    }

    fn start(&mut self) {
        self.started = true;
        let s0 = self.ts.initial().clone();
        self.emit(TraceBody::InitialPlanStarted { state: s0.encode() });
        let Some((plan, delay)) = self.compute_plan(s0) else { return };
        self.metrics.init_plan_time_s = delay;
        self.metrics.init_plan_cost = plan.cost;
        self.metrics.init_plan_len = plan.len() as u32;
        self.emit(TraceBody::ReplanFinished {
            actions: plan.action_names(),
            cost: plan.cost,
            delay_s: delay,
            nodes_expanded: plan.stats.nodes_expanded,
            provider_calls: plan.stats.provider_calls,
            cache_hits: plan.stats.cache_hits,
            ready_at: 0.0,
        });
        let tuples = plan_to_action_tuples(&plan);
        self.tree = TaskTree::new(self.cfg.variant.style(), &tuples);
        let diff = ReconfigureDiff { inserted: tuples.len(), ..ReconfigureDiff::default() };
        self.emit(TraceBody::PlanInstalled { actions: plan.action_names(), diff });
        self.plan = Some(plan);
        self.emit_bt();
    }

    fn emit_bt(&mut self) {
        if self.cfg.snapshot_period_s > 0.0 {
            let tree = self.tree.snapshot();
            self.emit(TraceBody::Bt { tree });
        }
    }

    /// Applies an intervention now (at the current tick boundary).
    /// Returns the simulated time it took effect.
    pub fn apply_intervention(&mut self, ev: &Intervention) -> Result<f64, SimError> {
        if self.is_done() {
            return Err(SimError::BadStatus("done".into()));
        }
        self.world.inject(ev)?;
        match ev {
            Intervention::RelocateObject { .. } => self.relocated = true,
            Intervention::AddObject { object, .. } => self.delta.add_objects.push(object.clone()),
            Intervention::RemoveObject { object } => self.delta.remove_objects.push(object.clone()),
            Intervention::AddTray { tray, docks, .. } => {
                self.delta.add_trays.push((tray.clone(), docks.keys().cloned().collect()))
            }
            Intervention::RemoveRegion { region } => self.delta.remove_regions.push(region.clone()),
        }
        self.metrics.interventions += 1;
        self.emit(TraceBody::Intervention { event: ev.clone() });
        Ok(self.world.clock())
    }

    fn apply_scripted(&mut self) {
        let now = self.world.clock();
        let mut due: Vec<(Intervention, bool)> = std::mem::take(&mut self.retry).into_iter().map(|e| (e, true)).collect();
        while self.script.front().is_some_and(|e| e.t <= now + 1e-9) {
            due.push((self.script.pop_front().expect("front exists").event, false));
        }
        for (ev, retried) in due {
            match self.apply_intervention(&ev) {
                Ok(_) => {}
                // Try again once the gripper lets go.
                Err(SimError::HeldObjectConflict(holder)) => {
                    if !retried {
                        let reason = format!("{holder} is in the gripper");
                        self.emit(TraceBody::InterventionDeferred { event: ev.clone(), reason });
                    }
                    self.retry.push(ev);
                }
                Err(e) => {
                    self.metrics.interventions_rejected += 1;
                    self.emit(TraceBody::InterventionRejected { event: ev, reason: e.to_string() });
                }
            }
        }
    }

    /// Plans from where the world will be once the in-flight action (if it
    /// remains valid) finishes, and schedules the result for delivery.
    fn replan(&mut self, reason: &str) {
        let Ok(settled) = self.world.settled_state() else {
            self.emit(TraceBody::PerceptionGap);
            return;
        };
        let state = if self.cfg.variant.online() {
            self.in_flight_post_state(&settled).unwrap_or(settled)
        } else {
            self.world.abort();
            self.frozen = true;
            self.drain_world_events();
            settled
        };
        self.metrics.replans += 1;
        self.emit(TraceBody::ReplanStarted { reason: reason.into(), state: state.encode() });
        let calls0 = self.provider.calls.load(Ordering::Relaxed);
        let Some((plan, delay)) = self.compute_plan(state) else { return };
        self.metrics.replan_provider_calls += self.provider.calls.load(Ordering::Relaxed) - calls0;
        self.metrics.total_replan_time_s += delay;
        let ready_at = self.world.clock() + delay;
        self.emit(TraceBody::ReplanFinished {
            actions: plan.action_names(),
            cost: plan.cost,
            delay_s: delay,
            nodes_expanded: plan.stats.nodes_expanded,
            provider_calls: plan.stats.provider_calls,
            cache_hits: plan.stats.cache_hits,
            ready_at,
        });
        let tuples = plan_to_action_tuples(&plan);
        self.pending = Some(Pending { ready_at, tuples, plan });
    }

    fn in_flight_post_state(&self, settled: &SymbolicState) -> Option<SymbolicState> {
        let a = self.world.active_action()?;
        let st = self.tree.running_subtree().filter(|st| st.action() == a)?;
        let labels = self.ts.label(&self.world.perceive().ok()?);
        let style = self.cfg.variant.style();
        let valid = st.tuple.running(style).is_subset(&labels) || st.tuple.pre(style).is_subset(&labels);
        if valid && self.ts.is_legal(settled, a) {
            self.ts.apply_action(settled, a).ok()
        } else {
            None
        }
    }

    fn install(&mut self, p: Pending) {
        let diff = if self.cfg.variant.online() {
            self.tree.reconfigure(&p.tuples)
        } else {
            self.frozen = false;
            self.tree.offline_rebuild(&p.tuples, &mut self.world)
        };
        self.drain_world_events();
        self.emit(TraceBody::PlanInstalled { actions: p.plan.action_names(), diff });
        self.plan = Some(p.plan);
        self.emit_bt();
    }

    fn drain_world_events(&mut self) {
        for e in self.world.drain_events() {
            let body = match e {
                WorldEvent::Started(a) => TraceBody::ActionStarted { action: a.name() },
                WorldEvent::Picked(a) => TraceBody::ActionPicked { action: a.name() },
                WorldEvent::Completed(a) => {
                    self.metrics.actions_completed += 1;
                    TraceBody::ActionCompleted { action: a.name() }
                }
                WorldEvent::Aborted(a) => {
                    self.metrics.actions_aborted += 1;
                    TraceBody::ActionAborted { action: a.name() }
                }
            };
            self.emit(body);
        }
    }

    /// Reacts to the interventions applied since the last iteration.
    fn react(&mut self) {
        let delta = std::mem::take(&mut self.delta);
        let relocated = std::mem::take(&mut self.relocated);
        if delta.is_empty() && !relocated {
            return;
        }
        let Ok(obs) = self.world.perceive() else {
            self.emit(TraceBody::PerceptionGap);
            return;
        };
        if !delta.is_empty() {
            let Ok(settled) = self.world.settled_state() else { return };
            match reconstruct_ts(&self.ts, &settled, &delta) {
                Ok(ts) => {
                    self.ts = ts;
                    self.metrics.ts_reconstructions += 1;
                    self.emit(TraceBody::TsReconstructed {
                        version: self.ts.version(),
                        objects: self.ts.objects().len(),
                        states: self.ts.state_count().to_string(),
                    });
                    self.replan("structure");
                }
                Err(e) => {
                    self.emit(TraceBody::PlanFailed { error: e.to_string() });
                    self.finish(Outcome::Infeasible);
                }
            }
            return;
        }
        if self.goal_holds(&obs) {
            self.metrics.recoveries += 1;
            self.emit(TraceBody::Recovery { subtree: None, action: None, goal: true });
            return;
        }
        let labels = self.ts.label(&obs);
        let found = match self.pending {
            // A plan in flight was made for the old world; replace it.
            Some(_) => None,
            None => self.tree.find_recovery_subtree(&labels),
        };
        match found {
            Some(i) => {
                self.metrics.recoveries += 1;
                let action = Some(self.tree.subtrees()[i].action().name());
                self.emit(TraceBody::Recovery { subtree: Some(i), action, goal: false });
            }
            None => {
                self.emit(TraceBody::RecoveryFailed { state: obs.encode() });
                self.replan("relocation");
            }
        }
    }

    /// One loop iteration. Returns false once the session has ended.
    pub fn step(&mut self) -> bool {
        if self.is_done() {
            return false;
        }
        if !self.started {
            self.start();
            if self.is_done() {
                return false;
            }
        }
        self.apply_scripted();
        self.react();
        if self.is_done() {
            return false;
        }
        let now = self.world.clock();
        if self.pending.as_ref().is_some_and(|p| p.ready_at <= now + 1e-9) {
            let p = self.pending.take().expect("pending plan");
            self.install(p);
        }

        let obs = match self.world.perceive() {
            Ok(s) => s,
            Err(_) => {
                self.emit(TraceBody::PerceptionGap);
                self.advance();
                return !self.is_done();
            }
        };
        let goal = self.goal_holds(&obs);
        if !self.frozen {
            let labels: BTreeSet<String> = self.ts.label(&obs);
            let mut gate = Gate { world: &mut self.world, hold: self.pending.is_some() };
            let mut ctx = TickContext { labels: &labels, goal, executor: &mut gate, updates: vec![] };
            let status = self.tree.tick(&mut ctx);
            self.drain_world_events();
            let running = self.tree.running_subtree().map(|s| s.action().name());
            if (status, running.clone()) != self.last_status {
                self.last_status = (status, running.clone());
                self.emit(TraceBody::TreeStatus { status, running });
            }
            if status == NodeStatus::Failure && !goal && self.pending.is_none() {
                self.replan("bt_failure");
                if self.is_done() {
                    return false;
                }
            }
        }
        let enc = self.world.perceive().map(|s| s.encode()).unwrap_or_default();
        if enc != self.last_state {
            self.last_state = enc.clone();
            self.emit(TraceBody::State { state: enc });
        }
        if goal && !self.world.busy() && self.pending.is_none() {
            self.finish(Outcome::Success);
            return false;
        }
        self.advance();
        !self.is_done()
    }

    fn advance(&mut self) {
        let period = self.cfg.snapshot_period_s;
        if period > 0.0 && self.world.clock() + 1e-9 >= self.next_snapshot {
            self.next_snapshot += period;
            let world = self.world.snapshot();
            self.emit(TraceBody::World { world });
            self.emit_bt();
        }
        self.world.step(1.0 / self.cfg.tick_hz);
        self.drain_world_events();
        if self.world.clock() > self.cfg.timeout_s + 1e-9 {
            self.finish(Outcome::Timeout);
        }
    }

    /// DOT rendering of the product graph A* explores when planning from the
    /// current settled state (or the initial state while an entity is in
    /// the gripper mid-air). Uses a copy of the experience cache and does not
    /// count towards the session's provider metrics.
    pub fn product_dot(&self) -> String {
        let problem = SearchProblem::new(&self.ts, &self.ba, self.world.geometry(), &GeometricCost);
        let s = self.world.settled_state().unwrap_or_else(|_| self.ts.initial().clone());
        let start = ProductState::new(s, self.ba.initial());
        let mut graph = PartialGraph::new(self.world.geometry().version());
        let _ = search(&problem, &start, &mut self.cache.clone(), &mut graph, true);
        graph.to_dot()
    }

    /// Steps until the session ends.
    pub fn run(&mut self) -> &SessionMetrics {
        while self.step() {}
        &self.metrics
    }
}

pub fn trace_to_jsonl(trace: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in trace {
        out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
        out.push('\n');
    }
    out
}

/// Runs a scripted session to completion.
pub fn run_session(scenario: &Scenario, cfg: SessionConfig, script: &InterventionScript) -> (SessionMetrics, Vec<TraceEvent>) {
    let mut s = Session::new(scenario, cfg, script);
    s.run();
    (s.metrics, s.trace)
}
