//! End-to-end acceptance checks. Prints one PASS/FAIL line per check
//! and exits non-zero if any fails.

use std::time::Instant;

use ltlbt_cli::bench::{self, run_bt_bench, run_reposition, scaling_sample, InterventionBench, InterventionKind};
use ltlbt_core::bt::{ActionProgress, ActionTuple, ConditionStyle, Executor, TaskTree};
use ltlbt_core::domain::{ActionSpec, SymbolicState, TransitionSystem};
use ltlbt_core::ltl::{accepts_lasso, build_buchi, enumerate_lassos, formula_holds_on_lasso, parse_formula};
use ltlbt_core::scenario::{random_scaling_scenario, three_block, three_block_tray, Scenario};
use ltlbt_core::search::*;
use ltlbt_core::sim::{BtVariant, PlannerConfig, SessionMetrics};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = (bool, String);

fn problem_parts(sc: &Scenario) -> (TransitionSystem, ltlbt_core::ltl::BuchiAutomaton, ltlbt_core::Geometry64) {
    (sc.transition_system(), build_buchi(&sc.formula().to_nnf()), sc.geometry())
}

fn pa_cardinality() -> Check {
    let mut counts = Vec::new();
    let mut t6 = 0.0;
    for n in 2..=6 {
        let sc = random_scaling_scenario(0, 5, n);
        let (ts, ba, geo) = problem_parts(&sc);
        let p = SearchProblem::new(&ts, &ba, &geo, &GeometricCost);
        let t0 = Instant::now();
        match full_graph_construct(&p, &mut ExperienceCache::new()) {
            Ok(g) => counts.push(g.node_count()),
            Err(e) => return (false, format!("|O|={n}: {e}")),
        }
        if n == 6 {
            t6 = t0.elapsed().as_secs_f64();
        }
    }
    let ok = counts == [50, 250, 1250, 6250, 31250] && t6 < 300.0;
    (ok, format!("nodes {counts:?}, |O|=6 built in {t6:.2} s"))
}

fn partial_vs_full() -> Check {
    let seeds: Vec<u64> = (0..10).collect();
    let ratio = |n: usize| {
        let samples: Vec<_> = seeds.iter().map(|&s| scaling_sample(s, 5, n)).collect();
        let failed = samples.iter().any(|s| !s.error.is_empty());
        let all_le = samples.iter().all(|s| s.partial_time_s <= s.full_time_s);
        let r = bench::Stat::of(&samples.iter().map(|s| s.full_time_s / s.partial_time_s).collect::<Vec<_>>()).mean;
        (failed, all_le, r)
    };
    let (f3, _, r3) = ratio(3);
    let (f6, le6, r6) = ratio(6);
    let ok = !f3 && !f6 && le6 && r6 > r3;
    (ok, format!("partial<=full on all |O|=6 geometries: {le6}; full/partial ratio {r3:.1} (|O|=3) -> {r6:.1} (|O|=6)"))
}

fn small_instance(seed: u64) -> Scenario {
    let n_regions = 2 + (seed % 3) as usize;
    let n_objects = 1 + (seed / 3 % 3) as usize;
    let mut sc = random_scaling_scenario(5000 + seed, n_regions, n_objects);
    sc.macros.push("all_obj_in_r1".into());
    sc.formula = match seed % 4 {
        0 => "F G all_obj_in_r2",
        1 => "F G all_obj_in_r1 | F (o1r2 & X all_obj_in_r2)",
        2 => "F all_obj_in_r1 & F G all_obj_in_r2",
        _ => "F (o1r1 & X F G all_obj_in_r2)",
    }
    .into();
    sc
}

fn optimality() -> Check {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for seed in 0..50 {
        let sc = small_instance(seed);
        let (ts, ba, geo) = problem_parts(&sc);
        let p = SearchProblem::new(&ts, &ba, &geo, &GeometricCost);
        let start = ProductState::new(ts.initial().clone(), ba.initial());
        let a = plan_astar(&p, &start, &mut ExperienceCache::new());
        let d = plan_full(&p, &start, &mut ExperienceCache::new(), false);
        match (a, d) {
            (Ok(a), Ok(d)) => {
                if a.validate(&p).is_err() {
                    return (false, format!("{}: invalid A* plan", sc.name));
                }
                worst = worst.max((a.cost - d.cost).abs() / d.cost.abs().max(1e-12));
                compared += 1;
            }
            (Err(SearchError::NoPlan), Err(SearchError::NoPlan)) => {}
            (a, d) => return (false, format!("{}: A* {:?} vs Dijkstra {:?}", sc.name, a.map(|p| p.cost), d.map(|p| p.cost))),
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    (worst <= 1e-9 && secs < 60.0, format!("{compared}/50 with plans, max relative gap {worst:.1e}, {secs:.2} s"))
}

fn mean(rows: &[&SessionMetrics], f: impl Fn(&SessionMetrics) -> f64) -> f64 {
    rows.iter().map(|r| f(r)).sum::<f64>() / rows.len().max(1) as f64
}

fn experience_savings() -> Check {
    let seeds: Vec<u64> = (0..30).collect();
    let planners = [PlannerConfig::astar_exp().with_latency_ms(1.0), PlannerConfig::astar().with_latency_ms(1.0)];
    let rows = run_reposition(&three_block_tray(), &seeds, &planners);
    let exp: Vec<&SessionMetrics> = rows.iter().filter(|r| r.planner == "astar_exp").collect();
    let plain: Vec<&SessionMetrics> = rows.iter().filter(|r| r.planner == "astar").collect();
    let repeats: u64 = exp.iter().map(|r| r.repeat_provider_calls).sum();
    let replanned = exp.iter().filter(|r| r.replans > 0).count();
    let (te, tp) = (mean(&exp, |r| r.total_replan_time_s), mean(&plain, |r| r.total_replan_time_s));
    let ok = repeats == 0 && replanned > 0 && tp > 0.0 && te < 0.25 * tp;
    (
        ok,
        format!(
            "{replanned}/30 seeds replanned, repeated provider calls {repeats}, mean replan time {te:.4} s vs {tp:.4} s ({:.1}%)",
            100.0 * te / tp
        ),
    )
}

fn intervention_medians() -> Check {
    let bench = InterventionBench::table_defaults(three_block_tray());
    let rows = bench.run();
    let mut ok = bench.timeout_s == 600.0;
    let mut parts = Vec::new();
    for (kind, want) in [(InterventionKind::Relocate, 0.0), (InterventionKind::Add, 1.0), (InterventionKind::Remove, 1.0)] {
        let script = match kind {
            InterventionKind::Relocate => "relocate_object",
            InterventionKind::Add => "add_object",
            InterventionKind::Remove => "remove_object",
        };
        let cell: Vec<&SessionMetrics> = rows.iter().filter(|r| r.script == script).collect();
        let med = bench::median(&cell.iter().map(|r| r.replans as f64).collect::<Vec<_>>());
        let wins = cell.iter().filter(|r| r.success).count();
        ok &= cell.len() == 30 && wins == 30 && med == want;
        parts.push(format!("{} median {med} success {wins}/{}", kind.name(), cell.len()));
    }
    (ok, parts.join(", "))
}

fn tray_utilization() -> Check {
    let sc = three_block_tray();
    let (ts, ba, geo) = problem_parts(&sc);
    let p = SearchProblem::new(&ts, &ba, &geo, &GeometricCost);
    let start = ProductState::new(ts.initial().clone(), ba.initial());
    let Ok(plan) = plan_astar(&p, &start, &mut ExperienceCache::new()) else {
        return (false, "no plan".into());
    };
    let acts = plan.actions();
    let loads = acts.iter().take_while(|a| matches!(a, ActionSpec::MoveObject { dest, .. } if dest.as_str() == "r3")).count();
    let moves_tray = matches!(acts.get(loads), Some(ActionSpec::MoveRegion { .. }));
    let unloads = acts
        .iter()
        .skip(loads + 1)
        .filter(|a| matches!(a, ActionSpec::MoveObject { dest, .. } if dest.as_str() == "r2"))
        .count();
    let shape = loads == 3 && moves_tray && unloads == 3 && acts.len() == 7;

    // Dijkstra oracle on the same world with the tray pinned to its dock.
    let mut pinned = sc.clone();
    let dock = pinned.trays[0].dock.clone();
    pinned.trays[0].docks.retain(|d| d.id == dock);
    let (ts2, ba2, geo2) = problem_parts(&pinned);
    let p2 = SearchProblem::new(&ts2, &ba2, &geo2, &GeometricCost);
    let start2 = ProductState::new(ts2.initial().clone(), ba2.initial());
    let no_tray = plan_full(&p2, &start2, &mut ExperienceCache::new(), false).map(|p| p.cost).unwrap_or(f64::INFINITY);
    let full = plan_full(&p, &start, &mut ExperienceCache::new(), false).map(|p| p.cost).unwrap_or(f64::NAN);
    let optimal = (plan.cost - full).abs() <= 1e-9 * full;
    (
        shape && optimal && plan.cost < no_tray,
        format!(
            "{} actions (3 loads, tray move, 3 unloads: {shape}), cost {:.4} = Dijkstra {full:.4}, best no-tray {no_tray:.4}",
            acts.len(),
            plan.cost
        ),
    )
}

fn ltl_agreement() -> Check {
    let t0 = Instant::now();
    let corpus = ["p", "!p", "X p", "F p", "G p", "F G p", "G F p", "p U q", "p R q", "F (p & q)"];
    let words = enumerate_lassos(&["p", "q"], 3, 3);
    let mut disagreements = 0;
    for text in corpus {
        let f = parse_formula(text).expect("corpus parses");
        let ba = build_buchi(&f.to_nnf());
        disagreements += words.iter().filter(|w| accepts_lasso(&ba, w) != formula_holds_on_lasso(&f, w)).count();
    }
    let secs = t0.elapsed().as_secs_f64();
    (
        disagreements == 0 && secs < 120.0,
        format!("{} formulas x {} lassos, {disagreements} disagreements, {secs:.2} s", corpus.len(), words.len()),
    )
}

fn bt_variant_ordering() -> Check {
    let seeds: Vec<u64> = (0..10).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for sc in [three_block(), three_block_tray()] {
        let rows = run_bt_bench(&sc, &seeds, PlannerConfig::astar_exp().with_latency_ms(1.0));
        let by = |v: BtVariant| -> Vec<&SessionMetrics> { rows.iter().filter(|r| r.variant == v.name()).collect() };
        let (action, state, offline) =
            (by(BtVariant::OnlineAction), by(BtVariant::OnlineState), by(BtVariant::OfflineAction));
        let (ca, cs) = (mean(&action, |r| r.bt_changes as f64), mean(&state, |r| r.bt_changes as f64));
        let mut replanned = 0;
        let mut ordered = true;
        for (on, off) in action.iter().zip(&offline) {
            assert_eq!(on.seed, off.seed);
            if on.replans + off.replans > 0 {
                replanned += 1;
                ordered &= off.completion_time_s >= on.completion_time_s;
            }
        }
        ok &= rows.iter().all(|r| r.success) && ca < cs && ordered;
        parts.push(format!(
            "{}: changes {ca:.2} (online_action) vs {cs:.2} (online_state), offline >= online on {replanned} replanning seeds: {ordered}",
            sc.name
        ));
    }
    (ok, parts.join("; "))
}

struct Idle;

impl Executor for Idle {
    fn progress(&self, _: &ActionSpec) -> ActionProgress {
        ActionProgress::Idle
    }
    fn start(&mut self, _: &ActionSpec) -> bool {
        true
    }
    fn acknowledge(&mut self, _: &ActionSpec) {}
    fn abort(&mut self) {}
    fn busy(&self) -> bool {
        false
    }
}

fn walk(ts: &TransitionSystem, from: &SymbolicState, len: usize, rng: &mut ChaCha8Rng) -> Vec<ActionTuple> {
    let mut s = from.clone();
    let mut out = Vec::new();
    for _ in 0..len {
        let a = ts.enumerate_actions(&s).choose(rng).expect("actions exist").clone();
        let t = ts.apply_action(&s, &a).expect("legal");
        out.push(ActionTuple::new(a, s, t.clone()));
        s = t;
    }
    out
}

fn reconfiguration_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let scenarios = [three_block(), three_block_tray()];
    let mut mismatches = 0;
    for i in 0..200 {
        let ts = scenarios[i % 2].transition_system();
        let style = if rng.gen_bool(0.5) { ConditionStyle::Action } else { ConditionStyle::State };
        let old = walk(&ts, ts.initial(), rng.gen_range(0..9), &mut rng);
        let new = match rng.gen_range(0..3) {
            // Suffix of the old plan behind a fresh detour.
            0 if !old.is_empty() => {
                let cut = rng.gen_range(0..old.len());
                let mut p = old[cut..].to_vec();
                let mut s = old[cut].source.clone();
                for _ in 0..rng.gen_range(0..3) {
                    let Some(prev) = walk(&ts, &s, 1, &mut rng).pop() else { break };
                    // Prepend the reverse of a random step so the plan still chains.
                    let back = ActionTuple::new(
                        ts.enumerate_actions(&prev.target)
                            .into_iter()
                            .find(|a| ts.apply_action(&prev.target, a).ok().as_ref() == Some(&s))
                            .expect("moves are reversible"),
                        prev.target.clone(),
                        s.clone(),
                    );
                    p.insert(0, back);
                    s = prev.target;
                }
                p
            }
            1 => old.clone(),
            _ => {
                let len = rng.gen_range(0..9);
                walk(&ts, ts.initial(), len, &mut rng)
            }
        };
        let mut online = TaskTree::new(style, &old);
        online.reconfigure(&new);
        let mut offline = TaskTree::new(style, &old);
        offline.offline_rebuild(&new, &mut Idle);
        if online.actions() != offline.actions() {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("200 random plan pairs, {mismatches} mismatches"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("product automaton cardinality", pa_cardinality),
        ("partial vs full scaling", partial_vs_full),
        ("A* optimality", optimality),
        ("experience savings", experience_savings),
        ("intervention medians", intervention_medians),
        ("tray utilization", tray_utilization),
        ("LTL lasso agreement", ltl_agreement),
        ("BT variant ordering", bt_variant_ordering),
        ("reconfiguration equivalence", reconfiguration_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let (ok, detail) = check();
        failed += usize::from(!ok);
        println!(
            "{} {}. {name}: {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            t0.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
