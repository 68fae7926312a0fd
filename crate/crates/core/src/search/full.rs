use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::domain::{ActionSpec, Place, StateIndexer, SymbolicState, TrayPose};
use crate::num::{Ordered, Scalar};

use super::{heuristic_ba_distance, BaDistance, ExperienceCache, Plan, PlanStats, PlanStep, ProductState, SearchError, SearchProblem};

/// Node budget of the full construction.
pub const MAX_FULL_NODES: u128 = 1_000_000;

/// The complete product graph, materialized up front.
///
/// Construction compares every ordered pair of TS states and, for adjacent
/// ones, every pair of BA states: O(|S|² |Q_b|²) work.
#[derive(Debug, Clone)]
pub struct FullGraph<T> {
    indexer: StateIndexer,
    nq: usize,
    adj: Vec<Vec<(u32, T)>>,
    ts_edges: usize,
    pub construct_time_s: f64,
}

impl<T: Scalar> FullGraph<T> {
    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    /// Number of TS transitions (ordered state pairs one action apart).
    pub fn ts_edge_count(&self) -> usize {
        self.ts_edges
    }

    pub fn node_id(&self, p: &ProductState) -> Option<usize> {
        Some(self.indexer.index(&p.ts)? * self.nq + p.ba)
    }

    pub fn product_state(&self, id: usize) -> ProductState {
        ProductState::new(self.indexer.state(id / self.nq), id % self.nq)
    }

    pub fn edges(&self, id: usize) -> &[(u32, T)] {
        &self.adj[id]
    }
}

/// Builds every node and edge of the product graph. Edge costs go through
/// `cache` like in the lazy search.
pub fn full_graph_construct<T: Scalar>(
    problem: &SearchProblem<'_, T>,
    cache: &mut ExperienceCache<T>,
) -> Result<FullGraph<T>, SearchError> {
    let clock = Instant::now();
    let ts = problem.ts;
    let ba = problem.ba;
    let nq = ba.num_states();
    let nodes = ts.state_count().saturating_mul(nq as u128);
    if nodes > MAX_FULL_NODES {
        return Err(SearchError::GraphTooLarge { nodes, limit: MAX_FULL_NODES });
    }
    let indexer = ts.indexer();
    let n = indexer.len();
    let states: Vec<SymbolicState> = indexer.states().collect();

    // Digit vectors of the mixed-radix encoding: one per object, one per tray.
    let objects: Vec<_> = ts.objects().iter().cloned().collect();
    let regions = ts.regions();
    let trays: Vec<_> = ts.trays().iter().map(|(t, d)| (t.clone(), d.iter().cloned().collect::<Vec<_>>())).collect();
    let width = objects.len() + trays.len();
    let mut digits = vec![0u16; n * width];
    for (i, s) in states.iter().enumerate() {
        let row = &mut digits[i * width..(i + 1) * width];
        for (k, o) in objects.iter().enumerate() {
            let r = s.region_of(o).expect("planning state");
            row[k] = regions.binary_search(r).expect("known region") as u16;
        }
        for (k, (t, docks)) in trays.iter().enumerate() {
            let d = s.dock_of(t).expect("planning state");
            row[objects.len() + k] = docks.iter().position(|x| x == d).expect("known dock") as u16;
        }
    }
    let ba_next: Vec<Vec<Vec<usize>>> = states
        .iter()
        .map(|s| {
            let labels = problem.label(s);
            (0..nq).map(|q| ba.successors(q, &labels)).collect()
        })
        .collect();

    let mut adj: Vec<Vec<(u32, T)>> = vec![Vec::new(); n * nq];
    let mut ts_edges = 0;
    for i in 0..n {
        let di = &digits[i * width..(i + 1) * width];
        let enc = states[i].encode();
        for j in 0..n {
            if i == j {
                continue;
            }
            let dj = &digits[j * width..(j + 1) * width];
            let mut diff = None;
            let mut count = 0;
            for k in 0..width {
                if di[k] != dj[k] {
                    count += 1;
                    diff = Some(k);
                    if count > 1 {
                        break;
                    }
                }
            }
            let (1, Some(k)) = (count, diff) else { continue };
            ts_edges += 1;
            let action = if k < objects.len() {
                ActionSpec::MoveObject { object: objects[k].clone(), dest: regions[dj[k] as usize].clone() }
            } else {
                let (t, docks) = &trays[k - objects.len()];
                ActionSpec::MoveRegion { tray: t.clone(), dock: docks[dj[k] as usize].clone() }
            };
            let cost = problem.edge_cost(cache, &states[i], &enc, &action);
            for qi in 0..nq {
                for qj in 0..nq {
                    if ba_next[i][qi].contains(&qj) {
                        adj[i * nq + qi].push(((j * nq + qj) as u32, cost));
                    }
                }
            }
        }
    }
    Ok(FullGraph { indexer, nq, adj, ts_edges, construct_time_s: clock.elapsed().as_secs_f64() })
}

/// The unique action leading from `s` to `s2`, if they are one move apart.
pub fn action_between(s: &SymbolicState, s2: &SymbolicState) -> Option<ActionSpec> {
    let mut found = None;
    for (o, p) in &s.assignment {
        match (p, s2.assignment.get(o)?) {
            (a, b) if a == b => {}
            (Place::Region(_), Place::Region(dest)) if found.is_none() => {
                found = Some(ActionSpec::MoveObject { object: o.clone(), dest: dest.clone() })
            }
            _ => return None,
        }
    }
    for (t, p) in &s.tray_docks {
        match (p, s2.tray_docks.get(t)?) {
            (a, b) if a == b => {}
            (TrayPose::Dock(_), TrayPose::Dock(d)) if found.is_none() => {
                found = Some(ActionSpec::MoveRegion { tray: t.clone(), dock: d.clone() })
            }
            _ => return None,
        }
    }
    found
}

/// Best-first search over a materialized graph.
pub fn search_full<T: Scalar>(
    problem: &SearchProblem<'_, T>,
    graph: &FullGraph<T>,
    start: &ProductState,
    use_heuristic: bool,
) -> Result<Plan<T>, SearchError> {
    let clock = Instant::now();
    let root = graph.node_id(start).ok_or_else(|| SearchError::InvalidStart(start.key()))?;
    let dist = BaDistance::new(problem.ba);
    let c_min = problem.c_min();
    let n = graph.node_count();
    let mut g: Vec<Option<T>> = vec![None; n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut closed = vec![false; n];
    let h = |id: usize| -> Option<T> {
        if !use_heuristic {
            return Some(T::zero());
        }
        let p = graph.product_state(id);
        heuristic_ba_distance(p.ba, &problem.label(&p.ts), problem.ba, &dist, c_min)
    };
    let mut open = BinaryHeap::new();
    g[root] = Some(T::zero());
    if let Some(h0) = h(root) {
        open.push((Reverse(Ordered(h0)), Ordered(T::zero()), Reverse(root)));
    }
    let mut expanded = 0;
    while let Some((_, Ordered(gv), Reverse(id))) = open.pop() {
        if closed[id] || g[id].is_some_and(|best| best < gv) {
            continue;
        }
        closed[id] = true;
        let p = graph.product_state(id);
        if let Some(acc) = problem.goal_witness(&p.ts, p.ba) {
            let mut chain = vec![id];
            while let Some(prev) = parent[*chain.last().unwrap()] {
                chain.push(prev);
            }
            chain.reverse();
            let steps = chain
                .windows(2)
                .map(|w| {
                    let (from, to) = (graph.product_state(w[0]), graph.product_state(w[1]));
                    let action = action_between(&from.ts, &to.ts).expect("adjacent states");
                    let cost = graph.edges(w[0]).iter().find(|e| e.0 as usize == w[1]).expect("edge").1;
                    PlanStep { from, action, to, cost }
                })
                .collect();
            let stats = PlanStats {
                nodes_expanded: expanded,
                nodes_generated: n,
                provider_calls: 0,
                cache_hits: 0,
                wall_time_s: clock.elapsed().as_secs_f64(),
                cost: gv.as_f64(),
            };
            return Ok(Plan { start: start.clone(), steps, cost: gv, accepting: acc, stats });
        }
        expanded += 1;
        for &(t, c) in graph.edges(id) {
            let t = t as usize;
            let g2 = gv + c;
            if closed[t] || g[t].is_some_and(|old| old <= g2) {
                continue;
            }
            let Some(ht) = h(t) else { continue };
            g[t] = Some(g2);
            parent[t] = Some(id);
            open.push((Reverse(Ordered(g2 + ht)), Ordered(g2), Reverse(t)));
        }
    }
    Err(SearchError::NoPlan)
}

/// Full construction followed by search; stats cover both phases.
pub fn plan_full<T: Scalar>(
    problem: &SearchProblem<'_, T>,
    start: &ProductState,
    cache: &mut ExperienceCache<T>,
    use_heuristic: bool,
) -> Result<Plan<T>, SearchError> {
    let (hits0, misses0) = (cache.hits(), cache.misses());
    let graph = full_graph_construct(problem, cache)?;
    let mut plan = search_full(problem, &graph, start, use_heuristic)?;
    plan.stats.wall_time_s += graph.construct_time_s;
    plan.stats.provider_calls = cache.misses() - misses0;
    plan.stats.cache_hits = cache.hits() - hits0;
    Ok(plan)
}
