use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::sync::Arc;
use std::time::Instant;

use crate::ltl::{BaState, BuchiAutomaton};
use crate::num::{Ordered, Scalar};

use super::{ExperienceCache, PartialGraph, Plan, PlanStats, PlanStep, ProductState, SearchError, SearchProblem};

/// Unweighted BA distances to acceptance, precomputed per automaton.
#[derive(Debug, Clone)]
pub struct BaDistance {
    dist: Vec<Option<usize>>,
}

impl BaDistance {
    pub fn new(ba: &BuchiAutomaton) -> Self {
        Self { dist: ba.accepting_distances() }
    }

    pub fn get(&self, q: BaState) -> Option<usize> {
        self.dist[q]
    }
}

/// Lower bound on the remaining cost from (s, q); `None` means no goal is
/// reachable.
///
/// Zero when q is accepting or (s, q) is already a goal. Otherwise at least
/// one more action, costing at least `c_min`, is needed, provided the BA can
/// still move from q towards acceptance. The final stutter may advance the
/// automaton any number of steps for free, so BA distance only prunes.
pub fn heuristic_ba_distance<T: Scalar>(
    q: BaState,
    labels: &BTreeSet<String>,
    ba: &BuchiAutomaton,
    dist: &BaDistance,
    c_min: T,
) -> Option<T> {
    if ba.is_accepting(q) || ba.stutter_accepting(q, labels).is_some() {
        return Some(T::zero());
    }
    ba.successors(q, labels).into_iter().any(|q2| dist.get(q2).is_some()).then_some(c_min)
}

struct Entry<T> {
    f: Ordered<T>,
    g: Ordered<T>,
    key: Arc<str>,
    id: usize,
}

impl<T: Scalar> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Entry<T> {}

impl<T: Scalar> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Entry<T> {
    // Max-heap: lowest f first, then highest g, then smallest key.
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.cmp(&self.f).then(self.g.cmp(&other.g)).then_with(|| other.key.cmp(&self.key))
    }
}

/// Best-first search over `graph`, extending it lazily. With
/// `use_heuristic = false` this is Dijkstra.
pub fn search<T: Scalar>(
    problem: &SearchProblem<'_, T>,
    start: &ProductState,
    cache: &mut ExperienceCache<T>,
    graph: &mut PartialGraph<T>,
    use_heuristic: bool,
) -> Result<Plan<T>, SearchError> {
    let clock = Instant::now();
    let (hits0, misses0) = (cache.hits(), cache.misses());
    let dist = BaDistance::new(problem.ba);
    let c_min = problem.c_min();
    let h = |graph: &PartialGraph<T>, id: usize| -> Option<T> {
        if !use_heuristic {
            return Some(T::zero());
        }
        heuristic_ba_distance(graph.node(id).state.ba, graph.labels(id), problem.ba, &dist, c_min)
    };

    let root = graph.intern(start.clone(), problem);
    let mut g: Vec<Option<T>> = Vec::new();
    let mut parent: Vec<Option<(usize, usize)>> = Vec::new();
    let mut closed: Vec<bool> = Vec::new();
    let grow = |v: &mut Vec<Option<T>>, p: &mut Vec<Option<(usize, usize)>>, c: &mut Vec<bool>, n: usize| {
        if v.len() < n {
            v.resize(n, None);
            p.resize(n, None);
            c.resize(n, false);
        }
    };
    grow(&mut g, &mut parent, &mut closed, graph.len());
    g[root] = Some(T::zero());

    let mut open = BinaryHeap::new();
    let mut expanded = 0usize;
    if let Some(h0) = h(graph, root) {
        open.push(Entry { f: Ordered(h0), g: Ordered(T::zero()), key: graph.node(root).key.clone(), id: root });
    }
    while let Some(Entry { g: Ordered(gv), id, .. }) = open.pop() {
        if closed[id] || g[id].is_some_and(|best| best < gv) {
            continue;
        }
        closed[id] = true;
        if let Some(acc) = problem.goal_witness_labeled(graph.labels(id), graph.node(id).state.ba) {
            let mut steps = Vec::new();
            let mut cur = id;
            while let Some((p, e)) = parent[cur] {
                let edge = &graph.node(p).edges[e];
                steps.push(PlanStep {
                    from: graph.node(p).state.clone(),
                    action: edge.action.clone(),
                    to: graph.node(cur).state.clone(),
                    cost: edge.cost,
                });
                cur = p;
            }
            steps.reverse();
            let stats = PlanStats {
                nodes_expanded: expanded,
                nodes_generated: graph.len(),
                provider_calls: cache.misses() - misses0,
                cache_hits: cache.hits() - hits0,
                wall_time_s: clock.elapsed().as_secs_f64(),
                cost: gv.as_f64(),
            };
            return Ok(Plan { start: start.clone(), steps, cost: gv, accepting: acc, stats });
        }
        expanded += 1;
        let n_edges = graph.expand(id, problem, cache).len();
        grow(&mut g, &mut parent, &mut closed, graph.len());
        for e in 0..n_edges {
            let edge = &graph.node(id).edges[e];
            let (t, cost) = (edge.target, edge.cost);
            if closed[t] {
                continue;
            }
            let g2 = gv + cost;
            if g[t].is_some_and(|old| old <= g2) {
                continue;
            }
            let Some(ht) = h(graph, t) else { continue };
            g[t] = Some(g2);
            parent[t] = Some((id, e));
            open.push(Entry { f: Ordered(g2 + ht), g: Ordered(g2), key: graph.node(t).key.clone(), id: t });
        }
    }
    Err(SearchError::NoPlan)
}

/// A* with the BA-distance heuristic on a fresh partial graph.
pub fn plan_astar<T: Scalar>(
    problem: &SearchProblem<'_, T>,
    start: &ProductState,
    cache: &mut ExperienceCache<T>,
) -> Result<Plan<T>, SearchError> {
    let mut graph = PartialGraph::new(problem.geometry.version());
    search(problem, start, cache, &mut graph, true)
}

/// Uniform-cost search on a fresh partial graph.
pub fn plan_dijkstra<T: Scalar>(
    problem: &SearchProblem<'_, T>,
    start: &ProductState,
    cache: &mut ExperienceCache<T>,
) -> Result<Plan<T>, SearchError> {
    let mut graph = PartialGraph::new(problem.geometry.version());
    search(problem, start, cache, &mut graph, false)
}
