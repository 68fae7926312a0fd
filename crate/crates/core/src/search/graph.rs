use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{macro_region, ActionSpec, SymbolicState, TransitionSystem, WorldGeometry};
use crate::ltl::{BaState, BuchiAutomaton};
use crate::num::Scalar;

use super::{CostProvider, ExperienceCache};

/// Product automaton node (s, q_b).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductState {
    pub ts: SymbolicState,
    pub ba: BaState,
}

impl ProductState {
    pub fn new(ts: SymbolicState, ba: BaState) -> Self {
        Self { ts, ba }
    }

    /// `<state encoding>|<ba state>`.
    pub fn key(&self) -> String {
        format!("{}|{}", self.ts.encode(), self.ba)
    }
}

impl fmt::Display for ProductState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.ts, self.ba)
    }
}

/// Everything a query reads but does not own.
pub struct SearchProblem<'a, T: Scalar> {
    pub ts: &'a TransitionSystem,
    pub ba: &'a BuchiAutomaton,
    pub geometry: &'a WorldGeometry<T>,
    pub provider: &'a dyn CostProvider<T>,
}

impl<T: Scalar> Clone for SearchProblem<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T: Scalar> Copy for SearchProblem<'_, T> {}

impl<'a, T: Scalar> SearchProblem<'a, T> {
    pub fn new(
        ts: &'a TransitionSystem,
        ba: &'a BuchiAutomaton,
        geometry: &'a WorldGeometry<T>,
        provider: &'a dyn CostProvider<T>,
    ) -> Self {
        Self { ts, ba, geometry, provider }
    }

    /// Labels of `s` restricted to the atoms the automaton reads.
    pub fn label(&self, s: &SymbolicState) -> BTreeSet<String> {
        let atoms = self.ba.atoms();
        if atoms.iter().all(|a| macro_region(a).is_some()) {
            // Fast path for goals phrased purely in macros.
            return atoms.iter().filter(|a| self.ts.label_holds(a, s)).cloned().collect();
        }
        let mut l = self.ts.label(s);
        l.retain(|a| atoms.contains(a));
        l
    }

    /// Accepting BA state that makes (s, q) a goal: once the plan ends in
    /// s, the stuttered word L(s)^ω must be accepted from q, and the witness
    /// is an accepting state that run visits forever.
    pub fn goal_witness(&self, s: &SymbolicState, q: BaState) -> Option<BaState> {
        self.goal_witness_labeled(&self.label(s), q)
    }

    pub(crate) fn goal_witness_labeled(&self, labels: &BTreeSet<String>, q: BaState) -> Option<BaState> {
        self.ba.stutter_accepting(q, labels)
    }

    /// Edge cost through the cache.
    pub fn edge_cost(&self, cache: &mut ExperienceCache<T>, s: &SymbolicState, enc: &str, a: &ActionSpec) -> T {
        cache.get_or_insert_with(enc, &a.name(), self.geometry.version(), || {
            self.provider.cost(self.geometry, s, a)
        })
    }

    pub fn c_min(&self) -> T {
        self.provider.c_min(self.geometry)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge<T> {
    pub target: usize,
    pub action: ActionSpec,
    pub cost: T,
}

#[derive(Debug, Clone)]
pub struct Node<T> {
    pub state: ProductState,
    pub key: Arc<str>,
    pub expanded: bool,
    pub edges: Vec<Edge<T>>,
    ts: usize,
}

/// Per TS state data shared by all product nodes over it.
#[derive(Debug, Clone)]
struct TsEntry<T> {
    state: SymbolicState,
    enc: Arc<str>,
    labels: BTreeSet<String>,
    /// (action, successor entry, cost), filled on first expansion.
    succ: Option<Vec<(ActionSpec, usize, T)>>,
}

/// Lazily constructed fragment of the product automaton.
#[derive(Debug, Clone)]
pub struct PartialGraph<T> {
    nodes: Vec<Node<T>>,
    index: HashMap<(usize, BaState), usize>,
    ts: Vec<TsEntry<T>>,
    ts_index: HashMap<Arc<str>, usize>,
    version: u64,
}

impl<T: Scalar> PartialGraph<T> {
    pub fn new(version: u64) -> Self {
        Self { nodes: Vec::new(), index: HashMap::new(), ts: Vec::new(), ts_index: HashMap::new(), version }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &Node<T> {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    /// Labels (restricted to the automaton's atoms) of node `id`'s TS state.
    pub fn labels(&self, id: usize) -> &BTreeSet<String> {
        &self.ts[self.nodes[id].ts].labels
    }

    pub fn find(&self, key: &str) -> Option<usize> {
        let (enc, q) = key.rsplit_once('|')?;
        let ts = *self.ts_index.get(enc)?;
        self.index.get(&(ts, q.parse().ok()?)).copied()
    }

    pub fn expanded_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.expanded).count()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.edges.len()).sum()
    }

    fn intern_ts(&mut self, state: SymbolicState, enc: Arc<str>, problem: &SearchProblem<'_, T>) -> usize {
        if let Some(&id) = self.ts_index.get(&enc) {
            return id;
        }
        let id = self.ts.len();
        let labels = problem.label(&state);
        self.ts_index.insert(enc.clone(), id);
        self.ts.push(TsEntry { state, enc, labels, succ: None });
        id
    }

    fn intern_node(&mut self, ts: usize, ba: BaState) -> usize {
        if let Some(&id) = self.index.get(&(ts, ba)) {
            return id;
        }
        let id = self.nodes.len();
        let entry = &self.ts[ts];
        let key: Arc<str> = format!("{}|{ba}", entry.enc).into();
        self.index.insert((ts, ba), id);
        self.nodes.push(Node { state: ProductState::new(entry.state.clone(), ba), key, expanded: false, edges: Vec::new(), ts });
        id
    }

    /// Id of `state`, inserting an unexpanded node if needed.
    pub fn intern(&mut self, state: ProductState, problem: &SearchProblem<'_, T>) -> usize {
        let enc: Arc<str> = state.ts.encode().into();
        let ts = self.intern_ts(state.ts, enc, problem);
        self.intern_node(ts, state.ba)
    }

    fn expand_ts(&mut self, ts: usize, problem: &SearchProblem<'_, T>, cache: &mut ExperienceCache<T>) {
        if self.ts[ts].succ.is_some() {
            return;
        }
        let s = self.ts[ts].state.clone();
        let enc = self.ts[ts].enc.clone();
        let mut succ = Vec::new();
        for a in problem.ts.enumerate_actions(&s) {
            let s2 = problem.ts.apply_action(&s, &a).expect("enumerated action is legal");
            let cost = problem.edge_cost(cache, &s, &enc, &a);
            let enc2: Arc<str> = s2.encode().into();
            let t = self.intern_ts(s2, enc2, problem);
            succ.push((a, t, cost));
        }
        self.ts[ts].succ = Some(succ);
    }

    /// Expands node `id` once (BA guard read on
    /// the source label) and returns its edges.
    pub fn expand(&mut self, id: usize, problem: &SearchProblem<'_, T>, cache: &mut ExperienceCache<T>) -> &[Edge<T>] {
        if !self.nodes[id].expanded {
            let ts = self.nodes[id].ts;
            let next_q = problem.ba.successors(self.nodes[id].state.ba, &self.ts[ts].labels);
            let mut edges = Vec::new();
            if !next_q.is_empty() {
                self.expand_ts(ts, problem, cache);
                let succ = self.ts[ts].succ.take().expect("expanded");
                for (a, t, cost) in &succ {
                    for &q2 in &next_q {
                        let target = self.intern_node(*t, q2);
                        edges.push(Edge { target, action: a.clone(), cost: *cost });
                    }
                }
                self.ts[ts].succ = Some(succ);
            }
            let node = &mut self.nodes[id];
            node.edges = edges;
            node.expanded = true;
        }
        &self.nodes[id].edges
    }

    /// Expanded nodes solid, frontier dashed.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph pa {\n  rankdir=LR;\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let style = if n.expanded { "solid" } else { "dashed" };
            let _ = writeln!(out, "  n{i} [label=\"{}\", style={style}];", n.key);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for e in &n.edges {
                let _ = writeln!(out, "  n{i} -> n{} [label=\"{} {:.3}\"];", e.target, e.action, e.cost.as_f64());
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Successors of `q` in the product graph, expanding it if necessary.
pub fn successors<T: Scalar>(
    graph: &mut PartialGraph<T>,
    q: &ProductState,
    problem: &SearchProblem<'_, T>,
    cache: &mut ExperienceCache<T>,
) -> Vec<(ProductState, ActionSpec, T)> {
    let id = graph.intern(q.clone(), problem);
    let edges = graph.expand(id, problem, cache).to_vec();
    edges.into_iter().map(|e| (graph.node(e.target).state.clone(), e.action, e.cost)).collect()
}
