//! Formula to nondeterministic Büchi automaton translation.
//!
//! The translation is the expand-node tableau: every tableau node records the
//! obligations it has already discharged (`old`) and those deferred to the
//! successor (`next`). Each `U` subformula contributes one acceptance set, and
//! the resulting generalized automaton is degeneralized with a round-robin
//! counter. Guards live on edges as positive/negative literal sets (the guard
//! of an edge is the literal set of its target tableau node).

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::Formula;

pub type BaState = usize;

/// Conjunction of literals; the empty guard is `true`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Guard {
    pub pos: BTreeSet<String>,
    pub neg: BTreeSet<String>,
}

impl Guard {
    pub fn is_true(&self) -> bool {
        self.pos.is_empty() && self.neg.is_empty()
    }

    pub fn satisfied_by(&self, labels: &BTreeSet<String>) -> bool {
        self.pos.iter().all(|a| labels.contains(a)) && self.neg.iter().all(|a| !labels.contains(a))
    }

    pub fn atoms(&self) -> impl Iterator<Item = &String> {
        self.pos.iter().chain(self.neg.iter())
    }

    fn literals(&self) -> Vec<String> {
        let mut lits: Vec<(String, bool)> = self
            .pos
            .iter()
            .map(|a| (a.clone(), true))
            .chain(self.neg.iter().map(|a| (a.clone(), false)))
            .collect();
        lits.sort();
        lits.into_iter()
            .map(|(a, pos)| format!("{}{a}", if pos { '+' } else { '-' }))
            .collect()
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_true() {
            f.write_str("true")
        } else {
            f.write_str(&self.literals().join(","))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaEdge {
    pub src: BaState,
    pub dst: BaState,
    pub guard: Guard,
}

/// Nondeterministic Büchi automaton with literal-set edge guards.
///
/// States are `0..num_states()`; state `0` is initial. Ids follow a
/// breadth-first order over sorted edges, so equal inputs serialize equally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuchiAutomaton {
    accepting: Vec<bool>,
    edges: Vec<BaEdge>,
    out: Vec<Vec<usize>>,
    atoms: BTreeSet<String>,
}

impl BuchiAutomaton {
    fn from_parts(accepting: Vec<bool>, mut edges: Vec<BaEdge>, atoms: BTreeSet<String>) -> Self {
        edges.sort_by(|a, b| (a.src, &a.guard, a.dst).cmp(&(b.src, &b.guard, b.dst)));
        edges.dedup();
        let mut out = vec![Vec::new(); accepting.len()];
        for (i, e) in edges.iter().enumerate() {
            out[e.src].push(i);
        }
        Self { accepting, edges, out, atoms }
    }

    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    pub fn initial(&self) -> BaState {
        0
    }

    pub fn is_accepting(&self, q: BaState) -> bool {
        self.accepting[q]
    }

    pub fn accepting_states(&self) -> impl Iterator<Item = BaState> + '_ {
        (0..self.num_states()).filter(|&q| self.accepting[q])
    }

    pub fn edges(&self) -> &[BaEdge] {
        &self.edges
    }

    pub fn edges_from(&self, q: BaState) -> impl Iterator<Item = &BaEdge> {
        self.out[q].iter().map(|&i| &self.edges[i])
    }

    /// Atoms referenced by any guard (a subset of the source formula's atoms).
    pub fn atoms(&self) -> &BTreeSet<String> {
        &self.atoms
    }

    /// Distinct successor states of `q` reading a letter with the given labels.
    pub fn successors(&self, q: BaState, labels: &BTreeSet<String>) -> Vec<BaState> {
        let mut out: Vec<BaState> = self
            .edges_from(q)
            .filter(|e| e.guard.satisfied_by(labels))
            .map(|e| e.dst)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn has_self_loop(&self, q: BaState, labels: &BTreeSet<String>) -> bool {
        self.edges_from(q).any(|e| e.dst == q && e.guard.satisfied_by(labels))
    }

    /// Smallest accepting state visited infinitely often by some run from
    /// `q` on the constant word `labels`^ω, if the word is accepted.
    ///
    /// Such a state is reachable from `q` in at least one step and lies on
    /// a cycle, both using only edges enabled by `labels`.
    pub fn stutter_accepting(&self, q: BaState, labels: &BTreeSet<String>) -> Option<BaState> {
        let n = self.num_states();
        let enabled: Vec<Vec<BaState>> = (0..n).map(|x| self.successors(x, labels)).collect();
        let reach = |from: BaState| {
            let mut seen = vec![false; n];
            let mut stack: Vec<BaState> = enabled[from].clone();
            while let Some(x) = stack.pop() {
                if !std::mem::replace(&mut seen[x], true) {
                    stack.extend(enabled[x].iter().copied());
                }
            }
            seen
        };
        let from_q = reach(q);
        (0..n).find(|&a| from_q[a] && self.is_accepting(a) && reach(a)[a])
    }

    /// Minimum number of edges from each state to an accepting state, guards
    /// ignored. `None` when no accepting state is reachable.
    pub fn accepting_distances(&self) -> Vec<Option<usize>> {
        let n = self.num_states();
        let mut rev = vec![Vec::new(); n];
        for e in &self.edges {
            rev[e.dst].push(e.src);
        }
        let mut dist = vec![None; n];
        let mut queue = VecDeque::new();
        for q in self.accepting_states() {
            dist[q] = Some(0);
            queue.push_back(q);
        }
        while let Some(q) = queue.pop_front() {
            let d = dist[q].unwrap();
            for &p in &rev[q] {
                if dist[p].is_none() {
                    dist[p] = Some(d + 1);
                    queue.push_back(p);
                }
            }
        }
        dist
    }

    /// Line-oriented canonical serialization:
    /// `state <id> [init] [accept]` then `edge <src> <dst> [+a,-b]`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for q in 0..self.num_states() {
            let _ = write!(s, "state {q}");
            if q == self.initial() {
                s.push_str(" init");
            }
            if self.accepting[q] {
                s.push_str(" accept");
            }
            s.push('\n');
        }
        for e in &self.edges {
            let _ = write!(s, "edge {} {}", e.src, e.dst);
            if !e.guard.is_true() {
                let _ = write!(s, " {}", e.guard.literals().join(","));
            }
            s.push('\n');
        }
        s
    }

    /// Inverse of [`BuchiAutomaton::to_text`].
    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut accepting: BTreeMap<usize, bool> = BTreeMap::new();
        let mut init = None;
        let mut edges = Vec::new();
        let mut atoms = BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let bad = || format!("line {}: malformed `{line}`", n + 1);
            match parts.next() {
                None => continue,
                Some("state") => {
                    let id: usize = parts.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
                    let mut acc = false;
                    for flag in parts {
                        match flag {
                            "init" => init = Some(id),
                            "accept" => acc = true,
                            _ => return Err(bad()),
                        }
                    }
                    accepting.insert(id, acc);
                }
                Some("edge") => {
                    let src: usize = parts.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
                    let dst: usize = parts.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
                    let mut guard = Guard::default();
                    if let Some(lits) = parts.next() {
                        for lit in lits.split(',') {
                            let (sign, atom) = lit.split_at(1);
                            atoms.insert(atom.to_string());
                            match sign {
                                "+" => guard.pos.insert(atom.to_string()),
                                "-" => guard.neg.insert(atom.to_string()),
                                _ => return Err(bad()),
                            };
                        }
                    }
                    edges.push(BaEdge { src, dst, guard });
                }
                Some(_) => return Err(bad()),
            }
        }
        let n = accepting.len();
        if accepting.keys().copied().ne(0..n) {
            return Err("state ids must be 0..n".into());
        }
        if init != Some(0) {
            return Err("state 0 must be the initial state".into());
        }
        if edges.iter().any(|e| e.src >= n || e.dst >= n) {
            return Err("edge endpoint out of range".into());
        }
        Ok(Self::from_parts(accepting.into_values().collect(), edges, atoms))
    }

    /// Graphviz rendering: doubled circles for accepting states.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph buchi {\n  rankdir=LR;\n  start [shape=point];\n");
        for q in 0..self.num_states() {
            let shape = if self.accepting[q] { "doublecircle" } else { "circle" };
            let _ = writeln!(s, "  q{q} [shape={shape}, label=\"q{q}\"];");
        }
        let _ = writeln!(s, "  start -> q{};", self.initial());
        for e in &self.edges {
            let label = if e.guard.is_true() { "true".to_string() } else { e.guard.literals().join(",") };
            let _ = writeln!(s, "  q{} -> q{} [label=\"{label}\"];", e.src, e.dst);
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Debug, Clone)]
struct TableauNode {
    incoming: BTreeSet<usize>,
    new: BTreeSet<Formula>,
    old: BTreeSet<Formula>,
    next: BTreeSet<Formula>,
}

const INIT: usize = 0;

fn negated_literal(f: &Formula) -> Option<Formula> {
    match f {
        Formula::Atom(_) => Some(Formula::not(f.clone())),
        Formula::Not(g) if matches!(**g, Formula::Atom(_)) => Some((**g).clone()),
        _ => None,
    }
}

/// Runs the expand-node tableau. Returns the closed nodes; node `i` has id
/// `i + 1`, id `0` being the virtual initial node.
fn tableau(f: &Formula) -> Vec<TableauNode> {
    let mut closed: Vec<TableauNode> = Vec::new();
    let mut stack = vec![TableauNode {
        incoming: BTreeSet::from([INIT]),
        new: BTreeSet::from([f.clone()]),
        old: BTreeSet::new(),
        next: BTreeSet::new(),
    }];

    'nodes: while let Some(mut node) = stack.pop() {
        loop {
            let Some(eta) = node.new.pop_first() else {
                if let Some(done) = closed.iter_mut().find(|c| c.old == node.old && c.next == node.next) {
                    done.incoming.extend(node.incoming);
                } else {
                    let id = closed.len() + 1;
                    stack.push(TableauNode {
                        incoming: BTreeSet::from([id]),
                        new: node.next.clone(),
                        old: BTreeSet::new(),
                        next: BTreeSet::new(),
                    });
                    closed.push(node);
                }
                continue 'nodes;
            };
            if node.old.contains(&eta) {
                continue;
            }
            let add_new = |node: &mut TableauNode, g: &Formula| {
                if !node.old.contains(g) {
                    node.new.insert(g.clone());
                }
            };
            match &eta {
                Formula::False => continue 'nodes,
                Formula::True => {
                    node.old.insert(eta);
                }
                Formula::Atom(_) | Formula::Not(_) => {
                    let neg = negated_literal(&eta).expect("formula is in negation normal form");
                    if node.old.contains(&neg) {
                        continue 'nodes;
                    }
                    node.old.insert(eta);
                }
                Formula::And(a, b) => {
                    add_new(&mut node, a);
                    add_new(&mut node, b);
                    node.old.insert(eta);
                }
                Formula::Next(a) => {
                    node.next.insert((**a).clone());
                    node.old.insert(eta);
                }
                Formula::Or(a, b) | Formula::Until(a, b) | Formula::Release(a, b) => {
                    let mut first = node.clone();
                    let mut second = node;
                    match &eta {
                        Formula::Or(..) => {
                            add_new(&mut first, a);
                            add_new(&mut second, b);
                        }
                        Formula::Until(..) => {
                            add_new(&mut first, a);
                            first.next.insert(eta.clone());
                            add_new(&mut second, b);
                        }
                        _ => {
                            add_new(&mut first, b);
                            first.next.insert(eta.clone());
                            add_new(&mut second, a);
                            add_new(&mut second, b);
                        }
                    }
                    first.old.insert(eta.clone());
                    second.old.insert(eta);
                    stack.push(second);
                    stack.push(first);
                    continue 'nodes;
                }
                Formula::Eventually(_) | Formula::Always(_) => {
                    unreachable!("F/G are desugared by to_nnf")
                }
            }
        }
    }
    closed
}

fn collect_untils(f: &Formula, out: &mut BTreeSet<Formula>) {
    match f {
        Formula::True | Formula::False | Formula::Atom(_) => {}
        Formula::Not(g) | Formula::Next(g) | Formula::Eventually(g) | Formula::Always(g) => {
            collect_untils(g, out)
        }
        Formula::Until(a, b) => {
            out.insert(f.clone());
            collect_untils(a, out);
            collect_untils(b, out);
        }
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Release(a, b) => {
            collect_untils(a, out);
            collect_untils(b, out);
        }
    }
}

/// Builds a Büchi automaton accepting exactly the words that satisfy `f`.
///
/// `f` is normalized first, so callers may pass any formula. The result has
/// unreachable states removed and states with identical acceptance and
/// outgoing edges merged.
pub fn build_buchi(f: &Formula) -> BuchiAutomaton {
    let f = if f.is_nnf() { f.clone() } else { f.to_nnf() };
    let nodes = tableau(&f);
    let mut untils = BTreeSet::new();
    collect_untils(&f, &mut untils);
    let untils: Vec<Formula> = untils.into_iter().collect();
    let k = untils.len();

    // Generalized automaton over ids 0 (init) ..= nodes.len().
    let n = nodes.len() + 1;
    let mut guards = vec![Guard::default(); n];
    let mut in_set = vec![vec![false; k]; n];
    for (i, node) in nodes.iter().enumerate() {
        let id = i + 1;
        for lit in &node.old {
            match lit {
                Formula::Atom(a) => {
                    guards[id].pos.insert(a.clone());
                }
                Formula::Not(g) => {
                    if let Formula::Atom(a) = &**g {
                        guards[id].neg.insert(a.clone());
                    }
                }
                _ => {}
            }
        }
        for (j, u) in untils.iter().enumerate() {
            let Formula::Until(_, rhs) = u else { unreachable!() };
            in_set[id][j] = !node.old.contains(u) || node.old.contains(&**rhs);
        }
    }
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, node) in nodes.iter().enumerate() {
        for &src in &node.incoming {
            succ[src].push(i + 1);
        }
    }

    // Degeneralize: state (node, counter); the counter advances when the
    // current node is in the acceptance set it is waiting for.
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut states: Vec<(usize, usize)> = Vec::new();
    let mut edges = Vec::new();
    let mut queue = VecDeque::new();
    index.insert((INIT, 0), 0);
    states.push((INIT, 0));
    queue.push_back(0);
    while let Some(sid) = queue.pop_front() {
        let (node, counter) = states[sid];
        let next_counter = if k > 1 && node != INIT && in_set[node][counter] {
            (counter + 1) % k
        } else {
            counter
        };
        let mut targets = succ[node].clone();
        targets.sort_unstable();
        for t in targets {
            let key = (t, next_counter);
            let tid = *index.entry(key).or_insert_with(|| {
                states.push(key);
                queue.push_back(states.len() - 1);
                states.len() - 1
            });
            edges.push(BaEdge { src: sid, dst: tid, guard: guards[t].clone() });
        }
    }
    let accepting: Vec<bool> = states
        .iter()
        .map(|&(node, counter)| match k {
            0 => true,
            _ => node != INIT && counter == 0 && in_set[node][0],
        })
        .collect();

    simplify(accepting, edges, f.atoms())
}

/// Drops unreachable states, merges states with identical acceptance and
/// outgoing edge sets until a fixpoint, then renumbers breadth-first.
fn simplify(accepting: Vec<bool>, edges: Vec<BaEdge>, atoms: BTreeSet<String>) -> BuchiAutomaton {
    let n = accepting.len();
    let mut out: Vec<Vec<(Guard, usize)>> = vec![Vec::new(); n];
    for e in edges {
        out[e.src].push((e.guard, e.dst));
    }

    let mut class: Vec<usize> = (0..n).collect();
    loop {
        let mut groups: BTreeMap<(bool, BTreeSet<(Guard, usize)>), usize> = BTreeMap::new();
        let mut next_class = vec![0; n];
        for q in 0..n {
            let sig: BTreeSet<(Guard, usize)> =
                out[q].iter().map(|(g, d)| (g.clone(), class[*d])).collect();
            let len = groups.len();
            next_class[q] = *groups.entry((accepting[q], sig)).or_insert(len);
        }
        let before = class.iter().collect::<BTreeSet<_>>().len();
        let changed = groups.len() != before;
        class = next_class;
        if !changed {
            break;
        }
    }

    // Breadth-first renumbering from the initial class over sorted edges.
    let mut rep: BTreeMap<usize, usize> = BTreeMap::new();
    for q in (0..n).rev() {
        rep.insert(class[q], q);
    }
    let mut order: Vec<usize> = Vec::new();
    let mut new_id: HashMap<usize, usize> = HashMap::new();
    let mut queue = VecDeque::from([class[0]]);
    new_id.insert(class[0], 0);
    order.push(class[0]);
    while let Some(c) = queue.pop_front() {
        let mut targets: Vec<(Guard, usize)> =
            out[rep[&c]].iter().map(|(g, d)| (g.clone(), class[*d])).collect();
        targets.sort();
        for (_, t) in targets {
            if !new_id.contains_key(&t) {
                new_id.insert(t, order.len());
                order.push(t);
                queue.push_back(t);
            }
        }
    }
    let accepting_new: Vec<bool> = order.iter().map(|c| accepting[rep[c]]).collect();
    let mut edges_new = Vec::new();
    for c in &order {
        for (g, d) in &out[rep[c]] {
            edges_new.push(BaEdge { src: new_id[c], dst: new_id[&class[*d]], guard: g.clone() });
        }
    }
    let used: BTreeSet<String> =
        edges_new.iter().flat_map(|e| e.guard.atoms().cloned()).collect();
    debug_assert!(used.is_subset(&atoms));
    BuchiAutomaton::from_parts(accepting_new, edges_new, used)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::parse_formula;

    fn ba(text: &str) -> BuchiAutomaton {
        build_buchi(&parse_formula(text).unwrap().to_nnf())
    }

    fn labels(atoms: &[&str]) -> BTreeSet<String> {
        atoms.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn stutter_acceptance_matches_lasso_semantics() {
        for text in ["F G p", "F p & F G q", "G F p & G F q", "p U q", "X X p", "G (!p | X q)"] {
            let a = ba(text);
            let f = parse_formula(text).unwrap();
            for l in [labels(&[]), labels(&["p"]), labels(&["q"]), labels(&["p", "q"])] {
                let w = crate::ltl::LassoWord { prefix: vec![], cycle: vec![l.clone()] };
                let holds = crate::ltl::formula_holds_on_lasso(&f, &w);
                // Reading the first letter is the step out of the initial state.
                assert_eq!(a.stutter_accepting(a.initial(), &l).is_some(), holds, "{text} on {l:?}^ω");
            }
        }
    }

    #[test]
    fn always_p_is_one_state() {
        let a = ba("G p");
        assert_eq!(a.num_states(), 1);
        assert!(a.is_accepting(0));
        assert_eq!(a.edges().len(), 1);
        let e = &a.edges()[0];
        assert_eq!((e.src, e.dst), (0, 0));
        assert_eq!(e.guard.pos, labels(&["p"]));
        assert!(e.guard.neg.is_empty());
    }

    #[test]
    fn eventually_always_p_is_two_states() {
        let a = ba("F G p");
        assert_eq!(a.num_states(), 2);
        assert!(!a.is_accepting(0));
        assert!(a.is_accepting(1));
        assert_eq!(a.to_text(), "state 0 init\nstate 1 accept\nedge 0 0\nedge 0 1 +p\nedge 1 1 +p\n");
        assert_eq!(a.accepting_distances(), vec![Some(1), Some(0)]);
    }

    #[test]
    fn true_is_universal_single_state() {
        let a = ba("true");
        assert_eq!(a.num_states(), 1);
        assert!(a.is_accepting(0));
        assert_eq!(a.edges().len(), 1);
        assert!(a.edges()[0].guard.is_true());
    }

    #[test]
    fn false_has_no_accepting_run() {
        let a = ba("false");
        assert_eq!(a.num_states(), 1);
        assert!(a.edges().is_empty());
    }

    #[test]
    fn guards_only_mention_formula_atoms() {
        let a = ba("(p U q) & G F r");
        let atoms = labels(&["p", "q", "r"]);
        for e in a.edges() {
            assert!(e.guard.atoms().all(|x| atoms.contains(x)));
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let f = "G F p & G F q & (r U s)";
        assert_eq!(ba(f).to_text(), ba(f).to_text());
        assert_eq!(ba(f), ba(f));
    }

    #[test]
    fn text_round_trip() {
        let a = ba("G F p & F G !q");
        let back = BuchiAutomaton::from_text(&a.to_text()).unwrap();
        assert_eq!(back.to_text(), a.to_text());
    }

    #[test]
    fn dot_marks_accepting_states() {
        let dot = ba("F G p").to_dot();
        assert!(dot.contains("q1 [shape=doublecircle"));
        assert!(dot.contains("q0 [shape=circle"));
        assert!(dot.contains("q0 -> q1 [label=\"+p\"]"));
    }
}
