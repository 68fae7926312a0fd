use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::node::{Executor, Node, NodeKind, NodeStatus, Predicate, TickContext};
use super::tuple::{ActionTuple, ConditionStyle};
use crate::domain::ActionSpec;

/// Chooser-rooted subtree executing one plan step.
#[derive(Debug, Clone, PartialEq)]
pub struct Subtree {
    pub id: u64,
    pub tuple: ActionTuple,
    pub root: Node,
}

impl Subtree {
    pub fn action(&self) -> &ActionSpec {
        &self.tuple.action
    }
}

/// `Chooser → Sequence[Selector[running, pre, done], StateUpdate(Action)]`.
pub fn build_subtree(tuple: &ActionTuple, style: ConditionStyle) -> Node {
    let guard = Node::selector(vec![
        Node::condition(Predicate::atoms(tuple.running(style))),
        Node::condition(Predicate::atoms(tuple.pre(style))),
        Node::condition(Predicate::Completed { action: tuple.action.clone() }),
    ]);
    let body = Node::sequence(vec![guard, Node::state_update(Node::action(tuple.action.clone()))]);
    Node::chooser(vec![body])
}

/// Outcome of swapping in a new plan.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconfigureDiff {
    pub kept: usize,
    pub inserted: usize,
    pub removed: usize,
    /// Removed subtrees that were RUNNING and retire once they terminate.
    pub deferred: usize,
}

impl ReconfigureDiff {
    /// Node-level edits counted towards BT churn.
    pub fn changes(&self) -> usize {
        self.inserted + self.removed
    }
}

/// Task root: `Chooser[goal sentinel, subtree_1, …, subtree_n]`.
#[derive(Debug, Clone)]
pub struct TaskTree {
    style: ConditionStyle,
    subtrees: Vec<Subtree>,
    retiring: Vec<Subtree>,
    running: Option<u64>,
    next_id: u64,
    sentinel: NodeStatus,
    status: NodeStatus,
    changes: usize,
}

impl TaskTree {
    pub fn new(style: ConditionStyle, tuples: &[ActionTuple]) -> Self {
        let mut t = Self {
            style,
            subtrees: Vec::new(),
            retiring: Vec::new(),
            running: None,
            next_id: 0,
            sentinel: NodeStatus::Invalid,
            status: NodeStatus::Invalid,
            changes: 0,
        };
        t.subtrees = tuples.iter().map(|tu| t.fresh(tu.clone())).collect();
        t
    }

    fn fresh(&mut self, tuple: ActionTuple) -> Subtree {
        let id = self.next_id;
        self.next_id += 1;
        Subtree { id, root: build_subtree(&tuple, self.style), tuple }
    }

    pub fn style(&self) -> ConditionStyle {
        self.style
    }

    pub fn subtrees(&self) -> &[Subtree] {
        &self.subtrees
    }

    pub fn retiring(&self) -> &[Subtree] {
        &self.retiring
    }

    pub fn status(&self) -> NodeStatus {
        self.status
    }

    /// Insertions plus removals since construction.
    pub fn changes(&self) -> usize {
        self.changes
    }

    pub fn actions(&self) -> Vec<ActionSpec> {
        self.subtrees.iter().map(|s| s.tuple.action.clone()).collect()
    }

    pub fn action_names(&self) -> Vec<String> {
        self.subtrees.iter().map(|s| s.tuple.action.name()).collect()
    }

    /// The subtree the root chooser is committed to, if any.
    pub fn running_subtree(&self) -> Option<&Subtree> {
        let id = self.running?;
        self.subtrees.iter().chain(&self.retiring).find(|s| s.id == id)
    }

    /// Merges a new plan into the tree, reusing matching subtrees.
    ///
    /// Walks both plans from the back. A new step matching the nearest
    /// remaining old subtree keeps it (old subtrees skipped over are
    /// removed); otherwise a fresh subtree is inserted. A removed subtree
    /// that is RUNNING stays alive until it terminates.
    pub fn reconfigure(&mut self, tuples: &[ActionTuple]) -> ReconfigureDiff {
        let mut diff = ReconfigureDiff::default();
        let mut old: Vec<Option<Subtree>> = std::mem::take(&mut self.subtrees).into_iter().map(Some).collect();
        let mut removed = Vec::new();
        let mut i = old.len();
        let mut out = Vec::with_capacity(tuples.len());
        for tu in tuples.iter().rev() {
            let hit = (0..i).rev().find(|&j| old[j].as_ref().is_some_and(|s| s.tuple.action == tu.action));
            match hit {
                Some(j) => {
                    removed.extend(old[j + 1..i].iter_mut().filter_map(Option::take));
                    let mut s = old[j].take().expect("matched subtree present");
                    if s.tuple != *tu {
                        s.root = build_subtree(tu, self.style);
                        s.tuple = tu.clone();
                    }
                    out.push(s);
                    diff.kept += 1;
                    i = j;
                }
                None => {
                    out.push(self.fresh(tu.clone()));
                    diff.inserted += 1;
                }
            }
        }
        removed.extend(old[..i].iter_mut().filter_map(Option::take));
        out.reverse();
        self.subtrees = out;
        diff.removed = removed.len();
        for s in removed {
            if Some(s.id) == self.running {
                diff.deferred += 1;
                self.retiring.push(s);
            }
        }
        self.changes += diff.changes();
        diff
    }

    /// Baseline: abort whatever runs, drop every subtree and rebuild.
    pub fn offline_rebuild(&mut self, tuples: &[ActionTuple], executor: &mut dyn Executor) -> ReconfigureDiff {
        if executor.busy() {
            executor.abort();
        }
        let removed = self.subtrees.len() + self.retiring.len();
        self.retiring.clear();
        self.running = None;
        self.subtrees = tuples.iter().map(|tu| self.fresh(tu.clone())).collect();
        let diff = ReconfigureDiff { kept: 0, inserted: tuples.len(), removed, deferred: 0 };
        self.changes += diff.changes();
        diff
    }

    /// Smallest subtree index whose precondition holds and whose
    /// postcondition does not.
    pub fn find_recovery_subtree(&self, labels: &BTreeSet<String>) -> Option<usize> {
        self.subtrees.iter().position(|s| {
            s.tuple.pre(self.style).is_subset(labels) && !s.tuple.post(self.style).is_subset(labels)
        })
    }

    /// One traversal of the task root.
    pub fn tick(&mut self, ctx: &mut TickContext<'_>) -> NodeStatus {
        for s in self.subtrees.iter_mut().chain(&mut self.retiring) {
            s.root.reset();
        }
        self.sentinel = NodeStatus::Invalid;
        let st = self.tick_root(ctx);
        self.status = st;
        st
    }

    fn tick_root(&mut self, ctx: &mut TickContext<'_>) -> NodeStatus {
        let mut skip = None;
        if let Some(id) = self.running.take() {
            let st = match self.subtrees.iter_mut().chain(&mut self.retiring).find(|s| s.id == id) {
                Some(s) => s.root.tick(ctx),
                None => NodeStatus::Failure,
            };
            if st == NodeStatus::Running {
                self.running = Some(id);
                return NodeStatus::Running;
            }
            if let Some(pos) = self.retiring.iter().position(|s| s.id == id) {
                self.retiring.remove(pos);
            }
            if st == NodeStatus::Success {
                return NodeStatus::Success;
            }
            // The committed subtree gave up; its action must not linger.
            if ctx.executor.busy() {
                ctx.executor.abort();
            }
            skip = Some(id);
        }
        self.sentinel = if ctx.goal { NodeStatus::Success } else { NodeStatus::Failure };
        if ctx.goal {
            return NodeStatus::Success;
        }
        for s in &mut self.subtrees {
            if Some(s.id) == skip {
                continue;
            }
            match s.root.tick(ctx) {
                NodeStatus::Running => {
                    self.running = Some(s.id);
                    return NodeStatus::Running;
                }
                NodeStatus::Success => return NodeStatus::Success,
                _ => {}
            }
        }
        if ctx.executor.busy() {
            ctx.executor.abort();
        }
        NodeStatus::Failure
    }

    pub fn snapshot(&self) -> TreeSnapshot {
        let mut children = vec![NodeView {
            id: "goal".into(),
            kind: "condition".into(),
            label: "cond goal".into(),
            status: self.sentinel,
            children: vec![],
        }];
        for s in self.subtrees.iter().chain(&self.retiring) {
            let mut k = 0;
            children.push(view(&s.root, s.id, &mut k));
        }
        TreeSnapshot {
            style: self.style,
            actions: self.action_names(),
            retiring: self.retiring.iter().map(|s| s.tuple.action.name()).collect(),
            running: self.running_subtree().map(|s| s.tuple.action.name()),
            changes: self.changes,
            root: NodeView { id: "root".into(), kind: "chooser".into(), label: "task".into(), status: self.status, children },
        }
    }

    pub fn to_dot(&self) -> String {
        let snap = self.snapshot();
        let mut out = String::from("digraph bt {\n  node [shape=box, fontname=\"monospace\"];\n");
        dot_node(&snap.root, &mut out);
        out.push_str("}\n");
        out
    }
}

/// JSON-friendly picture of the whole tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub style: ConditionStyle,
    pub actions: Vec<String>,
    pub retiring: Vec<String>,
    pub running: Option<String>,
    pub changes: usize,
    pub root: NodeView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: String,
    pub kind: String,
    pub label: String,
    pub status: NodeStatus,
    pub children: Vec<NodeView>,
}

fn view(n: &Node, subtree: u64, k: &mut usize) -> NodeView {
    let id = format!("s{subtree}.{k}");
    *k += 1;
    let label = match &n.kind {
        NodeKind::Chooser if *k == 1 => format!("subtree {}", n.action_leaf().map(ActionSpec::name).unwrap_or_default()),
        _ => n.label(),
    };
    NodeView {
        id,
        kind: n.kind.name().into(),
        label,
        status: n.status,
        children: n.children.iter().map(|c| view(c, subtree, k)).collect(),
    }
}

fn dot_node(v: &NodeView, out: &mut String) {
    let color = match v.status {
        NodeStatus::Success => "palegreen",
        NodeStatus::Running => "gold",
        NodeStatus::Failure => "salmon",
        NodeStatus::Invalid => "white",
    };
    let _ = writeln!(
        out,
        "  \"{}\" [label=\"{}\", style=filled, fillcolor={color}];",
        v.id,
        v.label.replace('"', "\\\"")
    );
    for c in &v.children {
        let _ = writeln!(out, "  \"{}\" -> \"{}\";", v.id, c.id);
        dot_node(c, out);
    }
}
