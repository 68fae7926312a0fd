use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::ActionSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeStatus {
    Success,
    Running,
    Failure,
    /// Not ticked in the current traversal.
    Invalid,
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeStatus::Success => "SUCCESS",
            NodeStatus::Running => "RUNNING",
            NodeStatus::Failure => "FAILURE",
            NodeStatus::Invalid => "INVALID",
        })
    }
}

/// What the executor reports about one particular action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionProgress {
    /// Neither running nor awaiting acknowledgement.
    Idle,
    Running,
    /// Finished; the completion has not been acknowledged yet.
    Done,
}

/// The world-facing side of Action leaves.
pub trait Executor {
    fn progress(&self, action: &ActionSpec) -> ActionProgress;
    /// Starts `action`; false if the executor is busy or the action cannot
    /// be started.
    fn start(&mut self, action: &ActionSpec) -> bool;
    fn acknowledge(&mut self, action: &ActionSpec);
    /// Interrupts the running action, if any.
    fn abort(&mut self);
    fn busy(&self) -> bool;
}

/// Everything a traversal may read or command.
pub struct TickContext<'a> {
    /// Labels of the perceived snapshot, held entities included.
    pub labels: &'a BTreeSet<String>,
    /// Whether the task specification is already met.
    pub goal: bool,
    pub executor: &'a mut dyn Executor,
    /// Actions whose StateUpdate decorator fired during this traversal.
    pub updates: Vec<ActionSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    /// All atoms hold in the snapshot.
    Atoms { atoms: BTreeSet<String> },
    /// The action finished and awaits acknowledgement by its leaf.
    Completed { action: ActionSpec },
    Goal,
    Const { value: bool },
}

impl Predicate {
    pub fn atoms(atoms: BTreeSet<String>) -> Self {
        Predicate::Atoms { atoms }
    }

    fn eval(&self, ctx: &TickContext<'_>) -> bool {
        match self {
            Predicate::Atoms { atoms } => atoms.is_subset(ctx.labels),
            Predicate::Completed { action } => ctx.executor.progress(action) == ActionProgress::Done,
            Predicate::Goal => ctx.goal,
            Predicate::Const { value } => *value,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Atoms { atoms } => write!(f, "{{{}}}", atoms.iter().cloned().collect::<Vec<_>>().join(", ")),
            Predicate::Completed { action } => write!(f, "done({action})"),
            Predicate::Goal => f.write_str("goal"),
            Predicate::Const { value } => write!(f, "{value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Sequence,
    Selector,
    /// Selector that sticks to a RUNNING child until it terminates.
    Chooser,
    Condition(Predicate),
    Action(ActionSpec),
    /// Records the post-state once its child succeeds.
    StateUpdate,
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Sequence => "sequence",
            NodeKind::Selector => "selector",
            NodeKind::Chooser => "chooser",
            NodeKind::Condition(_) => "condition",
            NodeKind::Action(_) => "action",
            NodeKind::StateUpdate => "state_update",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub children: Vec<Node>,
    pub status: NodeStatus,
    memory: Option<usize>,
}

impl Node {
    pub fn new(kind: NodeKind, children: Vec<Node>) -> Self {
        Self { kind, children, status: NodeStatus::Invalid, memory: None }
    }

    pub fn sequence(children: Vec<Node>) -> Self {
        Self::new(NodeKind::Sequence, children)
    }

    pub fn selector(children: Vec<Node>) -> Self {
        Self::new(NodeKind::Selector, children)
    }

    pub fn chooser(children: Vec<Node>) -> Self {
        Self::new(NodeKind::Chooser, children)
    }

    pub fn condition(p: Predicate) -> Self {
        Self::new(NodeKind::Condition(p), vec![])
    }

    pub fn action(a: ActionSpec) -> Self {
        Self::new(NodeKind::Action(a), vec![])
    }

    pub fn state_update(child: Node) -> Self {
        Self::new(NodeKind::StateUpdate, vec![child])
    }

    /// Resets every status to INVALID (chooser memory is kept).
    pub fn reset(&mut self) {
        self.status = NodeStatus::Invalid;
        for c in &mut self.children {
            c.reset();
        }
    }

    /// Forgets chooser memory throughout the subtree.
    pub fn clear_memory(&mut self) {
        self.memory = None;
        for c in &mut self.children {
            c.clear_memory();
        }
    }

    /// One traversal. Call [`Node::reset`] first so untouched nodes read
    /// INVALID.
    pub fn tick(&mut self, ctx: &mut TickContext<'_>) -> NodeStatus {
        let status = match &self.kind {
            NodeKind::Sequence => {
                let mut st = NodeStatus::Success;
                for c in &mut self.children {
                    st = c.tick(ctx);
                    if st != NodeStatus::Success {
                        break;
                    }
                }
                st
            }
            NodeKind::Selector => {
                let mut st = NodeStatus::Failure;
                for c in &mut self.children {
                    st = c.tick(ctx);
                    if st != NodeStatus::Failure {
                        break;
                    }
                }
                st
            }
            NodeKind::Chooser => self.tick_chooser(ctx),
            NodeKind::Condition(p) => {
                if p.eval(ctx) {
                    NodeStatus::Success
                } else {
                    NodeStatus::Failure
                }
            }
            NodeKind::Action(a) => match ctx.executor.progress(a) {
                ActionProgress::Running => NodeStatus::Running,
                ActionProgress::Done => {
                    ctx.executor.acknowledge(a);
                    NodeStatus::Success
                }
                ActionProgress::Idle => {
                    if !ctx.executor.busy() && ctx.executor.start(a) {
                        NodeStatus::Running
                    } else {
                        NodeStatus::Failure
                    }
                }
            },
            NodeKind::StateUpdate => {
                let st = self.children[0].tick(ctx);
                if st == NodeStatus::Success {
                    if let NodeKind::Action(a) = &self.children[0].kind {
                        ctx.updates.push(a.clone());
                    }
                }
                st
            }
        };
        self.status = status;
        status
    }

    fn tick_chooser(&mut self, ctx: &mut TickContext<'_>) -> NodeStatus {
        let mut skip = None;
        if let Some(m) = self.memory.take() {
            match self.children[m].tick(ctx) {
                NodeStatus::Running => {
                    self.memory = Some(m);
                    return NodeStatus::Running;
                }
                NodeStatus::Success => return NodeStatus::Success,
                _ => skip = Some(m),
            }
        }
        for (i, c) in self.children.iter_mut().enumerate() {
            if Some(i) == skip {
                continue;
            }
            match c.tick(ctx) {
                NodeStatus::Running => {
                    self.memory = Some(i);
                    return NodeStatus::Running;
                }
                NodeStatus::Success => return NodeStatus::Success,
                _ => {}
            }
        }
        NodeStatus::Failure
    }

    /// The single Action leaf below this node, if any.
    pub fn action_leaf(&self) -> Option<&ActionSpec> {
        match &self.kind {
            NodeKind::Action(a) => Some(a),
            _ => self.children.iter().find_map(Node::action_leaf),
        }
    }

    pub fn count_actions(&self) -> usize {
        usize::from(matches!(self.kind, NodeKind::Action(_))) + self.children.iter().map(Node::count_actions).sum::<usize>()
    }

    pub fn label(&self) -> String {
        match &self.kind {
            NodeKind::Condition(p) => format!("cond {p}"),
            NodeKind::Action(a) => a.name(),
            k => k.name().to_string(),
        }
    }
}
