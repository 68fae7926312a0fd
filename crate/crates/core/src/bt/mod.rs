//! Behavior trees compiled from plans, ticked against perceived snapshots
//! and patched in place when a new plan arrives.

mod node;
mod tree;
mod tuple;

pub use node::{ActionProgress, Executor, Node, NodeKind, NodeStatus, Predicate, TickContext};
pub use tree::{build_subtree, NodeView, ReconfigureDiff, Subtree, TaskTree, TreeSnapshot};
pub use tuple::{plan_to_action_tuples, running_state, ActionTuple, ConditionStyle};
