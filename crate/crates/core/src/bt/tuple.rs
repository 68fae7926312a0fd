use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{placement_atom, ActionSpec, Place, SymbolicState, TrayPose, HAND};
use crate::search::Plan;

/// Which atoms a subtree's conditions check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConditionStyle {
    /// Whole placement of the source state.
    State,
    /// Only the moved entity, plus tray docks it depends on.
    #[default]
    Action,
}

/// One plan step lifted to the execution layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionTuple {
    pub action: ActionSpec,
    pub source: SymbolicState,
    pub target: SymbolicState,
    /// Placement atoms of the source state.
    pub c_pre: BTreeSet<String>,
    /// Placement atoms of the target state.
    pub c_post: BTreeSet<String>,
    /// Atoms holding while the action runs: the entity in hand, the rest
    /// as in the source.
    pub c_r: BTreeSet<String>,
}

impl ActionTuple {
    pub fn new(action: ActionSpec, source: SymbolicState, target: SymbolicState) -> Self {
        let c_pre = source.placement_atoms();
        let c_post = target.placement_atoms();
        let c_r = running_state(&source, &action).placement_atoms();
        Self { action, source, target, c_pre, c_post, c_r }
    }

    pub fn pre(&self, style: ConditionStyle) -> BTreeSet<String> {
        match style {
            ConditionStyle::State => self.c_pre.clone(),
            ConditionStyle::Action => self.local_atoms(&self.source),
        }
    }

    pub fn post(&self, style: ConditionStyle) -> BTreeSet<String> {
        match style {
            ConditionStyle::State => self.c_post.clone(),
            ConditionStyle::Action => self.local_atoms(&self.target),
        }
    }

    pub fn running(&self, style: ConditionStyle) -> BTreeSet<String> {
        match style {
            ConditionStyle::State => self.c_r.clone(),
            ConditionStyle::Action => BTreeSet::from([placement_atom(self.action.entity(), HAND)]),
        }
    }

    /// Atoms of `s` about the moved entity and the trays its move touches.
    fn local_atoms(&self, s: &SymbolicState) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        match &self.action {
            ActionSpec::MoveObject { object, dest } => {
                let src = self.source.assignment.get(object);
                if let Some(p) = s.assignment.get(object) {
                    out.insert(placement_atom(object.as_str(), &p.to_string()));
                }
                let trays = src.and_then(Place::region).into_iter().chain([dest]);
                for t in trays {
                    if let Some(d) = s.tray_docks.get(t) {
                        out.insert(placement_atom(t.as_str(), &d.to_string()));
                    }
                }
            }
            ActionSpec::MoveRegion { tray, .. } => {
                if let Some(d) = s.tray_docks.get(tray) {
                    out.insert(placement_atom(tray.as_str(), &d.to_string()));
                }
            }
        }
        out
    }
}

/// `s` with the action's entity moved into the gripper.
pub fn running_state(s: &SymbolicState, a: &ActionSpec) -> SymbolicState {
    let mut r = s.clone();
    match a {
        ActionSpec::MoveObject { object, .. } => {
            r.assignment.insert(object.clone(), Place::Hand);
        }
        ActionSpec::MoveRegion { tray, .. } => {
            r.tray_docks.insert(tray.clone(), TrayPose::Hand);
        }
    }
    r
}

pub fn plan_to_action_tuples<T>(plan: &Plan<T>) -> Vec<ActionTuple> {
    plan.steps
        .iter()
        .map(|st| ActionTuple::new(st.action.clone(), st.from.ts.clone(), st.to.ts.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(atoms: &[&str]) -> BTreeSet<String> {
        atoms.iter().map(|s| s.to_string()).collect()
    }

    fn two_block() -> ActionTuple {
        let s = SymbolicState::new().with_object("o1", "r1").with_object("o2", "r1");
        let t = SymbolicState::new().with_object("o1", "r2").with_object("o2", "r1");
        ActionTuple::new(ActionSpec::move_object("o1", "r2"), s, t)
    }

    #[test]
    fn state_conditions() {
        let t = two_block();
        assert_eq!(t.pre(ConditionStyle::State), set(&["o1r1", "o2r1"]));
        assert_eq!(t.post(ConditionStyle::State), set(&["o1r2", "o2r1"]));
        assert_eq!(t.running(ConditionStyle::State), set(&["o1rhand", "o2r1"]));
    }

    #[test]
    fn action_conditions() {
        let t = two_block();
        assert_eq!(t.pre(ConditionStyle::Action), set(&["o1r1"]));
        assert_eq!(t.post(ConditionStyle::Action), set(&["o1r2"]));
        assert_eq!(t.running(ConditionStyle::Action), set(&["o1rhand"]));
    }

    #[test]
    fn tray_dock_joins_action_conditions() {
        let s = SymbolicState::new().with_object("o1", "r1").with_object("o2", "r1").with_tray("r3", "d1");
        let t = s.clone().with_object("o1", "r3");
        let tup = ActionTuple::new(ActionSpec::move_object("o1", "r3"), s.clone(), t);
        assert_eq!(tup.pre(ConditionStyle::Action), set(&["o1r1", "r3d1"]));

        let moved = s.clone().with_tray("r3", "d2");
        let tup = ActionTuple::new(ActionSpec::move_region("r3", "d2"), s, moved);
        assert_eq!(tup.pre(ConditionStyle::Action), set(&["r3d1"]));
        assert_eq!(tup.running(ConditionStyle::Action), set(&["r3rhand"]));
        assert_eq!(tup.running(ConditionStyle::State), set(&["o1r1", "o2r1", "r3rhand"]));
    }
}
