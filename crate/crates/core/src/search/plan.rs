use serde::{Deserialize, Serialize};

use crate::domain::{ActionSpec, SymbolicState};
use crate::ltl::BaState;
use crate::num::Scalar;

use super::{ProductState, SearchProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep<T> {
    pub from: ProductState,
    pub action: ActionSpec,
    pub to: ProductState,
    pub cost: T,
}

/// Counters of one planning query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub nodes_expanded: usize,
    pub nodes_generated: usize,
    pub provider_calls: u64,
    pub cache_hits: u64,
    pub wall_time_s: f64,
    pub cost: f64,
}

/// A finite path of the product graph ending in a goal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan<T> {
    pub start: ProductState,
    pub steps: Vec<PlanStep<T>>,
    pub cost: T,
    /// Accepting BA state the final stutter visits forever.
    pub accepting: BaState,
    pub stats: PlanStats,
}

impl<T: Scalar> Plan<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> Vec<ActionSpec> {
        self.steps.iter().map(|s| s.action.clone()).collect()
    }

    pub fn action_names(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.action.name()).collect()
    }

    /// TS states visited, start included.
    pub fn states(&self) -> Vec<SymbolicState> {
        std::iter::once(self.start.ts.clone()).chain(self.steps.iter().map(|s| s.to.ts.clone())).collect()
    }

    pub fn final_state(&self) -> &ProductState {
        self.steps.last().map_or(&self.start, |s| &s.to)
    }

    /// Checks chaining, transition validity, cost sum and goal acceptance.
    pub fn validate(&self, problem: &SearchProblem<'_, T>) -> Result<(), String> {
        let mut cur = &self.start;
        let mut total = T::zero();
        for (i, step) in self.steps.iter().enumerate() {
            if &step.from != cur {
                return Err(format!("step {i} does not start where step {} ended", i.wrapping_sub(1)));
            }
            let s2 = problem.ts.apply_action(&step.from.ts, &step.action).map_err(|e| e.to_string())?;
            if s2 != step.to.ts {
                return Err(format!("step {i}: {} does not lead to {}", step.action, step.to.ts));
            }
            let labels = problem.label(&step.from.ts);
            if !problem.ba.successors(step.from.ba, &labels).contains(&step.to.ba) {
                return Err(format!("step {i}: no BA move {} -> {}", step.from.ba, step.to.ba));
            }
            total = total + step.cost;
            cur = &step.to;
        }
        let last = self.final_state();
        let labels = problem.label(&last.ts);
        if problem.ba.stutter_accepting(last.ba, &labels) != Some(self.accepting) {
            return Err(format!("final node {last} is not stutter-accepting"));
        }
        let tol = T::of(1e-9) * (T::one() + total.abs());
        if (total - self.cost).abs() > tol {
            return Err(format!("cost {} != step sum {}", self.cost, total));
        }
        Ok(())
    }
}
