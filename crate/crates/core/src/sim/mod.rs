//! Kinematic world simulator and the reactive execution loop that keeps a
//! behavior tree in sync with a changing world.

mod session;
mod world;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DockId, DomainError, ObjectId, RegionId};
use crate::scenario::SCHEMA;

pub use session::{
    run_session, trace_to_jsonl, Algorithm, BtVariant, GraphMode, Outcome, PlannerConfig, Session, SessionConfig,
    SessionMetrics, TraceBody, TraceEvent,
};
pub use world::{Phase, RegionView, SimWorld, WorldEvent, WorldSnapshot};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("unresolvable event: {0}")]
    Unresolvable(String),
    #[error("{0} is in the gripper")]
    HeldObjectConflict(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("session is {0}")]
    BadStatus(String),
}

fn default_tray_radius() -> f64 {
    0.08
}

/// An external change to the world, not caused by the robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Intervention {
    RelocateObject {
        object: ObjectId,
        region: RegionId,
    },
    AddObject {
        object: ObjectId,
        region: RegionId,
    },
    RemoveObject {
        object: ObjectId,
    },
    AddTray {
        tray: RegionId,
        docks: BTreeMap<DockId, [f64; 3]>,
        dock: DockId,
        #[serde(default = "default_tray_radius")]
        radius: f64,
    },
    RemoveRegion {
        region: RegionId,
    },
}

impl Intervention {
    /// Whether the event changes the object or region sets.
    pub fn is_structural(&self) -> bool {
        !matches!(self, Intervention::RelocateObject { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Intervention::RelocateObject { .. } => "relocate_object",
            Intervention::AddObject { .. } => "add_object",
            Intervention::RemoveObject { .. } => "remove_object",
            Intervention::AddTray { .. } => "add_tray",
            Intervention::RemoveRegion { .. } => "remove_region",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionEvent {
    /// Simulated seconds after execution starts.
    pub t: f64,
    #[serde(flatten)]
    pub event: Intervention,
}

/// Timed list of interventions, as stored in script files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionScript {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub events: Vec<InterventionEvent>,
}

fn default_schema() -> String {
    SCHEMA.into()
}

impl InterventionScript {
    pub fn new(events: Vec<InterventionEvent>) -> Self {
        Self { schema: SCHEMA.into(), events }
    }

    pub fn empty() -> Self {
        Self::new(vec![])
    }

    /// Event kinds in time order, `+`-joined; empty for no events.
    pub fn kinds(&self) -> String {
        let mut ev: Vec<&InterventionEvent> = self.events.iter().collect();
        ev.sort_by(|a, b| a.t.total_cmp(&b.t));
        ev.iter().map(|e| e.event.kind()).collect::<Vec<_>>().join("+")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let s: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if s.schema != SCHEMA {
            return Err(format!("unsupported schema {:?}", s.schema));
        }
        if let Some(e) = s.events.iter().find(|e| !e.t.is_finite() || e.t < 0.0) {
            return Err(format!("bad event time {}", e.t));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_round_trip() {
        let text = r#"{"schema":"v1","events":[
            {"t":2.5,"kind":"relocate_object","object":"o2","region":"r1"},
            {"t":4,"kind":"add_tray","tray":"r3","docks":{"d1":[0,0.2,0],"d2":[0.4,0.2,0]},"dock":"d1"}]}"#;
        let s = InterventionScript::from_json(text).unwrap();
        assert_eq!(s.events.len(), 2);
        assert!(!s.events[0].event.is_structural());
        match &s.events[1].event {
            Intervention::AddTray { radius, .. } => assert_eq!(*radius, 0.08),
            e => panic!("{e:?}"),
        }
        let back = InterventionScript::from_json(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_negative_time_and_unknown_kind() {
        assert!(InterventionScript::from_json(r#"{"events":[{"t":-1,"kind":"remove_object","object":"o1"}]}"#).is_err());
        assert!(InterventionScript::from_json(r#"{"events":[{"t":1,"kind":"teleport","object":"o1"}]}"#).is_err());
    }
}
