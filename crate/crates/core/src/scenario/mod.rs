//! Scenario documents: the JSON description of a workspace, its goal and
//! the simulation settings, with field-path validation.

mod presets;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{macro_region, valid_id, DockId, SymbolicState, TransitionSystem, WorldGeometry, DEFAULT_RADIUS};
use crate::ltl::{parse_formula, Formula};
use crate::num::{Point3, Scalar};

pub use presets::{random_scaling_scenario, three_block, three_block_tray, tray_docks_near};

pub const SCHEMA: &str = "v1";

fn default_radius() -> f64 {
    DEFAULT_RADIUS
}

fn default_schema() -> String {
    SCHEMA.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub id: String,
    pub center: [f64; 3],
    #[serde(default = "default_radius")]
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DockSpec {
    pub id: String,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraySpec {
    pub id: String,
    pub docks: Vec<DockSpec>,
    pub dock: String,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: String,
    pub region: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSpec {
    /// Only `geometric` is built in.
    pub provider: String,
    pub latency_ms: f64,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self { provider: "geometric".into(), latency_ms: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    /// End-effector speed in m/s.
    pub speed: f64,
    pub tick_hz: f64,
    pub timeout_s: f64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self { speed: 0.25, tick_hz: 20.0, timeout_s: 600.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_schema")]
    pub schema: String,
    #[serde(default)]
    pub name: String,
    pub home: [f64; 3],
    pub regions: Vec<RegionSpec>,
    #[serde(default)]
    pub trays: Vec<TraySpec>,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub macros: Vec<String>,
    pub formula: String,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("malformed scenario JSON: {0}")]
    Json(String),
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
}

impl ScenarioError {
    pub fn field_errors(&self) -> &[FieldError] {
        match self {
            ScenarioError::Invalid(e) => e,
            ScenarioError::Json(_) => &[],
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs = Vec::new();
        let mut err = |path: String, message: String| errs.push(FieldError { path, message });

        if self.schema != SCHEMA {
            err("schema".into(), format!("unsupported schema {:?}, expected {SCHEMA:?}", self.schema));
        }
        let mut region_ids = BTreeSet::new();
        let mut placement: Vec<(String, [f64; 3])> = Vec::new();
        for (i, r) in self.regions.iter().enumerate() {
            if !valid_id(&r.id) {
                err(format!("regions[{i}].id"), format!("invalid identifier {:?}", r.id));
            } else if !region_ids.insert(r.id.clone()) {
                err(format!("regions[{i}].id"), format!("duplicate region id {:?}", r.id));
            }
            if !(r.radius > 0.0 && r.radius.is_finite()) {
                err(format!("regions[{i}].radius"), "must be positive".into());
            }
            if !r.center.iter().all(|c| c.is_finite()) {
                err(format!("regions[{i}].center"), "must be finite".into());
            }
            placement.push((format!("regions[{i}].center"), r.center));
        }
        for (i, t) in self.trays.iter().enumerate() {
            if !valid_id(&t.id) {
                err(format!("trays[{i}].id"), format!("invalid identifier {:?}", t.id));
            } else if !region_ids.insert(t.id.clone()) {
                err(format!("trays[{i}].id"), format!("duplicate region id {:?}", t.id));
            }
            if !(t.radius > 0.0 && t.radius.is_finite()) {
                err(format!("trays[{i}].radius"), "must be positive".into());
            }
            if t.docks.is_empty() {
                err(format!("trays[{i}].docks"), "a tray needs at least one dock".into());
            }
            let mut docks = BTreeSet::new();
            for (j, d) in t.docks.iter().enumerate() {
                if !valid_id(&d.id) {
                    err(format!("trays[{i}].docks[{j}].id"), format!("invalid identifier {:?}", d.id));
                } else if !docks.insert(d.id.clone()) {
                    err(format!("trays[{i}].docks[{j}].id"), format!("duplicate dock id {:?}", d.id));
                }
                placement.push((format!("trays[{i}].docks[{j}].position"), d.position));
            }
            if !docks.contains(&t.dock) {
                err(format!("trays[{i}].dock"), format!("unknown dock {:?}", t.dock));
            }
        }
        for a in 0..placement.len() {
            for b in a + 1..placement.len() {
                let d: f64 = (0..3).map(|k| (placement[a].1[k] - placement[b].1[k]).powi(2)).sum::<f64>().sqrt();
                if d < 1e-9 {
                    err(placement[b].0.clone(), format!("coincides with {}", placement[a].0));
                }
            }
        }
        let mut object_ids = BTreeSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if !valid_id(&o.id) {
                err(format!("objects[{i}].id"), format!("invalid identifier {:?}", o.id));
            } else if region_ids.contains(&o.id) || !object_ids.insert(o.id.clone()) {
                err(format!("objects[{i}].id"), format!("duplicate id {:?}", o.id));
            }
            if !region_ids.contains(&o.region) {
                err(format!("objects[{i}].region"), format!("unknown region {:?}", o.region));
            }
        }
        for (i, m) in self.macros.iter().enumerate() {
            if !macro_region(m).is_some_and(valid_id) {
                err(format!("macros[{i}]"), format!("{m:?} is not of the form all_obj_in_<region>"));
            }
        }
        match parse_formula(&self.formula) {
            Err(e) => err("formula".into(), e.to_string()),
            Ok(f) => {
                if let Ok(ts) = self.transition_system_unchecked() {
                    if let Err(e) = ts.check_formula(&f) {
                        err("formula".into(), e.to_string());
                    }
                }
            }
        }
        if self.cost.provider != "geometric" {
            err("cost.provider".into(), format!("unknown provider {:?}", self.cost.provider));
        }
        if !(self.cost.latency_ms >= 0.0 && self.cost.latency_ms.is_finite()) {
            err("cost.latency_ms".into(), "must be non-negative".into());
        }
        if !(self.sim.speed > 0.0 && self.sim.speed.is_finite()) {
            err("sim.speed".into(), "must be positive".into());
        }
        if !(self.sim.tick_hz > 0.0 && self.sim.tick_hz.is_finite()) {
            err("sim.tick_hz".into(), "must be positive".into());
        }
        if !(self.sim.timeout_s > 0.0) {
            err("sim.timeout_s".into(), "must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errs))
        }
    }

    pub fn formula(&self) -> Formula {
        parse_formula(&self.formula).expect("validated formula")
    }

    pub fn initial_state(&self) -> SymbolicState {
        let mut s = SymbolicState::new();
        for o in &self.objects {
            s = s.with_object(&o.id, &o.region);
        }
        for t in &self.trays {
            s = s.with_tray(&t.id, &t.dock);
        }
        s
    }

    fn transition_system_unchecked(&self) -> Result<TransitionSystem, crate::domain::DomainError> {
        TransitionSystem::new(
            self.objects.iter().map(|o| o.id.as_str().into()),
            self.regions.iter().map(|r| r.id.as_str().into()),
            self.trays.iter().map(|t| (t.id.as_str().into(), t.docks.iter().map(|d| DockId::from(d.id.as_str())).collect())),
            self.macros.iter().cloned(),
            self.initial_state(),
        )
    }

    pub fn transition_system(&self) -> TransitionSystem {
        self.transition_system_unchecked().expect("validated scenario")
    }

    /// Geometry with every object at its start region's placement point.
    pub fn geometry<T: Scalar>(&self) -> WorldGeometry<T> {
        let mut g = WorldGeometry::new(Point3::from_array(self.home));
        for r in &self.regions {
            g.add_region(r.id.as_str().into(), Point3::from_array(r.center), T::of(r.radius)).expect("validated");
        }
        for t in &self.trays {
            let docks: BTreeMap<DockId, Point3<T>> =
                t.docks.iter().map(|d| (d.id.as_str().into(), Point3::from_array(d.position))).collect();
            g.add_tray(t.id.as_str().into(), docks, t.dock.as_str().into(), T::of(t.radius)).expect("validated");
        }
        let s = self.initial_state();
        for o in &self.objects {
            let p = g.placement_point(&o.region.as_str().into(), &s).expect("validated");
            g.add_object(o.id.as_str().into(), p).expect("validated");
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for s in [three_block(), three_block_tray()] {
            s.validate().unwrap();
            assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
        }
    }

    #[test]
    fn duplicate_region_names_field() {
        let mut s = three_block();
        s.regions[1].id = "r1".into();
        s.regions[1].center = [5.0, 0.0, 0.0];
        let e = s.validate().unwrap_err();
        assert!(e.field_errors().iter().any(|f| f.path == "regions[1].id"), "{e}");
    }

    #[test]
    fn unknown_formula_atom_is_reported() {
        let mut s = three_block();
        s.formula = "F o9r1".into();
        let e = s.validate().unwrap_err();
        assert_eq!(e.field_errors()[0].path, "formula");
    }

    #[test]
    fn absent_goal_region_is_still_valid() {
        let mut s = three_block();
        s.macros = vec!["all_obj_in_r9".into()];
        s.formula = "F G all_obj_in_r9".into();
        s.validate().unwrap();
    }

    #[test]
    fn coincident_docks_rejected() {
        let mut s = three_block_tray();
        s.trays[0].docks[1].position = s.trays[0].docks[0].position;
        let e = s.validate().unwrap_err();
        assert!(e.field_errors().iter().any(|f| f.path == "trays[0].docks[1].position"), "{e}");
    }
}
