use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Intervention, SimError};
use crate::bt::{ActionProgress, Executor};
use crate::domain::{ActionSpec, DockId, DomainError, ObjectId, Place, RegionId, SymbolicState, TrayPose, WorldGeometry};
use crate::num::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Gripper travels to the entity; nothing is held yet.
    Approach,
    /// Entity in the gripper, travelling to the placement point.
    Carry,
}

#[derive(Debug, Clone, PartialEq)]
struct Motion {
    action: ActionSpec,
    phase: Phase,
    /// Where the entity sat at pick time (restored on abort).
    source: Point3<f64>,
    place: Point3<f64>,
    riders: Vec<ObjectId>,
}

/// Something the world did on its own during `step` / executor calls.
#[derive(Debug, Clone, PartialEq)]
pub enum WorldEvent {
    Started(ActionSpec),
    Picked(ActionSpec),
    Completed(ActionSpec),
    Aborted(ActionSpec),
}

/// Deterministic kinematic stand-in for the robot cell.
///
/// The gripper moves in straight lines at constant speed: first to the
/// entity, then to the placement point. Placements of objects get seeded
/// jitter inside the target region.
#[derive(Debug, Clone)]
pub struct SimWorld {
    geometry: WorldGeometry<f64>,
    ee: Point3<f64>,
    speed: f64,
    jitter: f64,
    rng: ChaCha8Rng,
    clock: f64,
    motion: Option<Motion>,
    done: Option<ActionSpec>,
    travelled: f64,
    events: Vec<WorldEvent>,
}

impl SimWorld {
    /// `jitter` is the placement scatter as a fraction of the region radius.
    pub fn new(geometry: WorldGeometry<f64>, speed: f64, jitter: f64, seed: u64) -> Self {
        assert!(speed > 0.0, "speed must be positive");
        Self {
            ee: geometry.home(),
            geometry,
            speed,
            jitter,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock: 0.0,
            motion: None,
            done: None,
            travelled: 0.0,
            events: Vec::new(),
        }
    }

    pub fn geometry(&self) -> &WorldGeometry<f64> {
        &self.geometry
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn end_effector(&self) -> Point3<f64> {
        self.ee
    }

    /// Total gripper path length so far, in meters.
    pub fn travelled(&self) -> f64 {
        self.travelled
    }

    pub fn active_action(&self) -> Option<&ActionSpec> {
        self.motion.as_ref().map(|m| &m.action)
    }

    pub fn phase(&self) -> Option<Phase> {
        self.motion.as_ref().map(|m| m.phase)
    }

    pub fn drain_events(&mut self) -> Vec<WorldEvent> {
        std::mem::take(&mut self.events)
    }

    fn held(&self) -> Option<&Motion> {
        self.motion.as_ref().filter(|m| m.phase == Phase::Carry)
    }

    /// Entity currently in the gripper.
    pub fn held_entity(&self) -> Option<&str> {
        self.held().map(|m| m.action.entity())
    }

    /// Symbolic snapshot; held entities map to `rhand`, objects riding a
    /// held tray stay in the tray.
    pub fn perceive(&self) -> Result<SymbolicState, DomainError> {
        let held = self.held();
        let mut s = SymbolicState::new();
        for (o, p) in self.geometry.objects() {
            let place = match held {
                Some(m) if m.action.entity() == o.as_str() => Place::Hand,
                Some(m @ Motion { action: ActionSpec::MoveRegion { tray, .. }, .. }) if m.riders.contains(o) => {
                    Place::Region(tray.clone())
                }
                _ => Place::Region(self.geometry.region_of(*p)?),
            };
            s.assignment.insert(o.clone(), place);
        }
        for (t, g) in self.geometry.trays() {
            let pose = match held {
                Some(m) if m.action.entity() == t.as_str() => TrayPose::Hand,
                _ => TrayPose::Dock(g.dock.clone()),
            };
            s.tray_docks.insert(t.clone(), pose);
        }
        Ok(s)
    }

    /// The snapshot as it would read after aborting: a held entity is
    /// back at its source.
    pub fn settled_state(&self) -> Result<SymbolicState, DomainError> {
        let mut s = self.perceive()?;
        if let Some(m) = self.held() {
            match &m.action {
                ActionSpec::MoveObject { object, .. } => {
                    s.assignment.insert(object.clone(), Place::Region(self.geometry.region_of(m.source)?));
                }
                ActionSpec::MoveRegion { tray, .. } => {
                    let dock = self.geometry.trays()[tray].dock.clone();
                    s.tray_docks.insert(tray.clone(), TrayPose::Dock(dock));
                }
            }
        }
        Ok(s)
    }

    /// Random point inside the scatter disc of region `r`.
    fn scatter(&mut self, r: &RegionId) -> Option<Point3<f64>> {
        let (c, radius) = self.geometry.region_center(r)?;
        let rho = self.jitter * radius * self.rng.gen::<f64>().sqrt();
        let theta = std::f64::consts::TAU * self.rng.gen::<f64>();
        Some(c + Point3::new(rho * theta.cos(), rho * theta.sin(), 0.0))
    }

    fn entity_position(&self, a: &ActionSpec) -> Option<Point3<f64>> {
        match a {
            ActionSpec::MoveObject { object, .. } => self.geometry.object_position(object),
            ActionSpec::MoveRegion { tray, .. } => self.geometry.trays().get(tray).map(|t| t.center()),
        }
    }

    /// Advances the clock and the active motion by `dt` seconds.
    pub fn step(&mut self, dt: f64) {
        assert!(dt > 0.0, "dt must be positive");
        self.clock += dt;
        let mut budget = self.speed * dt;
        while budget > 0.0 {
            let Some(m) = self.motion.as_ref() else { break };
            let target = match m.phase {
                Phase::Approach => match self.entity_position(&m.action) {
                    Some(p) => p,
                    // The entity vanished; wait for the tree to abort.
                    None => break,
                },
                Phase::Carry => m.place,
            };
            let gap = self.ee.distance(target);
            if gap > budget {
                self.ee = self.ee + (target - self.ee) * (budget / gap);
                self.travelled += budget;
                budget = 0.0;
            } else {
                self.ee = target;
                self.travelled += gap;
                budget -= gap;
                self.advance_phase();
            }
            if let Some(Motion { action: ActionSpec::MoveObject { object, .. }, phase: Phase::Carry, .. }) = &self.motion {
                let o = object.clone();
                let ee = self.ee;
                let _ = self.geometry.set_object_position(&o, ee);
            }
        }
    }

    fn advance_phase(&mut self) {
        let m = self.motion.as_mut().expect("active motion");
        match m.phase {
            Phase::Approach => {
                m.phase = Phase::Carry;
                m.source = self.ee;
                if let ActionSpec::MoveRegion { tray, .. } = &m.action {
                    m.riders = self
                        .geometry
                        .objects()
                        .iter()
                        .filter(|(_, p)| self.geometry.region_of(**p).is_ok_and(|r| &r == tray))
                        .map(|(o, _)| o.clone())
                        .collect();
                }
                self.events.push(WorldEvent::Picked(m.action.clone()));
            }
            Phase::Carry => {
                let m = self.motion.take().expect("active motion");
                match &m.action {
                    ActionSpec::MoveObject { object, .. } => {
                        let _ = self.geometry.set_object_position(object, m.place);
                    }
                    ActionSpec::MoveRegion { tray, dock } => {
                        let _ = self.geometry.set_tray_dock(tray, dock, &m.riders);
                    }
                }
                self.events.push(WorldEvent::Completed(m.action.clone()));
                self.done = Some(m.action);
            }
        }
    }

    /// Applies an external change. Events touching the entity in the
    /// gripper are refused.
    pub fn inject(&mut self, ev: &Intervention) -> Result<(), SimError> {
        let unresolvable = |msg: String| Err(SimError::Unresolvable(msg));
        // Objects riding a carried tray are as untouchable as the tray.
        let held: Vec<String> = self
            .held()
            .map(|m| m.riders.iter().map(|o| o.to_string()).chain([m.action.entity().to_owned()]).collect())
            .unwrap_or_default();
        let touches_held = |id: &str| held.iter().any(|h| h == id);
        match ev {
            Intervention::RelocateObject { object, region } => {
                if touches_held(object.as_str()) {
                    return Err(SimError::HeldObjectConflict(object.to_string()));
                }
                if self.geometry.object_position(object).is_none() {
                    return unresolvable(format!("unknown object {object}"));
                }
                let Some(p) = self.scatter(region) else { return unresolvable(format!("unknown region {region}")) };
                self.geometry.set_object_position(object, p)?;
            }
            Intervention::AddObject { object, region } => {
                if self.geometry.object_position(object).is_some() {
                    return unresolvable(format!("object {object} already exists"));
                }
                let Some(p) = self.scatter(region) else { return unresolvable(format!("unknown region {region}")) };
                self.geometry.add_object(object.clone(), p)?;
            }
            Intervention::RemoveObject { object } => {
                if touches_held(object.as_str()) {
                    return Err(SimError::HeldObjectConflict(object.to_string()));
                }
                if self.geometry.object_position(object).is_none() {
                    return unresolvable(format!("unknown object {object}"));
                }
                self.geometry.remove_object(object)?;
            }
            Intervention::AddTray { tray, docks, dock, radius } => {
                let docks: BTreeMap<DockId, Point3<f64>> =
                    docks.iter().map(|(d, p)| (d.clone(), Point3::from_array(*p))).collect();
                self.geometry.add_tray(tray.clone(), docks, dock.clone(), *radius)?;
            }
            Intervention::RemoveRegion { region } => {
                if touches_held(region.as_str()) {
                    return Err(SimError::HeldObjectConflict(region.to_string()));
                }
                if !self.geometry.has_region(region) {
                    return unresolvable(format!("unknown region {region}"));
                }
                let occupied = self.geometry.objects().values().any(|p| self.geometry.region_of(*p).is_ok_and(|r| &r == region));
                if occupied {
                    return unresolvable(format!("region {region} is not empty"));
                }
                self.geometry.remove_region(region)?;
            }
        }
        Ok(())
    }

    /// Object ids currently in the world.
    pub fn object_ids(&self) -> BTreeSet<ObjectId> {
        self.geometry.objects().keys().cloned().collect()
    }

    /// Serializable picture of the continuous state.
    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            t: self.clock,
            end_effector: self.ee.to_array(),
            holding: self.held_entity().map(str::to_owned),
            active: self.active_action().map(ActionSpec::name),
            objects: self.geometry.objects().iter().map(|(o, p)| (o.to_string(), p.to_array())).collect(),
            regions: self
                .geometry
                .regions()
                .iter()
                .map(|(r, g)| (r.to_string(), RegionView { center: g.center.to_array(), radius: g.radius, dock: None }))
                .chain(self.geometry.trays().iter().map(|(r, t)| {
                    (r.to_string(), RegionView { center: t.center().to_array(), radius: t.radius, dock: Some(t.dock.to_string()) })
                }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionView {
    pub center: [f64; 3],
    pub radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dock: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub t: f64,
    pub end_effector: [f64; 3],
    pub holding: Option<String>,
    pub active: Option<String>,
    pub objects: BTreeMap<String, [f64; 3]>,
    pub regions: BTreeMap<String, RegionView>,
}

impl Executor for SimWorld {
    fn progress(&self, action: &ActionSpec) -> ActionProgress {
        if self.active_action() == Some(action) {
            ActionProgress::Running
        } else if self.done.as_ref() == Some(action) {
            ActionProgress::Done
        } else {
            ActionProgress::Idle
        }
    }

    fn start(&mut self, action: &ActionSpec) -> bool {
        if self.motion.is_some() || self.entity_position(action).is_none() {
            return false;
        }
        let place = match action {
            ActionSpec::MoveObject { dest, .. } => self.scatter(dest),
            ActionSpec::MoveRegion { tray, dock } => self.geometry.dock_point(tray, dock),
        };
        let Some(place) = place else { return false };
        self.done = None;
        self.motion = Some(Motion { action: action.clone(), phase: Phase::Approach, source: self.ee, place, riders: vec![] });
        self.events.push(WorldEvent::Started(action.clone()));
        true
    }

    fn acknowledge(&mut self, action: &ActionSpec) {
        if self.done.as_ref() == Some(action) {
            self.done = None;
        }
    }

    /// Stops the motion; a held object drops back to where it was picked.
    fn abort(&mut self) {
        if let Some(m) = self.motion.take() {
            if let (Phase::Carry, ActionSpec::MoveObject { object, .. }) = (m.phase, &m.action) {
                let _ = self.geometry.set_object_position(object, m.source);
            }
            self.events.push(WorldEvent::Aborted(m.action));
        }
    }

    fn busy(&self) -> bool {
        self.motion.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> SimWorld {
        let mut g = WorldGeometry::new(Point3::new(0.0, 0.0, 0.0));
        g.add_region("r1".into(), Point3::new(0.5, 0.0, 0.0), 0.1).unwrap();
        g.add_region("r2".into(), Point3::new(1.0, 0.0, 0.0), 0.1).unwrap();
        g.add_object("o1".into(), Point3::new(0.5, 0.0, 0.0)).unwrap();
        SimWorld::new(g, 0.25, 0.0, 1)
    }

    #[test]
    fn one_meter_at_quarter_speed_takes_four_seconds() {
        let mut w = world();
        let a = ActionSpec::move_object("o1", "r2");
        assert!(w.start(&a));
        w.step(2.0);
        assert_eq!(w.progress(&a), ActionProgress::Running);
        assert_eq!(w.perceive().unwrap().assignment[&ObjectId::from("o1")], Place::Hand);
        w.step(2.0);
        assert_eq!(w.progress(&a), ActionProgress::Done);
        assert_eq!(w.perceive().unwrap().region_of(&"o1".into()), Some(&RegionId::from("r2")));
        assert!((w.travelled() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn idle_step_only_advances_clock() {
        let mut w = world();
        w.step(0.5);
        assert_eq!(w.clock(), 0.5);
        assert_eq!(w.end_effector(), Point3::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn abort_returns_held_object_to_source() {
        let mut w = world();
        let a = ActionSpec::move_object("o1", "r2");
        w.start(&a);
        w.step(3.0);
        assert_eq!(w.held_entity(), Some("o1"));
        assert_eq!(w.settled_state().unwrap().region_of(&"o1".into()), Some(&RegionId::from("r1")));
        w.abort();
        assert!(!w.busy());
        assert_eq!(w.perceive().unwrap().region_of(&"o1".into()), Some(&RegionId::from("r1")));
    }

    #[test]
    fn held_object_cannot_be_touched() {
        let mut w = world();
        w.start(&ActionSpec::move_object("o1", "r2"));
        w.step(3.0);
        let ev = Intervention::RemoveObject { object: "o1".into() };
        assert!(matches!(w.inject(&ev), Err(SimError::HeldObjectConflict(_))));
        let ev = Intervention::RemoveObject { object: "o9".into() };
        assert!(matches!(w.inject(&ev), Err(SimError::Unresolvable(_))));
    }

    #[test]
    fn object_outside_regions_is_a_perception_gap() {
        let mut w = world();
        w.geometry.set_object_position(&"o1".into(), Point3::new(0.75, 0.0, 0.0)).unwrap();
        assert_eq!(w.perceive(), Err(DomainError::NoRegion));
    }
}
