use std::collections::{BTreeMap, BTreeSet};

use crate::ltl::Formula;

use super::{placement_atom, ActionSpec, DockId, DomainError, ObjectId, Place, RegionId, SymbolicState, TrayPose, HAND};

/// Macro atoms have the form `all_obj_in_<region>`.
pub const MACRO_PREFIX: &str = "all_obj_in_";

/// Region named by a macro atom, if `atom` is one.
pub fn macro_region(atom: &str) -> Option<&str> {
    atom.strip_prefix(MACRO_PREFIX).filter(|r| !r.is_empty())
}

/// Transition system over object/region assignments.
///
/// Planning states never contain held entities: a move is an atomic
/// pick-then-place, so `|S| = |R|^|O| · Π_trays |docks|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionSystem {
    objects: BTreeSet<ObjectId>,
    fixed: BTreeSet<RegionId>,
    trays: BTreeMap<RegionId, BTreeSet<DockId>>,
    macros: BTreeSet<String>,
    initial: SymbolicState,
    version: u64,
}

impl TransitionSystem {
    pub fn new(
        objects: impl IntoIterator<Item = ObjectId>,
        fixed: impl IntoIterator<Item = RegionId>,
        trays: impl IntoIterator<Item = (RegionId, BTreeSet<DockId>)>,
        macros: impl IntoIterator<Item = String>,
        initial: SymbolicState,
    ) -> Result<Self, DomainError> {
        let ts = Self {
            objects: objects.into_iter().collect(),
            fixed: fixed.into_iter().collect(),
            trays: trays.into_iter().collect(),
            macros: macros.into_iter().collect(),
            initial,
            version: 0,
        };
        if let Some(t) = ts.trays.keys().find(|t| ts.fixed.contains(*t)) {
            return Err(DomainError::Duplicate(format!("region {t}")));
        }
        if let Some((t, _)) = ts.trays.iter().find(|(_, d)| d.is_empty()) {
            return Err(DomainError::Unknown(format!("docks of tray {t}")));
        }
        for m in &ts.macros {
            if macro_region(m).is_none() {
                return Err(DomainError::UnknownAtom(m.clone()));
            }
        }
        ts.check_state(&ts.initial)?;
        Ok(ts)
    }

    pub fn objects(&self) -> &BTreeSet<ObjectId> {
        &self.objects
    }

    pub fn fixed_regions(&self) -> &BTreeSet<RegionId> {
        &self.fixed
    }

    pub fn trays(&self) -> &BTreeMap<RegionId, BTreeSet<DockId>> {
        &self.trays
    }

    pub fn macros(&self) -> &BTreeSet<String> {
        &self.macros
    }

    pub fn initial(&self) -> &SymbolicState {
        &self.initial
    }

    /// Bumped by every reconstruction.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Fixed regions and trays, in id order.
    pub fn regions(&self) -> Vec<RegionId> {
        let mut all: Vec<RegionId> = self.fixed.iter().chain(self.trays.keys()).cloned().collect();
        all.sort();
        all
    }

    pub fn has_region(&self, r: &RegionId) -> bool {
        self.fixed.contains(r) || self.trays.contains_key(r)
    }

    pub fn is_tray(&self, r: &RegionId) -> bool {
        self.trays.contains_key(r)
    }

    /// `|R|^|O| · Π |docks|`, saturating.
    pub fn state_count(&self) -> u128 {
        let r = (self.fixed.len() + self.trays.len()) as u128;
        let mut n: u128 = 1;
        for _ in &self.objects {
            n = n.saturating_mul(r);
        }
        for docks in self.trays.values() {
            n = n.saturating_mul(docks.len() as u128);
        }
        n
    }

    /// Checks that `s` is a complete planning state of this TS. Held
    /// entities are accepted; they only occur at the execution layer.
    pub fn check_state(&self, s: &SymbolicState) -> Result<(), DomainError> {
        let inconsistent = |msg: String| Err(DomainError::InconsistentObservation(msg));
        for (o, p) in &s.assignment {
            if !self.objects.contains(o) {
                return inconsistent(format!("unknown object {o}"));
            }
            if let Place::Region(r) = p {
                if !self.has_region(r) {
                    return inconsistent(format!("object {o} in unknown region {r}"));
                }
            }
        }
        if let Some(o) = self.objects.iter().find(|o| !s.assignment.contains_key(*o)) {
            return inconsistent(format!("object {o} is not observed"));
        }
        for (t, pose) in &s.tray_docks {
            let Some(docks) = self.trays.get(t) else {
                return inconsistent(format!("unknown tray {t}"));
            };
            if let TrayPose::Dock(d) = pose {
                if !docks.contains(d) {
                    return inconsistent(format!("tray {t} at unknown dock {d}"));
                }
            }
        }
        if let Some(t) = self.trays.keys().find(|t| !s.tray_docks.contains_key(*t)) {
            return inconsistent(format!("tray {t} is not observed"));
        }
        let held = s.assignment.values().filter(|p| **p == Place::Hand).count()
            + s.tray_docks.values().filter(|p| **p == TrayPose::Hand).count();
        if held > 1 {
            return inconsistent("more than one entity held".into());
        }
        Ok(())
    }

    /// All legal actions in `s`, objects first (by id, then destination id),
    /// then tray moves. Held entities cannot be moved again.
    pub fn enumerate_actions(&self, s: &SymbolicState) -> Vec<ActionSpec> {
        let regions = self.regions();
        let mut out = Vec::new();
        for o in &self.objects {
            let Some(Place::Region(cur)) = s.assignment.get(o) else { continue };
            for r in regions.iter().filter(|r| *r != cur) {
                out.push(ActionSpec::MoveObject { object: o.clone(), dest: r.clone() });
            }
        }
        for (t, docks) in &self.trays {
            let Some(TrayPose::Dock(cur)) = s.tray_docks.get(t) else { continue };
            for d in docks.iter().filter(|d| *d != cur) {
                out.push(ActionSpec::MoveRegion { tray: t.clone(), dock: d.clone() });
            }
        }
        out
    }

    pub fn is_legal(&self, s: &SymbolicState, a: &ActionSpec) -> bool {
        match a {
            ActionSpec::MoveObject { object, dest } => {
                self.objects.contains(object)
                    && self.has_region(dest)
                    && matches!(s.assignment.get(object), Some(Place::Region(cur)) if cur != dest)
            }
            ActionSpec::MoveRegion { tray, dock } => {
                self.trays.get(tray).is_some_and(|d| d.contains(dock))
                    && matches!(s.tray_docks.get(tray), Some(TrayPose::Dock(cur)) if cur != dock)
            }
        }
    }

    /// δ_t. Objects inside a moved tray keep the tray as their region.
    pub fn apply_action(&self, s: &SymbolicState, a: &ActionSpec) -> Result<SymbolicState, DomainError> {
        if !self.is_legal(s, a) {
            return Err(DomainError::IllegalAction { action: a.name(), state: s.encode() });
        }
        let mut next = s.clone();
        match a {
            ActionSpec::MoveObject { object, dest } => {
                next.assignment.insert(object.clone(), Place::Region(dest.clone()));
            }
            ActionSpec::MoveRegion { tray, dock } => {
                next.tray_docks.insert(tray.clone(), TrayPose::Dock(dock.clone()));
            }
        }
        Ok(next)
    }

    /// Placement atoms of `s` plus every declared macro that holds.
    pub fn label(&self, s: &SymbolicState) -> BTreeSet<String> {
        let mut atoms = s.placement_atoms();
        for m in &self.macros {
            if self.macro_holds(m, s) {
                atoms.insert(m.clone());
            }
        }
        atoms
    }

    /// Whether a single atom is in `label(s)`.
    pub fn label_holds(&self, atom: &str, s: &SymbolicState) -> bool {
        if self.macros.contains(atom) {
            return self.macro_holds(atom, s);
        }
        s.placement_atoms().contains(atom)
    }

    fn macro_holds(&self, m: &str, s: &SymbolicState) -> bool {
        let Some(r) = macro_region(m) else { return false };
        // Vacuously true without objects.
        s.assignment.values().all(|p| matches!(p, Place::Region(x) if x.as_str() == r))
    }

    /// Every atom with a labeling rule.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let mut atoms = BTreeSet::new();
        for o in &self.objects {
            for r in self.regions() {
                atoms.insert(placement_atom(o.as_str(), r.as_str()));
            }
            atoms.insert(placement_atom(o.as_str(), HAND));
        }
        for (t, docks) in &self.trays {
            for d in docks {
                atoms.insert(placement_atom(t.as_str(), d.as_str()));
            }
            atoms.insert(placement_atom(t.as_str(), HAND));
        }
        atoms.extend(self.macros.iter().cloned());
        atoms
    }

    /// Rejects formulas mentioning atoms without a labeling rule.
    pub fn check_formula(&self, f: &Formula) -> Result<(), DomainError> {
        let vocab = self.vocabulary();
        match f.atoms().into_iter().find(|a| !vocab.contains(a)) {
            Some(a) => Err(DomainError::UnknownAtom(a)),
            None => Ok(()),
        }
    }

    /// Inverse of [`SymbolicState::encode`] for this TS's vocabulary.
    pub fn decode_state(&self, text: &str) -> Result<SymbolicState, DomainError> {
        let bad = || DomainError::BadEncoding(text.to_string());
        let mut s = SymbolicState::new();
        if text.is_empty() {
            return Ok(s);
        }
        for token in text.split('_') {
            let object = self.objects.iter().find_map(|o| {
                let rest = token.strip_prefix(o.as_str())?;
                if rest == HAND {
                    Some((o, Place::Hand))
                } else {
                    let r = RegionId::from(rest);
                    self.has_region(&r).then_some((o, Place::Region(r)))
                }
            });
            if let Some((o, p)) = object {
                if s.assignment.insert(o.clone(), p).is_some() {
                    return Err(bad());
                }
                continue;
            }
            let tray = self.trays.iter().find_map(|(t, docks)| {
                let rest = token.strip_prefix(t.as_str())?;
                if rest == HAND {
                    Some((t, TrayPose::Hand))
                } else {
                    let d = DockId::from(rest);
                    docks.contains(&d).then_some((t, TrayPose::Dock(d)))
                }
            });
            let (t, p) = tray.ok_or_else(bad)?;
            if s.tray_docks.insert(t.clone(), p).is_some() {
                return Err(bad());
            }
        }
        if s.encode() != text {
            return Err(bad());
        }
        Ok(s)
    }

    pub fn indexer(&self) -> StateIndexer {
        StateIndexer::new(self)
    }
}

/// Mixed-radix bijection between planning states and `0..state_count`.
#[derive(Debug, Clone)]
pub struct StateIndexer {
    objects: Vec<ObjectId>,
    regions: Vec<RegionId>,
    trays: Vec<(RegionId, Vec<DockId>)>,
    count: usize,
}

impl StateIndexer {
    fn new(ts: &TransitionSystem) -> Self {
        let objects: Vec<ObjectId> = ts.objects.iter().cloned().collect();
        let regions = ts.regions();
        let trays: Vec<(RegionId, Vec<DockId>)> =
            ts.trays.iter().map(|(t, d)| (t.clone(), d.iter().cloned().collect())).collect();
        let count = usize::try_from(ts.state_count()).unwrap_or(usize::MAX);
        Self { objects, regions, trays, count }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn index(&self, s: &SymbolicState) -> Option<usize> {
        let mut idx = 0usize;
        for (t, docks) in self.trays.iter().rev() {
            let d = s.dock_of(t)?;
            idx = idx * docks.len() + docks.iter().position(|x| x == d)?;
        }
        for o in self.objects.iter().rev() {
            let r = s.region_of(o)?;
            idx = idx * self.regions.len() + self.regions.binary_search(r).ok()?;
        }
        Some(idx)
    }

    pub fn state(&self, mut idx: usize) -> SymbolicState {
        let mut s = SymbolicState::new();
        for o in &self.objects {
            let r = &self.regions[idx % self.regions.len()];
            idx /= self.regions.len();
            s.assignment.insert(o.clone(), Place::Region(r.clone()));
        }
        for (t, docks) in &self.trays {
            s.tray_docks.insert(t.clone(), TrayPose::Dock(docks[idx % docks.len()].clone()));
            idx /= docks.len();
        }
        s
    }

    pub fn states(&self) -> impl Iterator<Item = SymbolicState> + '_ {
        (0..self.count).map(|i| self.state(i))
    }
}

/// Structural change observed in the world.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TsDelta {
    pub add_objects: Vec<ObjectId>,
    pub remove_objects: Vec<ObjectId>,
    pub add_regions: Vec<RegionId>,
    pub add_trays: Vec<(RegionId, BTreeSet<DockId>)>,
    pub remove_regions: Vec<RegionId>,
}

impl TsDelta {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

/// Rebuilds the TS after objects or regions changed; `observed` becomes the
/// new initial state.
pub fn reconstruct_ts(
    ts: &TransitionSystem,
    observed: &SymbolicState,
    delta: &TsDelta,
) -> Result<TransitionSystem, DomainError> {
    let mut next = ts.clone();
    for o in &delta.remove_objects {
        if !next.objects.remove(o) {
            return Err(DomainError::InconsistentObservation(format!("removed unknown object {o}")));
        }
    }
    for r in &delta.remove_regions {
        if !next.fixed.remove(r) && next.trays.remove(r).is_none() {
            return Err(DomainError::InconsistentObservation(format!("removed unknown region {r}")));
        }
    }
    for o in &delta.add_objects {
        if !next.objects.insert(o.clone()) {
            return Err(DomainError::Duplicate(format!("object {o}")));
        }
    }
    for r in &delta.add_regions {
        if next.has_region(r) || !next.fixed.insert(r.clone()) {
            return Err(DomainError::Duplicate(format!("region {r}")));
        }
    }
    for (t, docks) in &delta.add_trays {
        if next.has_region(t) {
            return Err(DomainError::Duplicate(format!("region {t}")));
        }
        next.trays.insert(t.clone(), docks.clone());
    }
    next.check_state(observed)?;
    next.initial = observed.clone();
    next.version += 1;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docks(ds: &[&str]) -> BTreeSet<DockId> {
        ds.iter().map(|d| DockId::from(*d)).collect()
    }

    fn two_objects_with_tray() -> TransitionSystem {
        let s0 = SymbolicState::new().with_object("o1", "r1").with_object("o2", "r1").with_tray("r3", "d1");
        TransitionSystem::new(
            ["o1".into(), "o2".into()],
            ["r1".into(), "r2".into()],
            [("r3".into(), docks(&["d1", "d2"]))],
            [],
            s0,
        )
        .unwrap()
    }

    #[test]
    fn single_legal_move() {
        let s0 = SymbolicState::new().with_object("o1", "r1");
        let ts = TransitionSystem::new(["o1".into()], ["r1".into(), "r2".into()], [], [], s0.clone()).unwrap();
        assert_eq!(ts.enumerate_actions(&s0), vec![ActionSpec::move_object("o1", "r2")]);
    }

    #[test]
    fn actions_with_tray() {
        let ts = two_objects_with_tray();
        assert_eq!(
            ts.enumerate_actions(ts.initial()),
            vec![
                ActionSpec::move_object("o1", "r2"),
                ActionSpec::move_object("o1", "r3"),
                ActionSpec::move_object("o2", "r2"),
                ActionSpec::move_object("o2", "r3"),
                ActionSpec::move_region("r3", "d2"),
            ]
        );
    }

    #[test]
    fn no_objects_no_actions() {
        let ts = TransitionSystem::new([], ["r1".into()], [], [], SymbolicState::new()).unwrap();
        assert!(ts.enumerate_actions(ts.initial()).is_empty());
    }

    #[test]
    fn object_rides_tray() {
        let s = SymbolicState::new().with_object("o1", "r3").with_object("o2", "r1").with_tray("r3", "d1");
        let ts = two_objects_with_tray();
        let next = ts.apply_action(&s, &ActionSpec::move_region("r3", "d2")).unwrap();
        assert_eq!(next.encode(), "o1r3_o2r1_r3d2");
    }

    #[test]
    fn noop_is_illegal() {
        let ts = two_objects_with_tray();
        let err = ts.apply_action(ts.initial(), &ActionSpec::move_object("o1", "r1")).unwrap_err();
        assert!(matches!(err, DomainError::IllegalAction { .. }));
    }

    #[test]
    fn macro_labeling() {
        let s = SymbolicState::new().with_object("o1", "r2").with_object("o2", "r2");
        let ts = TransitionSystem::new(
            ["o1".into(), "o2".into()],
            ["r1".into(), "r2".into()],
            [],
            ["all_obj_in_r2".to_string()],
            s.clone(),
        )
        .unwrap();
        let expected: BTreeSet<String> = ["o1r2", "o2r2", "all_obj_in_r2"].map(String::from).into();
        assert_eq!(ts.label(&s), expected);
        let mixed = SymbolicState::new().with_object("o1", "r1").with_object("o2", "r2");
        let expected: BTreeSet<String> = ["o1r1", "o2r2"].map(String::from).into();
        assert_eq!(ts.label(&mixed), expected);
    }

    #[test]
    fn macro_is_vacuous_without_objects() {
        let ts = TransitionSystem::new([], ["r2".into()], [], ["all_obj_in_r2".to_string()], SymbolicState::new())
            .unwrap();
        assert!(ts.label(&SymbolicState::new()).contains("all_obj_in_r2"));
    }

    #[test]
    fn unknown_atom_rejected() {
        let ts = two_objects_with_tray();
        let f: Formula = "F G all_obj_in_r2".parse().unwrap();
        assert_eq!(ts.check_formula(&f), Err(DomainError::UnknownAtom("all_obj_in_r2".into())));
        assert!(ts.check_formula(&"F o1r3".parse().unwrap()).is_ok());
    }

    #[test]
    fn cardinality_counts_docks() {
        let ts = two_objects_with_tray();
        assert_eq!(ts.state_count(), 9 * 2);
        assert_eq!(ts.indexer().states().count(), 18);
    }

    #[test]
    fn decode_round_trip() {
        let ts = two_objects_with_tray();
        for s in ts.indexer().states() {
            assert_eq!(ts.decode_state(&s.encode()).unwrap(), s);
        }
        let held = SymbolicState::new().with_object("o1", HAND).with_object("o2", "r3").with_tray("r3", "d2");
        assert_eq!(ts.decode_state("o1rhand_o2r3_r3d2").unwrap(), held);
        assert!(ts.decode_state("o1r9_o2r1_r3d1").is_err());
    }

    #[test]
    fn reconstruct_adds_object() {
        let ts = two_objects_with_tray();
        let observed = ts.initial().clone().with_object("o3", "r1");
        let delta = TsDelta { add_objects: vec!["o3".into()], ..Default::default() };
        let next = reconstruct_ts(&ts, &observed, &delta).unwrap();
        assert_eq!(next.state_count(), 27 * 2);
        assert_eq!(next.version(), ts.version() + 1);
        assert_eq!(next.initial(), &observed);
    }

    #[test]
    fn reconstruct_rejects_unknown_ids() {
        let ts = two_objects_with_tray();
        let observed = ts.initial().clone().with_object("o3", "r1");
        let err = reconstruct_ts(&ts, &observed, &TsDelta::default()).unwrap_err();
        assert!(matches!(err, DomainError::InconsistentObservation(_)));
    }

    #[test]
    fn reconstruct_adds_tray() {
        let s0 = SymbolicState::new().with_object("o1", "r1");
        let ts = TransitionSystem::new(["o1".into()], ["r1".into(), "r2".into()], [], [], s0).unwrap();
        let before = ts.enumerate_actions(ts.initial()).len();
        let observed = ts.initial().clone().with_tray("r3", "d1");
        let delta = TsDelta { add_trays: vec![("r3".into(), docks(&["d1", "d2"]))], ..Default::default() };
        let next = reconstruct_ts(&ts, &observed, &delta).unwrap();
        assert_eq!(next.state_count(), 3 * 2);
        let actions = next.enumerate_actions(next.initial());
        assert_eq!(actions.len(), before + 2);
        assert!(actions.contains(&ActionSpec::move_region("r3", "d2")));
    }
}
