use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        // Shared string: states are cloned on every search expansion.
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(s: impl AsRef<str>) -> Self {
                Self(Arc::from(s.as_ref()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self::new(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
                ser.serialize_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
                String::deserialize(de).map(Self::new)
            }
        }
    };
}

id_type!(
    /// Prehensile object, e.g. `o1`.
    ObjectId
);
id_type!(
    /// Fixed region or movable region (tray), e.g. `r2`.
    RegionId
);
id_type!(
    /// Discrete placement pose of a tray, e.g. `d1`.
    DockId
);

/// Pseudo-region of an entity held by the gripper.
pub const HAND: &str = "rhand";

/// Checks the identifier syntax shared by objects, regions and docks.
pub fn valid_id(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
        && s != HAND
}

/// Where an object currently is.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Place {
    Region(RegionId),
    Hand,
}

impl Place {
    pub fn region(&self) -> Option<&RegionId> {
        match self {
            Place::Region(r) => Some(r),
            Place::Hand => None,
        }
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Region(r) => write!(f, "{r}"),
            Place::Hand => f.write_str(HAND),
        }
    }
}

/// Where a tray currently is.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrayPose {
    Dock(DockId),
    Hand,
}

impl fmt::Display for TrayPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrayPose::Dock(d) => write!(f, "{d}"),
            TrayPose::Hand => f.write_str(HAND),
        }
    }
}

/// Discrete world state: object-to-region assignment plus tray docks.
///
/// Held entities (`rhand`) only appear at the execution layer; planning
/// states never hold anything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SymbolicState {
    pub assignment: BTreeMap<ObjectId, Place>,
    pub tray_docks: BTreeMap<RegionId, TrayPose>,
}

impl SymbolicState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_object(mut self, o: &str, r: &str) -> Self {
        let place = if r == HAND { Place::Hand } else { Place::Region(r.into()) };
        self.assignment.insert(o.into(), place);
        self
    }

    pub fn with_tray(mut self, t: &str, d: &str) -> Self {
        let pose = if d == HAND { TrayPose::Hand } else { TrayPose::Dock(d.into()) };
        self.tray_docks.insert(t.into(), pose);
        self
    }

    pub fn region_of(&self, o: &ObjectId) -> Option<&RegionId> {
        self.assignment.get(o).and_then(Place::region)
    }

    pub fn dock_of(&self, t: &RegionId) -> Option<&DockId> {
        match self.tray_docks.get(t) {
            Some(TrayPose::Dock(d)) => Some(d),
            _ => None,
        }
    }

    pub fn held_object(&self) -> Option<&ObjectId> {
        self.assignment.iter().find(|(_, p)| **p == Place::Hand).map(|(o, _)| o)
    }

    pub fn held_tray(&self) -> Option<&RegionId> {
        self.tray_docks.iter().find(|(_, p)| **p == TrayPose::Hand).map(|(t, _)| t)
    }

    pub fn holds_anything(&self) -> bool {
        self.held_object().is_some() || self.held_tray().is_some()
    }

    /// `o1r1_o2r3_r3d1`: object pairs in id order, then tray docks.
    pub fn encode(&self) -> String {
        let mut out = String::with_capacity(8 * (self.assignment.len() + self.tray_docks.len()));
        let pairs = self
            .assignment
            .iter()
            .map(|(o, p)| (o.as_str(), p.region().map_or(HAND, RegionId::as_str)))
            .chain(self.tray_docks.iter().map(|(t, d)| {
                (t.as_str(), match d {
                    TrayPose::Dock(d) => d.as_str(),
                    TrayPose::Hand => HAND,
                })
            }));
        for (i, (a, b)) in pairs.enumerate() {
            if i > 0 {
                out.push('_');
            }
            out.push_str(a);
            out.push_str(b);
        }
        out
    }

    /// Atoms mentioning the object / tray placements (no macro atoms).
    pub fn placement_atoms(&self) -> BTreeSet<String> {
        self.assignment
            .iter()
            .map(|(o, p)| placement_atom(o.as_str(), &p.to_string()))
            .chain(self.tray_docks.iter().map(|(t, d)| placement_atom(t.as_str(), &d.to_string())))
            .collect()
    }
}

impl fmt::Display for SymbolicState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// Atom stating that `entity` sits at `place`, e.g. `o1r2`, `r3d1`, `o1rhand`.
pub fn placement_atom(entity: &str, place: &str) -> String {
    format!("{entity}{place}")
}

/// A TS action. Destinations always differ from the current placement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpec {
    MoveObject { object: ObjectId, dest: RegionId },
    MoveRegion { tray: RegionId, dock: DockId },
}

impl ActionSpec {
    pub fn move_object(o: &str, r: &str) -> Self {
        ActionSpec::MoveObject { object: o.into(), dest: r.into() }
    }

    pub fn move_region(t: &str, d: &str) -> Self {
        ActionSpec::MoveRegion { tray: t.into(), dock: d.into() }
    }

    /// Id of the moved entity (object or tray).
    pub fn entity(&self) -> &str {
        match self {
            ActionSpec::MoveObject { object, .. } => object.as_str(),
            ActionSpec::MoveRegion { tray, .. } => tray.as_str(),
        }
    }

    /// `move_o1_r2` / `move_r3_d2`.
    pub fn name(&self) -> String {
        match self {
            ActionSpec::MoveObject { object, dest } => format!("move_{object}_{dest}"),
            ActionSpec::MoveRegion { tray, dock } => format!("move_{tray}_{dock}"),
        }
    }
}

impl fmt::Display for ActionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodes_object_pairs() {
        let s = SymbolicState::new().with_object("o1", "r1").with_object("o2", "r3");
        assert_eq!(s.encode(), "o1r1_o2r3");
    }

    #[test]
    fn encodes_held_object() {
        let s = SymbolicState::new().with_object("o1", HAND).with_object("o2", "r1");
        assert_eq!(s.encode(), "o1rhand_o2r1");
        assert_eq!(s.held_object(), Some(&ObjectId::from("o1")));
    }

    #[test]
    fn encodes_tray_docks_after_objects() {
        let s = SymbolicState::new().with_object("o1", "r1").with_object("o2", "r1").with_tray("r3", "d1");
        assert_eq!(s.encode(), "o1r1_o2r1_r3d1");
    }

    #[test]
    fn id_syntax() {
        assert!(valid_id("o1"));
        assert!(valid_id("r12"));
        assert!(!valid_id("R1"));
        assert!(!valid_id("o_1"));
        assert!(!valid_id(""));
        assert!(!valid_id(HAND));
    }

    #[test]
    fn action_names() {
        assert_eq!(ActionSpec::move_object("o1", "r2").name(), "move_o1_r2");
        assert_eq!(ActionSpec::move_region("r3", "d2").to_string(), "move_r3_d2");
    }
}
