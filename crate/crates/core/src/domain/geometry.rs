use std::collections::BTreeMap;

use crate::num::{Point3, Scalar};

use super::{DockId, DomainError, ObjectId, RegionId, SymbolicState, TrayPose};

/// Default membership radius of a region, in meters.
pub const DEFAULT_RADIUS: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedRegion<T> {
    pub center: Point3<T>,
    pub radius: T,
}

/// Movable region with a finite set of docking poses.
#[derive(Debug, Clone, PartialEq)]
pub struct TrayGeometry<T> {
    pub docks: BTreeMap<DockId, Point3<T>>,
    pub dock: DockId,
    pub radius: T,
}

impl<T: Scalar> TrayGeometry<T> {
    pub fn center(&self) -> Point3<T> {
        self.docks[&self.dock]
    }
}

/// Continuous workspace data behind the symbolic abstraction.
///
/// `version` increases whenever the region or object sets (or a tray's dock
/// set) change. Moving an object or docking a tray elsewhere leaves it alone,
/// because costs only depend on region and dock centers.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldGeometry<T> {
    regions: BTreeMap<RegionId, FixedRegion<T>>,
    trays: BTreeMap<RegionId, TrayGeometry<T>>,
    objects: BTreeMap<ObjectId, Point3<T>>,
    home: Point3<T>,
    version: u64,
}

impl<T: Scalar> WorldGeometry<T> {
    pub fn new(home: Point3<T>) -> Self {
        Self {
            regions: BTreeMap::new(),
            trays: BTreeMap::new(),
            objects: BTreeMap::new(),
            home,
            version: 0,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn home(&self) -> Point3<T> {
        self.home
    }

    pub fn regions(&self) -> &BTreeMap<RegionId, FixedRegion<T>> {
        &self.regions
    }

    pub fn trays(&self) -> &BTreeMap<RegionId, TrayGeometry<T>> {
        &self.trays
    }

    pub fn objects(&self) -> &BTreeMap<ObjectId, Point3<T>> {
        &self.objects
    }

    pub fn object_position(&self, o: &ObjectId) -> Option<Point3<T>> {
        self.objects.get(o).copied()
    }

    pub fn has_region(&self, r: &RegionId) -> bool {
        self.regions.contains_key(r) || self.trays.contains_key(r)
    }

    pub fn add_region(&mut self, id: RegionId, center: Point3<T>, radius: T) -> Result<(), DomainError> {
        if self.has_region(&id) {
            return Err(DomainError::Duplicate(format!("region {id}")));
        }
        self.regions.insert(id, FixedRegion { center, radius });
        self.version += 1;
        Ok(())
    }

    pub fn add_tray(
        &mut self,
        id: RegionId,
        docks: BTreeMap<DockId, Point3<T>>,
        dock: DockId,
        radius: T,
    ) -> Result<(), DomainError> {
        if self.has_region(&id) {
            return Err(DomainError::Duplicate(format!("region {id}")));
        }
        if !docks.contains_key(&dock) {
            return Err(DomainError::Unknown(format!("dock {dock} of tray {id}")));
        }
        self.trays.insert(id, TrayGeometry { docks, dock, radius });
        self.version += 1;
        Ok(())
    }

    /// Removes a fixed region or tray. Objects inside it are left in place
    /// and must be re-observed by the caller.
    pub fn remove_region(&mut self, id: &RegionId) -> Result<(), DomainError> {
        if self.regions.remove(id).is_none() && self.trays.remove(id).is_none() {
            return Err(DomainError::Unknown(format!("region {id}")));
        }
        self.version += 1;
        Ok(())
    }

    pub fn add_object(&mut self, id: ObjectId, pos: Point3<T>) -> Result<(), DomainError> {
        if self.objects.contains_key(&id) {
            return Err(DomainError::Duplicate(format!("object {id}")));
        }
        self.objects.insert(id, pos);
        self.version += 1;
        Ok(())
    }

    pub fn remove_object(&mut self, id: &ObjectId) -> Result<Point3<T>, DomainError> {
        let pos = self.objects.remove(id).ok_or_else(|| DomainError::Unknown(format!("object {id}")))?;
        self.version += 1;
        Ok(pos)
    }

    pub fn set_object_position(&mut self, id: &ObjectId, pos: Point3<T>) -> Result<(), DomainError> {
        let slot = self.objects.get_mut(id).ok_or_else(|| DomainError::Unknown(format!("object {id}")))?;
        *slot = pos;
        Ok(())
    }

    /// Re-docks a tray; objects riding on it are translated along.
    pub fn set_tray_dock(&mut self, tray: &RegionId, dock: &DockId, riders: &[ObjectId]) -> Result<(), DomainError> {
        let t = self.trays.get_mut(tray).ok_or_else(|| DomainError::Unknown(format!("tray {tray}")))?;
        let to = *t.docks.get(dock).ok_or_else(|| DomainError::Unknown(format!("dock {dock} of tray {tray}")))?;
        let delta = to - t.center();
        t.dock = dock.clone();
        for o in riders {
            if let Some(p) = self.objects.get_mut(o) {
                *p = *p + delta;
            }
        }
        Ok(())
    }

    /// Current center and radius of a region (a tray's center is its dock).
    pub fn region_center(&self, r: &RegionId) -> Option<(Point3<T>, T)> {
        self.regions
            .get(r)
            .map(|g| (g.center, g.radius))
            .or_else(|| self.trays.get(r).map(|t| (t.center(), t.radius)))
    }

    /// Placement point of region `r` when the world is in symbolic state `s`
    /// (trays sit at the dock recorded in `s`, falling back to geometry).
    pub fn placement_point(&self, r: &RegionId, s: &SymbolicState) -> Option<Point3<T>> {
        if let Some(g) = self.regions.get(r) {
            return Some(g.center);
        }
        let tray = self.trays.get(r)?;
        match s.tray_docks.get(r) {
            Some(TrayPose::Dock(d)) => tray.docks.get(d).copied(),
            _ => Some(tray.center()),
        }
    }

    pub fn dock_point(&self, tray: &RegionId, dock: &DockId) -> Option<Point3<T>> {
        self.trays.get(tray)?.docks.get(dock).copied()
    }

    /// Nearest region center within its radius; ties go to the
    /// lexicographically smaller region id.
    pub fn region_of(&self, pos: Point3<T>) -> Result<RegionId, DomainError> {
        let candidates = self
            .regions
            .iter()
            .map(|(id, g)| (id, g.center, g.radius))
            .chain(self.trays.iter().map(|(id, t)| (id, t.center(), t.radius)));
        let mut best: Option<(&RegionId, T)> = None;
        for (id, center, radius) in candidates {
            let d = pos.distance(center);
            if d > radius {
                continue;
            }
            best = match best {
                Some((bid, bd)) if bd < d || (bd == d && bid < id) => Some((bid, bd)),
                _ => Some((id, d)),
            };
        }
        best.map(|(id, _)| id.clone()).ok_or(DomainError::NoRegion)
    }

    /// Every point an object or tray can be placed at: fixed centers and all
    /// dock poses.
    pub fn placement_points(&self) -> Vec<Point3<T>> {
        self.regions
            .values()
            .map(|g| g.center)
            .chain(self.trays.values().flat_map(|t| t.docks.values().copied()))
            .collect()
    }

    /// Smallest distance between two distinct placement points; a lower
    /// bound on the place leg of any legal action.
    pub fn min_place_distance(&self) -> Option<T> {
        let pts = self.placement_points();
        let mut best: Option<T> = None;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let d = pts[i].distance(pts[j]);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }

    /// Uniformly scaled copy (all coordinates and radii times `k`).
    pub fn scaled(&self, k: T) -> Self {
        let mut g = self.clone();
        g.home = g.home * k;
        for r in g.regions.values_mut() {
            r.center = r.center * k;
            r.radius = r.radius * k;
        }
        for t in g.trays.values_mut() {
            for p in t.docks.values_mut() {
                *p = *p * k;
            }
            t.radius = t.radius * k;
        }
        for p in g.objects.values_mut() {
            *p = *p * k;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z)
    }

    fn two_regions() -> WorldGeometry<f64> {
        let mut g = WorldGeometry::new(p(0.0, 0.0, 0.5));
        g.add_region("r1".into(), p(0.3, 0.0, 0.0), 0.15).unwrap();
        g.add_region("r2".into(), p(-0.3, 0.0, 0.0), 0.15).unwrap();
        g
    }

    #[test]
    fn center_maps_to_its_region() {
        assert_eq!(two_regions().region_of(p(0.3, 0.0, 0.0)).unwrap(), RegionId::from("r1"));
    }

    #[test]
    fn tie_goes_to_smaller_id() {
        let mut g = WorldGeometry::new(p(0.0, 0.0, 0.5));
        g.add_region("r2".into(), p(0.1, 0.0, 0.0), 0.15).unwrap();
        g.add_region("r1".into(), p(-0.1, 0.0, 0.0), 0.15).unwrap();
        assert_eq!(g.region_of(p(0.0, 0.0, 0.0)).unwrap(), RegionId::from("r1"));
    }

    #[test]
    fn far_point_has_no_region() {
        assert_eq!(two_regions().region_of(p(0.0, 1.0, 0.0)), Err(DomainError::NoRegion));
    }

    #[test]
    fn version_tracks_set_changes_only() {
        let mut g = two_regions();
        let v = g.version();
        g.add_object("o1".into(), p(0.3, 0.0, 0.0)).unwrap();
        assert_eq!(g.version(), v + 1);
        g.set_object_position(&"o1".into(), p(-0.3, 0.0, 0.0)).unwrap();
        assert_eq!(g.version(), v + 1);
        g.remove_object(&"o1".into()).unwrap();
        assert_eq!(g.version(), v + 2);
    }

    #[test]
    fn tray_center_follows_dock_and_carries_riders() {
        let mut g = two_regions();
        let docks = BTreeMap::from([("d1".into(), p(0.3, 0.2, 0.0)), ("d2".into(), p(-0.3, 0.2, 0.0))]);
        g.add_tray("r3".into(), docks, "d1".into(), 0.08).unwrap();
        g.add_object("o1".into(), p(0.31, 0.2, 0.0)).unwrap();
        assert_eq!(g.region_of(p(0.31, 0.2, 0.0)).unwrap(), RegionId::from("r3"));
        let v = g.version();
        g.set_tray_dock(&"r3".into(), &"d2".into(), &["o1".into()]).unwrap();
        assert_eq!(g.version(), v);
        let o1 = g.object_position(&"o1".into()).unwrap();
        assert!((o1.x - -0.29).abs() < 1e-12);
        assert_eq!(g.region_of(o1).unwrap(), RegionId::from("r3"));
    }

    #[test]
    fn min_place_distance_over_centers_and_docks() {
        let mut g = two_regions();
        assert!((g.min_place_distance().unwrap() - 0.6).abs() < 1e-12);
        let docks = BTreeMap::from([("d1".into(), p(0.3, 0.2, 0.0)), ("d2".into(), p(-0.3, 0.2, 0.0))]);
        g.add_tray("r3".into(), docks, "d1".into(), 0.08).unwrap();
        assert!((g.min_place_distance().unwrap() - 0.2).abs() < 1e-12);
    }
}
