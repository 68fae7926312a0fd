use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use crate::domain::{ActionSpec, SymbolicState, WorldGeometry};
use crate::num::{Point3, Scalar};

/// Source of edge weights for the product graph.
pub trait CostProvider<T: Scalar>: Send + Sync {
    /// Motion cost in meters of executing `a` in `s`. Only called for legal
    /// actions.
    fn cost(&self, geometry: &WorldGeometry<T>, s: &SymbolicState, a: &ActionSpec) -> T;

    /// Lower bound on `cost` over every legal action of `geometry`.
    fn c_min(&self, geometry: &WorldGeometry<T>) -> T {
        geometry.min_place_distance().unwrap_or_else(T::zero)
    }
}

/// Straight-line end-effector displacement: approach the pick point from
/// `ee`, then carry to the place point.
///
/// Objects are picked at their region's placement point (a tray's current
/// dock); a tray is grasped at its current dock.
pub fn motion_cost_geometric<T: Scalar>(
    geometry: &WorldGeometry<T>,
    s: &SymbolicState,
    a: &ActionSpec,
    ee: Point3<T>,
) -> Option<T> {
    let (pick, place) = match a {
        ActionSpec::MoveObject { object, dest } => {
            let src = s.region_of(object)?;
            (geometry.placement_point(src, s)?, geometry.placement_point(dest, s)?)
        }
        ActionSpec::MoveRegion { tray, dock } => {
            let cur = s.dock_of(tray)?;
            (geometry.dock_point(tray, cur)?, geometry.dock_point(tray, dock)?)
        }
    };
    Some(ee.distance(pick) + pick.distance(place))
}

/// [`motion_cost_geometric`] with the end effector at the robot's home pose.
///
/// Product nodes carry no end-effector history, so the planner charges
/// every action from home; this keeps edge weights a function of
/// (state, action) and therefore cacheable.
#[derive(Debug, Clone, Copy, Default)]
pub struct GeometricCost;

impl<T: Scalar> CostProvider<T> for GeometricCost {
    fn cost(&self, geometry: &WorldGeometry<T>, s: &SymbolicState, a: &ActionSpec) -> T {
        motion_cost_geometric(geometry, s, a, geometry.home())
            .unwrap_or_else(|| panic!("cost queried for unplaceable action {a} in {s}"))
    }
}

/// Wraps a provider, sleeping `delay` on every call and counting calls.
/// Stands in for an inverse-kinematics query.
#[derive(Debug, Default)]
pub struct LatencyProvider<P> {
    inner: P,
    delay: Duration,
    calls: AtomicU64,
}

impl<P> LatencyProvider<P> {
    pub fn new(inner: P, delay: Duration) -> Self {
        Self { inner, delay, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn delay(&self) -> Duration {
        self.delay
    }
}

impl<T: Scalar, P: CostProvider<T>> CostProvider<T> for LatencyProvider<P> {
    fn cost(&self, geometry: &WorldGeometry<T>, s: &SymbolicState, a: &ActionSpec) -> T {
        self.calls.fetch_add(1, Ordering::Relaxed);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        self.inner.cost(geometry, s, a)
    }

    fn c_min(&self, geometry: &WorldGeometry<T>) -> T {
        self.inner.c_min(geometry)
    }
}

/// Motion costs remembered across planning queries, keyed by
/// (state encoding, action name, geometry version).
#[derive(Debug, Clone)]
pub struct ExperienceCache<T> {
    // version -> state -> action -> cost; nested so lookups need no allocation.
    entries: HashMap<u64, HashMap<String, HashMap<String, T>>>,
    len: usize,
    hits: u64,
    misses: u64,
}

impl<T> Default for ExperienceCache<T> {
    fn default() -> Self {
        Self { entries: HashMap::new(), len: 0, hits: 0, misses: 0 }
    }
}

impl<T: Scalar> ExperienceCache<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn get(&self, state: &str, action: &str, version: u64) -> Option<T> {
        self.entries.get(&version)?.get(state)?.get(action).copied()
    }

    /// Cached cost, or `compute()` stored under the current version.
    pub fn get_or_insert_with(&mut self, state: &str, action: &str, version: u64, compute: impl FnOnce() -> T) -> T {
        if let Some(c) = self.get(state, action, version) {
            self.hits += 1;
            return c;
        }
        self.misses += 1;
        let c = compute();
        let by_state = self.entries.entry(version).or_default();
        if !by_state.contains_key(state) {
            by_state.insert(state.to_string(), HashMap::new());
        }
        by_state.get_mut(state).expect("inserted").insert(action.to_string(), c);
        self.len += 1;
        c
    }

    /// Drops entries recorded under any other geometry version.
    pub fn retain_version(&mut self, version: u64) {
        self.entries.retain(|v, _| *v == version);
        self.len = self.entries.values().flat_map(|m| m.values()).map(HashMap::len).sum();
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, u64, T)> + '_ {
        self.entries.iter().flat_map(|(v, by_state)| {
            by_state
                .iter()
                .flat_map(move |(s, by_action)| by_action.iter().map(move |(a, c)| (s.as_str(), a.as_str(), *v, *c)))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_regions() -> (WorldGeometry<f64>, SymbolicState) {
        let mut g = WorldGeometry::new(Point3::new(0.0, 0.0, 0.5));
        g.add_region("r1".into(), Point3::new(0.3, 0.0, 0.0), 0.15).unwrap();
        g.add_region("r2".into(), Point3::new(-0.3, 0.0, 0.0), 0.15).unwrap();
        (g, SymbolicState::new().with_object("o1", "r1"))
    }

    #[test]
    fn cost_from_home() {
        let (g, s) = two_regions();
        let c = GeometricCost.cost(&g, &s, &ActionSpec::move_object("o1", "r2"));
        let expected = (0.3f64 * 0.3 + 0.5 * 0.5).sqrt() + 0.6;
        assert!((c - expected).abs() < 1e-12);
        assert!((c - 1.183).abs() < 1e-3);
    }

    #[test]
    fn uniform_scaling_doubles_cost() {
        let (g, s) = two_regions();
        let a = ActionSpec::move_object("o1", "r2");
        let c1 = GeometricCost.cost(&g, &s, &a);
        let c2 = GeometricCost.cost(&g.scaled(2.0), &s, &a);
        assert!((c2 - 2.0 * c1).abs() < 1e-12);
    }

    #[test]
    fn latency_wrapper_counts_and_preserves() {
        let (g, s) = two_regions();
        let a = ActionSpec::move_object("o1", "r2");
        let p = LatencyProvider::new(GeometricCost, Duration::ZERO);
        assert_eq!(p.cost(&g, &s, &a), GeometricCost.cost(&g, &s, &a));
        assert_eq!(p.calls(), 1);
    }

    #[test]
    fn latency_is_additive() {
        let (g, s) = two_regions();
        let a = ActionSpec::move_object("o1", "r2");
        let p = LatencyProvider::new(GeometricCost, Duration::from_millis(1));
        let t = std::time::Instant::now();
        for _ in 0..20 {
            p.cost(&g, &s, &a);
        }
        assert!(t.elapsed() >= Duration::from_millis(20));
    }

    #[test]
    fn cache_is_version_scoped() {
        let mut c = ExperienceCache::<f64>::new();
        assert_eq!(c.get_or_insert_with("o1r1", "move_o1_r2", 0, || 1.5), 1.5);
        assert_eq!(c.get_or_insert_with("o1r1", "move_o1_r2", 0, || 9.0), 1.5);
        assert_eq!((c.hits(), c.misses()), (1, 1));
        assert_eq!(c.get("o1r1", "move_o1_r2", 1), None);
        c.retain_version(1);
        assert!(c.is_empty());
    }
}
