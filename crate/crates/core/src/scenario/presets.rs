use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CostSpec, DockSpec, ObjectSpec, RegionSpec, Scenario, SimSpec, TraySpec, SCHEMA};

const R1: [f64; 3] = [-0.6, 0.4, 0.0];
const R2: [f64; 3] = [0.6, 0.4, 0.0];
// The arm rests near the unloading side of the table.
const HOME: [f64; 3] = [0.4, 0.3, 0.1];
const D1: [f64; 3] = [-0.4, 0.4, 0.0];
const D2: [f64; 3] = [0.4, 0.4, 0.0];
const REGION_RADIUS: f64 = 0.1;
const TRAY_RADIUS: f64 = 0.08;

fn region(id: &str, center: [f64; 3], radius: f64) -> RegionSpec {
    RegionSpec { id: id.into(), center, radius }
}

fn blocks(n: usize, at: &str) -> Vec<ObjectSpec> {
    (1..=n).map(|i| ObjectSpec { id: format!("o{i}"), region: at.into() }).collect()
}

/// Three blocks on r1 that must end up (and stay) on r2, 1.2 m away.
pub fn three_block() -> Scenario {
    Scenario {
        schema: SCHEMA.into(),
        name: "three_block".into(),
        home: HOME,
        regions: vec![region("r1", R1, REGION_RADIUS), region("r2", R2, REGION_RADIUS)],
        trays: vec![],
        objects: blocks(3, "r1"),
        macros: vec!["all_obj_in_r2".into()],
        formula: "F G all_obj_in_r2".into(),
        cost: CostSpec::default(),
        sim: SimSpec::default(),
        seed: 0,
    }
}

/// Dock poses 0.2 m inboard of r1 and r2.
pub fn tray_docks_near() -> Vec<DockSpec> {
    vec![
        DockSpec { id: "d1".into(), position: D1 },
        DockSpec { id: "d2".into(), position: D2 },
    ]
}

/// [`three_block`] plus a movable tray r3 docked next to r1.
pub fn three_block_tray() -> Scenario {
    let mut s = three_block();
    s.name = "three_block_tray".into();
    s.trays = vec![TraySpec { id: "r3".into(), docks: tray_docks_near(), dock: "d1".into(), radius: TRAY_RADIUS }];
    s
}

/// `n_regions` regions at random, well-separated table positions and
/// `n_objects` objects in random regions; the goal gathers everything in r2.
pub fn random_scaling_scenario(seed: u64, n_regions: usize, n_objects: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<[f64; 3]> = Vec::new();
    while centers.len() < n_regions {
        let c = [rng.gen_range(-0.8..0.8), rng.gen_range(0.2..0.9), 0.0];
        let clear = centers.iter().all(|o| ((o[0] - c[0]).powi(2) + (o[1] - c[1]).powi(2)).sqrt() >= 0.3);
        if clear {
            centers.push(c);
        }
    }
    let regions: Vec<RegionSpec> =
        centers.iter().enumerate().map(|(i, c)| region(&format!("r{}", i + 1), *c, REGION_RADIUS)).collect();
    let objects = (1..=n_objects)
        .map(|i| ObjectSpec { id: format!("o{i}"), region: format!("r{}", rng.gen_range(1..=n_regions)) })
        .collect();
    Scenario {
        schema: SCHEMA.into(),
        name: format!("random_{n_regions}r_{n_objects}o_{seed}"),
        home: [0.0, 0.0, 0.5],
        regions,
        trays: vec![],
        objects,
        macros: vec!["all_obj_in_r2".into()],
        formula: "F G all_obj_in_r2".into(),
        cost: CostSpec::default(),
        sim: SimSpec::default(),
        seed,
    }
}
