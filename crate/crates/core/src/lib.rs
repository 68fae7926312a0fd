//! Reactive task and motion planning: LTL goals are compiled to Büchi
//! automata, planned over a product with a symbolic transition system, and
//! executed by behavior trees that are patched in place when the world
//! changes.

pub mod bt;
pub mod domain;
pub mod ltl;
pub mod num;
pub mod scenario;
pub mod search;
pub mod sim;

pub type Plan64 = search::Plan<f64>;
pub type Plan32 = search::Plan<f32>;
pub type Geometry64 = domain::WorldGeometry<f64>;
pub type Geometry32 = domain::WorldGeometry<f32>;
pub type Cache64 = search::ExperienceCache<f64>;
pub type Cache32 = search::ExperienceCache<f32>;
pub type FullGraph64 = search::FullGraph<f64>;
pub type FullGraph32 = search::FullGraph<f32>;
