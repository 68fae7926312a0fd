//! The manipulation world: symbolic states, continuous geometry and the
//! transition system built over them.

mod geometry;
mod state;
mod ts;

use thiserror::Error;

pub use geometry::{FixedRegion, TrayGeometry, WorldGeometry, DEFAULT_RADIUS};
pub use state::{placement_atom, valid_id, ActionSpec, DockId, ObjectId, Place, RegionId, SymbolicState, TrayPose, HAND};
pub use ts::{macro_region, reconstruct_ts, StateIndexer, TransitionSystem, TsDelta, MACRO_PREFIX};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("position is outside every region")]
    NoRegion,
    #[error("illegal action {action} in state {state}")]
    IllegalAction { action: String, state: String },
    #[error("atom `{0}` has no labeling rule")]
    UnknownAtom(String),
    #[error("inconsistent observation: {0}")]
    InconsistentObservation(String),
    #[error("duplicate {0}")]
    Duplicate(String),
    #[error("unknown {0}")]
    Unknown(String),
    #[error("cannot decode state `{0}`")]
    BadEncoding(String),
}
