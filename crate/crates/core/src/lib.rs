//! Simulation lab for cumulative knowledge processes: growing DAGs of
//! claims where false claims propagate to their dependents and random
//! checks walk back through ancestry to expose them.

pub mod attachment;
pub mod checking;
pub mod coupling;
pub mod decider;
pub mod evolution;
pub mod exact;
pub mod experiment;
mod fenwick;
pub mod invariants;
pub mod potentials;
pub mod serial;
pub mod state;
pub mod structure;

pub use attachment::{AttachmentFunction, CombinationFactor};
pub use checking::{CheckMechanism, MarkingScope, MechanismKind};
pub use evolution::{AdversaryStrategy, Features, RunConfig, TrialResult};
pub use state::{CkpState, Label, NodeId};
pub use structure::Mode;
