//! Repair of finite transition systems in the presence of an unchangeable,
//! fair environment: adding safe stabilization, failsafe, masking and
//! nonmasking fault-tolerance, plus independent verifiers.

pub mod bits;
pub mod casestudy;
pub mod dsl;
pub mod extensions;
pub mod ft;
pub mod model;
pub mod oracle;
pub mod random;
pub mod semantics;
pub mod stabilize;

pub use ft::{
    add_failsafe, add_masking, add_nonmasking, ensure_closure, failsafe_run, masking_run,
    nonmasking_run, remove_deadlock, FtOptions, FtRun, FtStats,
};
pub use model::{
    augment_selfloops, image, is_closed, preimage, project, strip_selfloops, Model, ModelError,
    Predicate, Relation, RepairOutcome, StateId, StateSpace,
};
pub use semantics::{
    check_c1, verify_failsafe, verify_leadsto, verify_masking, verify_stabilization,
    Counterexample, Verdict,
};
pub use stabilize::{
    add_stabilization, add_stabilization_general, add_stabilization_k2, RepairError, StabilizeRun,
};
