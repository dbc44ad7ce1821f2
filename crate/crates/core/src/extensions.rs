//! Input and mode transformations layered over the repairs.

use crate::model::{Model, Predicate, RepairOutcome};

/// Environment fairness that holds only eventually: environment steps are
/// treated as faults as well.
pub fn eventually_fair_transform(model: &Model) -> Model {
    let mut out = model.clone();
    out.faults.union_with(&model.delta_e);
    out
}

/// Several environment steps in a row: δ_e becomes its transitive closure.
pub fn consecutive_env_transform(model: &Model) -> Model {
    Model {
        delta_e: model.delta_e.transitive_closure(),
        ..model.clone()
    }
}

/// Rejects any repair that shrank the invariant.
pub fn strict_invariant_mode(outcome: RepairOutcome, original: &Predicate) -> RepairOutcome {
    match outcome {
        RepairOutcome::Repaired {
            ref invariant_prime,
            ..
        } if invariant_prime == original => outcome,
        _ => RepairOutcome::NotPossible,
    }
}
