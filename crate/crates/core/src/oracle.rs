//! Exhaustive oracles used to cross-check the repair algorithms and the
//! structural C1 check. Both are exponential and meant for small models.

use crate::model::{is_closed_unchecked, Model, Predicate, Relation, StateId};
use crate::semantics::{verify_failsafe, verify_masking, verify_stabilization};
use rayon::prelude::*;
use std::collections::{HashSet, VecDeque};
use thiserror::Error;

pub const DEFAULT_BRUTE_FORCE_CAP: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("brute-force search refused: {states} states exceed the cap of {cap}")]
    CapExceeded { states: usize, cap: usize },
    #[error("trace oracle supports k <= 64, got {0}")]
    KTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OracleMode {
    Stabilize,
    Failsafe,
    Masking,
}

/// Trace-level C1: S' ⊆ S, S' closed in δ'_p ∪ δ_e, and every computation
/// of the repaired program from S' is a computation of the original one.
///
/// Walks the product of the repaired program while tracking the set of
/// credits the original program could be in after the same state sequence.
/// A step the original cannot match, or a deadlock the original does not
/// share, is a new computation.
pub fn c1_by_traces(model: &Model, program_prime: &Relation, invariant_prime: &Predicate) -> bool {
    c1_by_traces_checked(model, program_prime, invariant_prime).unwrap_or(false)
}

pub fn c1_by_traces_checked(
    model: &Model,
    program_prime: &Relation,
    invariant_prime: &Predicate,
) -> Result<bool, OracleError> {
    let k = model.k;
    if k > 64 {
        return Err(OracleError::KTooLarge(k));
    }
    let sp = invariant_prime;
    if !sp.is_subset(&model.invariant)
        || !is_closed_unchecked(sp, program_prime)
        || !is_closed_unchecked(sp, &model.delta_e)
    {
        return Ok(false);
    }
    let dp = &model.delta_p;
    let de = &model.delta_e;

    // Credits the original program may hold after stepping s -> t.
    let step_original = |s: StateId, t: StateId, credits: u64| -> u64 {
        let mut out = 0u64;
        for c in 0..k {
            if credits >> c & 1 == 0 {
                continue;
            }
            if dp.contains(s, t) {
                out |= 1 << c.saturating_sub(1);
            }
            if de.contains(s, t) && (c == 0 || !dp.has_successor(s)) {
                out |= 1 << (k - 1);
            }
        }
        out
    };

    let mut seen: HashSet<(StateId, usize, u64)> = HashSet::new();
    let mut queue = VecDeque::new();
    for s in sp.iter() {
        if seen.insert((s, 0, 1)) {
            queue.push_back((s, 0usize, 1u64));
        }
    }
    while let Some((s, c, credits)) = queue.pop_front() {
        let mut moved = false;
        let mut next = Vec::new();
        for t in program_prime.successors(s) {
            next.push((t, c.saturating_sub(1)));
        }
        if c == 0 || !program_prime.has_successor(s) {
            for t in de.successors(s) {
                next.push((t, k - 1));
            }
        }
        for (t, c2) in next {
            moved = true;
            let matched = step_original(s, t, credits);
            if matched == 0 {
                return Ok(false);
            }
            if seen.insert((t, c2, matched)) {
                queue.push_back((t, c2, matched));
            }
        }
        if !moved && (dp.has_successor(s) || de.has_successor(s)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether any repaired program exists for `mode`, by exhaustive search.
///
/// Per state the search tries "no program transition" or exactly one
/// successor. Narrowing a state's successors while keeping it enabled only
/// removes computations, and every property checked is universal over
/// computations, so this loses no solutions. Targets in δ_b ∪ δ_r are never
/// tried: restricted ones violate C3, and a bad one is either reachable
/// (fatal) or unreachable (equivalent to none).
pub fn brute_force_repair_exists(model: &Model, mode: OracleMode) -> Result<bool, OracleError> {
    brute_force_repair_exists_with_cap(model, mode, DEFAULT_BRUTE_FORCE_CAP)
}

pub fn brute_force_repair_exists_with_cap(
    model: &Model,
    mode: OracleMode,
    cap: usize,
) -> Result<bool, OracleError> {
    let n = model.n();
    if n > cap {
        return Err(OracleError::CapExceeded { states: n, cap });
    }
    let forbidden = model.program_forbidden();
    Ok(match mode {
        OracleMode::Stabilize => {
            let s = &model.invariant;
            let fixed = crate::model::project_unchecked(&model.delta_p, s);
            let options: Vec<Vec<Option<StateId>>> = (0..n)
                .map(|a| {
                    if s.contains(a) {
                        vec![None]
                    } else {
                        choices(n, |b| !forbidden.contains(a, b))
                    }
                })
                .collect();
            search(&options, |program| {
                let mut p = fixed.clone();
                p.union_with(program);
                verify_stabilization(model, &p).pass
            })
        }
        OracleMode::Failsafe | OracleMode::Masking => {
            let inv: Vec<StateId> = model.invariant.iter().collect();
            (1u64..1u64 << inv.len()).into_par_iter().any(|mask| {
                let sp = Predicate::from_states(
                    n,
                    inv.iter()
                        .enumerate()
                        .filter(|(i, _)| mask >> i & 1 == 1)
                        .map(|(_, &s)| s),
                );
                let options: Vec<Vec<Option<StateId>>> = (0..n)
                    .map(|a| {
                        if sp.contains(a) {
                            choices(n, |b| {
                                sp.contains(b)
                                    && model.delta_p.contains(a, b)
                                    && !model.delta_r.contains(a, b)
                            })
                        } else {
                            choices(n, |b| !forbidden.contains(a, b))
                        }
                    })
                    .collect();
                search(&options, |program| match mode {
                    OracleMode::Failsafe => verify_failsafe(model, program, &sp).pass,
                    _ => verify_masking(model, program, &sp).pass,
                })
            })
        }
    })
}

fn choices(n: usize, allowed: impl Fn(StateId) -> bool) -> Vec<Option<StateId>> {
    std::iter::once(None)
        .chain((0..n).filter(|&b| allowed(b)).map(Some))
        .collect()
}

/// Tries every combination of per-state choices; true if any passes.
fn search(options: &[Vec<Option<StateId>>], check: impl Fn(&Relation) -> bool + Sync) -> bool {
    let n = options.len();
    let total: u64 = options.iter().map(|o| o.len() as u64).product();
    let decode = |mut idx: u64| {
        let mut r = Relation::empty(n);
        for (a, opts) in options.iter().enumerate() {
            let len = opts.len() as u64;
            if let Some(b) = opts[(idx % len) as usize] {
                r.insert(a, b);
            }
            idx /= len;
        }
        r
    };
    if total < 256 {
        (0..total).any(|i| check(&decode(i)))
    } else {
        (0..total).into_par_iter().any(|i| check(&decode(i)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StateSpace;

    fn model(n: usize) -> Model {
        Model::empty(StateSpace::new(n).unwrap(), 2)
    }

    #[test]
    fn stabilize_blocked_escape() {
        let mut m = model(2);
        m.invariant = Predicate::from_states(2, [0]);
        m.delta_b = Relation::from_pairs(2, [(1, 0)]);
        m.delta_r = Relation::from_pairs(2, [(1, 1)]);
        assert!(!brute_force_repair_exists(&m, OracleMode::Stabilize).unwrap());
        m.delta_b = Relation::empty(2);
        assert!(brute_force_repair_exists(&m, OracleMode::Stabilize).unwrap());
    }

    #[test]
    fn cap_is_enforced() {
        let m = model(7);
        assert_eq!(
            brute_force_repair_exists(&m, OracleMode::Stabilize),
            Err(OracleError::CapExceeded { states: 7, cap: 6 })
        );
    }

    #[test]
    fn trace_c1_detects_new_environment_step() {
        // 0 -E-> 1; 1 has program 1 -> 2 and environment 1 -> 0.
        let mut m = model(3);
        m.invariant = Predicate::full(3);
        m.delta_p = Relation::from_pairs(3, [(1, 2), (2, 2), (0, 0)]);
        m.delta_e = Relation::from_pairs(3, [(0, 1), (1, 0)]);
        assert!(c1_by_traces(&m, &m.delta_p, &m.invariant));
        let dropped = Relation::from_pairs(3, [(2, 2), (0, 0)]);
        assert!(!c1_by_traces(&m, &dropped, &m.invariant));
    }

    #[test]
    fn trace_c1_detects_new_deadlock() {
        let mut m = model(2);
        m.invariant = Predicate::full(2);
        m.delta_p = Relation::from_pairs(2, [(0, 1), (1, 1)]);
        let p = Relation::from_pairs(2, [(0, 1)]);
        assert!(!c1_by_traces(&m, &p, &m.invariant));
        assert!(!c1_by_traces(&m, &p, &Predicate::from_states(2, [1])));
        assert!(c1_by_traces(
            &m,
            &m.delta_p,
            &Predicate::from_states(2, [1])
        ));
    }
}
