//! Adding δ_b-safe stabilization: the k = 2 fixpoint and the rank-based
//! fixpoint for arbitrary k.

use crate::model::{
    project_unchecked, Model, ModelError, Predicate, Relation, RepairOutcome, StateId,
};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepairError {
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StabilizeStats {
    pub iterations: usize,
    /// Size of R at the fixpoint.
    pub r_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilizeRun {
    pub outcome: RepairOutcome,
    pub stats: StabilizeStats,
}

fn check_preconditions(model: &Model) -> Result<(), RepairError> {
    model.validate()?;
    if !model.delta_b.is_disjoint(&model.delta_e) {
        return Err(RepairError::Precondition(
            "some environment transition is bad (δ_b ∩ δ_e ≠ ∅); stabilization is impossible by definition".into(),
        ));
    }
    Ok(())
}

/// States outside `r` with an allowed transition into `r`.
fn one_step_into(r: &Predicate, forbidden: &Relation) -> Predicate {
    let n = r.space_size();
    Predicate::from_fn(n, |s| {
        !r.contains(s)
            && r.words()
                .iter()
                .zip(forbidden.row(s))
                .any(|(m, f)| m & !f != 0)
    })
}

/// Allowed transitions from `s` into `r`, as a row.
fn allowed_into(r: &Predicate, forbidden: &Relation, s: StateId) -> Predicate {
    let mut out = r.clone();
    let n = r.space_size();
    let mut blocked = Predicate::empty(n);
    for t in forbidden.successors(s) {
        blocked.insert(t);
    }
    out.difference_with(&blocked);
    out
}

/// Adds safe stabilization for k = 2.
pub fn add_stabilization_k2(model: &Model) -> Result<RepairOutcome, RepairError> {
    stabilize_k2_run(model).map(|r| r.outcome)
}

pub fn stabilize_k2_run(model: &Model) -> Result<StabilizeRun, RepairError> {
    check_preconditions(model)?;
    if model.k != 2 {
        return Err(RepairError::Precondition(format!(
            "the k = 2 algorithm was given k = {}",
            model.k
        )));
    }
    let n = model.n();
    let forbidden = model.program_forbidden();
    let s = &model.invariant;
    let mut dp = project_unchecked(&model.delta_p, s);
    if !dp.is_disjoint(&forbidden) {
        return Ok(not_possible(0, s.len()));
    }
    let env = &model.delta_e;
    let mut r = s.clone();
    let mut wired = Predicate::empty(n);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let rp = one_step_into(&r, &forbidden);
        // A state gets recovery transitions only on its first entry into R_p,
        // so they lead strictly below it. Later R states may depend on it.
        for s0 in rp.difference(&wired).iter() {
            let add = allowed_into(&r, &forbidden, s0);
            let mut row = dp.successor_set(s0);
            row.union_with(&add);
            dp.set_row(s0, &row);
        }
        wired.union_with(&rp);
        let r_or_rp = r.union(&rp);
        let grow = Predicate::from_fn(n, |s0| {
            !r.contains(s0)
                && !r_or_rp.row_escapes(env.row(s0))
                && (r_or_rp.meets_row(env.row(s0)) || rp.contains(s0))
        });
        if grow.is_empty() {
            break;
        }
        r.union_with(&grow);
    }
    if r.len() < n {
        return Ok(not_possible(iterations, r.len()));
    }
    Ok(StabilizeRun {
        outcome: RepairOutcome::Repaired {
            delta_p_prime: dp,
            invariant_prime: s.clone(),
        },
        stats: StabilizeStats {
            iterations,
            r_size: r.len(),
        },
    })
}

fn not_possible(iterations: usize, r_size: usize) -> StabilizeRun {
    StabilizeRun {
        outcome: RepairOutcome::NotPossible,
        stats: StabilizeStats { iterations, r_size },
    }
}

/// Program steps each state needs to reach R along the chosen chains,
/// counting only values below k. Committed states keep their successor;
/// the others take the smallest-id successor one level lower. `blocked`
/// is treated as having no program transition.
fn chain_levels(
    k: usize,
    r: &Predicate,
    forbidden: &Relation,
    committed: &[Option<StateId>],
    blocked: Option<StateId>,
) -> (Vec<Option<usize>>, Vec<Option<StateId>>) {
    let n = r.space_size();
    let mut level: Vec<Option<usize>> = (0..n).map(|s| r.contains(s).then_some(0)).collect();
    let mut next = vec![None; n];
    let mut frontier = r.clone();
    for d in 1..k {
        let mut found = Predicate::empty(n);
        for u in 0..n {
            if level[u].is_some() || Some(u) == blocked {
                continue;
            }
            let v = match committed[u] {
                Some(v) => frontier.contains(v).then_some(v),
                None => frontier
                    .words()
                    .iter()
                    .zip(forbidden.row(u))
                    .any(|(m, f)| m & !f != 0)
                    .then(|| {
                        frontier
                            .iter()
                            .find(|&v| !forbidden.contains(u, v))
                            .expect("row meets frontier")
                    }),
            };
            if let Some(v) = v {
                found.insert(u);
                next[u] = Some(v);
            }
        }
        for u in found.iter() {
            level[u] = Some(d);
        }
        if found.is_empty() {
            break;
        }
        frontier = found;
    }
    (level, next)
}

/// Adds safe stabilization for any k > 1.
///
/// States join R (recovery guaranteed from credit 0) one at a time. A state
/// joins with a program transition into R, or with none, when every
/// environment successor reaches an earlier member of R within k - 1
/// uninterrupted program steps. Those chains are then frozen: later
/// additions must not re-route a chain through a state that depends on it.
pub fn add_stabilization_general(model: &Model) -> Result<RepairOutcome, RepairError> {
    stabilize_general_run(model).map(|r| r.outcome)
}

pub fn stabilize_general_run(model: &Model) -> Result<StabilizeRun, RepairError> {
    check_preconditions(model)?;
    let n = model.n();
    let k = model.k;
    let forbidden = model.program_forbidden();
    let s = &model.invariant;
    let mut dp = project_unchecked(&model.delta_p, s);
    if !dp.is_disjoint(&forbidden) {
        return Ok(not_possible(0, s.len()));
    }
    let env = &model.delta_e;
    let mut r = s.clone();
    let mut committed: Vec<Option<StateId>> = vec![None; n];
    let mut iterations = 0;
    'grow: loop {
        iterations += 1;
        let (level, next) = chain_levels(k, &r, &forbidden, &committed, None);
        for u in 0..n {
            if r.contains(u) {
                continue;
            }
            let into_r = match committed[u] {
                Some(v) => r.contains(v).then_some(v),
                None => r.iter().find(|&v| !forbidden.contains(u, v)),
            };
            let (level, next, choice) = match into_r {
                Some(v) => (level.clone(), next.clone(), Some(v)),
                None if committed[u].is_none() && env.has_successor(u) => {
                    let (l, nx) = chain_levels(k, &r, &forbidden, &committed, Some(u));
                    (l, nx, None)
                }
                None => continue,
            };
            if !env.successors(u).all(|t| level[t].is_some()) {
                continue;
            }
            for t in env.successors(u) {
                let mut x = t;
                while !r.contains(x) {
                    let v = next[x].expect("finite level has a successor");
                    committed[x] = Some(v);
                    x = v;
                }
            }
            if let Some(v) = choice {
                dp.insert(u, v);
            }
            committed[u] = choice;
            r.insert(u);
            continue 'grow;
        }
        break;
    }
    if r.len() < n {
        return Ok(not_possible(iterations, r.len()));
    }
    Ok(StabilizeRun {
        outcome: RepairOutcome::Repaired {
            delta_p_prime: dp,
            invariant_prime: s.clone(),
        },
        stats: StabilizeStats {
            iterations,
            r_size: r.len(),
        },
    })
}

/// Dispatches on the model's k.
pub fn add_stabilization(model: &Model) -> Result<StabilizeRun, RepairError> {
    if model.k == 2 {
        stabilize_k2_run(model)
    } else {
        stabilize_general_run(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StateSpace;
    use crate::semantics::verify_stabilization;

    fn model(n: usize, k: usize) -> Model {
        Model::empty(StateSpace::new(n).unwrap(), k)
    }

    #[test]
    fn two_state_hand_trace() {
        let mut m = model(2, 2);
        m.invariant = Predicate::from_states(2, [0]);
        m.delta_p = Relation::from_pairs(2, [(0, 0)]);
        let out = add_stabilization_k2(&m).unwrap();
        let RepairOutcome::Repaired {
            delta_p_prime,
            invariant_prime,
        } = out
        else {
            panic!("expected a repair");
        };
        assert_eq!(delta_p_prime, Relation::from_pairs(2, [(0, 0), (1, 0)]));
        assert_eq!(invariant_prime, m.invariant);
    }

    #[test]
    fn bad_environment_is_a_precondition_error() {
        let mut m = model(2, 2);
        m.delta_e = Relation::from_pairs(2, [(1, 0)]);
        m.delta_b = m.delta_e.clone();
        assert!(matches!(
            add_stabilization_k2(&m),
            Err(RepairError::Precondition(_))
        ));
        assert!(matches!(
            add_stabilization_general(&m.with_k(3)),
            Err(RepairError::Precondition(_))
        ));
    }

    #[test]
    fn no_environment_any_k() {
        // chain 3 -> 2 -> 1 -> 0 forced by δ_b on direct shortcuts
        let mut m = model(4, 2);
        m.invariant = Predicate::from_states(4, [0]);
        m.delta_b = Relation::from_fn(4, |a, b| a > b + 1 || b > a || a == b);
        for k in 2..6 {
            let mk = m.with_k(k);
            let out = add_stabilization_general(&mk).unwrap();
            let RepairOutcome::Repaired { delta_p_prime, .. } = out else {
                panic!("k = {k}");
            };
            assert!(verify_stabilization(&mk, &delta_p_prime).pass);
        }
    }

    #[test]
    fn bad_inside_invariant_is_not_possible() {
        let mut m = model(2, 2);
        m.invariant = Predicate::full(2);
        m.delta_p = Relation::from_pairs(2, [(0, 1)]);
        m.delta_b = m.delta_p.clone();
        assert_eq!(
            add_stabilization_k2(&m).unwrap(),
            RepairOutcome::NotPossible
        );
    }

    #[test]
    fn state_entering_through_environment_drops_long_chain() {
        // k = 3. State 3 can only reach 0 through 2 -> 1 -> 0 (rank 3) but
        // its environment edge goes to 1 (rank 1). Keeping 3 -> 2 would let
        // the environment at 2 (credit 0) return to 3 forever.
        let mut m = model(4, 3);
        m.invariant = Predicate::from_states(4, [0]);
        m.delta_r = Relation::from_fn(4, |a, b| !matches!((a, b), (1, 0) | (2, 1) | (3, 2)));
        m.delta_e = Relation::from_pairs(4, [(3, 1), (2, 3)]);
        let run = stabilize_general_run(&m).unwrap();
        if let RepairOutcome::Repaired { delta_p_prime, .. } = &run.outcome {
            assert!(verify_stabilization(&m, delta_p_prime).pass);
        }
    }
}
