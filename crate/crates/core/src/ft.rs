//! Adding failsafe, masking and nonmasking fault-tolerance.

use crate::model::{
    augment_selfloops, is_closed_unchecked, project_unchecked, strip_selfloops, Model, Predicate,
    Relation, RepairOutcome,
};
use crate::semantics::{verify_failsafe, verify_masking};
use crate::stabilize::RepairError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FtOptions {
    /// Accept k > 2. The result is still sound but NotPossible only means
    /// "unknown".
    pub sound_only: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FtStats {
    pub ms1: usize,
    pub ms2: usize,
    pub invariant_prime: usize,
    /// |R| of the last outer iteration (masking only).
    pub r_size: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FtRun {
    pub outcome: RepairOutcome,
    pub stats: FtStats,
    /// Synthetic self-loops that could not be stripped from the result.
    pub retained_loops: Predicate,
}

/// Largest subset of `pred` in which every state has a δ_p ∪ δ_e successor
/// inside the set and no δ_e transition leaves the set.
pub fn remove_deadlock(pred: &Predicate, delta_p: &Relation, delta_e: &Relation) -> Predicate {
    let mut s = pred.clone();
    loop {
        let drop = Predicate::from_fn(s.space_size(), |a| {
            s.contains(a)
                && ((!s.meets_row(delta_p.row(a)) && !s.meets_row(delta_e.row(a)))
                    || s.row_escapes(delta_e.row(a)))
        });
        if drop.is_empty() {
            return s;
        }
        s.difference_with(&drop);
    }
}

/// `rel` minus the transitions from inside `pred` to outside it.
pub fn ensure_closure(rel: &Relation, pred: &Predicate) -> Relation {
    let mut out = rel.clone();
    for a in pred.iter() {
        let mut row = out.successor_set(a);
        row.intersect_with(pred);
        out.set_row(a, &row);
    }
    out
}

fn check_preconditions(model: &Model, opts: FtOptions) -> Result<(), RepairError> {
    model.validate()?;
    if model.k != 2 && !opts.sound_only {
        return Err(RepairError::Precondition(format!(
            "fault-tolerance repair is complete only for k = 2 (got k = {}); use the sound-only option",
            model.k
        )));
    }
    if !model.delta_p.is_disjoint(&model.delta_r) {
        return Err(RepairError::Precondition(
            "the original program uses a restricted transition".into(),
        ));
    }
    let s = &model.invariant;
    if !is_closed_unchecked(s, &model.delta_p) || !is_closed_unchecked(s, &model.delta_e) {
        return Err(RepairError::Precondition(
            "the invariant is not closed in δ_p ∪ δ_e".into(),
        ));
    }
    for a in s.iter() {
        if model
            .delta_b
            .row(a)
            .iter()
            .zip(model.delta_p.row(a))
            .any(|(b, p)| b & p != 0)
            || model
                .delta_b
                .row(a)
                .iter()
                .zip(model.delta_e.row(a))
                .any(|(b, e)| b & e != 0)
        {
            return Err(RepairError::Precondition(format!(
                "a transition from invariant state {} is bad",
                model.space.label(a)
            )));
        }
    }
    Ok(())
}

/// States with an edge of `rel` into `target`.
fn preimage_of(rel: &Relation, target: &Predicate) -> Predicate {
    Predicate::from_fn(target.space_size(), |a| target.meets_row(rel.row(a)))
}

fn rows_meet(a: &Relation, b: &Relation, s: usize) -> bool {
    a.row(s).iter().zip(b.row(s)).any(|(x, y)| x & y != 0)
}

/// Transitions in δ_b ∪ δ_r or into ms2.
fn forbidden_transitions(model: &Model, ms2: &Predicate) -> Relation {
    let n = model.n();
    let mut mt = model.program_forbidden();
    mt.union_with(&Relation::product(&Predicate::full(n), ms2));
    mt
}

/// Grows ms1/ms2 to their fixpoint. `escape` is the program whose
/// surviving transitions can keep a state out of ms1 (none for failsafe:
/// every non-mt transition counts).
fn expand_ms(
    model: &Model,
    ms1: &mut Predicate,
    ms2: &mut Predicate,
    escape: Option<&Relation>,
) -> Relation {
    let n = model.n();
    let env_bad = model.delta_e.intersection(&model.delta_b);
    loop {
        let mt = forbidden_transitions(model, ms2);
        let mut grow1 = preimage_of(&model.faults, ms2);
        for s in 0..n {
            if ms1.contains(s) || grow1.contains(s) {
                continue;
            }
            let env_doomed = ms1.meets_row(model.delta_e.row(s)) || env_bad.has_successor(s);
            if !env_doomed {
                continue;
            }
            let stuck = match escape {
                None => mt.successors(s).count() == n,
                Some(p) => !p.row(s).iter().zip(mt.row(s)).any(|(x, m)| x & !m != 0),
            };
            if stuck {
                grow1.insert(s);
            }
        }
        let mut new1 = ms1.union(&grow1);
        let mut new2 = ms2.union(&new1);
        new2.union_with(&preimage_of(&model.delta_e, &new1));
        if new1 == *ms1 && new2 == *ms2 {
            return mt;
        }
        std::mem::swap(ms1, &mut new1);
        std::mem::swap(ms2, &mut new2);
    }
}

/// Prunes S' until no state can be entered by the environment into a spot
/// where the repaired program, unlike the original, lets the environment
/// move again. Returns false if S' became empty.
fn prune_new_behaviour(model: &Model, sp: &mut Predicate, dp: &mut Relation) -> bool {
    loop {
        if sp.is_empty() {
            return false;
        }
        *dp = ensure_closure(dp, sp);
        let n = model.n();
        let ms3 = Predicate::from_fn(n, |s| {
            model.delta_e.has_successor(s) && model.delta_p.has_successor(s) && !dp.has_successor(s)
        });
        // At k = 2 this is ms3 itself; for larger k the environment may be
        // blocked for k - 1 program steps, so states a few repaired steps
        // before ms3 are just as exposed.
        let mut exposed = ms3;
        for _ in 2..model.k {
            let more = preimage_of(dp, &exposed);
            if more.is_subset(&exposed) {
                break;
            }
            exposed.union_with(&more);
        }
        let ms4 = preimage_of(&model.delta_e, &exposed);
        let next = remove_deadlock(&sp.difference(&ms4), &model.delta_p, &model.delta_e);
        if next == *sp {
            return true;
        }
        *sp = next;
    }
}

fn failsafe_core(model: &Model) -> (RepairOutcome, FtStats) {
    let n = model.n();
    let s = &model.invariant;
    let mut ms1 = preimage_of(
        &model.faults.intersection(&model.delta_b),
        &Predicate::full(n),
    );
    let mut ms2 = ms1.union(&Predicate::from_fn(n, |a| {
        rows_meet(&model.delta_e, &model.delta_b, a)
    }));
    let mt = expand_ms(model, &mut ms1, &mut ms2, None);
    let mut dp = project_unchecked(&model.delta_p, s);
    dp.difference_with(&mt);
    let mut sp = remove_deadlock(&s.difference(&ms2), &dp, &model.delta_e);
    let mut stats = FtStats {
        ms1: ms1.len(),
        ms2: ms2.len(),
        iterations: 1,
        ..FtStats::default()
    };
    if !prune_new_behaviour(model, &mut sp, &mut dp) {
        return (RepairOutcome::NotPossible, stats);
    }
    dp.union_with(&Relation::product(&sp.complement(), &Predicate::full(n)));
    dp.difference_with(&mt);
    stats.invariant_prime = sp.len();
    (
        RepairOutcome::Repaired {
            delta_p_prime: dp,
            invariant_prime: sp,
        },
        stats,
    )
}

fn masking_core(model: &Model) -> (RepairOutcome, FtStats) {
    let n = model.n();
    let env = &model.delta_e;
    let mut sp = model.invariant.clone();
    let mut dp = project_unchecked(&model.delta_p, &sp);
    let mut stats = FtStats::default();
    let mut ms1_acc = Predicate::empty(n);
    let mut ms2_acc = Predicate::empty(n);
    loop {
        stats.iterations += 1;
        // Recovery is rebuilt from scratch for the current S', avoiding
        // states already known to be unsafe targets.
        let forbidden = forbidden_transitions(model, &ms2_acc);
        for s in 0..n {
            if !sp.contains(s) {
                dp.clear_row(s);
            }
        }
        let mut r = sp.clone();
        let mut rp;
        let mut wired = Predicate::empty(n);
        loop {
            rp = Predicate::from_fn(n, |s| {
                !r.contains(s)
                    && r.words()
                        .iter()
                        .zip(forbidden.row(s))
                        .any(|(m, f)| m & !f != 0)
            });
            for s in rp.difference(&wired).iter() {
                for t in r.iter() {
                    if !forbidden.contains(s, t) {
                        dp.insert(s, t);
                    }
                }
            }
            wired.union_with(&rp);
            let r_or_rp = r.union(&rp);
            let grow = Predicate::from_fn(n, |s| {
                !r.contains(s)
                    && !r_or_rp.row_escapes(env.row(s))
                    && (r_or_rp.meets_row(env.row(s)) || rp.contains(s))
            });
            if grow.is_empty() {
                break;
            }
            r.union_with(&grow);
        }
        stats.r_size = r.len();

        let mut ms1 = r.union(&rp).complement();
        ms1.union_with(&ms1_acc);
        ms1.union_with(&preimage_of(
            &model.faults.intersection(&model.delta_b),
            &Predicate::full(n),
        ));
        let mut ms2 = r.complement();
        ms2.union_with(&ms2_acc);
        ms2.union_with(&ms1);
        ms2.union_with(&Predicate::from_fn(n, |a| {
            rows_meet(env, &model.delta_b, a)
        }));
        let mt = expand_ms(model, &mut ms1, &mut ms2, Some(&dp));
        stats.ms1 = ms1.len();
        stats.ms2 = ms2.len();
        dp.difference_with(&mt);

        let before = sp.clone();
        sp = remove_deadlock(&sp.difference(&ms2), &dp, env);
        if !prune_new_behaviour(model, &mut sp, &mut dp) {
            stats.invariant_prime = 0;
            return (RepairOutcome::NotPossible, stats);
        }
        let settled = sp == before && ms2 == ms2_acc;
        ms1_acc = ms1;
        ms2_acc = ms2;
        if settled {
            stats.invariant_prime = sp.len();
            return (
                RepairOutcome::Repaired {
                    delta_p_prime: dp,
                    invariant_prime: sp,
                },
                stats,
            );
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Failsafe,
    Masking,
}

fn run(model: &Model, opts: FtOptions, kind: Kind) -> Result<FtRun, RepairError> {
    check_preconditions(model, opts)?;
    let (augmented, loops) = augment_selfloops(model);
    let (outcome, stats) = match kind {
        Kind::Failsafe => failsafe_core(&augmented),
        Kind::Masking => masking_core(&augmented),
    };
    let n = model.n();
    let RepairOutcome::Repaired {
        delta_p_prime,
        invariant_prime,
    } = outcome
    else {
        return Ok(FtRun {
            outcome: RepairOutcome::NotPossible,
            stats,
            retained_loops: Predicate::empty(n),
        });
    };
    if loops.is_empty() {
        return Ok(FtRun {
            outcome: RepairOutcome::Repaired {
                delta_p_prime,
                invariant_prime,
            },
            stats,
            retained_loops: loops,
        });
    }
    // Self-loops are dropped only where the loop-free result still verifies
    // against the original model.
    let stripped = strip_selfloops(&delta_p_prime, &loops);
    let verify = |p: &Relation| match kind {
        Kind::Failsafe => verify_failsafe(model, p, &invariant_prime).pass,
        Kind::Masking => verify_masking(model, p, &invariant_prime).pass,
    };
    let (program, retained) = if verify(&stripped) {
        (stripped, Predicate::empty(n))
    } else {
        let kept = Predicate::from_fn(n, |s| loops.contains(s) && delta_p_prime.contains(s, s));
        (delta_p_prime, kept)
    };
    Ok(FtRun {
        outcome: RepairOutcome::Repaired {
            delta_p_prime: program,
            invariant_prime,
        },
        stats,
        retained_loops: retained,
    })
}

pub fn add_failsafe(model: &Model) -> Result<RepairOutcome, RepairError> {
    failsafe_run(model, FtOptions::default()).map(|r| r.outcome)
}

pub fn failsafe_run(model: &Model, opts: FtOptions) -> Result<FtRun, RepairError> {
    run(model, opts, Kind::Failsafe)
}

pub fn add_masking(model: &Model) -> Result<RepairOutcome, RepairError> {
    masking_run(model, FtOptions::default()).map(|r| r.outcome)
}

pub fn masking_run(model: &Model, opts: FtOptions) -> Result<FtRun, RepairError> {
    run(model, opts, Kind::Masking)
}

/// Masking with δ_b cleared.
pub fn add_nonmasking(model: &Model) -> Result<RepairOutcome, RepairError> {
    nonmasking_run(model, FtOptions::default()).map(|r| r.outcome)
}

pub fn nonmasking_run(model: &Model, opts: FtOptions) -> Result<FtRun, RepairError> {
    masking_run(&nonmasking_model(model), opts)
}

pub fn nonmasking_model(model: &Model) -> Model {
    Model {
        delta_b: Relation::empty(model.n()),
        ..model.clone()
    }
}
