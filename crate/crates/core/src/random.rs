//! Seeded random models for property suites and benchmarks.

use crate::model::{Model, Predicate, Relation, StateSpace};
use rand::Rng;
use std::ops::Range;

fn random_relation(rng: &mut impl Rng, n: usize, density: Range<f64>) -> Relation {
    let density = rng.gen_range(density);
    Relation::from_fn(n, |_, _| rng.gen_bool(density))
}

fn nonempty_subset(rng: &mut impl Rng, n: usize, density: Range<f64>) -> Predicate {
    let density = rng.gen_range(density);
    let mut s = Predicate::from_fn(n, |_| rng.gen_bool(density));
    if s.is_empty() {
        s.insert(rng.gen_range(0..n));
    }
    s
}

/// A stabilization instance with δ_b ∩ δ_e = ∅.
pub fn stabilization_model(rng: &mut impl Rng, n: usize, k: usize) -> Model {
    let mut m = Model::empty(StateSpace::new(n).unwrap(), k);
    m.delta_p = random_relation(rng, n, 0.05..0.5);
    m.delta_e = random_relation(rng, n, 0.0..0.4);
    m.delta_b = random_relation(rng, n, 0.0..0.4);
    m.delta_b.difference_with(&m.delta_e);
    m.delta_r = random_relation(rng, n, 0.0..0.2);
    m.invariant = nonempty_subset(rng, n, 0.2..0.7);
    m
}

/// A fault-tolerance instance meeting the repair preconditions: S is closed
/// in δ_p ∪ δ_e, no transition of δ_p ∪ δ_e from S is bad, δ_p ∩ δ_r = ∅,
/// δ_p ∩ δ_e = ∅ and no state of S is deadlocked.
pub fn ft_model(rng: &mut impl Rng, n: usize, k: usize) -> Model {
    let mut m = Model::empty(StateSpace::new(n).unwrap(), k);
    let s = nonempty_subset(rng, n, 0.3..0.8);
    m.delta_p = Relation::from_fn(n, |a, b| !s.contains(a) || s.contains(b))
        .intersection(&random_relation(rng, n, 0.1..0.5));
    m.delta_e = Relation::from_fn(n, |a, b| !s.contains(a) || s.contains(b))
        .intersection(&random_relation(rng, n, 0.0..0.35));
    m.delta_e.difference_with(&m.delta_p);
    for a in s.iter() {
        if !m.delta_p.has_successor(a) && !m.delta_e.has_successor(a) {
            let b = s.iter().nth(rng.gen_range(0..s.len())).unwrap();
            m.delta_p.insert(a, b);
        }
    }
    m.faults = random_relation(rng, n, 0.1..0.6);
    m.delta_b = random_relation(rng, n, 0.2..0.9);
    let mut from_s = Relation::product(&s, &Predicate::full(n));
    from_s.intersect_with(&m.delta_p.union(&m.delta_e));
    m.delta_b.difference_with(&from_s);
    m.delta_r = random_relation(rng, n, 0.0..0.2);
    m.delta_r.difference_with(&m.delta_p);
    m.invariant = s;
    m
}
