//! State spaces, relations, predicates and repair-problem instances.

use crate::bits::{BitMatrix, BitSet, Ones};
use std::collections::HashSet;
use thiserror::Error;

/// Dense index of a state within its [`StateSpace`].
pub type StateId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("state space mismatch: expected {expected} states, found {found}")]
    SpaceMismatch { expected: usize, found: usize },
    #[error("state space must contain at least one state")]
    EmptySpace,
    #[error("expected {expected} state labels, got {found}")]
    LabelCount { expected: usize, found: usize },
    #[error("duplicate state label `{0}`")]
    DuplicateLabel(String),
    #[error("fairness parameter k must be greater than 1, got {0}")]
    InvalidK(usize),
    #[error("state {state} out of range for a space of {count} states")]
    StateOutOfRange { state: StateId, count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    count: usize,
    labels: Option<Vec<String>>,
}

impl StateSpace {
    pub fn new(count: usize) -> Result<Self, ModelError> {
        if count == 0 {
            return Err(ModelError::EmptySpace);
        }
        Ok(StateSpace {
            count,
            labels: None,
        })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::EmptySpace);
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(ModelError::DuplicateLabel(label.clone()));
            }
        }
        Ok(StateSpace {
            count: labels.len(),
            labels: Some(labels),
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of `s`, falling back to `s<index>`.
    pub fn label(&self, s: StateId) -> String {
        match &self.labels {
            Some(l) => l[s].clone(),
            None => format!("s{s}"),
        }
    }

    pub fn index_of(&self, label: &str) -> Option<StateId> {
        match &self.labels {
            Some(l) => l.iter().position(|x| x == label),
            None => label
                .strip_prefix('s')
                .and_then(|n| n.parse().ok())
                .filter(|&n| n < self.count),
        }
    }
}

/// A set of states.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Predicate {
    bits: BitSet,
}

impl Predicate {
    pub fn empty(n: usize) -> Self {
        Predicate {
            bits: BitSet::new(n),
        }
    }

    pub fn full(n: usize) -> Self {
        Predicate {
            bits: BitSet::full(n),
        }
    }

    pub fn from_states(n: usize, states: impl IntoIterator<Item = StateId>) -> Self {
        let mut p = Predicate::empty(n);
        for s in states {
            p.insert(s);
        }
        p
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(StateId) -> bool) -> Self {
        Predicate::from_states(n, (0..n).filter(|&s| f(s)))
    }

    /// Number of states in the owning space.
    pub fn space_size(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn contains(&self, s: StateId) -> bool {
        self.bits.contains(s)
    }

    #[inline]
    pub fn insert(&mut self, s: StateId) -> bool {
        self.bits.insert(s)
    }

    #[inline]
    pub fn remove(&mut self, s: StateId) -> bool {
        self.bits.remove(s)
    }

    /// Number of member states.
    pub fn len(&self) -> usize {
        self.bits.count()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn iter(&self) -> Ones<'_> {
        self.bits.iter()
    }

    pub fn words(&self) -> &[u64] {
        self.bits.words()
    }

    pub fn complement(&self) -> Predicate {
        Predicate {
            bits: self.bits.complement(),
        }
    }

    pub fn union(&self, other: &Predicate) -> Predicate {
        let mut out = self.clone();
        out.bits.union_with(&other.bits);
        out
    }

    pub fn intersection(&self, other: &Predicate) -> Predicate {
        let mut out = self.clone();
        out.bits.intersect_with(&other.bits);
        out
    }

    pub fn difference(&self, other: &Predicate) -> Predicate {
        let mut out = self.clone();
        out.bits.difference_with(&other.bits);
        out
    }

    pub fn union_with(&mut self, other: &Predicate) {
        self.bits.union_with(&other.bits);
    }

    pub fn difference_with(&mut self, other: &Predicate) {
        self.bits.difference_with(&other.bits);
    }

    pub fn intersect_with(&mut self, other: &Predicate) {
        self.bits.intersect_with(&other.bits);
    }

    pub fn is_subset(&self, other: &Predicate) -> bool {
        self.bits.is_subset(&other.bits)
    }

    /// True if some member is set in `words` (a relation row).
    #[inline]
    pub fn meets_row(&self, words: &[u64]) -> bool {
        self.bits.intersects_words(words)
    }

    /// True if some bit of `words` lies outside this predicate.
    #[inline]
    pub fn row_escapes(&self, words: &[u64]) -> bool {
        words
            .iter()
            .zip(self.bits.words())
            .any(|(r, m)| r & !m != 0)
    }
}

impl std::fmt::Debug for Predicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.bits.fmt(f)
    }
}

/// A set of ordered state pairs over one state space.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Relation {
    bits: BitMatrix,
}

impl Relation {
    pub fn empty(n: usize) -> Self {
        Relation {
            bits: BitMatrix::new(n),
        }
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (StateId, StateId)>) -> Self {
        let mut r = Relation::empty(n);
        for (a, b) in pairs {
            r.insert(a, b);
        }
        r
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(StateId, StateId) -> bool) -> Self {
        let mut r = Relation::empty(n);
        for a in 0..n {
            for b in 0..n {
                if f(a, b) {
                    r.insert(a, b);
                }
            }
        }
        r
    }

    /// Every pair `(a, b)` with `a` in `from` and `b` in `to`.
    pub fn product(from: &Predicate, to: &Predicate) -> Self {
        let n = from.space_size();
        let mut r = Relation::empty(n);
        for a in from.iter() {
            r.bits.row_mut(a).copy_from_slice(to.words());
        }
        r
    }

    pub fn space_size(&self) -> usize {
        self.bits.dim()
    }

    #[inline]
    pub fn contains(&self, a: StateId, b: StateId) -> bool {
        self.bits.contains(a, b)
    }

    #[inline]
    pub fn insert(&mut self, a: StateId, b: StateId) -> bool {
        self.bits.insert(a, b)
    }

    #[inline]
    pub fn remove(&mut self, a: StateId, b: StateId) -> bool {
        self.bits.remove(a, b)
    }

    /// Number of pairs.
    pub fn len(&self) -> usize {
        self.bits.count()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn row(&self, a: StateId) -> &[u64] {
        self.bits.row(a)
    }

    #[inline]
    pub fn successors(&self, a: StateId) -> Ones<'_> {
        Ones::new(self.bits.row(a))
    }

    #[inline]
    pub fn has_successor(&self, a: StateId) -> bool {
        !self.bits.row_is_empty(a)
    }

    /// Removes every pair leaving `a`.
    pub fn clear_row(&mut self, a: StateId) {
        self.bits.row_mut(a).fill(0);
    }

    /// Replaces the successors of `a` by the members of `to`.
    pub fn set_row(&mut self, a: StateId, to: &Predicate) {
        self.bits.row_mut(a).copy_from_slice(to.words());
    }

    /// Successors of `a` as a predicate.
    pub fn successor_set(&self, a: StateId) -> Predicate {
        let mut p = Predicate::empty(self.space_size());
        for b in self.successors(a) {
            p.insert(b);
        }
        p
    }

    /// Pairs in ascending (source, target) order.
    pub fn pairs(&self) -> impl Iterator<Item = (StateId, StateId)> + '_ {
        (0..self.space_size()).flat_map(move |a| self.successors(a).map(move |b| (a, b)))
    }

    pub fn union(&self, other: &Relation) -> Relation {
        let mut out = self.clone();
        out.bits.union_with(&other.bits);
        out
    }

    pub fn intersection(&self, other: &Relation) -> Relation {
        let mut out = self.clone();
        out.bits.intersect_with(&other.bits);
        out
    }

    pub fn difference(&self, other: &Relation) -> Relation {
        let mut out = self.clone();
        out.bits.difference_with(&other.bits);
        out
    }

    pub fn union_with(&mut self, other: &Relation) {
        self.bits.union_with(&other.bits);
    }

    pub fn difference_with(&mut self, other: &Relation) {
        self.bits.difference_with(&other.bits);
    }

    pub fn intersect_with(&mut self, other: &Relation) {
        self.bits.intersect_with(&other.bits);
    }

    pub fn is_disjoint(&self, other: &Relation) -> bool {
        self.bits.is_disjoint(&other.bits)
    }

    pub fn is_subset(&self, other: &Relation) -> bool {
        self.bits.is_subset(&other.bits)
    }

    pub fn transpose(&self) -> Relation {
        Relation {
            bits: self.bits.transpose(),
        }
    }

    /// States with at least one successor.
    pub fn sources(&self) -> Predicate {
        Predicate::from_fn(self.space_size(), |a| self.has_successor(a))
    }

    /// Transitive closure (Warshall over bit rows).
    pub fn transitive_closure(&self) -> Relation {
        let n = self.space_size();
        let mut out = self.clone();
        for mid in 0..n {
            let mid_row: Vec<u64> = out.bits.row(mid).to_vec();
            for a in 0..n {
                if out.bits.contains(a, mid) {
                    for (w, m) in out.bits.row_mut(a).iter_mut().zip(&mid_row) {
                        *w |= m;
                    }
                }
            }
        }
        out
    }
}

impl std::fmt::Debug for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.bits.fmt(f)
    }
}

fn same_space(expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::SpaceMismatch { expected, found })
    }
}

/// Pairs of `rel` that start and end in `pred`.
pub fn project(rel: &Relation, pred: &Predicate) -> Result<Relation, ModelError> {
    same_space(rel.space_size(), pred.space_size())?;
    Ok(project_unchecked(rel, pred))
}

pub(crate) fn project_unchecked(rel: &Relation, pred: &Predicate) -> Relation {
    let mut out = Relation::empty(rel.space_size());
    for a in pred.iter() {
        let dst = out.bits.row_mut(a);
        for ((d, r), m) in dst.iter_mut().zip(rel.row(a)).zip(pred.words()) {
            *d = r & m;
        }
    }
    out
}

/// True iff no pair of `rel` leaves `pred`.
pub fn is_closed(pred: &Predicate, rel: &Relation) -> Result<bool, ModelError> {
    same_space(rel.space_size(), pred.space_size())?;
    Ok(is_closed_unchecked(pred, rel))
}

pub(crate) fn is_closed_unchecked(pred: &Predicate, rel: &Relation) -> bool {
    pred.iter().all(|a| !pred.row_escapes(rel.row(a)))
}

/// Successors of `pred` under `rel`.
pub fn image(rel: &Relation, pred: &Predicate) -> Result<Predicate, ModelError> {
    same_space(rel.space_size(), pred.space_size())?;
    let mut out = Predicate::empty(rel.space_size());
    for a in pred.iter() {
        for (o, r) in out.bits.words_mut().iter_mut().zip(rel.row(a)) {
            *o |= r;
        }
    }
    Ok(out)
}

/// States with at least one `rel`-successor in `pred`.
pub fn preimage(rel: &Relation, pred: &Predicate) -> Result<Predicate, ModelError> {
    same_space(rel.space_size(), pred.space_size())?;
    Ok(Predicate::from_fn(rel.space_size(), |a| {
        pred.meets_row(rel.row(a))
    }))
}

/// A repair-problem instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub space: StateSpace,
    pub delta_p: Relation,
    pub delta_e: Relation,
    /// Bad transitions (safety specification).
    pub delta_b: Relation,
    /// Transitions the program may never take.
    pub delta_r: Relation,
    pub faults: Relation,
    pub invariant: Predicate,
    pub k: usize,
}

impl Model {
    /// A model with every relation empty and an empty invariant.
    pub fn empty(space: StateSpace, k: usize) -> Self {
        let n = space.count();
        Model {
            space,
            delta_p: Relation::empty(n),
            delta_e: Relation::empty(n),
            delta_b: Relation::empty(n),
            delta_r: Relation::empty(n),
            faults: Relation::empty(n),
            invariant: Predicate::empty(n),
            k,
        }
    }

    pub fn n(&self) -> usize {
        self.space.count()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n();
        if self.k < 2 {
            return Err(ModelError::InvalidK(self.k));
        }
        for rel in [
            &self.delta_p,
            &self.delta_e,
            &self.delta_b,
            &self.delta_r,
            &self.faults,
        ] {
            same_space(n, rel.space_size())?;
        }
        same_space(n, self.invariant.space_size())
    }

    /// Transitions forbidden to the program: δ_b ∪ δ_r.
    pub fn program_forbidden(&self) -> Relation {
        self.delta_b.union(&self.delta_r)
    }

    pub fn with_k(&self, k: usize) -> Model {
        Model { k, ..self.clone() }
    }
}

/// Result of a repair algorithm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepairOutcome {
    Repaired {
        delta_p_prime: Relation,
        invariant_prime: Predicate,
    },
    NotPossible,
}

impl RepairOutcome {
    pub fn is_repaired(&self) -> bool {
        matches!(self, RepairOutcome::Repaired { .. })
    }
}

/// Adds a program self-loop to every invariant state that is deadlocked in
/// δ_p ∪ δ_e. Returns the augmented model and the set of augmented states.
pub fn augment_selfloops(model: &Model) -> (Model, Predicate) {
    let mut out = model.clone();
    let mut augmented = Predicate::empty(model.n());
    for s in model.invariant.iter() {
        if !model.delta_p.has_successor(s) && !model.delta_e.has_successor(s) {
            out.delta_p.insert(s, s);
            augmented.insert(s);
        }
    }
    (out, augmented)
}

/// Removes the self-loops at `augmented` states.
pub fn strip_selfloops(rel: &Relation, augmented: &Predicate) -> Relation {
    let mut out = rel.clone();
    for s in augmented.iter() {
        out.remove(s, s);
    }
    out
}
