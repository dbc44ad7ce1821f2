//! Fairness-product semantics and the verifiers built on it.
//!
//! A product node is a pair (state, credit). Credit counts the remaining
//! steps in which program transitions have priority after an environment
//! step. Environment edges reset credit to k-1 and are only available at
//! credit 0 or where the program has no transition; program and fault edges
//! decrement credit, saturating at 0. Computations start at credit 0.

use crate::model::{is_closed_unchecked, Model, Predicate, Relation, StateId, StateSpace};
use std::collections::VecDeque;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("the structural C1 check is only defined for k = 2 (model has k = {0})")]
    RequiresK2(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeLabel {
    Program,
    Environment,
    Fault,
}

impl EdgeLabel {
    pub fn tag(self) -> char {
        match self {
            EdgeLabel::Program => 'P',
            EdgeLabel::Environment => 'E',
            EdgeLabel::Fault => 'F',
        }
    }

    fn from_code(code: u8) -> EdgeLabel {
        match code {
            0 => EdgeLabel::Program,
            1 => EdgeLabel::Environment,
            _ => EdgeLabel::Fault,
        }
    }

    fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProductNode {
    pub state: StateId,
    pub credit: usize,
}

impl ProductNode {
    pub fn new(state: StateId, credit: usize) -> Self {
        ProductNode { state, credit }
    }
}

/// The k-fairness product of a program with the model's environment
/// (and optionally its faults). Edges are computed on demand.
#[derive(Clone, Copy)]
pub struct ProductGraph<'a> {
    k: usize,
    program: &'a Relation,
    env: &'a Relation,
    faults: Option<&'a Relation>,
}

impl<'a> ProductGraph<'a> {
    pub fn new(model: &'a Model, program: &'a Relation, with_faults: bool) -> Self {
        ProductGraph {
            k: model.k,
            program,
            env: &model.delta_e,
            faults: with_faults.then_some(&model.faults),
        }
    }

    pub fn from_parts(
        k: usize,
        program: &'a Relation,
        env: &'a Relation,
        faults: Option<&'a Relation>,
    ) -> Self {
        assert!(k >= 2, "k must be greater than 1");
        ProductGraph {
            k,
            program,
            env,
            faults,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn states(&self) -> usize {
        self.program.space_size()
    }

    pub fn node_count(&self) -> usize {
        self.states() * self.k
    }

    pub fn program(&self) -> &'a Relation {
        self.program
    }

    pub fn env(&self) -> &'a Relation {
        self.env
    }

    pub fn faults(&self) -> Option<&'a Relation> {
        self.faults
    }

    #[inline]
    pub fn index(&self, node: ProductNode) -> usize {
        node.state * self.k + node.credit
    }

    #[inline]
    pub fn node(&self, index: usize) -> ProductNode {
        ProductNode::new(index / self.k, index % self.k)
    }

    /// Credit after taking an edge with `label` from credit `credit`.
    #[inline]
    pub fn next_credit(&self, credit: usize, label: EdgeLabel) -> usize {
        match label {
            EdgeLabel::Environment => self.k - 1,
            EdgeLabel::Program | EdgeLabel::Fault => credit.saturating_sub(1),
        }
    }

    #[inline]
    pub fn env_enabled(&self, node: ProductNode) -> bool {
        node.credit == 0 || !self.program.has_successor(node.state)
    }

    /// Underlying relation rows available at `node`, with their labels.
    #[inline]
    fn rows(&self, node: ProductNode) -> [Option<(&'a [u64], EdgeLabel)>; 3] {
        let s = node.state;
        [
            Some((self.program.row(s), EdgeLabel::Program)),
            self.env_enabled(node)
                .then(|| (self.env.row(s), EdgeLabel::Environment)),
            self.faults.map(|f| (f.row(s), EdgeLabel::Fault)),
        ]
    }

    pub fn successors(&self, node: ProductNode) -> Vec<(EdgeLabel, ProductNode)> {
        let mut out = Vec::new();
        for (row, label) in self.rows(node).into_iter().flatten() {
            let credit = self.next_credit(node.credit, label);
            for t in crate::bits::Ones::new(row) {
                out.push((label, ProductNode::new(t, credit)));
            }
        }
        out
    }

    pub fn is_terminal(&self, node: ProductNode) -> bool {
        self.rows(node)
            .into_iter()
            .flatten()
            .all(|(row, _)| row.iter().all(|&w| w == 0))
    }

    pub fn is_edge(&self, from: ProductNode, label: EdgeLabel, to: ProductNode) -> bool {
        if from.state >= self.states()
            || to.state >= self.states()
            || from.credit >= self.k
            || to.credit != self.next_credit(from.credit, label)
        {
            return false;
        }
        match label {
            EdgeLabel::Program => self.program.contains(from.state, to.state),
            EdgeLabel::Environment => {
                self.env_enabled(from) && self.env.contains(from.state, to.state)
            }
            EdgeLabel::Fault => self
                .faults
                .is_some_and(|f| f.contains(from.state, to.state)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub from: ProductNode,
    pub label: EdgeLabel,
    pub to: ProductNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// An executed transition lies in the forbidden set.
    BadTransition,
    /// A cycle that never visits the target.
    Lasso,
    /// A reachable node without successors outside the target.
    Deadlock,
    /// A transition leaves the invariant.
    NotClosed,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Violation::BadTransition => "bad transition",
            Violation::Lasso => "lasso avoiding target",
            Violation::Deadlock => "deadlock outside target",
            Violation::NotClosed => "transition leaves invariant",
        })
    }
}

/// A finite product path exhibiting a violation. For lassos, `cycle`
/// starts and ends at the last node of `prefix`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub violation: Violation,
    pub start: ProductNode,
    pub prefix: Vec<Step>,
    pub cycle: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("step {0} is not an edge of the product")]
    IllegalStep(usize),
    #[error("step {0} does not start where the previous step ended")]
    Disconnected(usize),
    #[error("path does not start at credit 0")]
    BadStart,
    #[error("final transition is not forbidden")]
    NotBad,
    #[error("cycle does not close or is empty")]
    OpenCycle,
    #[error("cycle visits a target state")]
    CycleHitsTarget,
    #[error("final node is not a deadlock outside the target")]
    NotDeadlock,
    #[error("final transition stays inside the invariant")]
    NotEscaping,
}

/// What a replay checks the violation against.
pub struct ReplayContext<'a> {
    pub graph: ProductGraph<'a>,
    /// Forbidden program transitions.
    pub forbidden_program: &'a Relation,
    /// Forbidden environment and fault transitions.
    pub forbidden_other: &'a Relation,
    pub target: &'a Predicate,
}

impl Counterexample {
    pub fn end(&self) -> ProductNode {
        self.prefix.last().map_or(self.start, |s| s.to)
    }

    /// Checks that every step is a legal product edge and the violation is
    /// exhibited where claimed.
    pub fn replay(&self, ctx: &ReplayContext<'_>) -> Result<(), ReplayError> {
        if self.start.credit != 0 {
            return Err(ReplayError::BadStart);
        }
        let mut at = self.start;
        for (i, step) in self.prefix.iter().chain(&self.cycle).enumerate() {
            if step.from != at {
                return Err(ReplayError::Disconnected(i));
            }
            if !ctx.graph.is_edge(step.from, step.label, step.to) {
                return Err(ReplayError::IllegalStep(i));
            }
            at = step.to;
        }
        match self.violation {
            Violation::BadTransition => {
                let last = self.prefix.last().ok_or(ReplayError::NotBad)?;
                let bad = match last.label {
                    EdgeLabel::Program => ctx.forbidden_program,
                    _ => ctx.forbidden_other,
                };
                if !bad.contains(last.from.state, last.to.state) {
                    return Err(ReplayError::NotBad);
                }
            }
            Violation::Lasso => {
                if self.cycle.is_empty() || self.cycle.last().map(|s| s.to) != Some(self.end()) {
                    return Err(ReplayError::OpenCycle);
                }
                if self.cycle.iter().any(|s| ctx.target.contains(s.from.state)) {
                    return Err(ReplayError::CycleHitsTarget);
                }
            }
            Violation::Deadlock => {
                let end = self.end();
                if ctx.target.contains(end.state) || !ctx.graph.is_terminal(end) {
                    return Err(ReplayError::NotDeadlock);
                }
            }
            Violation::NotClosed => {
                let last = self.prefix.last().ok_or(ReplayError::NotEscaping)?;
                if !ctx.target.contains(last.from.state) || ctx.target.contains(last.to.state) {
                    return Err(ReplayError::NotEscaping);
                }
            }
        }
        Ok(())
    }

    /// One step per line: `<label> --[P|E|F]--> <label> (credit c)`, where
    /// the credit is that of the node reached. Comment lines start with `#`.
    pub fn format(&self, space: &StateSpace) -> String {
        let mut out = format!(
            "# {} from {} (credit {})\n",
            self.violation,
            space.label(self.start.state),
            self.start.credit
        );
        let line = |s: &Step| {
            format!(
                "{} --[{}]--> {} (credit {})\n",
                space.label(s.from.state),
                s.label.tag(),
                space.label(s.to.state),
                s.to.credit
            )
        };
        for s in &self.prefix {
            out.push_str(&line(s));
        }
        if !self.cycle.is_empty() {
            out.push_str("# cycle:\n");
            for s in &self.cycle {
                out.push_str(&line(s));
            }
        }
        if self.violation == Violation::Deadlock {
            let end = self.end();
            out.push_str(&format!(
                "# {} (credit {}) has no successor\n",
                space.label(end.state),
                end.credit
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub pass: bool,
    pub reason: Option<String>,
    pub counterexample: Option<Counterexample>,
}

impl Verdict {
    pub fn pass() -> Self {
        Verdict {
            pass: true,
            reason: None,
            counterexample: None,
        }
    }

    pub fn fail(reason: impl Into<String>) -> Self {
        Verdict {
            pass: false,
            reason: Some(reason.into()),
            counterexample: None,
        }
    }

    fn with_trace(cx: Counterexample) -> Self {
        Verdict {
            pass: false,
            reason: Some(cx.violation.to_string()),
            counterexample: Some(cx),
        }
    }
}

const NONE: usize = usize::MAX;

/// Breadth-first exploration of the product with parent pointers.
pub struct Exploration {
    k: usize,
    /// Visited states, one predicate per credit value.
    pub visited: Vec<Predicate>,
    parent: Vec<usize>,
    parent_label: Vec<u8>,
    /// The first forbidden edge met, if a check was requested.
    pub bad: Option<Step>,
}

/// Forbidden transitions for an exploration, split by edge label.
#[derive(Clone, Copy)]
pub struct Forbidden<'a> {
    pub program: &'a Relation,
    pub other: &'a Relation,
}

impl Exploration {
    /// Explores from `roots`. Nodes whose state lies in `stop` are neither
    /// visited nor expanded. With `forbidden`, stops at the first edge whose
    /// transition is forbidden.
    pub fn run(
        graph: &ProductGraph<'_>,
        roots: impl IntoIterator<Item = ProductNode>,
        stop: Option<&Predicate>,
        forbidden: Option<Forbidden<'_>>,
    ) -> Exploration {
        let n = graph.states();
        let k = graph.k();
        let mut ex = Exploration {
            k,
            visited: vec![Predicate::empty(n); k],
            parent: vec![NONE; n * k],
            parent_label: vec![0; n * k],
            bad: None,
        };
        let mut queue = VecDeque::new();
        for r in roots {
            if stop.is_some_and(|s| s.contains(r.state)) {
                continue;
            }
            if ex.visited[r.credit].insert(r.state) {
                queue.push_back(r);
            }
        }
        let mut fresh = Vec::new();
        while let Some(node) = queue.pop_front() {
            let from_idx = graph.index(node);
            for (row, label) in graph.rows(node).into_iter().flatten() {
                if let Some(fb) = forbidden {
                    let bad_rel = match label {
                        EdgeLabel::Program => fb.program,
                        _ => fb.other,
                    };
                    let hit = row
                        .iter()
                        .zip(bad_rel.row(node.state))
                        .position(|(a, b)| a & b != 0);
                    if let Some(w) = hit {
                        let bits = row[w] & bad_rel.row(node.state)[w];
                        let t = w * 64 + bits.trailing_zeros() as usize;
                        let to = ProductNode::new(t, graph.next_credit(node.credit, label));
                        ex.bad = Some(Step {
                            from: node,
                            label,
                            to,
                        });
                        return ex;
                    }
                }
                let credit = graph.next_credit(node.credit, label);
                fresh.clear();
                {
                    let seen = ex.visited[credit].words();
                    let stop_words = stop.map(|s| s.words());
                    for (i, (&r, &v)) in row.iter().zip(seen).enumerate() {
                        let mut w = r & !v;
                        if let Some(sw) = stop_words {
                            w &= !sw[i];
                        }
                        while w != 0 {
                            fresh.push(i * 64 + w.trailing_zeros() as usize);
                            w &= w - 1;
                        }
                    }
                }
                for &t in &fresh {
                    ex.visited[credit].insert(t);
                    let to = ProductNode::new(t, credit);
                    let idx = graph.index(to);
                    ex.parent[idx] = from_idx;
                    ex.parent_label[idx] = label.code();
                    queue.push_back(to);
                }
            }
        }
        ex
    }

    #[inline]
    pub fn contains(&self, node: ProductNode) -> bool {
        self.visited[node.credit].contains(node.state)
    }

    /// Visited nodes in index order.
    pub fn nodes(&self) -> Vec<ProductNode> {
        let n = self.visited[0].space_size();
        let mut out = Vec::new();
        for s in 0..n {
            for c in 0..self.k {
                if self.visited[c].contains(s) {
                    out.push(ProductNode::new(s, c));
                }
            }
        }
        out
    }

    /// Root and steps leading to a visited node.
    pub fn path_to(&self, node: ProductNode) -> (ProductNode, Vec<Step>) {
        let mut steps = Vec::new();
        let mut idx = node.state * self.k + node.credit;
        loop {
            let p = self.parent[idx];
            if p == NONE {
                break;
            }
            steps.push(Step {
                from: ProductNode::new(p / self.k, p % self.k),
                label: EdgeLabel::from_code(self.parent_label[idx]),
                to: ProductNode::new(idx / self.k, idx % self.k),
            });
            idx = p;
        }
        steps.reverse();
        (ProductNode::new(idx / self.k, idx % self.k), steps)
    }
}

/// Searches the region explored by `ex` (nodes outside `target`) for a
/// terminal node or a cycle.
fn find_divergence(
    graph: &ProductGraph<'_>,
    ex: &Exploration,
) -> Option<(Violation, ProductNode, Vec<Step>)> {
    for node in ex.nodes() {
        if graph.is_terminal(node) {
            return Some((Violation::Deadlock, node, Vec::new()));
        }
    }
    find_cycle(graph, &ex.visited).map(|(entry, cycle)| (Violation::Lasso, entry, cycle))
}

const WHITE: u8 = 0;
const GRAY: u8 = 1;
const BLACK: u8 = 2;

struct Cursor {
    node: ProductNode,
    phase: usize,
    word: usize,
    bits: u64,
    started: bool,
}

/// Finds a cycle within the node set `region` (per-credit state sets).
/// Returns the cycle's entry node and its steps.
pub fn find_cycle(
    graph: &ProductGraph<'_>,
    region: &[Predicate],
) -> Option<(ProductNode, Vec<Step>)> {
    let n = graph.states();
    let k = graph.k();
    let mut color = vec![WHITE; n * k];
    let mut stack: Vec<Cursor> = Vec::new();
    let mut via: Vec<EdgeLabel> = Vec::new();

    for s in 0..n {
        for c in 0..k {
            if !region[c].contains(s) || color[s * k + c] != WHITE {
                continue;
            }
            let root = ProductNode::new(s, c);
            color[graph.index(root)] = GRAY;
            stack.push(Cursor {
                node: root,
                phase: 0,
                word: 0,
                bits: 0,
                started: false,
            });
            while let Some(top) = stack.last_mut() {
                match next_in_region(graph, region, top) {
                    Some((label, to)) => {
                        let ti = graph.index(to);
                        match color[ti] {
                            WHITE => {
                                color[ti] = GRAY;
                                via.push(label);
                                stack.push(Cursor {
                                    node: to,
                                    phase: 0,
                                    word: 0,
                                    bits: 0,
                                    started: false,
                                });
                            }
                            GRAY => {
                                let from = top.node;
                                let pos = stack.iter().position(|cur| cur.node == to).unwrap();
                                let mut cycle = Vec::new();
                                for i in pos..stack.len() - 1 {
                                    cycle.push(Step {
                                        from: stack[i].node,
                                        label: via[i],
                                        to: stack[i + 1].node,
                                    });
                                }
                                cycle.push(Step { from, label, to });
                                return Some((to, cycle));
                            }
                            _ => {}
                        }
                    }
                    None => {
                        color[graph.index(top.node)] = BLACK;
                        stack.pop();
                        via.pop();
                    }
                }
            }
        }
    }
    None
}

fn next_in_region(
    graph: &ProductGraph<'_>,
    region: &[Predicate],
    cur: &mut Cursor,
) -> Option<(EdgeLabel, ProductNode)> {
    let rows = graph.rows(cur.node);
    while cur.phase < 3 {
        if let Some((row, label)) = rows[cur.phase] {
            let credit = graph.next_credit(cur.node.credit, label);
            let mask = region[credit].words();
            loop {
                if cur.bits != 0 {
                    let t = (cur.word - 1) * 64 + cur.bits.trailing_zeros() as usize;
                    cur.bits &= cur.bits - 1;
                    return Some((label, ProductNode::new(t, credit)));
                }
                if cur.started && cur.word >= row.len() {
                    break;
                }
                if !cur.started {
                    cur.started = true;
                    cur.word = 0;
                }
                if cur.word >= row.len() {
                    break;
                }
                cur.bits = row[cur.word] & mask[cur.word];
                cur.word += 1;
            }
        }
        cur.phase += 1;
        cur.word = 0;
        cur.bits = 0;
        cur.started = false;
    }
    None
}

fn initial_nodes(pred: &Predicate) -> impl Iterator<Item = ProductNode> + '_ {
    pred.iter().map(|s| ProductNode::new(s, 0))
}

/// Checks that every computation starting at `roots` (exploring only
/// outside `target`) reaches `target`. `lead_in` prepends a path to each root.
fn convergence_counterexample(
    graph: &ProductGraph<'_>,
    roots: Vec<ProductNode>,
    target: &Predicate,
    lead_in: Option<&Exploration>,
) -> Option<Counterexample> {
    let ex = Exploration::run(graph, roots, Some(target), None);
    let (violation, node, cycle) = find_divergence(graph, &ex)?;
    let (root, mut steps) = ex.path_to(node);
    let start = match lead_in {
        Some(outer) => {
            let (start, mut pre) = outer.path_to(root);
            pre.append(&mut steps);
            steps = pre;
            start
        }
        None => root,
    };
    Some(Counterexample {
        violation,
        start,
        prefix: steps,
        cycle,
    })
}

fn escaping_transition(pred: &Predicate, rel: &Relation) -> Option<(StateId, StateId)> {
    pred.iter().find_map(|a| {
        rel.successors(a)
            .find(|&b| !pred.contains(b))
            .map(|b| (a, b))
    })
}

/// Safe stabilization of `program` for the model's invariant.
///
/// Passes iff the invariant is closed under the program, no computation from
/// any state executes a forbidden transition (δ_b ∪ δ_r for the program,
/// δ_b for the environment), and every computation reaches the invariant.
/// Closure under δ_e is not required; see [`env_closure_holds`].
pub fn verify_stabilization(model: &Model, program: &Relation) -> Verdict {
    let graph = ProductGraph::new(model, program, false);
    let s = &model.invariant;
    if let Some((a, b)) = escaping_transition(s, program) {
        return Verdict::with_trace(Counterexample {
            violation: Violation::NotClosed,
            start: ProductNode::new(a, 0),
            prefix: vec![Step {
                from: ProductNode::new(a, 0),
                label: EdgeLabel::Program,
                to: ProductNode::new(b, graph.next_credit(0, EdgeLabel::Program)),
            }],
            cycle: Vec::new(),
        });
    }
    let forbidden_program = model.program_forbidden();
    let all = Predicate::full(model.n());
    let ex = Exploration::run(
        &graph,
        initial_nodes(&all),
        None,
        Some(Forbidden {
            program: &forbidden_program,
            other: &model.delta_b,
        }),
    );
    if let Some(step) = ex.bad {
        let (start, mut prefix) = ex.path_to(step.from);
        prefix.push(step);
        return Verdict::with_trace(Counterexample {
            violation: Violation::BadTransition,
            start,
            prefix,
            cycle: Vec::new(),
        });
    }
    let roots: Vec<_> = initial_nodes(&s.complement()).collect();
    match convergence_counterexample(&graph, roots, s, None) {
        Some(cx) => Verdict::with_trace(cx),
        None => Verdict::pass(),
    }
}

/// Whether the invariant is closed under program ∪ δ_e.
pub fn env_closure_holds(model: &Model, program: &Relation) -> bool {
    is_closed_unchecked(&model.invariant, program)
        && is_closed_unchecked(&model.invariant, &model.delta_e)
}

/// Outcome of the structural C1 check: the first failing condition (1-5).
pub fn c1_failed_condition(
    model: &Model,
    program_prime: &Relation,
    invariant_prime: &Predicate,
) -> Result<Option<u8>, SemanticsError> {
    if model.k != 2 {
        return Err(SemanticsError::RequiresK2(model.k));
    }
    let sp = invariant_prime;
    let dp = &model.delta_p;
    let de = &model.delta_e;
    // (1) S' closed in δ'_p ∪ δ_e
    if !is_closed_unchecked(sp, program_prime) || !is_closed_unchecked(sp, de) {
        return Ok(Some(1));
    }
    // (2) S' ⊆ S
    if !sp.is_subset(&model.invariant) {
        return Ok(Some(2));
    }
    // (3) δ'_p|S' ⊆ δ_p|S
    for a in sp.iter() {
        for b in program_prime.successors(a) {
            if sp.contains(b)
                && !(dp.contains(a, b)
                    && model.invariant.contains(a)
                    && model.invariant.contains(b))
            {
                return Ok(Some(3));
            }
        }
    }
    // (4) environment-entered states that have both δ_e and δ_p successors
    // keep a δ'_p successor
    let mut entered = Predicate::empty(model.n());
    for a in sp.iter() {
        for b in de.successors(a) {
            entered.insert(b);
        }
    }
    for s1 in entered.iter() {
        if de.has_successor(s1) && dp.has_successor(s1) && !program_prime.has_successor(s1) {
            return Ok(Some(4));
        }
    }
    // (5) no new deadlocks in S'
    for s0 in sp.iter() {
        if (dp.has_successor(s0) || de.has_successor(s0))
            && !(program_prime.has_successor(s0) || de.has_successor(s0))
        {
            return Ok(Some(5));
        }
    }
    Ok(None)
}

/// The five structural conditions equivalent to C1 at k = 2.
pub fn check_c1(
    model: &Model,
    program_prime: &Relation,
    invariant_prime: &Predicate,
) -> Result<bool, SemanticsError> {
    Ok(c1_failed_condition(model, program_prime, invariant_prime)?.is_none())
}

/// C1 by the structural lemma at k = 2 and by trace containment otherwise.
fn c1_holds(model: &Model, program_prime: &Relation, invariant_prime: &Predicate) -> bool {
    match check_c1(model, program_prime, invariant_prime) {
        Ok(ok) => ok,
        Err(_) => crate::oracle::c1_by_traces(model, program_prime, invariant_prime),
    }
}

fn safety_under_faults(
    model: &Model,
    program_prime: &Relation,
    invariant_prime: &Predicate,
) -> (Exploration, Option<Counterexample>) {
    let graph = ProductGraph::new(model, program_prime, true);
    let ex = Exploration::run(
        &graph,
        initial_nodes(invariant_prime),
        None,
        Some(Forbidden {
            program: &model.delta_b,
            other: &model.delta_b,
        }),
    );
    let cx = ex.bad.map(|step| {
        let (start, mut prefix) = ex.path_to(step.from);
        prefix.push(step);
        Counterexample {
            violation: Violation::BadTransition,
            start,
            prefix,
            cycle: Vec::new(),
        }
    });
    (ex, cx)
}

/// Failsafe f-tolerance of (δ'_p, S').
pub fn verify_failsafe(
    model: &Model,
    program_prime: &Relation,
    invariant_prime: &Predicate,
) -> Verdict {
    failsafe_part(model, program_prime, invariant_prime).1
}

fn failsafe_part(
    model: &Model,
    program_prime: &Relation,
    invariant_prime: &Predicate,
) -> (Option<Exploration>, Verdict) {
    if invariant_prime.is_empty() {
        return (None, Verdict::fail("empty invariant"));
    }
    if !program_prime.is_disjoint(&model.delta_r) {
        return (
            None,
            Verdict::fail("program uses a restricted transition (C3)"),
        );
    }
    if !c1_holds(model, program_prime, invariant_prime) {
        return (
            None,
            Verdict::fail("new fault-free behaviour from the invariant (C1)"),
        );
    }
    let (ex, cx) = safety_under_faults(model, program_prime, invariant_prime);
    match cx {
        Some(cx) => (None, Verdict::with_trace(cx)),
        None => (Some(ex), Verdict::pass()),
    }
}

/// Masking f-tolerance of (δ'_p, S'): failsafe, and from every state of the
/// fault-span every fault-free computation returns to S'.
pub fn verify_masking(
    model: &Model,
    program_prime: &Relation,
    invariant_prime: &Predicate,
) -> Verdict {
    let (span, verdict) = failsafe_part(model, program_prime, invariant_prime);
    let Some(span) = span else {
        return verdict;
    };
    let graph = ProductGraph::new(model, program_prime, false);
    let roots: Vec<_> = span
        .nodes()
        .into_iter()
        .filter(|n| !invariant_prime.contains(n.state))
        .collect();
    match convergence_counterexample(&graph, roots, invariant_prime, Some(&span)) {
        Some(cx) => Verdict::with_trace(cx),
        None => Verdict::pass(),
    }
}

/// Leads-to `from ~> to` on the fault-free product, from arbitrary starts.
pub fn verify_leadsto(
    model: &Model,
    program: &Relation,
    from: &Predicate,
    to: &Predicate,
) -> Verdict {
    let graph = ProductGraph::new(model, program, false);
    let all = Predicate::full(model.n());
    let reach = Exploration::run(&graph, initial_nodes(&all), None, None);
    let roots: Vec<_> = reach
        .nodes()
        .into_iter()
        .filter(|n| from.contains(n.state) && !to.contains(n.state))
        .collect();
    match convergence_counterexample(&graph, roots, to, Some(&reach)) {
        Some(cx) => Verdict::with_trace(cx),
        None => Verdict::pass(),
    }
}
