//! Bundled case studies: a two-load smart grid controller and a pressure
//! cooker with a vent and an overpressure valve. Each is available as code
//! and as a [`ModelSpec`] so the two routes can be compared.

use crate::dsl::{BinOp, Domain, Expr, ModelSpec, VarDecl};
use crate::model::{Model, Predicate, Relation, StateId, StateSpace};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmartGridVariant {
    /// The program may not change a sensor.
    Db,
    /// Additionally, it may not flip both switches at once.
    Db2,
}

impl FromStr for SmartGridVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "db" => Ok(SmartGridVariant::Db),
            "db2" => Ok(SmartGridVariant::Db2),
            _ => Err(format!(
                "unknown smart grid variant `{s}` (expected db or db2)"
            )),
        }
    }
}

impl fmt::Display for SmartGridVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SmartGridVariant::Db => "db",
            SmartGridVariant::Db2 => "db2",
        })
    }
}

/// Sensor readings of the generator and both loads, and the switch states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridState {
    pub vg: usize,
    pub v1: usize,
    pub v2: usize,
    pub w1: bool,
    pub w2: bool,
}

impl GridState {
    pub fn decode(max: usize, s: StateId) -> GridState {
        let m = max + 1;
        let rest = s >> 2;
        GridState {
            vg: rest / (m * m),
            v1: rest / m % m,
            v2: rest % m,
            w1: s & 2 != 0,
            w2: s & 1 != 0,
        }
    }

    pub fn encode(&self, max: usize) -> StateId {
        let m = max + 1;
        (((self.vg * m + self.v1) * m + self.v2) << 2)
            | ((self.w1 as usize) << 1)
            | self.w2 as usize
    }

    pub fn same_sensors(&self, other: &GridState) -> bool {
        (self.vg, self.v1, self.v2) == (other.vg, other.v1, other.v2)
    }

    /// Membership in the controller's invariant.
    pub fn legitimate(&self) -> bool {
        let GridState { vg, v1, v2, w1, w2 } = *self;
        let (ok1, ok2) = (v1 <= vg, v2 <= vg);
        if v1 + v2 <= vg {
            w1 && w2
        } else if ok1 && !ok2 {
            w1 && !w2
        } else if !ok1 && ok2 {
            !w1 && w2
        } else if !ok1 && !ok2 {
            !w1 && !w2
        } else if v1 <= v2 {
            !w1 && w2
        } else {
            w1 && !w2
        }
    }
}

pub fn smart_grid_states(max: usize) -> usize {
    (max + 1).pow(3) * 4
}

/// The smart grid with k = 2. δ_e changes sensors arbitrarily and keeps the
/// switches; the program's limits are in δ_r and δ_b is empty.
pub fn smart_grid_model(max: usize, variant: SmartGridVariant) -> Model {
    assert!(max >= 1, "max must be at least 1");
    let n = smart_grid_states(max);
    let labels = (0..n)
        .map(|s| {
            let g = GridState::decode(max, s);
            format!(
                "VG={},V1={},V2={},w1={},w2={}",
                g.vg, g.v1, g.v2, g.w1, g.w2
            )
        })
        .collect();
    let mut m = Model::empty(StateSpace::with_labels(labels).unwrap(), 2);
    m.invariant = Predicate::from_fn(n, |s| GridState::decode(max, s).legitimate());
    let per_switch: Vec<Predicate> = (0..4)
        .map(|w| Predicate::from_fn(n, |s| s & 3 == w))
        .collect();
    for s in 0..n {
        m.delta_e.set_row(s, &per_switch[s & 3]);
        let mut row = Predicate::full(n);
        let base = s & !3;
        for w in 0..4 {
            if variant == SmartGridVariant::Db || w != (s & 3) ^ 3 {
                row.remove(base | w);
            }
        }
        m.delta_r.set_row(s, &row);
    }
    m
}

fn var(name: &str) -> Expr {
    Expr::var(name)
}

fn int(v: i64) -> Expr {
    Expr::Int(v)
}

fn le(a: Expr, b: Expr) -> Expr {
    Expr::bin(BinOp::Le, a, b)
}

fn gt(a: Expr, b: Expr) -> Expr {
    Expr::bin(BinOp::Gt, a, b)
}

fn eq(a: Expr, b: Expr) -> Expr {
    Expr::bin(BinOp::Eq, a, b)
}

fn plus(a: Expr, b: Expr) -> Expr {
    Expr::bin(BinOp::Add, a, b)
}

fn unchanged(name: &str) -> Expr {
    eq(Expr::next(name), var(name))
}

fn switches(w1: bool, w2: bool) -> Vec<Expr> {
    let lit = |name: &str, on: bool| if on { var(name) } else { Expr::not(var(name)) };
    vec![lit("w1", w1), lit("w2", w2)]
}

/// The smart grid as a model file.
pub fn smart_grid_spec(max: usize, variant: SmartGridVariant, k: usize) -> ModelSpec {
    let (vg, v1, v2) = (|| var("VG"), || var("V1"), || var("V2"));
    let sum = || plus(v1(), v2());
    let cases: Vec<(Vec<Expr>, Vec<Expr>)> = vec![
        (vec![le(sum(), vg())], switches(true, true)),
        (vec![le(v1(), vg()), gt(v2(), vg())], switches(true, false)),
        (vec![gt(v1(), vg()), le(v2(), vg())], switches(false, true)),
        (vec![gt(v1(), vg()), gt(v2(), vg())], switches(false, false)),
        (
            vec![
                gt(sum(), vg()),
                le(v1(), vg()),
                le(v2(), vg()),
                le(v1(), v2()),
            ],
            switches(false, true),
        ),
        (
            vec![
                gt(sum(), vg()),
                le(v1(), vg()),
                le(v2(), vg()),
                gt(v1(), v2()),
            ],
            switches(true, false),
        ),
    ];
    let invariant = Expr::any(
        cases
            .into_iter()
            .map(|(guard, sw)| Expr::all(guard.into_iter().chain(sw))),
    );
    let sensors_kept = Expr::all(["VG", "V1", "V2"].map(unchanged));
    let mut restricted = Expr::not(sensors_kept);
    if variant == SmartGridVariant::Db2 {
        let flips = Expr::all(["w1", "w2"].map(|w| Expr::bin(BinOp::Ne, Expr::next(w), var(w))));
        restricted = Expr::bin(BinOp::Or, restricted, flips);
    }
    let sensor = |name: &str| VarDecl {
        name: name.into(),
        domain: Domain::Range {
            lo: 0,
            hi: max as i64,
        },
    };
    let switch = |name: &str| VarDecl {
        name: name.into(),
        domain: Domain::Bool,
    };
    ModelSpec {
        name: if k == 2 {
            format!("smartgrid_{variant}")
        } else {
            format!("smartgrid_{variant}_k{k}")
        },
        variables: vec![
            sensor("VG"),
            sensor("V1"),
            sensor("V2"),
            switch("w1"),
            switch("w2"),
        ],
        invariant,
        program: vec![],
        environment: vec![Expr::all([unchanged("w1"), unchanged("w2")])],
        bad: vec![],
        restricted: vec![restricted],
        faults: vec![],
        k,
    }
}

/// Pressure levels 0..=6 with a working vent (`s0..s6`, ids 0..6) and a
/// failed vent (`fs0..fs6`, ids 7..13).
pub const COOKER_LEVELS: usize = 7;

pub fn cooker_state(failed: bool, pressure: usize) -> StateId {
    failed as usize * COOKER_LEVELS + pressure
}

fn cooker_space() -> StateSpace {
    let labels = [false, true]
        .into_iter()
        .flat_map(|f| (0..COOKER_LEVELS).map(move |p| format!("{}s{p}", if f { "f" } else { "" })))
        .collect();
    StateSpace::with_labels(labels).unwrap()
}

/// Heat raises the pressure by one, or keeps it at the top.
fn cooker_heat() -> Relation {
    let mut e = Relation::empty(2 * COOKER_LEVELS);
    for f in [false, true] {
        for p in 0..COOKER_LEVELS {
            e.insert(
                cooker_state(f, p),
                cooker_state(f, (p + 1).min(COOKER_LEVELS - 1)),
            );
        }
    }
    e
}

fn vent_failure() -> Relation {
    Relation::from_fn(2 * COOKER_LEVELS, |a, b| {
        a < COOKER_LEVELS && b == a + COOKER_LEVELS
    })
}

/// Vent steps at 4 and 5 while it works, and the valve at 6.
pub fn cooker_program(valve: bool) -> Relation {
    let mut p = Relation::from_pairs(
        2 * COOKER_LEVELS,
        [
            (cooker_state(false, 4), cooker_state(false, 3)),
            (cooker_state(false, 5), cooker_state(false, 4)),
        ],
    );
    if valve {
        for f in [false, true] {
            p.insert(cooker_state(f, 6), cooker_state(f, 0));
        }
    }
    p
}

/// Recovery to pressure below 4 from every state, k = 3.
pub fn pressure_cooker_model() -> Model {
    let n = 2 * COOKER_LEVELS;
    let mut m = Model::empty(cooker_space(), 3);
    m.delta_p = cooker_program(true);
    m.delta_e = cooker_heat();
    m.faults = vent_failure();
    m.invariant = Predicate::from_fn(n, |s| s % COOKER_LEVELS < 4);
    m
}

/// Masking instance: the invariant is "vent works", vent failure is the
/// fault, and the program may not raise the pressure.
pub fn pressure_cooker_masking_model() -> Model {
    let n = 2 * COOKER_LEVELS;
    let mut m = Model::empty(cooker_space(), 2);
    m.delta_p = cooker_program(true);
    m.delta_p
        .remove(cooker_state(true, 6), cooker_state(true, 0));
    m.delta_e = cooker_heat();
    m.faults = vent_failure();
    m.delta_r = Relation::from_fn(n, |a, b| b % COOKER_LEVELS > a % COOKER_LEVELS);
    m.invariant = Predicate::from_fn(n, |s| s < COOKER_LEVELS);
    m
}

fn cooker_vars() -> Vec<VarDecl> {
    vec![
        VarDecl {
            name: "failed".into(),
            domain: Domain::Bool,
        },
        VarDecl {
            name: "p".into(),
            domain: Domain::Range {
                lo: 0,
                hi: COOKER_LEVELS as i64 - 1,
            },
        },
    ]
}

fn cooker_common() -> (Vec<Expr>, Vec<Expr>) {
    let p = || var("p");
    let top = COOKER_LEVELS as i64 - 1;
    let heat = vec![
        Expr::all([
            unchanged("failed"),
            Expr::bin(BinOp::Lt, p(), int(top)),
            eq(Expr::next("p"), plus(p(), int(1))),
        ]),
        Expr::all([unchanged("failed"), eq(p(), int(top)), unchanged("p")]),
    ];
    let fail = vec![Expr::all([
        Expr::not(var("failed")),
        Expr::next("failed"),
        unchanged("p"),
    ])];
    (heat, fail)
}

fn vent_and_valve(failed_valve: bool) -> Vec<Expr> {
    let p = || var("p");
    let mut out = vec![Expr::all([
        Expr::not(var("failed")),
        unchanged("failed"),
        Expr::any([eq(p(), int(4)), eq(p(), int(5))]),
        eq(Expr::next("p"), Expr::bin(BinOp::Sub, p(), int(1))),
    ])];
    let valve = Expr::all([
        eq(p(), int(6)),
        unchanged("failed"),
        eq(Expr::next("p"), int(0)),
    ]);
    out.push(if failed_valve {
        valve
    } else {
        Expr::bin(BinOp::And, Expr::not(var("failed")), valve)
    });
    out
}

pub fn pressure_cooker_spec() -> ModelSpec {
    let (heat, fail) = cooker_common();
    ModelSpec {
        name: "pressure_cooker".into(),
        variables: cooker_vars(),
        invariant: Expr::bin(BinOp::Lt, var("p"), int(4)),
        program: vent_and_valve(true),
        environment: heat,
        bad: vec![],
        restricted: vec![],
        faults: fail,
        k: 3,
    }
}

pub fn pressure_cooker_masking_spec() -> ModelSpec {
    let (heat, fail) = cooker_common();
    ModelSpec {
        name: "pressure_cooker_masking".into(),
        variables: cooker_vars(),
        invariant: Expr::not(var("failed")),
        program: vent_and_valve(false),
        environment: heat,
        bad: vec![],
        restricted: vec![gt(Expr::next("p"), var("p"))],
        faults: fail,
        k: 2,
    }
}
