//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

use ftrepair::casestudy::{
    cooker_program, cooker_state, pressure_cooker_model, smart_grid_model, GridState,
    SmartGridVariant,
};
use ftrepair::extensions::consecutive_env_transform;
use ftrepair::oracle::{brute_force_repair_exists, c1_by_traces, OracleMode};
use ftrepair::random::{ft_model, stabilization_model};
use ftrepair::semantics::{ProductGraph, ReplayContext, Violation};
use ftrepair::stabilize::{add_stabilization_general, stabilize_k2_run};
use ftrepair::{
    check_c1, verify_leadsto, verify_stabilization, Model, Predicate, Relation, RepairOutcome,
    Verdict,
};
use ftrepair_cli::{repair_model, Mode, RepairFlags, EXIT_MISMATCH, EXIT_USAGE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn models_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

/// Runs the binary in a scratch directory and returns (exit code, stdout).
fn cli(args: &[&str]) -> (i32, String) {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ftrepair"))
        .args(args)
        .current_dir(dir.path())
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
    )
}

fn model_file(name: &str) -> String {
    models_dir().join(name).display().to_string()
}

fn repaired_program(outcome: RepairOutcome) -> Option<Relation> {
    match outcome {
        RepairOutcome::Repaired { delta_p_prime, .. } => Some(delta_p_prime),
        RepairOutcome::NotPossible => None,
    }
}

fn criterion_1() -> Outcome {
    let mut slowest = Duration::ZERO;
    for max in 1..=3 {
        let m = smart_grid_model(max, SmartGridVariant::Db);
        let t = Instant::now();
        let run = stabilize_k2_run(&m).map_err(|e| e.to_string())?;
        let dp = repaired_program(run.outcome).ok_or(format!("max {max}: not repaired"))?;
        let verdict = verify_stabilization(&m, &dp);
        slowest = slowest.max(t.elapsed());
        ensure(verdict.pass, format!("max {max}: {:?}", verdict.reason))?;
        for (a, b) in dp.pairs() {
            let (ga, gb) = (GridState::decode(max, a), GridState::decode(max, b));
            ensure(
                ga.same_sensors(&gb),
                format!("max {max}: ({a},{b}) changes a sensor"),
            )?;
            ensure(
                m.invariant.contains(b),
                format!("max {max}: ({a},{b}) misses S"),
            )?;
        }
        let outside = m.invariant.complement();
        ensure(
            outside.iter().all(|s| dp.has_successor(s)),
            format!("max {max}: some state outside S has no recovery step"),
        )?;
    }
    ensure(slowest < Duration::from_secs(1), format!("{slowest:?}"))?;
    let (code, _) = cli(&[
        "repair",
        &model_file("smartgrid_db.model"),
        "--mode",
        "stabilize",
    ]);
    ensure(code == 0, format!("CLI exit {code}"))?;
    Ok(format!(
        "max 1..3 repaired and verified, slowest {slowest:.2?}, CLI exit 0"
    ))
}

fn criterion_2() -> Outcome {
    let mut slowest = Duration::ZERO;
    for max in 1..=3 {
        let m = smart_grid_model(max, SmartGridVariant::Db2);
        let t = Instant::now();
        let out = stabilize_k2_run(&m).map_err(|e| e.to_string())?.outcome;
        slowest = slowest.max(t.elapsed());
        ensure(
            out == RepairOutcome::NotPossible,
            format!("max {max}: repaired"),
        )?;
    }
    ensure(slowest < Duration::from_secs(1), format!("{slowest:?}"))?;
    let (code, _) = cli(&[
        "repair",
        &model_file("smartgrid_db2.model"),
        "--mode",
        "stabilize",
    ]);
    ensure(code == 2, format!("CLI exit {code}"))?;
    Ok(format!(
        "max 1..3 not possible, slowest {slowest:.2?}, CLI exit 2"
    ))
}

fn criterion_3() -> Outcome {
    let mut slowest = Duration::ZERO;
    for max in 1..=2 {
        let m = smart_grid_model(max, SmartGridVariant::Db2).with_k(3);
        let t = Instant::now();
        let out = add_stabilization_general(&m).map_err(|e| e.to_string())?;
        let dp = repaired_program(out).ok_or(format!("max {max}: not repaired"))?;
        let verdict = verify_stabilization(&m, &dp);
        slowest = slowest.max(t.elapsed());
        ensure(verdict.pass, format!("max {max}: {:?}", verdict.reason))?;
    }
    ensure(slowest < Duration::from_secs(5), format!("{slowest:?}"))?;
    let (code, _) = cli(&[
        "repair",
        &model_file("smartgrid_db2_k3.model"),
        "--mode",
        "stabilize",
    ]);
    ensure(code == 0, format!("CLI exit {code}"))?;
    Ok(format!(
        "max 1..2 repaired at k=3 and verified, slowest {slowest:.2?}, CLI exit 0"
    ))
}

fn replayable_lasso(
    m: &Model,
    program: &Relation,
    target: &Predicate,
    v: &Verdict,
) -> Result<(), String> {
    let cx = v.counterexample.as_ref().ok_or("no counterexample")?;
    ensure(
        cx.violation == Violation::Lasso,
        format!("{}", cx.violation),
    )?;
    let none = Relation::empty(m.n());
    let ctx = ReplayContext {
        graph: ProductGraph::new(m, program, false),
        forbidden_program: &none,
        forbidden_other: &none,
        target,
    };
    cx.replay(&ctx).map_err(|e| e.to_string())
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let m = pressure_cooker_model();
    let v = verify_stabilization(&m, &m.delta_p);
    ensure(v.pass, format!("with valve: {:?}", v.reason))?;
    let no_valve = cooker_program(false);
    let v = verify_stabilization(&m, &no_valve);
    ensure(!v.pass, "without valve still passes")?;
    replayable_lasso(&m, &no_valve, &m.invariant, &v)?;
    // starting from the failed-vent states only
    let failed = Predicate::from_fn(m.n(), |s| s >= cooker_state(true, 0));
    let v = verify_leadsto(&m, &no_valve, &failed, &m.invariant);
    replayable_lasso(&m, &no_valve, &m.invariant, &v)?;
    let cycle = &v.counterexample.as_ref().unwrap().cycle;
    ensure(
        cycle.iter().all(|s| failed.contains(s.from.state)),
        "lasso leaves fs states",
    )?;
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(1), format!("{elapsed:?}"))?;

    let file = model_file("pressure-cooker.model");
    let (code, _) = cli(&["check", &file, "--property", "stabilization"]);
    ensure(code == 0, format!("CLI check exit {code}"))?;
    let dir = tempfile::tempdir().unwrap();
    let candidate = dir.path().join("no-valve.json");
    let pairs: Vec<_> = no_valve.pairs().map(|(a, b)| [a, b]).collect();
    std::fs::write(
        &candidate,
        serde_json::json!({ "delta_p_prime": pairs }).to_string(),
    )
    .unwrap();
    let (code, trace) = cli(&[
        "check",
        &file,
        candidate.to_str().unwrap(),
        "--property",
        "stabilization",
    ]);
    ensure(
        code == 2 && trace.contains("--[E]-->"),
        format!("CLI without valve: exit {code}"),
    )?;
    Ok(format!(
        "passes with valve; without valve a replayable lasso (fs cycle: {}), {elapsed:.2?}",
        cycle
            .iter()
            .map(|s| m.space.label(s.from.state))
            .collect::<Vec<_>>()
            .join(" -> ")
    ))
}

fn random_instance(mode: Mode, r: &mut ChaCha8Rng, max_n: usize, k: usize) -> Model {
    let n = r.gen_range(2..=max_n);
    match mode {
        Mode::Stabilize => stabilization_model(r, n, k),
        _ => ft_model(r, n, k),
    }
}

const MODES: [Mode; 4] = [
    Mode::Stabilize,
    Mode::Failsafe,
    Mode::Masking,
    Mode::Nonmasking,
];

fn criterion_5() -> Outcome {
    const PER_MODE: usize = 1000;
    let mut summary = Vec::new();
    for (i, mode) in MODES.into_iter().enumerate() {
        let mut r = ChaCha8Rng::seed_from_u64(500 + i as u64);
        let (mut repaired, mut mismatches, mut usage) = (0, 0, 0);
        for _ in 0..PER_MODE {
            let k = r.gen_range(2..=3);
            let m = random_instance(mode, &mut r, 8, k);
            let flags = RepairFlags {
                sound_only: k > 2,
                ..RepairFlags::default()
            };
            match repair_model(&m, mode, &flags).exit {
                0 => repaired += 1,
                EXIT_MISMATCH => mismatches += 1,
                EXIT_USAGE => usage += 1,
                _ => {}
            }
        }
        ensure(
            mismatches == 0,
            format!("{mode:?}: {mismatches} verification mismatches"),
        )?;
        ensure(usage == 0, format!("{mode:?}: {usage} precondition errors"))?;
        summary.push(format!("{mode:?} {repaired}/{PER_MODE}"));
    }
    Ok(format!("exit 4 count 0; repaired {}", summary.join(", ")))
}

fn criterion_6() -> Outcome {
    const PER_MODE: usize = 500;
    let mut summary = Vec::new();
    for (i, mode) in MODES.into_iter().enumerate() {
        let mut r = ChaCha8Rng::seed_from_u64(600 + i as u64);
        let (mut agree, mut yes) = (0, 0);
        for _ in 0..PER_MODE {
            let m = random_instance(mode, &mut r, 5, 2);
            let (oracle_model, oracle_mode) = match mode {
                Mode::Stabilize => (m.clone(), OracleMode::Stabilize),
                Mode::Failsafe => (m.clone(), OracleMode::Failsafe),
                Mode::Masking => (m.clone(), OracleMode::Masking),
                Mode::Nonmasking => (ftrepair::ft::nonmasking_model(&m), OracleMode::Masking),
            };
            let expected =
                brute_force_repair_exists(&oracle_model, oracle_mode).map_err(|e| e.to_string())?;
            let got = repair_model(&m, mode, &RepairFlags::default()).exit == 0;
            agree += (expected == got) as usize;
            yes += expected as usize;
        }
        ensure(
            agree == PER_MODE,
            format!("{mode:?}: {agree}/{PER_MODE} agree"),
        )?;
        summary.push(format!("{mode:?} {agree}/{PER_MODE} ({yes} repairable)"));
    }
    Ok(format!("100% agreement: {}", summary.join(", ")))
}

fn criterion_7() -> Outcome {
    const PAIRS: usize = 500;
    let mut r = ChaCha8Rng::seed_from_u64(700);
    let (mut agree, mut holds) = (0, 0);
    for _ in 0..PAIRS {
        let n = r.gen_range(2..=4);
        let m = ft_model(&mut r, n, 2);
        let sp = Predicate::from_fn(n, |s| m.invariant.contains(s) && r.gen_bool(0.7));
        let keep = r.gen_range(0.3..1.0);
        let extra = if r.gen_bool(0.5) {
            0.0
        } else {
            r.gen_range(0.0..0.3)
        };
        let mut pp = Relation::from_fn(n, |a, b| {
            r.gen_bool(if m.delta_p.contains(a, b) {
                keep
            } else {
                extra
            })
        });
        pp.difference_with(&m.delta_e);
        let lemma = check_c1(&m, &pp, &sp).map_err(|e| e.to_string())?;
        agree += (lemma == c1_by_traces(&m, &pp, &sp)) as usize;
        holds += lemma as usize;
    }
    ensure(agree == PAIRS, format!("{agree}/{PAIRS} agree"))?;
    Ok(format!("{agree}/{PAIRS} pairs agree ({holds} satisfy C1)"))
}

fn peak_rss_mib() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kib: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib / 1024.0)
}

fn criterion_8() -> Outcome {
    let m = smart_grid_model(15, SmartGridVariant::Db);
    ensure(m.n() == 16384, format!("{} states", m.n()))?;
    let t = Instant::now();
    let run = stabilize_k2_run(&m).map_err(|e| e.to_string())?;
    let repair = t.elapsed();
    let dp = repaired_program(run.outcome).ok_or("not repaired")?;
    let v = verify_stabilization(&m, &dp);
    let total = t.elapsed();
    ensure(v.pass, format!("{:?}", v.reason))?;
    ensure(total < Duration::from_secs(60), format!("{total:?}"))?;
    // process-wide peak, so an upper bound for this criterion
    let rss = peak_rss_mib().ok_or("peak RSS unavailable")?;
    ensure(rss < 2048.0, format!("peak RSS {rss:.0} MiB"))?;
    Ok(format!(
        "16384 states: repair {repair:.2?}, with verification {total:.2?}, peak RSS {rss:.0} MiB"
    ))
}

fn criterion_9() -> Outcome {
    const WANT: usize = 200;
    let mut r = ChaCha8Rng::seed_from_u64(900);
    let (mut found, mut tries) = (0, 0);
    while found < WANT {
        tries += 1;
        ensure(tries < 100 * WANT, "too few passing programs")?;
        let m = random_instance(Mode::Stabilize, &mut r, 8, 2);
        let Some(mut dp) = repaired_program(stabilize_k2_run(&m).unwrap().outcome) else {
            continue;
        };
        if r.gen_bool(0.5) {
            let pairs: Vec<_> = dp.pairs().collect();
            for (a, b) in pairs {
                if r.gen_bool(0.2) {
                    dp.remove(a, b);
                }
            }
        }
        if !verify_stabilization(&m, &dp).pass {
            continue;
        }
        found += 1;
        for k in [3, 4] {
            ensure(
                verify_stabilization(&m.with_k(k), &dp).pass,
                format!("fails at k={k}: {m:?}"),
            )?;
        }
    }
    Ok(format!(
        "{found} programs passing at k=2 also pass at k=3 and k=4"
    ))
}

fn criterion_10() -> Outcome {
    const COUNT: usize = 100;
    let mut r = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..COUNT {
        let m = random_instance(Mode::Stabilize, &mut r, 8, 2);
        let once = consecutive_env_transform(&m);
        ensure(
            consecutive_env_transform(&once) == once,
            "closure not idempotent",
        )?;
    }
    let flags = RepairFlags {
        eventually_fair: true,
        ..RepairFlags::default()
    };
    let mut repaired = 0;
    for mode in [Mode::Failsafe, Mode::Masking] {
        for _ in 0..COUNT {
            let m = random_instance(mode, &mut r, 8, 2);
            let code = repair_model(&m, mode, &flags).exit;
            ensure(
                code != EXIT_MISMATCH && code != EXIT_USAGE,
                format!("{mode:?}: exit {code}"),
            )?;
            repaired += (code == 0) as usize;
        }
    }
    Ok(format!(
        "idempotent on {COUNT} models; eventually-fair failsafe/masking sound on {} models ({repaired} repaired)",
        2 * COUNT
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("smart grid db, k=2", criterion_1),
        ("smart grid db2, k=2", criterion_2),
        ("smart grid db2, k=3", criterion_3),
        ("pressure cooker", criterion_4),
        ("soundness", criterion_5),
        ("completeness", criterion_6),
        ("C1 conditions vs traces", criterion_7),
        ("scaling, max=15", criterion_8),
        ("k-monotonicity", criterion_9),
        ("transforms", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = f();
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
