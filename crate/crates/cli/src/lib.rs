//! Command-line pipeline: parse, transform, repair, verify, report.

use clap::{Args, Parser, Subcommand, ValueEnum};
use ftrepair::casestudy::{
    pressure_cooker_masking_spec, pressure_cooker_spec, smart_grid_spec, SmartGridVariant,
};
use ftrepair::dsl::{self, ModelSpec};
use ftrepair::extensions::{
    consecutive_env_transform, eventually_fair_transform, strict_invariant_mode,
};
use ftrepair::ft::{failsafe_run, masking_run, nonmasking_model, nonmasking_run, FtOptions};
use ftrepair::semantics::env_closure_holds;
use ftrepair::stabilize::add_stabilization;
use ftrepair::{
    augment_selfloops, verify_failsafe, verify_leadsto, verify_masking, verify_stabilization,
    Model, Predicate, Relation, RepairError, RepairOutcome, Verdict,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_NOT_POSSIBLE: u8 = 2;
pub const EXIT_USAGE: u8 = 3;
pub const EXIT_MISMATCH: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "ftrepair",
    version,
    about = "Repair and check transition systems under a fair environment"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Add stabilization or fault-tolerance to a model file.
    Repair(RepairArgs),
    /// Check a candidate program against a property.
    Check(CheckArgs),
    /// Write a bundled case study as a model file.
    Example(ExampleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Stabilize,
    Failsafe,
    Masking,
    Nonmasking,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepairFlags {
    pub k_override: Option<usize>,
    pub eventually_fair: bool,
    pub consecutive_env: bool,
    pub strict_invariant: bool,
    pub sound_only: bool,
    pub no_verify: bool,
    pub prune: bool,
    pub timings: bool,
}

#[derive(Args, Debug)]
pub struct RepairArgs {
    pub file: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Replace the model's k.
    #[arg(long)]
    pub k_override: Option<usize>,
    /// Treat environment steps as faults too.
    #[arg(long)]
    pub eventually_fair: bool,
    /// Let the environment take several steps in a row.
    #[arg(long)]
    pub consecutive_env: bool,
    /// Reject repairs that shrink the invariant.
    #[arg(long)]
    pub strict_invariant: bool,
    /// Allow fault-tolerance repair with k > 2 (sound, not complete).
    #[arg(long)]
    pub sound_only: bool,
    /// Skip the post-repair verification.
    #[arg(long)]
    pub no_verify: bool,
    /// Drop program transitions from states unreachable from the new
    /// invariant under program, environment and faults. Cosmetic.
    #[arg(long)]
    pub prune: bool,
    /// Output path (default: `<model name>.repaired.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the verifier's counterexample when verification fails.
    #[arg(long)]
    pub trace: bool,
    /// Record phase timings in the report and on stderr.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Property {
    Stabilization,
    Failsafe,
    Masking,
    Leadsto,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    pub file: PathBuf,
    /// JSON file with `delta_p_prime` and optionally `invariant_prime` and
    /// `states`, as written by `repair`. Defaults to the model itself.
    pub candidate: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub property: Property,
    /// Leads-to source predicate (default: the invariant).
    #[arg(long)]
    pub from: Option<String>,
    /// Leads-to target predicate (default: the invariant).
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub k_override: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExampleName {
    PressureCooker,
    SmartGrid,
}

#[derive(Args, Debug)]
pub struct ExampleArgs {
    #[arg(value_enum)]
    pub name: ExampleName,
    /// Smart grid sensor range 0..=max.
    #[arg(long, default_value_t = 3)]
    pub max: usize,
    /// Smart grid variant: db or db2.
    #[arg(long, default_value = "db")]
    pub variant: String,
    #[arg(long)]
    pub k: Option<usize>,
    /// Pressure cooker masking instance instead of the stabilization one.
    #[arg(long)]
    pub masking: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{source}")]
    Parse {
        path: String,
        source: dsl::ParseError,
    },
    #[error("{0}")]
    Elaborate(#[from] dsl::ElaborateError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Sizes {
    pub states: usize,
    pub delta_p: usize,
    pub delta_e: usize,
    pub delta_b: usize,
    pub delta_r: usize,
    pub faults: usize,
    pub invariant: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ms1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ms2: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_p_prime: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariant_prime: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub property: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    /// `repaired`, `not_possible`, `unknown`, `precondition_violated` or
    /// `verification_failed`.
    pub outcome: String,
    pub k: usize,
    pub transforms: Vec<String>,
    pub sizes: Sizes,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationReport>,
    pub retained_selfloops: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariant_closed_under_environment: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pruned_transitions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairedFile {
    pub states: Vec<String>,
    pub delta_p_prime: Vec<[usize; 2]>,
    pub invariant_prime: Vec<usize>,
    #[serde(skip_deserializing, skip_serializing_if = "Option::is_none")]
    pub report: Option<RunReport>,
}

/// Result of the repair pipeline on an elaborated model.
pub struct RepairResult {
    pub exit: u8,
    pub report: RunReport,
    /// The model the result was computed and checked against.
    pub model: Model,
    pub outcome: RepairOutcome,
    pub verdict: Option<Verdict>,
}

fn sorted_pairs(rel: &Relation) -> Vec<[usize; 2]> {
    rel.pairs().map(|(a, b)| [a, b]).collect()
}

impl RepairResult {
    pub fn file(&self) -> RepairedFile {
        let (delta_p_prime, invariant_prime) = match &self.outcome {
            RepairOutcome::Repaired {
                delta_p_prime,
                invariant_prime,
            } => (
                sorted_pairs(delta_p_prime),
                invariant_prime.iter().collect(),
            ),
            RepairOutcome::NotPossible => (vec![], vec![]),
        };
        RepairedFile {
            states: (0..self.model.n())
                .map(|s| self.model.space.label(s))
                .collect(),
            delta_p_prime,
            invariant_prime,
            report: Some(self.report.clone()),
        }
    }
}

struct Clock {
    on: bool,
    last: Instant,
    phases: BTreeMap<String, f64>,
}

impl Clock {
    fn new(on: bool) -> Self {
        Clock {
            on,
            last: Instant::now(),
            phases: BTreeMap::new(),
        }
    }

    fn lap(&mut self, phase: &str) {
        let now = Instant::now();
        if self.on {
            self.phases
                .insert(phase.into(), (now - self.last).as_secs_f64() * 1e3);
        }
        self.last = now;
    }

    fn finish(self) -> Option<BTreeMap<String, f64>> {
        self.on.then_some(self.phases)
    }
}

fn sizes(model: &Model) -> Sizes {
    Sizes {
        states: model.n(),
        delta_p: model.delta_p.len(),
        delta_e: model.delta_e.len(),
        delta_b: model.delta_b.len(),
        delta_r: model.delta_r.len(),
        faults: model.faults.len(),
        invariant: model.invariant.len(),
        ..Sizes::default()
    }
}

/// Drops program rows of states not reachable from `invariant` under
/// program, environment and faults. Returns the number of pairs removed.
fn prune_unreachable(model: &Model, program: &mut Relation, invariant: &Predicate) -> usize {
    let mut seen = invariant.clone();
    let mut stack: Vec<_> = invariant.iter().collect();
    while let Some(a) = stack.pop() {
        for rel in [&*program, &model.delta_e, &model.faults] {
            for b in rel.successors(a) {
                if seen.insert(b) {
                    stack.push(b);
                }
            }
        }
    }
    let before = program.len();
    for s in seen.complement().iter() {
        program.clear_row(s);
    }
    before - program.len()
}

fn verify(mode: Mode, model: &Model, program: &Relation, invariant: &Predicate) -> Verdict {
    match mode {
        Mode::Stabilize => verify_stabilization(model, program),
        Mode::Failsafe => verify_failsafe(model, program, invariant),
        Mode::Masking | Mode::Nonmasking => verify_masking(model, program, invariant),
    }
}

/// Transforms, repairs and (unless disabled) verifies `model`.
pub fn repair_model(model: &Model, mode: Mode, flags: &RepairFlags) -> RepairResult {
    let mut clock = Clock::new(flags.timings);
    let mut model = model.clone();
    let mut transforms = Vec::new();
    if let Some(k) = flags.k_override {
        model = model.with_k(k);
        transforms.push(format!("k={k}"));
    }
    if flags.eventually_fair {
        model = eventually_fair_transform(&model);
        transforms.push("eventually_fair".into());
    }
    if flags.consecutive_env {
        model = consecutive_env_transform(&model);
        transforms.push("consecutive_env".into());
    }
    if mode == Mode::Nonmasking {
        model = nonmasking_model(&model);
    }
    let mut report = RunReport {
        mode,
        outcome: String::new(),
        k: model.k,
        transforms,
        sizes: sizes(&model),
        verification: None,
        retained_selfloops: vec![],
        invariant_closed_under_environment: None,
        pruned_transitions: None,
        message: None,
        timings_ms: None,
    };
    clock.lap("transform");
    let opts = FtOptions {
        sound_only: flags.sound_only,
    };
    let run = match mode {
        Mode::Stabilize => add_stabilization(&model).map(|r| {
            report.sizes.r = Some(r.stats.r_size);
            report.sizes.iterations = Some(r.stats.iterations);
            (r.outcome, Predicate::empty(model.n()))
        }),
        Mode::Failsafe | Mode::Masking | Mode::Nonmasking => {
            let run = match mode {
                Mode::Failsafe => failsafe_run(&model, opts),
                Mode::Masking => masking_run(&model, opts),
                _ => nonmasking_run(&model, opts),
            };
            run.map(|r| {
                report.sizes.ms1 = Some(r.stats.ms1);
                report.sizes.ms2 = Some(r.stats.ms2);
                report.sizes.iterations = Some(r.stats.iterations);
                if mode != Mode::Failsafe {
                    report.sizes.r = Some(r.stats.r_size);
                }
                (r.outcome, r.retained_loops)
            })
        }
    };
    clock.lap("repair");
    let (mut outcome, retained) = match run {
        Ok(x) => x,
        Err(e) => {
            report.outcome = "precondition_violated".into();
            report.message = Some(match e {
                RepairError::Precondition(m) => m,
                RepairError::Model(m) => m.to_string(),
            });
            report.timings_ms = clock.finish();
            return RepairResult {
                exit: EXIT_USAGE,
                report,
                model,
                outcome: RepairOutcome::NotPossible,
                verdict: None,
            };
        }
    };
    if flags.strict_invariant {
        outcome = strict_invariant_mode(outcome, &model.invariant);
    }
    report.retained_selfloops = retained.iter().map(|s| model.space.label(s)).collect();
    let mut verdict = None;
    let exit = match &mut outcome {
        RepairOutcome::NotPossible => {
            let incomplete = flags.sound_only && mode != Mode::Stabilize && model.k > 2;
            report.outcome = if incomplete {
                "unknown"
            } else {
                "not_possible"
            }
            .into();
            EXIT_NOT_POSSIBLE
        }
        RepairOutcome::Repaired {
            delta_p_prime,
            invariant_prime,
        } => {
            if flags.prune && mode != Mode::Stabilize {
                report.pruned_transitions =
                    Some(prune_unreachable(&model, delta_p_prime, invariant_prime));
            }
            report.sizes.delta_p_prime = Some(delta_p_prime.len());
            report.sizes.invariant_prime = Some(invariant_prime.len());
            if mode == Mode::Stabilize {
                report.invariant_closed_under_environment =
                    Some(env_closure_holds(&model, delta_p_prime));
            }
            report.outcome = "repaired".into();
            if flags.no_verify {
                EXIT_OK
            } else {
                // retained self-loops are part of the checked model
                let checked = if retained.is_empty() {
                    model.clone()
                } else {
                    augment_selfloops(&model).0
                };
                let v = verify(mode, &checked, delta_p_prime, invariant_prime);
                clock.lap("verify");
                report.verification = Some(VerificationReport {
                    property: format!("{mode:?}").to_lowercase(),
                    pass: v.pass,
                    reason: v.reason.clone(),
                });
                let pass = v.pass;
                verdict = Some(v);
                if pass {
                    EXIT_OK
                } else {
                    report.outcome = "verification_failed".into();
                    EXIT_MISMATCH
                }
            }
        }
    };
    report.timings_ms = clock.finish();
    RepairResult {
        exit,
        report,
        model,
        outcome,
        verdict,
    }
}

pub fn load_spec(path: &Path) -> Result<ModelSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    dsl::parse_model(&text).map_err(|source| CliError::Parse {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<(ModelSpec, Model), CliError> {
    let spec = load_spec(path)?;
    let model = dsl::elaborate(&spec)?;
    Ok((spec, model))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn cmd_repair(args: RepairArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    let (spec, model) = load_model(&args.file)?;
    let flags = RepairFlags {
        k_override: args.k_override,
        eventually_fair: args.eventually_fair,
        consecutive_env: args.consecutive_env,
        strict_invariant: args.strict_invariant,
        sound_only: args.sound_only,
        no_verify: args.no_verify,
        prune: args.prune,
        timings: args.timings,
    };
    if let Some(k) = flags.k_override {
        if k < 2 {
            return Err(CliError::Usage(format!(
                "--k-override must be at least 2, got {k}"
            )));
        }
    }
    let result = repair_model(&model, args.mode, &flags);
    let path = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{}.repaired.json", spec.name)));
    let json = serde_json::to_string_pretty(&result.file()).expect("serializable") + "\n";
    write_file(&path, &json)?;
    let r = &result.report;
    let _ = writeln!(
        out,
        "{}: {} (written to {})",
        spec.name,
        r.outcome,
        path.display()
    );
    if let Some(m) = &r.message {
        let _ = writeln!(err, "precondition violated: {m}");
    }
    if let Some(t) = &r.timings_ms {
        for (phase, ms) in t {
            let _ = writeln!(err, "{phase}: {ms:.3} ms");
        }
    }
    if let Some(v) = &result.verdict {
        if !v.pass {
            let _ = writeln!(
                err,
                "internal error: repaired program failed verification: {}",
                v.reason.as_deref().unwrap_or("")
            );
            if args.trace {
                if let Some(cx) = &v.counterexample {
                    let _ = write!(out, "{}", cx.format(&result.model.space));
                }
            }
        }
    }
    Ok(result.exit)
}

fn load_candidate(path: &Path, model: &Model) -> Result<(Relation, Option<Predicate>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    #[derive(Deserialize)]
    struct Candidate {
        states: Option<Vec<String>>,
        delta_p_prime: Vec<[usize; 2]>,
        invariant_prime: Option<Vec<usize>>,
    }
    let c: Candidate = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let n = model.n();
    let shape = |what: String| CliError::Usage(format!("{}: {what}", path.display()));
    if let Some(states) = &c.states {
        if states.len() != n {
            return Err(shape(format!("{} states, model has {n}", states.len())));
        }
        if let Some(i) = (0..n).find(|&i| states[i] != model.space.label(i)) {
            return Err(shape(format!(
                "state {i} is `{}`, model has `{}`",
                states[i],
                model.space.label(i)
            )));
        }
    }
    let out_of_range = |s: usize| s >= n;
    if c.delta_p_prime.iter().flatten().any(|&s| out_of_range(s))
        || c.invariant_prime.iter().flatten().any(|&s| out_of_range(s))
    {
        return Err(shape(format!("state index out of range for {n} states")));
    }
    let rel = Relation::from_pairs(n, c.delta_p_prime.iter().map(|p| (p[0], p[1])));
    let inv = c.invariant_prime.map(|v| Predicate::from_states(n, v));
    Ok((rel, inv))
}

fn cmd_check(args: CheckArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let (spec, mut model) = load_model(&args.file)?;
    if let Some(k) = args.k_override {
        if k < 2 {
            return Err(CliError::Usage(format!(
                "--k-override must be at least 2, got {k}"
            )));
        }
        model = model.with_k(k);
    }
    let (program, invariant) = match &args.candidate {
        Some(path) => load_candidate(path, &model)?,
        None => (model.delta_p.clone(), None),
    };
    let invariant = invariant.unwrap_or_else(|| model.invariant.clone());
    let elaborator = dsl::Elaborator::new(&spec, u128::MAX)?;
    let predicate = |text: &Option<String>| -> Result<Predicate, CliError> {
        match text {
            None => Ok(invariant.clone()),
            Some(t) => dsl::parse_predicate(t, &spec)
                .map(|e| elaborator.predicate(&e))
                .map_err(|source| CliError::Parse {
                    path: "<predicate>".into(),
                    source,
                }),
        }
    };
    let verdict = match args.property {
        Property::Stabilization => {
            let m = Model {
                invariant: invariant.clone(),
                ..model.clone()
            };
            verify_stabilization(&m, &program)
        }
        Property::Failsafe => verify_failsafe(&model, &program, &invariant),
        Property::Masking => verify_masking(&model, &program, &invariant),
        Property::Leadsto => {
            let (from, to) = (predicate(&args.from)?, predicate(&args.to)?);
            verify_leadsto(&model, &program, &from, &to)
        }
    };
    if verdict.pass {
        let _ = writeln!(out, "pass");
        return Ok(EXIT_OK);
    }
    match &verdict.counterexample {
        Some(cx) => {
            let _ = write!(out, "{}", cx.format(&model.space));
        }
        None => {
            let _ = writeln!(out, "# fail: {}", verdict.reason.as_deref().unwrap_or(""));
        }
    }
    Ok(EXIT_NOT_POSSIBLE)
}

fn cmd_example(args: ExampleArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let spec = match args.name {
        ExampleName::PressureCooker => {
            let mut spec = if args.masking {
                pressure_cooker_masking_spec()
            } else {
                pressure_cooker_spec()
            };
            if let Some(k) = args.k {
                spec.k = k;
            }
            spec
        }
        ExampleName::SmartGrid => {
            let variant: SmartGridVariant = args.variant.parse().map_err(CliError::Usage)?;
            if args.max < 1 {
                return Err(CliError::Usage("--max must be at least 1".into()));
            }
            smart_grid_spec(args.max, variant, args.k.unwrap_or(2))
        }
    };
    if spec.k < 2 {
        return Err(CliError::Usage(format!(
            "--k must be at least 2, got {}",
            spec.k
        )));
    }
    let text = dsl::pretty_print(&spec);
    match args.out {
        Some(path) => write_file(&path, &text)?,
        None => {
            let _ = write!(out, "{text}");
        }
    }
    Ok(EXIT_OK)
}

/// Runs one command and returns its exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Repair(a) => cmd_repair(a, out, err),
        Command::Check(a) => cmd_check(a, out),
        Command::Example(a) => cmd_example(a, out),
    };
    result.unwrap_or_else(|e| {
        let _ = writeln!(err, "error: {e}");
        EXIT_USAGE
    })
}
