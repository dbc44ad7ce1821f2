use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn models(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
        .display()
        .to_string()
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftrepair"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn repair_writes_sorted_json_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let model = models("smartgrid_db.model");
    let first = run_in(dir.path(), &["repair", &model, "--mode", "stabilize"]);
    assert_eq!(code(&first), 0);
    let a = std::fs::read(dir.path().join("smartgrid_db.repaired.json")).unwrap();
    run_in(
        dir.path(),
        &[
            "repair",
            &model,
            "--mode",
            "stabilize",
            "--out",
            "again.json",
        ],
    );
    let b = std::fs::read(dir.path().join("again.json")).unwrap();
    assert_eq!(a, b);
    let json: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(json["states"].as_array().unwrap().len(), 256);
    let pairs: Vec<(u64, u64)> = json["delta_p_prime"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p[0].as_u64().unwrap(), p[1].as_u64().unwrap()))
        .collect();
    assert!(!pairs.is_empty());
    assert!(pairs.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(json["report"]["outcome"], "repaired");
    assert_eq!(json["report"]["verification"]["pass"], true);
    assert!(json["report"].get("timings_ms").is_none());
}

#[test]
fn repaired_output_checks_as_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let model = models("pressure-cooker-masking.model");
    let out = run_in(
        dir.path(),
        &["repair", &model, "--mode", "masking", "--out", "r.json"],
    );
    assert_eq!(code(&out), 0);
    let check = run_in(
        dir.path(),
        &["check", &model, "r.json", "--property", "masking"],
    );
    assert_eq!(
        code(&check),
        0,
        "{}",
        String::from_utf8_lossy(&check.stdout)
    );
    // the unrepaired program has no recovery from a stuck vent
    let check = run_in(dir.path(), &["check", &model, "--property", "masking"]);
    assert_eq!(code(&check), 2);
}

#[test]
fn usage_and_parse_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.model",
        "model m {\n  var x: 0..1;\n  invariant: x' == 0;\n  k: 2;\n}\n",
    );
    let out = run_in(
        dir.path(),
        &["repair", bad.to_str().unwrap(), "--mode", "stabilize"],
    );
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("bad.model:3:14: primed read in predicate"),
        "{err}"
    );
    assert_eq!(
        code(&run_in(
            dir.path(),
            &["repair", "missing.model", "--mode", "stabilize"]
        )),
        3
    );
    assert_eq!(
        code(&run_in(dir.path(), &["repair", bad.to_str().unwrap()])),
        3
    );
    assert_eq!(
        code(&run_in(
            dir.path(),
            &["example", "smart-grid", "--max", "0"]
        )),
        3
    );
    assert_eq!(
        code(&run_in(
            dir.path(),
            &["example", "smart-grid", "--variant", "db3"]
        )),
        3
    );
}

#[test]
fn fault_tolerance_above_k2_needs_sound_only() {
    let dir = tempfile::tempdir().unwrap();
    let model = models("pressure-cooker-masking.model");
    let args = ["repair", &model, "--mode", "failsafe", "--k-override", "3"];
    assert_eq!(code(&run_in(dir.path(), &args)), 3);
    let mut with = args.to_vec();
    with.push("--sound-only");
    assert_eq!(code(&run_in(dir.path(), &with)), 0);
}

#[test]
fn candidate_shape_mismatch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let model = models("pressure-cooker.model");
    let cand = write(
        dir.path(),
        "c.json",
        r#"{"states": ["a", "b"], "delta_p_prime": []}"#,
    );
    let out = run_in(
        dir.path(),
        &[
            "check",
            &model,
            cand.to_str().unwrap(),
            "--property",
            "stabilization",
        ],
    );
    assert_eq!(code(&out), 3);
    let cand = write(dir.path(), "d.json", r#"{"delta_p_prime": [[0, 99]]}"#);
    let out = run_in(
        dir.path(),
        &[
            "check",
            &model,
            cand.to_str().unwrap(),
            "--property",
            "stabilization",
        ],
    );
    assert_eq!(code(&out), 3);
}

#[test]
fn identity_leads_to_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(
        dir.path(),
        "id.model",
        "model id { var x: 0..2; invariant: x < 2; program { x < 2 && x' == x; } k: 2; }",
    );
    let out = run_in(
        dir.path(),
        &["check", m.to_str().unwrap(), "--property", "leadsto"],
    );
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "pass\n");
    let out = run_in(
        dir.path(),
        &[
            "check",
            m.to_str().unwrap(),
            "--property",
            "leadsto",
            "--from",
            "x == 2",
            "--to",
            "x == 0",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("# deadlock"));
}

#[test]
fn examples_elaborate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "example",
            "smart-grid",
            "--max",
            "3",
            "--variant",
            "db",
            "--out",
            "g.model",
        ],
    );
    assert_eq!(code(&out), 0);
    let out = run_in(
        dir.path(),
        &[
            "repair",
            "g.model",
            "--mode",
            "stabilize",
            "--out",
            "g.json",
        ],
    );
    assert_eq!(code(&out), 0);
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("g.json")).unwrap()).unwrap();
    assert_eq!(json["report"]["sizes"]["states"], 256);

    let out = run_in(
        dir.path(),
        &[
            "example",
            "smart-grid",
            "--max",
            "1",
            "--variant",
            "db2",
            "--k",
            "3",
            "--out",
            "h.model",
        ],
    );
    assert_eq!(code(&out), 0);
    assert_eq!(
        code(&run_in(
            dir.path(),
            &["repair", "h.model", "--mode", "stabilize"]
        )),
        0
    );

    let out = run_in(dir.path(), &["example", "pressure-cooker"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("model pressure_cooker {"));
    let p = write(dir.path(), "pc.model", &text);
    assert_eq!(
        code(&run_in(
            dir.path(),
            &["check", p.to_str().unwrap(), "--property", "stabilization"]
        )),
        0
    );
}

#[test]
fn not_possible_still_writes_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "repair",
            &models("smartgrid_db2.model"),
            "--mode",
            "stabilize",
        ],
    );
    assert_eq!(code(&out), 2);
    let json: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("smartgrid_db2.repaired.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["report"]["outcome"], "not_possible");
    assert!(json["delta_p_prime"].as_array().unwrap().is_empty());
}

#[test]
fn transforms_and_timings_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let model = models("pressure-cooker-masking.model");
    let out = run_in(
        dir.path(),
        &[
            "repair",
            &model,
            "--mode",
            "failsafe",
            "--eventually-fair",
            "--consecutive-env",
            "--timings",
            "--prune",
            "--out",
            "t.json",
        ],
    );
    assert_eq!(code(&out), 0);
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("t.json")).unwrap()).unwrap();
    let r = &json["report"];
    assert_eq!(
        r["transforms"],
        serde_json::json!(["eventually_fair", "consecutive_env"])
    );
    assert!(r["timings_ms"]["repair"].is_number());
    assert!(r["pruned_transitions"].is_number());
    assert!(String::from_utf8_lossy(&out.stderr).contains("repair:"));
}
