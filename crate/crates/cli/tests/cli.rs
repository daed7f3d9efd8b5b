use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monodromy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad json ({e}): {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn write(dir: &Path, name: &str, value: &Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec(value).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn c(re: f64) -> Value {
    json!([re, 0.0])
}

fn real(rows: &[&[f64]]) -> Value {
    Value::Array(rows.iter().map(|r| Value::Array(r.iter().map(|&x| c(x)).collect())).collect())
}

fn nilpotent_system() -> Value {
    json!({
        "dimension": 2,
        "singularities": [{"point": [1.0, 0.0], "residue": real(&[&[0.0, 1.0], &[0.0, 0.0]])}]
    })
}

#[test]
fn equal_masses_are_an_invariant_case() {
    let out = run(&["masses", "--masses", "1,1,1"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["invariants"]["sigma"].as_f64().unwrap(), 1.0 / 3.0);
    assert_eq!(r["sigma_class"]["value"], "InvariantCase");
}

#[test]
fn sigma_seven_over_forty_eight_is_an_obstruction_case() {
    let out = run(&["masses", "--sigma", "0.1458333333333333"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["sigma_class"]["value"], "ObstructionCase");
    assert!((r["invariants"]["theta"].as_f64().unwrap() - 81.0).abs() < 1e-9);
}

#[test]
fn invalid_input_exits_two() {
    assert_eq!(code(&run(&["masses", "--masses", "1,-1,1"])), 2);
    assert_eq!(code(&run(&["masses", "--masses", "1,1"])), 2);
    assert_eq!(code(&run(&["masses", "--sigma", "0.5"])), 2);
    assert_eq!(code(&run(&["masses", "--masses", "1,1,1", "--tol", "-1"])), 2);
    assert_eq!(code(&run(&["monodromy", "/nonexistent/system.json"])), 2);
}

#[test]
fn overlapping_singularities_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let zero = real(&[&[0.0, 0.0], &[0.0, 0.0]]);
    let sys = json!({
        "dimension": 2,
        "singularities": [
            {"point": [1.0, 0.0], "residue": zero},
            {"point": [1.0, 0.0], "residue": zero}
        ]
    });
    let path = write(dir.path(), "sys.json", &sys);
    assert_eq!(code(&run(&["monodromy", &path])), 2);
}

#[test]
fn nilpotent_residue_gives_unipotent_generator() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "sys.json", &nilpotent_system());
    let out = run(&["monodromy", &path]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    let cluster = &r["generators"][0]["spectrum"]["eigenvalues"][0];
    assert_eq!(cluster["jordan_blocks"], json!([2]));
    assert!((cluster["value"][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let rel = &r["product_relation"];
    assert_eq!(rel["consistent"], true);
    assert!(rel["residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn loop_through_a_singularity_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write(dir.path(), "sys.json", &nilpotent_system());
    let lp = write(dir.path(), "loop.json", &json!({"waypoints": [[0.0, 0.0], [2.0, 0.0], [0.0, 0.0]]}));
    assert_eq!(code(&run(&["monodromy", &sys, "--loop", &lp])), 3);
    let lp = write(dir.path(), "ok.json", &json!({"around": 0, "orientation": "cw"}));
    let out = run(&["monodromy", &sys, "--loop", &lp]);
    assert_eq!(code(&out), 0);
    let m = &report(&out)["transport"]["matrix"];
    assert!((m[0][1][1].as_f64().unwrap() + std::f64::consts::TAU).abs() < 1e-8);
}

#[test]
fn block_model_verdicts() {
    let out = run(&["verify", "--sigma", "0.1458333333333333", "--model", "block"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["verdict"]["kind"], "NoAdditionalMeromorphicIntegral");
    assert_eq!(r["checks"].as_array().unwrap().len(), 8);
    for check in r["checks"].as_array().unwrap() {
        assert_eq!(check["status"], "Pass", "{check}");
        assert!(check["tolerance"].as_f64().unwrap() >= 0.0);
    }

    let out = run(&["verify", "--sigma", "0.2222222222222222", "--model", "block"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["verdict"]["kind"], "InvariantFound");
    assert!(r["verdict"]["degree"].as_u64().unwrap() <= 2);
}

#[test]
fn corrupted_residues_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("sys.json");
    let args = ["verify", "--sigma", "0.3125", "--model", "block", "--write-system", sys.to_str().unwrap()];
    assert_eq!(code(&run(&args)), 0);

    let mut system: Value = serde_json::from_slice(&std::fs::read(&sys).unwrap()).unwrap();
    let entry = &mut system["singularities"][1]["residue"][0][0][0];
    *entry = json!(entry.as_f64().unwrap() + 0.05);
    let bad = write(dir.path(), "bad.json", &system);
    let out = run(&["verify", "--sigma", "0.3125", "--system", &bad]);
    assert_eq!(code(&out), 4);
    assert_eq!(report(&out)["checks"][0]["status"], "Fail");

    assert_eq!(code(&run(&["verify", "--sigma", "0.3125", "--model", "block", "--break-symmetry"])), 4);
    // right residues, wrong masses
    assert_eq!(code(&run(&["verify", "--masses", "1,2,3", "--system", sys.to_str().unwrap()])), 2);
}

#[test]
fn invariants_of_identity_and_shear() {
    let dir = tempfile::tempdir().unwrap();
    let id = write(dir.path(), "id.json", &json!({"matrices": [real(&[&[1.0, 0.0], &[0.0, 1.0]])]}));
    let r = report(&run(&["invariants", &id]));
    assert_eq!(r["linear"]["vectors"].as_array().unwrap().len(), 2);
    assert_eq!(r["quadratic"]["forms"].as_array().unwrap().len(), 3);
    assert_eq!(r["permutation_pair"]["status"], "not_applicable");

    let shear = write(dir.path(), "shear.json", &json!({"matrices": [real(&[&[1.0, 1.0], &[0.0, 1.0]])]}));
    let r = report(&run(&["invariants", &shear]));
    let vectors = r["linear"]["vectors"].as_array().unwrap();
    assert_eq!(vectors.len(), 1);
    assert!(vectors[0][0][0].as_f64().unwrap().abs() < 1e-12);
    assert!((vectors[0][1][0].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let random = json!({"matrices": [
        real(&[&[1.1, 0.3, -0.2], &[0.05, 0.9, 0.4], &[0.2, -0.1, 1.3]]),
        real(&[&[0.8, -0.4, 0.1], &[0.3, 1.2, 0.0], &[-0.2, 0.25, 1.0]])
    ]});
    let r = report(&run(&["invariants", &write(dir.path(), "random.json", &random)]));
    assert_eq!(r["linear"]["vectors"], json!([]));
    assert_eq!(r["quadratic"]["forms"], json!([]));

    let ragged = write(dir.path(), "ragged.json", &json!({"matrices": [[[[1.0, 0.0]]], real(&[&[1.0, 0.0], &[0.0, 1.0]])]}));
    assert_eq!(code(&run(&["invariants", &ragged])), 2);
}

#[test]
fn monodromy_report_feeds_the_invariant_search() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("sys.json");
    run(&["verify", "--sigma", "0.2222222222222222", "--model", "block", "--write-system", sys.to_str().unwrap()]);
    let group = dir.path().join("group.json");
    let out = run(&["monodromy", sys.to_str().unwrap(), "--out", group.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let r = report(&run(&["invariants", group.to_str().unwrap()]));
    assert_eq!(r["generator_count"], 3);
    assert_eq!(r["permutation_pair"]["status"], "not_applicable");
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("sys.json");
    run(&["verify", "--sigma", "0.3125", "--model", "block", "--write-system", sys.to_str().unwrap()]);
    for args in [
        vec!["monodromy", sys.to_str().unwrap()],
        vec!["verify", "--sigma", "0.3125", "--system", sys.to_str().unwrap(), "--format", "text"],
        vec!["selftest", "--seed", "5"],
    ] {
        let a = run(&args);
        let b = run(&args);
        assert_eq!(code(&a), 0, "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn text_format_renders_the_json_fields() {
    let out = run(&["masses", "--masses", "1,1,1", "--format", "text"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("masses:\n  m1: 1.0\n"));
    assert!(text.contains("\nsigma_class:\n  value: \"InvariantCase\"\n"));
}

#[test]
fn selftest_passes_for_several_seeds() {
    for seed in ["0", "1", "2"] {
        let out = run(&["selftest", "--seed", seed]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
        assert_eq!(report(&out)["seed"], seed.parse::<u64>().unwrap());
    }
}
