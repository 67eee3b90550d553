use std::path::PathBuf;

use guarded_saturation::cli::run_with;
use guarded_saturation::model::is_full;
use guarded_saturation::textio::{parse_rules, ParseOptions};

fn program(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "programs", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("guarded-saturate").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err, false);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn saturate_prints_a_parseable_datalog_program() {
    let file = program("evolve.gtgd");
    let (code, out, _) = run(&["saturate", &file]);
    assert_eq!(code, 0);
    let rules = parse_rules(&out, &ParseOptions::default()).unwrap();
    assert!(rules.iter().all(is_full));
    assert!(out.contains("R(X1), S(X1) -> M(X1)."));
}

#[test]
fn sequential_and_parallel_output_match() {
    let file = program("unifier.gtgd");
    let (_, seq, _) = run(&["--jobs", "1", "saturate", &file, "--algo", "ssat"]);
    let (_, par, _) = run(&["saturate", &file, "--algo", "ssat"]);
    let body = |s: &str| s.lines().filter(|l| !l.starts_with('%')).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&seq), body(&par));
}

#[test]
fn answer_reports_each_query() {
    let (code, out, _) = run(&["answer", &program("evolve.gtgd")]);
    assert_eq!(code, 0);
    assert_eq!(out, "Q1: yes\nQ2: no\n");
    let (code, out, _) = run(&["answer", &program("full_disjunctive.gtgd")]);
    assert_eq!(code, 0);
    assert_eq!(out, "Q1: yes\nQ2: no\n");
}

#[test]
fn answer_json_lists_queries() {
    let (code, out, _) = run(&["answer", &program("evolve.gtgd"), "--format", "json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v[0]["answer"], true);
    assert_eq!(v[1]["answer"], false);
}

#[test]
fn chase_reports_proof_and_fixpoint() {
    let (code, out, _) = run(&["chase", &program("chase_proof.gtgd")]);
    assert_eq!(code, 0);
    assert!(out.contains("Q1: yes"));
    assert!(out.contains("Q2: no (fixpoint)"));
}

#[test]
fn one_pass_violation_is_reported() {
    let (code, out, _) = run(&["chase", &program("tree_chase.gtgd"), "--one-pass"]);
    assert_eq!(code, 0);
    assert!(out.contains("one-pass: false"));
}

#[test]
fn traces_are_emitted() {
    let (code, out, _) = run(&["chase", &program("chase_tree.gtgd"), "--emit", "json"]);
    assert_eq!(code, 0);
    let start = out.find('{').unwrap();
    let v: serde_json::Value = serde_json::from_str(&out[start..]).unwrap();
    assert_eq!(v["kind"], "chase_tree");
    assert!(v["nodes"].as_array().unwrap().len() <= 16);
    let (code, out, _) = run(&["chase", &program("tree_chase.gtgd"), "--one-pass", "--emit", "dot"]);
    assert_eq!(code, 0);
    assert!(out.contains("digraph chase {"));
}

#[test]
fn verify_passes_on_sample_programs() {
    for name in ["evolve.gtgd", "unifier.gtgd", "skolem_running.gtgd"] {
        let (code, out, err) = run(&["verify", &program(name)]);
        assert_eq!(code, 0, "{name}: {out}{err}");
        assert!(out.contains("result: pass"));
    }
}

#[test]
fn verify_detects_injected_unsoundness() {
    let (code, out, _) = run(&["verify", &program("evolve.gtgd"), "--inject-unsound"]);
    assert_ne!(code, 0);
    assert!(out.contains("result: fail"));
}

#[test]
fn normalize_produces_head_normal_form() {
    let (code, out, _) = run(&["normalize", &program("skolem_running.gtgd"), "--form", "hnf"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn errors_map_to_exit_codes() {
    let (code, _, err) = run(&["saturate", "missing.gtgd"]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error:"));
    let (code, _, err) = run(&["saturate", &program("chase_proof.gtgd")]);
    assert_eq!(code, 3);
    assert!(err.contains("not guarded"));
    let (code, _, _) = run(&["saturate", &program("full_disjunctive.gtgd"), "--algo", "gsat"]);
    assert_eq!(code, 3);
    let (code, _, _) = run(&["saturate", &program("evolve.gtgd"), "--algo", "nope"]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["--jobs", "0", "saturate", &program("evolve.gtgd")]);
    assert_eq!(code, 2);
}

#[test]
fn help_goes_to_stdout() {
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("saturate"));
}
