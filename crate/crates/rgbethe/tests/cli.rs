//! End-to-end tests of the `rgbethe` binary: exit-code discipline, output
//! determinism, and the documented behavior of each subcommand.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rgbethe"))
}

fn write_model(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary must run")
}

const DICKE_M4: &str = r#"{"model":"dicke","levels":[2,3,4,5],"coupling":-0.1,"eps0":1.0,"N":3}"#;
const PIP_M4: &str = r#"{"model":"pip","levels":[1,2,3,4],"eta0_sq":2.5,"kappa":1.0,"N":2}"#;
const FIG1: &str =
    r#"{"model":"dicke","levels":[2,3,4,5,6,7,8,9,10,11,12],"coupling":-0.1,"eps0":1.0,"N":6}"#;

#[test]
fn enumerate_emits_full_sector_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(&dir, "m.json", DICKE_M4);
    let out1 = run(bin().arg("enumerate").arg("--model").arg(&model));
    assert!(
        out1.status.success(),
        "{}",
        String::from_utf8_lossy(&out1.stderr)
    );
    let text = String::from_utf8(out1.stdout).unwrap();
    assert_eq!(
        text.matches("state_id").count(),
        15,
        "dicke m=4 N=3 has 15 states"
    );
    // byte-identical on a second run
    let out2 = run(bin().arg("enumerate").arg("--model").arg(&model));
    assert_eq!(text, String::from_utf8(out2.stdout).unwrap());
    // parses back as JSON with 17-significant-digit floats
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), 15);
}

#[test]
fn enumerate_vacuum_sector() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(
        &dir,
        "m.json",
        r#"{"model":"dicke","levels":[2,3],"coupling":-0.2,"eps0":1.0,"N":0}"#,
    );
    let out = run(bin().arg("enumerate").arg("--model").arg(&model));
    assert!(out.status.success());
    let parsed: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let records = parsed.as_array().unwrap();
    assert_eq!(records.len(), 1);
    for l in records[0]["lambdas"].as_array().unwrap() {
        assert_eq!(l.as_f64().unwrap(), 0.0);
    }
}

#[test]
fn malformed_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_model(&dir, "bad.json", r#"{"model":"dicke","levels":[2,"#);
    let out = run(bin().arg("enumerate").arg("--model").arg(&bad));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model file"));

    let unknown = write_model(
        &dir,
        "unknown.json",
        r#"{"model":"dicke","levels":[2,3],"coupling":1.0,"eps0":0.0,"N":1,"extra":1}"#,
    );
    let out = run(bin().arg("enumerate").arg("--model").arg(&unknown));
    assert_eq!(out.status.code(), Some(1), "unknown keys are rejected");

    let missing = dir.path().join("nope.json");
    let out = run(bin().arg("enumerate").arg("--model").arg(&missing));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_single_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(&dir, "m.json", PIP_M4);
    let out = run(bin()
        .arg("solve")
        .arg("--model")
        .arg(&model)
        .arg("--pattern")
        .arg("0,2"));
    assert!(out.status.success());
    let parsed: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(parsed["lambdas"].as_array().unwrap().len(), 4);
    assert!(parsed["residual_lambda"].as_f64().unwrap() < 1e-10);
}

#[test]
fn continuation_csv_shape_and_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(&dir, "fig1.json", FIG1);
    let out_path = dir.path().join("path.csv");
    let out = run(bin()
        .arg("continuation")
        .arg("--model")
        .arg(&model)
        .arg("--seed-partition")
        .arg("0,0,0,1,2,3")
        .arg("--out")
        .arg(&out_path));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        "xi,re_x1,im_x1,re_x2,im_x2,re_x3,im_x3,re_x4,im_x4,re_x5,im_x5,re_x6,im_x6,flag"
    );
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first.len(), 14);
    assert_eq!(first[0].parse::<f64>().unwrap(), 0.0);
    let last: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    assert_eq!(last[0].parse::<f64>().unwrap(), 1.0);
    assert_eq!(last[13], "0", "endpoint sample is converged");
}

#[test]
fn continuation_reverse_reproduces_forward_start() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(&dir, "fig1.json", FIG1);
    let fwd_path = dir.path().join("fwd.csv");
    let rev_path = dir.path().join("rev.csv");
    let out = run(bin()
        .arg("continuation")
        .arg("--model")
        .arg(&model)
        .arg("--seed-partition")
        .arg("0,0,0,1,2,3")
        .arg("--out")
        .arg(&fwd_path));
    assert!(out.status.success());
    let out = run(bin()
        .arg("continuation")
        .arg("--model")
        .arg(&model)
        .arg("--seed-partition")
        .arg("0,0,0,1,2,3")
        .arg("--reverse")
        .arg("--out")
        .arg(&rev_path));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let parse_row =
        |line: &str| -> Vec<f64> { line.split(',').map(|t| t.parse::<f64>().unwrap()).collect() };
    let fwd = std::fs::read_to_string(&fwd_path).unwrap();
    let rev = std::fs::read_to_string(&rev_path).unwrap();
    let start = parse_row(fwd.lines().nth(1).unwrap());
    let end = parse_row(rev.lines().last().unwrap());
    assert_eq!(start[0], 0.0);
    assert_eq!(end[0], 0.0);
    // rapidity sets agree up to ordering at xi = 0
    for a in 1..=6 {
        let x = num_complex::Complex64::new(end[2 * a - 1], end[2 * a]);
        let matched = (1..=6).any(|b| {
            (num_complex::Complex64::new(start[2 * b - 1], start[2 * b]) - x).norm() < 1e-7
        });
        assert!(matched, "reverse endpoint rapidity {x} unmatched");
    }
}

#[test]
fn continuation_trivial_for_vacuum() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(
        &dir,
        "m.json",
        r#"{"model":"dicke","levels":[2,3],"coupling":-0.1,"eps0":1.0,"N":0}"#,
    );
    let out = run(bin()
        .arg("continuation")
        .arg("--model")
        .arg(&model)
        .arg("--seed-partition")
        .arg(""));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3, "header plus two trivial rows");
}

#[test]
fn norm_and_overlap_commands() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(
        &dir,
        "m.json",
        r#"{"model":"dicke","levels":[2],"coupling":1.0,"eps0":0.0,"N":1}"#,
    );
    let out = run(bin().arg("norm").arg("--model").arg(&model));
    assert!(out.status.success());
    let parsed: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let norms: Vec<f64> = parsed
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["norm"].as_f64().unwrap())
        .collect();
    // closed forms: 4 ± 2√2
    let expect = 4.0 + 2.0 * 2f64.sqrt();
    assert!(norms.iter().any(|n| (n - expect).abs() < 1e-10));

    let out = run(bin()
        .arg("overlap")
        .arg("--model")
        .arg(&model)
        .arg("--state")
        .arg("0"));
    assert!(out.status.success());
    let parsed: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(
        parsed.as_array().unwrap().len(),
        2,
        "two basis states in the m=1 N=1 sector"
    );
}

#[test]
fn formfactor_command() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(&dir, "m.json", PIP_M4);
    let out = run(bin()
        .arg("formfactor")
        .arg("--model")
        .arg(&model)
        .arg("--op")
        .arg("raise")
        .arg("--k")
        .arg("2")
        .arg("--bra")
        .arg("0")
        .arg("--ket")
        .arg("0"));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let parsed: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert!(parsed["value"].as_f64().unwrap().is_finite());

    let out = run(bin()
        .arg("formfactor")
        .arg("--model")
        .arg(&model)
        .arg("--op")
        .arg("number")
        .arg("--bra")
        .arg("1")
        .arg("--ket")
        .arg("1"));
    assert!(out.status.success());
    let parsed: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let spin_z: Vec<f64> = parsed["spin_z"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let total = spin_z.iter().sum::<f64>() + parsed["boson"].as_f64().unwrap();
    assert!(
        (total - (2.0 - 2.0)).abs() < 1e-8,
        "sum rule N - sum(s_i) = 0"
    );

    let out = run(bin()
        .arg("formfactor")
        .arg("--model")
        .arg(&model)
        .arg("--op")
        .arg("sideways")
        .arg("--bra")
        .arg("0")
        .arg("--ket")
        .arg("0"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn validate_passes_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(&dir, "m.json", PIP_M4);
    let states_path = dir.path().join("states.json");
    let out = run(bin()
        .arg("enumerate")
        .arg("--model")
        .arg(&model)
        .arg("--out")
        .arg(&states_path));
    assert!(out.status.success());

    let out = run(bin()
        .arg("validate")
        .arg("--model")
        .arg(&model)
        .arg("--states")
        .arg(&states_path));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));

    // corrupt one lambda and expect the spectrum check to fail with exit 2
    let text = std::fs::read_to_string(&states_path).unwrap();
    let mut parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    parsed[0]["lambdas"][0] = serde_json::json!(3.333);
    // strip charges so they get recomputed from the corrupted lambdas
    for rec in parsed.as_array_mut().unwrap() {
        rec.as_object_mut().unwrap().remove("charges");
    }
    let corrupted = dir.path().join("corrupted.json");
    std::fs::write(&corrupted, serde_json::to_string(&parsed).unwrap()).unwrap();
    let out = run(bin()
        .arg("validate")
        .arg("--model")
        .arg(&model)
        .arg("--states")
        .arg(&corrupted));
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(false));
}

#[test]
fn validate_dicke_closed_form_instance() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(
        &dir,
        "m.json",
        r#"{"model":"dicke","levels":[2],"coupling":1.0,"eps0":0.0,"N":1}"#,
    );
    let out = run(bin().arg("validate").arg("--model").arg(&model));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn bench_emits_timing_table() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(&dir, "m.json", PIP_M4);
    let out = run(bin()
        .arg("bench")
        .arg("--model")
        .arg(&model)
        .arg("--m-list")
        .arg("4,6")
        .env("RGBETHE_THREADS", "1"));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "m,dim,det_route_us,ed_route_us");
    assert_eq!(text.lines().count(), 3);
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 4);
        cols[2].parse::<u64>().unwrap();
    }
}

#[test]
fn incomplete_enumeration_reports_diagnostics() {
    // a pip instance with nearly coincident levels defeats the quadratic
    // ramp; the CLI must exit 2 with per-seed diagnostics rather than panic
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(
        &dir,
        "m.json",
        r#"{"model":"pip","levels":[1.0,1.0000001,3.0],"eta0_sq":2.5,"kappa":1.0,"N":2}"#,
    );
    let out = run(bin().arg("enumerate").arg("--model").arg(&model));
    // either the instance solves (levels are still distinct) or it reports
    // a structured failure; both are acceptable, a panic is not
    if !out.status.success() {
        assert_eq!(out.status.code(), Some(2));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(
            text.contains("\"failures\""),
            "diagnostics expected, got {text}"
        );
    }
}
