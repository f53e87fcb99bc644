use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn patchmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchmg")).args(args).output().expect("binary runs")
}

fn golden() -> Value {
    let text = include_str!("golden/schema_v1.json");
    serde_json::from_str(text).unwrap()
}

fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    k.sort();
    k
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve.json");
    let o = patchmg(&["solve", "--dim", "2", "--degree", "3", "--level", "2", "--tol", "1e-12", "--reps", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    let g = golden();
    assert_eq!(keys(&r), strings(&g["solve_keys"]));
    assert_eq!(keys(&r["per_iteration"]), strings(&g["per_iteration_keys"]));
    assert_eq!(keys(&r["breakdown"]), strings(&g["breakdown_keys"]));
    assert_eq!(r["schema_version"], g["schema_version"]);

    assert_eq!(r["tol_input"], "1e-12");
    assert_eq!(r["dofs"], 625);
    assert_eq!(r["converged"], true);
    let samples: Vec<f64> = r["samples"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(samples.len(), 3);
    let mean = samples.iter().sum::<f64>() / 3.0;
    assert!((r["solve_seconds"].as_f64().unwrap() - mean).abs() <= 1e-12 * mean.max(1.0));
}

#[test]
fn solve_is_deterministic_apart_from_timings() {
    let run = || {
        let o = patchmg(&["solve", "--level", "2", "--degree", "2"]);
        assert!(o.status.success());
        let mut v: Value = serde_json::from_slice(&o.stdout).unwrap();
        let m = v.as_object_mut().unwrap();
        for k in ["samples", "solve_seconds", "per_iteration", "breakdown"] {
            m.remove(k);
        }
        v
    };
    assert_eq!(run(), run());
}

#[test]
fn non_convergence_exits_nonzero_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solve.json");
    let o = patchmg(&["solve", "--level", "3", "--max-iter", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let r = read_json(&out);
    assert_eq!(r["converged"], false);
    assert_eq!(r["iterations"], 1);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# desk run\ndim = 2\ndegree = 4\nlevel = 3\ntol = 1e-8\n").unwrap();
    let o = patchmg(&["solve", "--config", cfg.to_str().unwrap(), "--level", "1"]);
    assert!(o.status.success());
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["degree"], 4);
    assert_eq!(r["level"], 1);
    assert_eq!(r["tol_input"], "1e-8");
}

#[test]
fn inconsistent_specs_rejected() {
    for args in [
        &["solve", "--batch-size", "4"][..],
        &["solve", "--variant", "combined", "--threads", "2"],
        &["solve", "--dim", "4"],
        &["traffic", "--cache-lines", "0"],
        &["solve", "--variant", "bogus"],
    ] {
        let o = patchmg(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    assert!(!patchmg(&["solve", "--no-such-flag"]).status.success());
}

#[test]
fn smoother_bench_csv() {
    let o = patchmg(&["smoother-bench", "--degree", "2", "--level", "1,2", "--variant", "batched", "--batch-size", "1,8", "--reps", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), golden()["smoother_bench_header"].as_str().unwrap());
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let level: u32 = r[0].parse().unwrap();
        let patches = (2u64.pow(level + 1) - 1).pow(2);
        assert_eq!(r[8].parse::<u64>().unwrap(), 4 * patches);
        assert_eq!(r[1], "batched");
    }
}

#[test]
fn traffic_csv() {
    let o = patchmg(&[
        "traffic", "--degree", "3", "--level", "3", "--variant", "combined", "--ordering", "z_curve,hierarchical", "--cache-lines", "16,64,256",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), golden()["traffic_header"].as_str().unwrap());
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 6);
    for group in rows.chunks(3) {
        assert!(["z_curve", "hierarchical"].contains(&group[0][1].as_str()));
        let d: Vec<f64> = group.iter().map(|r| r[4].parse().unwrap()).collect();
        assert!(d[0] >= d[1] && d[1] >= d[2], "{d:?}");
    }
}

#[test]
fn traffic_trace_out() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("sweep.trace");
    let o = patchmg(&["traffic", "--degree", "1", "--level", "1", "--variant", "combined", "--trace-out", trace.to_str().unwrap()]);
    assert!(o.status.success());
    let bytes = std::fs::read(&trace).unwrap();
    assert!(!bytes.is_empty());
    let parsed = patchmg::traffic::AccessTrace::read_binary(bytes.as_slice()).unwrap();
    assert!(parsed.len() > 0);
}

#[test]
fn validate_passes_and_catches_sign_flip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("validate.json");
    let o = patchmg(&["validate", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let r = read_json(&out);
    let g = golden();
    assert_eq!(keys(&r), strings(&g["validate_keys"]));
    for s in r["suites"].as_array().unwrap() {
        assert_eq!(keys(s), strings(&g["suite_keys"]));
        assert!(s["passed"].as_u64().unwrap() > 0);
        assert_eq!(s["failed"], 0);
    }
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("validation passed"));

    let o = patchmg(&["validate", "--inject-sign-flip"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stdout).unwrap().contains("validation FAILED"));
}

#[test]
fn golden_schedule() {
    use patchmg::mesh::{MeshHierarchy, PatchOrdering, Schedule};
    let mesh = MeshHierarchy::new(2, 1).unwrap();
    let s = Schedule::new(&mesh, 1, PatchOrdering::ZCurve, 2).unwrap();
    assert_eq!(s.to_diagnostic_text(), include_str!("golden/schedule_d2_l1_nb2_z.txt"));
}
