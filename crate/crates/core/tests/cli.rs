use std::process::Command;

use psarp::driver::{read_trace, Outcome};

fn psarp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_psarp"))
}

#[test]
fn solve_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.jsonl");
    let status = psarp()
        .args(["solve", "--problem", "gen:singular1d", "--eps", "1e-3", "--p", "3", "--h-model", "true"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().all(|l| l.contains("\"schema\":\"psarp-trace/1\"")));
    let trace = read_trace(text.as_bytes()).unwrap();
    assert_eq!(trace.last().unwrap().outcome, Outcome::Terminated);
}

#[test]
fn solve_reads_a_problem_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("toy.json");
    std::fs::write(
        &file,
        r#"{"schema": "psarp-problem/1", "n": 1, "q": 0.5,
            "elements": [{"set": "N", "kind": "quadratic", "U": [[1.0]], "params": {"hessian": [[2.0]]}}],
            "feasible": {"kind": "box", "params": {"lo": -1.0, "hi": 1.0}},
            "x0": [0.8]}"#,
    )
    .unwrap();
    let output = psarp()
        .args(["solve", "--problem"])
        .arg(&file)
        .args(["--eps", "1e-6", "--p", "2"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let trace = read_trace(output.stdout.as_slice()).unwrap();
    assert!(trace.last().unwrap().chi <= 1e-6);
}

#[test]
fn sweep_writes_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let output = psarp()
        .args(["sweep", "--problem", "gen:lq-regression n=10 m=15 seed=3", "--eps-list", "1e-1,1e-2"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "eps,succ_iters,total_iters,f_evals,g_evals,d2_evals,d3_evals,final_chi,final_f,status"
    );
    assert_eq!(csv.lines().count(), 3);
    assert!(String::from_utf8_lossy(&output.stderr).contains("slope"));
}

#[test]
fn check_suites_pass() {
    for suite in ["overestimate", "gradients", "chi-oracle"] {
        let status = psarp()
            .args(["check", "--suite", suite, "--samples", "100"])
            .status()
            .unwrap();
        assert!(status.success(), "{suite}");
    }
}

#[test]
fn gating_errors_exit_nonzero() {
    let output = psarp()
        .args(["solve", "--problem", "gen:singular1d", "--p", "2", "--out", "/dev/null"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("odd p"));
}

#[test]
fn seed_variable_changes_the_instance() {
    let digest = |seed: &str| {
        let output = psarp()
            .env("PSARP_SEED", seed)
            .env("RUST_LOG", "info")
            .args(["solve", "--problem", "gen:lq-regression n=5 m=8", "--eps", "1e-1", "--out", "/dev/null"])
            .output()
            .unwrap();
        let log = String::from_utf8_lossy(&output.stderr).to_string();
        log.split("sha256 ").nth(1).unwrap().split(')').next().unwrap().to_string()
    };
    assert_eq!(digest("1"), digest("1"));
    assert_ne!(digest("1"), digest("2"));
}
