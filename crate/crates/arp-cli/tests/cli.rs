//! Black-box tests for the `arp` binary: exit codes, output files, and the
//! text the three subcommands print.
//!
//! Each test spawns the compiled binary the way a shell user would, so the
//! assertions cover argument parsing and process plumbing as well as the
//! solver calls behind them.

use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use arp_core::trace::{RunTrace, TerminationReason};
use tempfile::tempdir;

/// Command handle for the compiled binary, with the sweep worker count pinned
/// so test runs do not fan out across every host core.
fn arp() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_arp"));
    cmd.env("ARP_THREADS", "2");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawning the arp binary")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is UTF-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is UTF-8")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

fn read_trace(path: &Path) -> RunTrace {
    let file = std::fs::File::open(path).expect("opening the written trace");
    RunTrace::read_jsonl(BufReader::new(file)).expect("parsing the written trace")
}

#[test]
fn solve_writes_a_replayable_trace_and_reports_convergence() {
    let dir = tempdir().unwrap();
    let out = run(arp()
        .args(["solve", "--problem", "quadratic", "--dim", "6"])
        .arg("--out")
        .arg(dir.path()));

    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("quadratic n=6 p=2 strategy=lazy m=5"));
    assert!(text.contains("termination=converged"));

    let jsonl = dir.path().join("quadratic-n6-p2-lazy-m5-seed0.jsonl");
    let csv = dir.path().join("quadratic-n6-p2-lazy-m5-seed0.csv");
    assert!(text.contains(&jsonl.display().to_string()));
    assert!(csv.is_file(), "solve also writes the CSV summary");

    let trace = read_trace(&jsonl);
    assert_eq!(trace.header.problem, "quadratic");
    assert_eq!(trace.header.dim, 6);
    assert_eq!(trace.final_record.termination, TerminationReason::Converged);
    assert_eq!(trace.final_record.iterations, trace.iters.len());
    assert_eq!(trace.final_record.oracle.value, 0);
}

#[test]
fn reruns_write_byte_identical_traces() {
    let args = [
        "solve",
        "--problem",
        "quartic",
        "--dim",
        "3",
        "--strategy",
        "psb-fd",
    ];
    let first_dir = tempdir().unwrap();
    let second_dir = tempdir().unwrap();
    assert_eq!(
        exit_code(&run(arp().args(args).arg("--out").arg(first_dir.path()))),
        0
    );
    assert_eq!(
        exit_code(&run(arp().args(args).arg("--out").arg(second_dir.path()))),
        0
    );

    let name = "quartic-n3-p2-psb-fd-m5-seed0.jsonl";
    let first = std::fs::read(first_dir.path().join(name)).unwrap();
    let second = std::fs::read(second_dir.path().join(name)).unwrap();
    assert_eq!(first, second);
}

#[test]
fn budget_exhaustion_exits_with_the_budget_code() {
    let out = run(arp().args([
        "solve",
        "--problem",
        "quadratic",
        "--dim",
        "6",
        "--max-iters",
        "5",
    ]));
    assert_eq!(exit_code(&out), 2);
    assert!(stdout_of(&out).contains("termination=max_iters"));
}

#[test]
fn subsolver_failure_exits_with_the_abort_code() {
    // A near-unit certificate slack with a huge initial weight and a one-step
    // inner budget cannot produce a certified step on the first iteration.
    let out = run(arp().args([
        "solve",
        "--problem",
        "rosenbrock",
        "--dim",
        "2",
        "--theta1",
        "1.000000001",
        "--theta2",
        "1.000000001",
        "--sigma0",
        "1e6",
        "--inner-budget",
        "1",
    ]));
    assert_eq!(exit_code(&out), 3);
    let err = stderr_of(&out);
    assert!(err.contains("solver failed"), "stderr: {err}");
    assert!(err.contains("iteration 0"), "stderr: {err}");
}

#[test]
fn usage_errors_exit_with_the_usage_code() {
    let unknown = run(arp().args(["solve", "--problem", "nosuch", "--dim", "3"]));
    assert_eq!(exit_code(&unknown), 1);
    assert!(stderr_of(&unknown).contains("unknown problem 'nosuch'"));

    let missing = run(arp().arg("solve"));
    assert_eq!(exit_code(&missing), 1, "required flags are enforced");

    let bad_p = run(arp().args(["solve", "--problem", "quadratic", "--dim", "3", "--p", "4"]));
    assert_eq!(exit_code(&bad_p), 1, "the model order is capped at 3");
}

#[test]
fn help_and_version_exit_cleanly() {
    let help = run(arp().arg("--help"));
    assert_eq!(exit_code(&help), 0);
    let text = stdout_of(&help);
    assert!(text.contains("solve"));
    assert!(text.contains("sweep"));
    assert!(text.contains("report"));

    let version = run(arp().arg("--version"));
    assert_eq!(exit_code(&version), 0);
}

#[test]
fn report_fits_rates_from_a_stored_trace() {
    // The default quadratic run takes just over the minimum record count the
    // rate fits require, so the round trip exercises a realistic trace.
    let dir = tempdir().unwrap();
    let solve = run(arp()
        .args(["solve", "--problem", "quadratic", "--dim", "6"])
        .arg("--out")
        .arg(dir.path()));
    assert_eq!(exit_code(&solve), 0);

    let trace = dir.path().join("quadratic-n6-p2-lazy-m5-seed0.jsonl");
    let out = run(arp().arg("report").arg("--trace").arg(&trace));
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("running-min gradient"));
    assert!(text.contains("running-min curvature"));
    assert!(text.contains("trend S="));
}

#[test]
fn report_rejects_a_short_trace() {
    let dir = tempdir().unwrap();
    let solve = run(arp()
        .args([
            "solve",
            "--problem",
            "quadratic",
            "--dim",
            "6",
            "--max-iters",
            "5",
        ])
        .arg("--out")
        .arg(dir.path()));
    assert_eq!(
        exit_code(&solve),
        2,
        "the run itself only exhausts the budget"
    );

    let trace = dir.path().join("quadratic-n6-p2-lazy-m5-seed0.jsonl");
    let out = run(arp().arg("report").arg("--trace").arg(&trace));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_of(&out).contains("rate fits need at least"));
}

#[test]
fn sweep_prints_the_table_and_fitted_exponent() {
    let out = run(arp().args([
        "sweep",
        "--problem",
        "quadratic",
        "--dim",
        "4",
        "--eps1-grid",
        "1e-1,1e-2,1e-3,1e-4",
    ]));
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("eps1"));
    assert_eq!(text.matches("converged").count(), 4);
    assert!(text.contains("fitted exponent (iterations vs 1/eps1):"));
}

#[test]
fn sweep_rejects_a_non_decreasing_grid() {
    let out = run(arp().args([
        "sweep",
        "--problem",
        "quadratic",
        "--dim",
        "4",
        "--eps1-grid",
        "1e-4,1e-3,1e-2,1e-1",
    ]));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr_of(&out).contains("strictly decreasing"));
}
