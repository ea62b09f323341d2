use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qlwe::experiment::{read_csv, BoundRow, ExperimentRecord};

fn qlwe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlwe")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn config_errors_exit_two() {
    for args in [
        &["solve", "--q", "100"][..],
        &["solve", "--n", "abc"],
        &["solve", "--set", "nonsense=1"],
        &["sweep", "--q", "101", "--xi", "60"],
        &["sweep", "--q", "101", "--xi", "4", "--n", "8"],
        &["sweep", "--sweep", "gamma"],
        &["bounds", "--q", "101", "--xi-prime", "0"],
        &["qram-cost", "--d", "0"],
    ] {
        let out = qlwe(args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn cli_overrides_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nn = 3\nq = 101\nxi = 1\nseed = 9\n").unwrap();

    let from_file: Vec<ExperimentRecord> = {
        let out = dir.path().join("a.csv");
        assert_eq!(code(&qlwe(&["solve", "--config", path_str(&cfg), "--out", path_str(&out)])), 0);
        read_csv(&out).unwrap()
    };
    assert_eq!((from_file[0].n, from_file[0].q, from_file[0].gamma), (3, 101, 0.125));

    let out = dir.path().join("b.csv");
    let args = ["solve", "--config", path_str(&cfg), "--n", "2", "--set", "gamma=0.1", "--out", path_str(&out)];
    assert_eq!(code(&qlwe(&args)), 0);
    let overridden: Vec<ExperimentRecord> = read_csv(&out).unwrap();
    assert_eq!((overridden[0].n, overridden[0].q, overridden[0].gamma), (2, 101, 0.1));
}

#[test]
fn instance_files_round_trip_through_solve() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.txt");
    let batch = dir.path().join("batch.txt");
    let state = dir.path().join("state.txt");
    let generated = qlwe(&[
        "solve", "--n", "3", "--q", "101", "--xi", "1", "--seed", "5",
        "--write-instance", path_str(&inst),
        "--dump-batch", path_str(&batch),
        "--dump-state", path_str(&state),
    ]);
    assert_eq!(code(&generated), 0);

    let text = fs::read_to_string(&inst).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "3 101 1 uniform 5");
    assert_eq!(lines.count(), 6);
    assert!(lines_have_fields(&text, 4, 1));
    assert_eq!(fs::read_to_string(inst.with_extension("txt.secret")).unwrap().split_whitespace().count(), 3);
    let batch_text = fs::read_to_string(&batch).unwrap();
    assert_eq!(batch_text.lines().count(), 101);
    assert!(lines_have_fields(&batch_text, 4, 0));
    assert!(lines_have_fields(&fs::read_to_string(&state).unwrap(), 5, 0));

    // same seed and the same instance, read back from disk
    let reloaded = qlwe(&["solve", "--instance", path_str(&inst), "--seed", "5"]);
    assert_eq!(code(&reloaded), 0);
    assert_eq!(stdout(&reloaded), stdout(&generated));
}

fn lines_have_fields(text: &str, fields: usize, skip: usize) -> bool {
    text.lines().skip(skip).all(|l| l.split_whitespace().count() == fields)
}

#[test]
fn out_of_bound_instance_is_an_invariant_violation() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.txt");
    assert_eq!(code(&qlwe(&["solve", "--n", "2", "--q", "31", "--xi", "0", "--write-instance", path_str(&inst)])), 0);
    // xi = 0, so bumping b by 5 puts the error out of bounds
    let text = fs::read_to_string(&inst).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<u64> = lines[1].split_whitespace().map(|v| v.parse().unwrap()).collect();
    *fields.last_mut().unwrap() = (fields.last().unwrap() + 5) % 31;
    lines[1] = fields.iter().map(u64::to_string).collect::<Vec<_>>().join(" ");
    fs::write(&inst, lines.join("\n")).unwrap();
    assert_eq!(code(&qlwe(&["solve", "--instance", path_str(&inst)])), 3);
}

#[test]
fn sweep_output_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("w{workers}.csv"));
        let args = [
            "sweep", "--n", "3", "--q", "101", "--xi", "1", "--trials", "6",
            "--sweep", "gamma=0.05,0.1,0.125", "--workers", workers, "--out", path_str(&out),
        ];
        assert_eq!(code(&qlwe(&args)), 0);
        files.push(fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let records: Vec<ExperimentRecord> = read_csv(&dir.path().join("w1.csv")).unwrap();
    assert_eq!(records.len(), 18);
}

#[test]
fn bounds_table_schema() {
    let out = qlwe(&["bounds", "--q", "101", "--xi-prime", "2", "--sweep", "gamma=0.05,0.2", "--shots", "500"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.starts_with("q,xi_prime,gamma,batch_size,exact_p,lower_bound,violated,"));
    let header = text.lines().next().unwrap();
    assert!(header.contains("prob_iii_paper") && header.contains("prob_iii_exact"));
    assert!(header.contains("empirical_lo") && header.contains("empirical_hi"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    fs::write(&path, &text).unwrap();
    let rows: Vec<BoundRow> = read_csv(&path).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| !r.violated));
}

#[test]
fn qram_cost_json_and_selftest() {
    let out = qlwe(&["qram-cost", "--q", "401", "--n", "8", "--d", "1,2,4", "--format", "json"]);
    assert_eq!(code(&out), 0);
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 3);

    let out = qlwe(&["selftest"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().filter(|l| l.starts_with("PASS")).count(), 5);
}
