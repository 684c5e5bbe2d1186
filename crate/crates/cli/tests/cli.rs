use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn elastic(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elastic"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../dsl/corpus").join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const MDTB_A: &str = "seed = 1
out = out
[workload]
mdtb = A
duration = 0.5
[policies]
list = sequential, miriam
";

#[test]
fn run_writes_one_metrics_file_per_policy_and_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "a.conf", MDTB_A);
    let o = elastic(&["run", "a.conf"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("out/MDTB-A");
    let metrics: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".metrics"))
        .collect();
    assert_eq!(metrics.len(), 2, "{metrics:?}");
    assert!(dir.join("sequential.metrics").exists());
    assert!(dir.join("miriam.cdf").exists());
    assert!(!dir.join("miriam.trace").exists(), "traces are opt-in");
    let summary = fs::read_to_string(tmp.path().join("out/summary.txt")).unwrap();
    assert_eq!(summary, stdout(&o));
    assert!(summary.contains("occupancy"));
    assert!(summary.lines().any(|l| l.starts_with("miriam")));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = "seed = 4
[workload]
mdtb = C
duration = 0.3
[policies]
list = multistream, ib, miriam
[output]
trace = true
decisions = true
";
    write(tmp.path(), "c.conf", conf);
    let a = elastic(&["run", "c.conf", "--out", "one"], tmp.path());
    let b = elastic(&["run", "c.conf", "--out", "two", "--parallel", "3"], tmp.path());
    assert!(a.status.success() && b.status.success(), "{}{}", stderr(&a), stderr(&b));
    let mut names: Vec<_> = fs::read_dir(tmp.path().join("one/MDTB-C"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(
        names.len(),
        4 * 4,
        "sequential baseline plus three policies, four files each"
    );
    for n in names {
        let x = fs::read(tmp.path().join("one/MDTB-C").join(&n)).unwrap();
        let y = fs::read(tmp.path().join("two/MDTB-C").join(&n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn missing_trace_file_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "t.conf",
        "seed = 1\n[workload]\ntrace = traces/missing.txt\n[policies]\nlist = sequential\n",
    );
    let o = elastic(&["run", "t.conf", "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("traces/missing.txt"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "noseed.conf",
        "[workload]\nmdtb = A\n[policies]\nlist = miriam\n",
    );
    let o = elastic(&["run", "noseed.conf", "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"));
    let o = elastic(&["frobnicate"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn transform_verifies_vector_add() {
    let tmp = tempfile::tempdir().unwrap();
    let o = elastic(
        &["transform", corpus("vector_add.kern").to_str().unwrap(), "--verify"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("elastic(computation) kernel vector_add"), "{out}");
    assert_eq!(out.lines().last(), Some("PASS"));
}

#[test]
fn transform_reports_positioned_errors() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "bad.kern", "kernel k(out y[4]) {\n    y[0] = 1 +;\n}\n");
    let o = elastic(&["transform", "bad.kern"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.kern:2:"), "{}", stderr(&o));
}

#[test]
fn index_modes_differ_in_source_and_both_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let file = corpus("block_reduce.kern");
    let run = |mode: &str| {
        let o = elastic(
            &[
                "transform",
                file.to_str().unwrap(),
                "--mode",
                mode,
                "--verify",
                "--seed",
                "5",
            ],
            tmp.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let (c, m) = (run("computation"), run("memory"));
    assert_ne!(c, m);
    assert!(m.contains("indexTable"));
    assert!(!c.contains("indexTable"));
    assert_eq!(c.lines().last(), Some("PASS"));
    assert_eq!(m.lines().last(), Some("PASS"));
}

#[test]
fn single_trial_selection() {
    let tmp = tempfile::tempdir().unwrap();
    let file = corpus("stencil.kern");
    let o = elastic(
        &[
            "transform",
            file.to_str().unwrap(),
            "--verify",
            "--shard",
            "3",
            "--elastic-block",
            "5",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("trials=1"));
}

#[test]
fn sequential_against_itself_gives_unit_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "s.conf",
        "seed = 2\nout = cmp\n[workload]\nmdtb = D\nduration = 0.3\n[policies]\nlist = sequential, sequential\n",
    );
    let o = elastic(&["compare", "s.conf"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    let header: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    assert!(header.contains(&"occupancy"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        for col in ["latency_ratio", "p99_ratio", "throughput_ratio", "score"] {
            let i = header.iter().position(|h| *h == col).unwrap();
            assert_eq!(row[i], "1.000000", "{col} in {row:?}");
        }
    }
    assert_eq!(fs::read_to_string(tmp.path().join("cmp/compare.txt")).unwrap(), out);
    assert!(tmp.path().join("cmp/compare.dat").exists());
}

#[test]
fn compare_needs_two_policies() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "one.conf",
        "seed = 2\n[workload]\nmdtb = D\n[policies]\nlist = miriam\n",
    );
    assert_eq!(elastic(&["compare", "one.conf"], tmp.path()).status.code(), Some(1));
}

#[test]
fn miriam_scores_above_multistream_on_mdtb_b() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "b.conf",
        "seed = 1\n[workload]\nmdtb = B\nduration = 1\n[policies]\nlist = multistream, miriam\n",
    );
    let o = elastic(&["compare", "b.conf", "--parallel", "3"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let score = |policy: &str| -> f64 {
        let row = out
            .lines()
            .find(|l| l.split_whitespace().nth(1) == Some(policy))
            .unwrap();
        row.split_whitespace().last().unwrap().parse().unwrap()
    };
    let thr = |policy: &str| -> f64 {
        let row = out
            .lines()
            .find(|l| l.split_whitespace().nth(1) == Some(policy))
            .unwrap();
        row.split_whitespace().nth(4).unwrap().parse().unwrap()
    };
    assert!(score("miriam") > score("multistream"), "{out}");
    assert!(thr("miriam") > score("multistream"), "{out}");
}

#[test]
fn plan_marks_the_kept_fifth() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "m16.prof",
        "name = m16\n[kernel]\ngrid = 16\nblock = 256\nwork = 100\n",
    );
    let o = elastic(&["plan", "m16.prof", "--critical", "68x256"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("candidates=40 selected=8 pruned=0.800"), "{out}");
    let rows: Vec<&str> = out
        .lines()
        .filter(|l| l.split_whitespace().next().is_some_and(|w| w.parse::<u32>().is_ok()))
        .collect();
    assert_eq!(rows.len(), 40);
    assert_eq!(rows.iter().filter(|r| r.trim_end().ends_with('*')).count(), 8);
}

#[test]
fn plan_flags_fallback_under_a_saturating_critical_kernel() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "m16.prof",
        "name = m16\n[kernel]\ngrid = 16\nblock = 256\nwork = 100\n",
    );
    let o = elastic(&["plan", "m16.prof", "--critical", "34x1024"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("FALLBACK"));
}

#[test]
fn plan_rejects_bad_profiles() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "bad.prof",
        "name = x\n[kernel]\ngrid = sixteen\nblock = 256\nwork = 1\n",
    );
    let o = elastic(&["plan", "bad.prof", "--critical", "8x256"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}
