use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use carbonlace::case::{serialize_case, Partition};
use carbonlace::fixtures;
use carbonlace::nn::NetworkModel;
use carbonlace::training::{evaluate, Dataset};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carbonlace"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("CARBONLACE_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(
        &p,
        format!(
            "case = \"builtin:case30\"\noutput_dir = \"out\"\n\
             [dataset]\nn_samples = 120\nshift_buses = [2, 7, 8, 12, 19, 21]\n\
             [train]\nepochs = 6\nbatch_size = 32\n\
             [sls]\nn_profiles = 4\n{extra}"
        ),
    )
    .unwrap();
    p
}

#[test]
fn validate_accepts_bundled_and_rejects_dangling_line() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("case30.toml");
    std::fs::write(&good, fixtures::CASE30_NATIVE).unwrap();
    let out = ok(&["case", "validate", good.to_str().unwrap()]);
    assert!(out.starts_with("OK"));

    let mut case = fixtures::case30();
    case.lines[3].to_bus = 99;
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, serialize_case(&case)).unwrap();
    let o = run(&["case", "validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("99"), "{err}");
}

#[test]
fn unknown_matpower_section_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("case30.m");
    std::fs::write(&p, format!("{}\nmpc.areas = [\n\t1\t1;\n];\n", fixtures::CASE30_MATPOWER)).unwrap();
    let o = run(&["case", "validate", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mpc.areas"));
}

#[test]
fn datagen_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let c = cfg.to_str().unwrap();
    ok(&["--threads", "1", "datagen", "-c", c]);
    let first = std::fs::read(dir.path().join("out/dataset.csv")).unwrap();
    ok(&["--threads", "3", "datagen", "-c", c]);
    let second = std::fs::read(dir.path().join("out/dataset.csv")).unwrap();
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("# tool=carbonlace"));
    assert!(text.contains("# config_hash=") && text.contains("# case_hash=") && text.contains("# seed="));
}

#[test]
fn eval_matches_library_evaluation_of_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let c = cfg.to_str().unwrap();
    ok(&["datagen", "-c", c]);
    ok(&["train", "-c", c]);
    ok(&["eval", "-c", c]);
    let out = dir.path().join("out");
    let ds = Dataset::from_csv(&std::fs::read_to_string(out.join("dataset.csv")).unwrap()).unwrap();
    let (model, meta) = NetworkModel::from_checkpoint(&std::fs::read_to_string(out.join("lace_s.ckpt")).unwrap()).unwrap();
    let assignment: Vec<usize> = meta
        .iter()
        .find(|(k, _)| k == "partition")
        .unwrap()
        .1
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    let part = Partition::new(assignment.iter().max().unwrap() + 1, assignment).unwrap();
    let expected = evaluate(&model, &ds, &ds.test, &part).unwrap().to_csv();
    let written = std::fs::read_to_string(out.join("eval_lace_s.csv")).unwrap();
    let body: String = written.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    assert_eq!(body, expected);
}

#[test]
fn sls_emits_all_methods_and_report_renders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let c = cfg.to_str().unwrap();
    ok(&["datagen", "-c", c]);
    ok(&["train", "-c", c]);
    ok(&["sls", "-c", c]);
    let text = std::fs::read_to_string(dir.path().join("out/sls.csv")).unwrap();
    let mut methods: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    methods.sort();
    methods.dedup();
    assert_eq!(methods, vec!["CEF", "LACE-R", "LACE-S", "LMCE", "Opt-shift"]);
    ok(&["report", "-c", c]);
    let svg = std::fs::read_to_string(dir.path().join("out/fig_sls.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<g>").count() == 5);
}

#[test]
fn metrics_variants_and_lp_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let c = cfg.to_str().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = ok(&["metrics", "-c", c, "--load-scale", "1.2", "--lp-trace", trace.to_str().unwrap()]);
    assert!(out.contains("E = 148.32"), "{out}");
    let t = std::fs::read_to_string(trace).unwrap();
    assert!(t.contains("phase,iteration,entering,leaving,step,objective"));
    ok(&["metrics", "-c", c, "--what", "jacobian"]);
    let jac = std::fs::read_to_string(dir.path().join("out/jacobian.csv")).unwrap();
    let rows: Vec<&str> = jac.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 1 + fixtures::case30().generators.len());
    assert_eq!(rows[0].split(',').count(), 1 + 20);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let c = cfg.to_str().unwrap();
    // Unknown key.
    assert_eq!(run(&["datagen", "-c", c, "--train.epoch", "3"]).status.code(), Some(1));
    // Dataset missing.
    assert_eq!(run(&["train", "-c", c]).status.code(), Some(4));
    // Load beyond generation capacity.
    assert_eq!(run(&["metrics", "-c", c, "--load-scale", "5"]).status.code(), Some(2));
    ok(&["datagen", "-c", c]);
    let o = run(&["train", "-c", c, "--train.learning_rate", "1e200"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(dir.path().join("out/lace_s.diverged.ckpt").exists());
    let o = bin()
        .args(["metrics", "-c", c])
        .env("CARBONLACE_THREADS", "none")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
