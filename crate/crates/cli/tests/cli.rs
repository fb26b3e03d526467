mod common;

use std::fs;

use common::{code, describe, jobrunner, reference_tree, write_script};
use serde_json::Value;

fn tree() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    reference_tree(dir.path());
    dir
}

fn provenance_lines(root: &std::path::Path) -> Vec<Value> {
    match fs::read_to_string(root.join("jobnode.provenance.jsonl")) {
        Ok(log) => log.lines().map(|l| serde_json::from_str(l).unwrap()).collect(),
        Err(_) => Vec::new(),
    }
}

#[test]
fn show_prints_the_composite_and_touches_nothing() {
    let dir = tree();
    let root = dir.path();
    let shown = jobrunner(root, &["show", "setup", "software/amrex"]);
    assert_eq!(code(&shown), 0, "{}", describe(&shown));
    assert!(!root.join("software/amrex/job.setup").exists());
    assert!(provenance_lines(root).is_empty());

    let text = String::from_utf8(shown.stdout.clone()).unwrap();
    assert!(text.starts_with("#!/bin/sh -e\n"), "{text}");
    let order: Vec<&str> = text.lines().filter(|l| l.starts_with("# --- source: ")).collect();
    assert_eq!(order.len(), 2);
    assert!(order[0].contains("source: environment.sh "));
    assert!(order[1].contains("source: software/amrex/setupamrex.sh "));

    let run = jobrunner(root, &["setup", "software/amrex"]);
    assert_eq!(code(&run), 0, "{}", describe(&run));
    assert_eq!(fs::read(root.join("software/amrex/job.setup")).unwrap(), shown.stdout);
}

#[test]
fn scheduler_directives_are_hoisted() {
    let dir = tree();
    let shown = jobrunner(dir.path(), &["show", "submit", "simulation/FlowBoiling"]);
    let text = String::from_utf8(shown.stdout).unwrap();
    let directive = text.find("#SBATCH --nodes=1").expect("directive kept");
    let set_e = text.find("\nset -e\n").expect("set -e line");
    assert!(directive < set_e, "{text}");
}

#[test]
fn failing_setup_reports_and_records_the_error() {
    let dir = tree();
    let root = dir.path();
    write_script(&root.join("software/flashx/setupflashx.sh"), "#!/bin/sh\necho broken >&2\nexit 9\n");
    let out = jobrunner(root, &["setup", "software/flashx"]);
    assert_eq!(code(&out), 5, "{}", describe(&out));
    let err_log = fs::read_to_string(root.join("software/flashx/job.setup.err")).unwrap();
    assert!(err_log.contains("broken"));
    let records = provenance_lines(root);
    assert_eq!(records.len(), 1);
    assert!(records[0]["error"].is_string(), "{}", records[0]);
    assert_eq!(records[0]["execution"]["exit_code"], 9);
}

#[test]
fn multiple_targets_stop_at_the_first_failure() {
    let dir = tree();
    let root = dir.path();
    write_script(&root.join("software/amrex/setupamrex.sh"), "#!/bin/sh\nexit 1\n");
    let out = jobrunner(root, &["setup", "software/amrex", "software/flashx"]);
    assert_eq!(code(&out), 5, "{}", describe(&out));
    assert!(!root.join("software/flashx/job.setup").exists());
    assert!(!root.join("software/flashx/flashx.marker").exists());
    assert_eq!(provenance_lines(root).len(), 1);
}

#[test]
fn dry_runs_write_nothing() {
    let dir = tree();
    let root = dir.path();
    let out = jobrunner(root, &["setup", "--dry-run", "software/amrex"]);
    assert_eq!(code(&out), 0, "{}", describe(&out));
    let plan = String::from_utf8(out.stdout).unwrap();
    assert!(plan.contains("software/amrex/setupamrex.sh"), "{plan}");
    assert!(!root.join("software/amrex/job.setup").exists());

    jobrunner(root, &["submit", "simulation/FlowBoiling"]);
    let before = provenance_lines(root).len();
    let out = jobrunner(root, &["archive", "--dry-run", "simulation/FlowBoiling"]);
    assert_eq!(code(&out), 0, "{}", describe(&out));
    assert!(String::from_utf8(out.stdout).unwrap().contains("flow.log"));
    assert!(root.join("simulation/FlowBoiling/flow.log").exists());
    assert_eq!(fs::read_dir(root.join("simulation/FlowBoiling/jobnode.archive")).unwrap().count(), 0);
    assert_eq!(provenance_lines(root).len(), before);
}

#[test]
fn json_output_is_one_object_per_target() {
    let dir = tree();
    let root = dir.path();
    let out = jobrunner(root, &["--json", "setup", "software/amrex", "software/flashx"]);
    assert_eq!(code(&out), 0, "{}", describe(&out));
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["target"], "software/amrex");
    assert_eq!(lines[1]["ok"], true);
    let records = provenance_lines(root);
    assert_eq!(records[1]["run_id"], lines[1]["run_id"]);
    assert_eq!(records[1]["composite_hash"], lines[1]["composite_hash"]);
}

#[test]
fn verify_reports_findings_with_their_exit_code() {
    let dir = tree();
    let root = dir.path();
    let out = jobrunner(root, &["verify"]);
    assert_eq!(code(&out), 0, "{}", describe(&out));

    fs::remove_file(root.join("tests/runTests.sh")).unwrap();
    let out = jobrunner(root, &["--json", "verify"]);
    assert_eq!(code(&out), 4, "{}", describe(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["findings"][0]["kind"], "missing_script");

    fs::write(root.join("tests/Jobfile"), "job: [\n").unwrap();
    let out = jobrunner(root, &["verify"]);
    assert_eq!(code(&out), 3, "{}", describe(&out));
    assert!(provenance_lines(root).is_empty());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    for args in [
        &["frobnicate"][..],
        &["setup"],
        &["show", "deploy", "."],
        &["setup", "--timeout", "-1", "."],
        &["archive", "--date", "13-40-2026", "."],
        &["init", "--simulation", "a/b"],
    ] {
        let out = jobrunner(root, args);
        assert_eq!(code(&out), 2, "{args:?}: {}", describe(&out));
    }
}

#[test]
fn init_seeds_a_conformant_tree() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("Boiling");
    let out = jobrunner(&root, &["init", "--software", "amrex", "--simulation", "PoolBoiling"]);
    assert_eq!(code(&out), 0, "{}", describe(&out));
    let jobfile = fs::read_to_string(root.join("Jobfile")).unwrap();
    assert!(jobfile.starts_with("# Location: Boiling"), "{jobfile}");
    assert!(root.join("simulation/PoolBoiling/submitPoolBoiling.sh").is_file());
    assert_eq!(code(&jobrunner(&root, &["verify"])), 0);
    let again = jobrunner(&root, &["init"]);
    assert_eq!(code(&again), 2, "{}", describe(&again));
}
