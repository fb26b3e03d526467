use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::thread;

use jobrunner_core::provenance::{
    append_log, read_log, record, Command, RecordInput, VcsProbe, VcsState, PROVENANCE_LOG,
};

struct NoVcs;

impl VcsProbe for NoVcs {
    fn probe(&self, _: &Path) -> VcsState {
        VcsState::unavailable("not a repository")
    }
}

#[test]
fn concurrent_appends_stay_whole_lines() {
    let dir = tempfile::tempdir().unwrap();
    let root: Arc<Path> = dir.path().into();
    let threads: Vec<_> = (0..8)
        .map(|t| {
            let root = Arc::clone(&root);
            thread::spawn(move || {
                for i in 0..125 {
                    let mut input = RecordInput::new(format!("{t}-{i}"), Command::Archive, &root, "node ü/🚀");
                    input.error = Some("x".repeat(i * 37));
                    append_log(&record(input, &NoVcs), &root).unwrap();
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }

    let text = fs::read_to_string(root.join(PROVENANCE_LOG)).unwrap();
    assert!(text.ends_with('\n'));
    let mut seen = Vec::new();
    for line in text.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(value["v"], 1);
        assert_eq!(value["target_node"], "node ü/🚀");
        seen.push(value["run_id"].as_str().unwrap().to_string());
    }
    assert_eq!(seen.len(), 1000);
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 1000);

    // Each writer's records appear in its own order.
    let records = read_log(&root).unwrap();
    for t in 0..8 {
        let order: Vec<usize> = records
            .iter()
            .filter_map(|r| r.run_id.strip_prefix(&format!("{t}-")))
            .map(|i| i.parse().unwrap())
            .collect();
        assert_eq!(order, (0..125).collect::<Vec<_>>());
    }
}

#[test]
fn appending_never_rewrites_existing_lines() {
    let dir = tempfile::tempdir().unwrap();
    let first = record(RecordInput::new("a", Command::Export, dir.path(), "."), &NoVcs);
    append_log(&first, dir.path()).unwrap();
    let before = fs::read(dir.path().join(PROVENANCE_LOG)).unwrap();
    let second = record(RecordInput::new("b", Command::Restore, dir.path(), "."), &NoVcs);
    append_log(&second, dir.path()).unwrap();
    let after = fs::read(dir.path().join(PROVENANCE_LOG)).unwrap();
    assert!(after.starts_with(&before));
    let records = read_log(dir.path()).unwrap();
    assert_eq!(records.iter().map(|r| r.run_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    assert!(records[0].recorded_at <= records[1].recorded_at);
}
