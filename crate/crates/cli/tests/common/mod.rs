#![allow(dead_code)]

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::process::{Command, Output};

pub fn jobrunner(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jobrunner"))
        .arg("--root")
        .arg(root)
        .args(args)
        .output()
        .expect("spawn jobrunner")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn describe(out: &Output) -> String {
    format!(
        "exit {}; stderr: {}",
        code(out),
        String::from_utf8_lossy(&out.stderr).trim()
    )
}

pub fn write_script(path: &Path, body: &str) {
    fs::write(path, body).unwrap();
    fs::set_permissions(path, fs::Permissions::from_mode(0o755)).unwrap();
}

/// The reference tree: `init` with two packages and one simulation, stubs
/// replaced by scripts that leave marker files, and the simulation archiving
/// `*hdf5*` and `*.log`.
pub fn reference_tree(root: &Path) {
    let out = jobrunner(root, &["init", "--software", "amrex,flashx", "--simulation", "FlowBoiling"]);
    assert_eq!(code(&out), 0, "{}", describe(&out));
    write_script(&root.join("environment.sh"), "#!/bin/sh\nexport LAB_CC=mpicc\n");
    write_script(
        &root.join("software/amrex/setupamrex.sh"),
        "#!/bin/sh\necho \"amrex built with $LAB_CC\" > amrex.marker\n",
    );
    write_script(&root.join("software/flashx/setupflashx.sh"), "#!/bin/sh\ntouch flashx.marker\n");
    let sim = root.join("simulation/FlowBoiling");
    write_script(&sim.join("setupFlowBoiling.sh"), "#!/bin/sh\ntouch setup.marker\n");
    write_script(
        &sim.join("submitFlowBoiling.sh"),
        "#!/bin/sh\n#SBATCH --nodes=1\nprintf 'hdf5 0' > plt_hdf5_0000\nprintf 'hdf5 1' > chk_hdf5_0001\necho 'step 1 done' > flow.log\necho kept > notes.txt\n",
    );
    fs::write(
        sim.join("Jobfile"),
        "# Location: simulation/FlowBoiling\njob:\n  setup:\n    - setupFlowBoiling.sh\n  submit:\n    - submitFlowBoiling.sh\n  archive:\n    - \"*hdf5*\"\n    - \"*.log\"\n",
    )
    .unwrap();
    write_script(&root.join("tests/runTests.sh"), "#!/bin/sh\ntouch tests.marker\n");
}

/// The six commands run against the reference tree, in order.
pub const REFERENCE_COMMANDS: [&[&str]; 6] = [
    &["setup", "software/amrex"],
    &["setup", "software/flashx"],
    &["setup", "simulation/FlowBoiling"],
    &["submit", "simulation/FlowBoiling"],
    &["archive", "simulation/FlowBoiling"],
    &["submit", "tests"],
];

/// A copy of the tree's directories and Jobfiles only, like a fresh clone
/// of a repository that ignores archives.
pub fn structural_clone(src: &Path, dst: &Path) {
    for (rel, is_dir) in files_below(src) {
        if rel.split('/').any(|c| c == "jobnode.archive") {
            continue;
        }
        let target = dst.join(&rel);
        if is_dir {
            fs::create_dir_all(&target).unwrap();
        } else if rel.ends_with("Jobfile") {
            fs::copy(src.join(&rel), &target).unwrap();
        }
    }
}

/// Root-relative paths of every file inside any `jobnode.archive`.
pub fn archived_files(root: &Path) -> Vec<String> {
    files_below(root)
        .into_iter()
        .filter(|(rel, is_dir)| !is_dir && rel.split('/').any(|c| c == "jobnode.archive"))
        .map(|(rel, _)| rel)
        .collect()
}

pub fn sha256_of(path: &Path) -> String {
    jobrunner_core::sha256_file(path).unwrap().0
}

/// Sorted `(relative path, is_dir)` for everything below `root`.
fn files_below(root: &Path) -> Vec<(String, bool)> {
    let mut out = Vec::new();
    let mut stack = vec![String::new()];
    while let Some(rel) = stack.pop() {
        for entry in fs::read_dir(root.join(&rel)).unwrap() {
            let entry = entry.unwrap();
            let name = entry.file_name().into_string().unwrap();
            let child = if rel.is_empty() { name } else { format!("{rel}/{name}") };
            let is_dir = entry.file_type().unwrap().is_dir();
            if is_dir {
                stack.push(child.clone());
            }
            out.push((child, is_dir));
        }
    }
    out.sort();
    out
}
