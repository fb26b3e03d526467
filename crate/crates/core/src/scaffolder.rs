//! Seeding a new experiment tree and checking an existing one.
//!
//! A seeded tree looks like:
//!
//! ```text
//! <root>/
//!   .gitignore  Jobfile  environment.sh  NOTEBOOK.md
//!   software/<name>/       Jobfile  setup<name>.sh
//!   simulation/<name>/     Jobfile  setup<name>.sh  submit<name>.sh  jobnode.archive/
//!   tests/                 Jobfile  runTests.sh  Tests.suite
//! ```
//!
//! Every stub script is an executable no-op, so a fresh tree can run each
//! task end to end before any real commands are filled in.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::archiver::{is_reserved_name, ARCHIVE_DIR};
use crate::error::{Error, ErrorClass, IoContext, Result};
use crate::jobfile::{render_entry, validate_spec, SpecFinding, JOBFILE_NAME};
use crate::paths::relative;
use crate::tree::decode_jobfile;

/// Headings of `NOTEBOOK.md`, one per lab-notebook checklist item.
pub const NOTEBOOK_HEADINGS: [&str; 10] = [
    "Title and Purpose",
    "Code Repository Links",
    "Software and Hardware",
    "Modifications",
    "Experiment Design",
    "Data Sources",
    "Data Storage",
    "Experimental Runs",
    "Results and Analysis",
    "References",
];

const GITIGNORE: &str = "\
# Raw run outputs and generated files stay out of version control.
jobnode.archive/
jobnode.capsule.tar
job.setup
job.submit
job.*.tmp
job.*.out
job.*.err
.job.lock
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateEntry {
    Dir {
        rel: String,
    },
    File {
        rel: String,
        contents: String,
        executable: bool,
    },
}

impl TemplateEntry {
    pub fn rel(&self) -> &str {
        match self {
            TemplateEntry::Dir { rel } | TemplateEntry::File { rel, .. } => rel,
        }
    }
}

/// The layout `init` creates, validated up front.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTemplate {
    pub name: String,
    pub software: Vec<String>,
    pub simulation: Vec<String>,
}

impl TreeTemplate {
    pub fn new(name: impl Into<String>, software: Vec<String>, simulation: Vec<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() || name.chars().any(char::is_control) {
            return Err(Error::InvalidName {
                name,
                reason: "experiment name must be non-empty and free of control characters".into(),
            });
        }
        for list in [&software, &simulation] {
            for (i, n) in list.iter().enumerate() {
                check_node_name(n)?;
                if list[..i].contains(n) {
                    return Err(Error::InvalidName {
                        name: n.clone(),
                        reason: "listed twice".into(),
                    });
                }
            }
        }
        Ok(TreeTemplate {
            name,
            software,
            simulation,
        })
    }

    /// Directories before their contents, in creation order.
    pub fn entries(&self) -> Vec<TemplateEntry> {
        let mut out = vec![
            file(".gitignore", GITIGNORE, false),
            file(
                JOBFILE_NAME,
                &jobfile(
                    &format!("Location: {}\n# Scripts listed here run first for every node of the experiment.", self.name),
                    &[("setup", "environment.sh"), ("submit", "environment.sh")],
                    false,
                ),
                false,
            ),
            file(
                "environment.sh",
                &stub(&[
                    "Shared environment for every task in this experiment.",
                    "Load modules and export compilers, paths and library locations here.",
                ]),
                true,
            ),
            file("NOTEBOOK.md", &notebook(&self.name), false),
        ];

        if !self.software.is_empty() {
            out.push(dir("software"));
        }
        for name in &self.software {
            let node = format!("software/{name}");
            let setup = format!("setup{name}.sh");
            out.push(dir(&node));
            out.push(file(
                &format!("{node}/{JOBFILE_NAME}"),
                &jobfile(&format!("Location: {node}"), &[("setup", &setup)], false),
                false,
            ));
            out.push(file(
                &format!("{node}/{setup}"),
                &stub(&[
                    &format!("Build recipe for {name}."),
                    "Fetch a pinned version, configure and compile it here.",
                ]),
                true,
            ));
        }

        if !self.simulation.is_empty() {
            out.push(dir("simulation"));
        }
        for name in &self.simulation {
            let node = format!("simulation/{name}");
            let setup = format!("setup{name}.sh");
            let submit = format!("submit{name}.sh");
            out.push(dir(&node));
            out.push(file(
                &format!("{node}/{JOBFILE_NAME}"),
                &jobfile(
                    &format!("Location: {node}"),
                    &[("setup", &setup), ("submit", &submit)],
                    true,
                ),
                false,
            ));
            out.push(file(
                &format!("{node}/{setup}"),
                &stub(&[
                    &format!("Prepares the {name} run directory."),
                    "Copy or generate inputs and link the executable here.",
                ]),
                true,
            ));
            out.push(file(
                &format!("{node}/{submit}"),
                &stub(&[
                    &format!("Launches the {name} run."),
                    "Scheduler directives such as #SBATCH lines go at the top of this file.",
                ]),
                true,
            ));
            out.push(dir(&format!("{node}/{ARCHIVE_DIR}")));
        }

        out.push(dir("tests"));
        out.push(file(
            &format!("tests/{JOBFILE_NAME}"),
            &jobfile("Location: tests", &[("submit", "runTests.sh")], false),
            false,
        ));
        out.push(file(
            "tests/runTests.sh",
            &stub(&["Runs the test suite described in Tests.suite."]),
            true,
        ));
        out.push(file(
            "tests/Tests.suite",
            "# Test suite definition. jobrunner does not interpret this file.\n",
            false,
        ));
        out
    }
}

fn check_node_name(name: &str) -> Result<()> {
    let reason = if name.is_empty() {
        "empty name"
    } else if name == "." || name == ".." {
        "not a directory name"
    } else if name.contains(['/', '\\']) {
        "path separators are not allowed"
    } else if name.chars().any(char::is_control) {
        "control characters are not allowed"
    } else if name.trim() != name {
        "leading or trailing whitespace"
    } else if is_reserved_name(name) {
        "reserved by jobrunner"
    } else {
        return Ok(());
    };
    Err(Error::InvalidName {
        name: name.into(),
        reason: reason.into(),
    })
}

fn dir(rel: &str) -> TemplateEntry {
    TemplateEntry::Dir { rel: rel.into() }
}

fn file(rel: &str, contents: &str, executable: bool) -> TemplateEntry {
    TemplateEntry::File {
        rel: rel.into(),
        contents: contents.into(),
        executable,
    }
}

fn jobfile(comment: &str, entries: &[(&str, &str)], empty_archive: bool) -> String {
    let mut out = format!("# {comment}\njob:\n");
    for (key, entry) in entries {
        out.push_str(&format!("  {key}:\n    - {}\n", render_entry(entry)));
    }
    if empty_archive {
        out.push_str("  # Add glob patterns of outputs to keep, for example \"*hdf5*\" and \"*.log\".\n");
        out.push_str("  archive: []\n");
    }
    out
}

fn stub(comments: &[&str]) -> String {
    let mut out = String::from("#!/bin/sh\n");
    for line in comments {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str(":\n");
    out
}

fn notebook(name: &str) -> String {
    let mut out = format!("# {name}\n");
    for heading in NOTEBOOK_HEADINGS {
        out.push_str(&format!("\n## {heading}\n\n_To be written._\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InitReport {
    pub root: PathBuf,
    /// Root-relative paths in creation order.
    pub created: Vec<String>,
}

/// Creates the template below `root`, which must be absent or empty.
pub fn init(root: &Path, template: &TreeTemplate) -> Result<InitReport> {
    match fs::read_dir(root) {
        Ok(mut entries) => {
            if entries.next().is_some() {
                return Err(Error::NonEmptyRoot { path: root.into() });
            }
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => fs::create_dir_all(root).at(root)?,
        Err(e) if e.kind() == io::ErrorKind::NotADirectory => {
            return Err(Error::NonEmptyRoot { path: root.into() })
        }
        Err(e) => return Err(Error::io(root, e)),
    }

    let mut created = Vec::new();
    for entry in template.entries() {
        let path = root.join(entry.rel());
        match &entry {
            TemplateEntry::Dir { .. } => fs::create_dir(&path).at(&path)?,
            TemplateEntry::File {
                contents,
                executable,
                ..
            } => {
                fs::write(&path, contents).at(&path)?;
                if *executable {
                    use std::os::unix::fs::PermissionsExt;
                    fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).at(&path)?;
                }
            }
        }
        created.push(entry.rel().to_string());
    }
    Ok(InitReport {
        root: root.into(),
        created,
    })
}

/// A conformance problem found by `verify_tree`. Nodes are root-relative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeFinding {
    InvalidJobfile { node: String, line: usize, message: String },
    MissingScript { node: String, script: String },
    DuplicateEntry { node: String, key: String, entry: String },
    InvalidEntry { node: String, key: String, entry: String, reason: String },
    /// A non-empty `jobnode.archive` in a node that inherits no archive patterns.
    OrphanArchive { node: String },
    Unreadable { node: String, reason: String },
}

impl TreeFinding {
    pub fn node(&self) -> &str {
        match self {
            TreeFinding::InvalidJobfile { node, .. }
            | TreeFinding::MissingScript { node, .. }
            | TreeFinding::DuplicateEntry { node, .. }
            | TreeFinding::InvalidEntry { node, .. }
            | TreeFinding::OrphanArchive { node }
            | TreeFinding::Unreadable { node, .. } => node,
        }
    }

    /// The error class an equivalent hard failure would have.
    pub fn class(&self) -> ErrorClass {
        match self {
            TreeFinding::InvalidJobfile { .. } | TreeFinding::DuplicateEntry { .. } | TreeFinding::InvalidEntry { .. } => {
                ErrorClass::Jobfile
            }
            TreeFinding::MissingScript { .. } => ErrorClass::Missing,
            TreeFinding::OrphanArchive { .. } | TreeFinding::Unreadable { .. } => ErrorClass::Io,
        }
    }
}

impl std::fmt::Display for TreeFinding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TreeFinding::InvalidJobfile { node, line, message } => {
                write!(f, "node `{node}`: invalid Jobfile (line {line}): {message}")
            }
            TreeFinding::MissingScript { node, script } => write!(f, "node `{node}`: script `{script}` not found"),
            TreeFinding::DuplicateEntry { node, key, entry } => {
                write!(f, "node `{node}`: `{entry}` listed twice under `{key}`")
            }
            TreeFinding::InvalidEntry {
                node,
                key,
                entry,
                reason,
            } => write!(f, "node `{node}`: invalid `{key}` entry `{entry}`: {reason}"),
            TreeFinding::OrphanArchive { node } => {
                write!(f, "node `{node}`: {ARCHIVE_DIR} has contents but no archive patterns apply")
            }
            TreeFinding::Unreadable { node, reason } => write!(f, "node `{node}`: {reason}"),
        }
    }
}

/// Walks every node below `root` (not descending into `.git` or archive
/// directories) and reports problems in depth-first, name-sorted order.
pub fn verify_tree(root: &Path) -> Vec<TreeFinding> {
    let root = std::path::absolute(root).unwrap_or_else(|_| root.to_path_buf());
    let mut findings = Vec::new();
    visit(&root, &root, Some(false), &mut findings);
    findings
}

/// `inherited` is whether any ancestor declares archive patterns, or `None`
/// when an ancestor Jobfile could not be read.
fn visit(root: &Path, dir: &Path, inherited: Option<bool>, findings: &mut Vec<TreeFinding>) {
    let node = relative(root, dir);
    let unreadable = |e: &dyn std::fmt::Display| TreeFinding::Unreadable {
        node: node.clone(),
        reason: e.to_string(),
    };

    let mut has_patterns = inherited;
    let jobfile = dir.join(JOBFILE_NAME);
    if jobfile.is_file() {
        match fs::read(&jobfile) {
            Err(e) => {
                findings.push(unreadable(&e));
                has_patterns = None;
            }
            Ok(bytes) => match decode_jobfile(&bytes) {
                Err(e) => {
                    findings.push(TreeFinding::InvalidJobfile {
                        node: node.clone(),
                        line: e.line(),
                        message: e.to_string(),
                    });
                    has_patterns = None;
                }
                Ok(spec) => {
                    has_patterns = has_patterns.map(|h| h || !spec.archive_patterns.is_empty());
                    match validate_spec(&spec, dir) {
                        Ok(spec_findings) => findings.extend(spec_findings.into_iter().map(|f| match f {
                            SpecFinding::MissingScript { script } => TreeFinding::MissingScript {
                                node: node.clone(),
                                script,
                            },
                            SpecFinding::DuplicateEntry { key, entry } => TreeFinding::DuplicateEntry {
                                node: node.clone(),
                                key,
                                entry,
                            },
                            SpecFinding::InvalidEntry { key, entry, reason } => TreeFinding::InvalidEntry {
                                node: node.clone(),
                                key,
                                entry,
                                reason,
                            },
                        })),
                        Err(e) => findings.push(unreadable(&e)),
                    }
                }
            },
        }
    }

    let mut children = match fs::read_dir(dir) {
        Ok(entries) => match entries.collect::<io::Result<Vec<_>>>() {
            Ok(children) => children,
            Err(e) => return findings.push(unreadable(&e)),
        },
        Err(e) => return findings.push(unreadable(&e)),
    };
    children.sort_by_key(|e| e.file_name());
    for child in children {
        let Ok(kind) = child.file_type() else { continue };
        if !kind.is_dir() {
            continue;
        }
        let name = child.file_name();
        if name == ".git" {
            continue;
        }
        if name == ARCHIVE_DIR {
            let populated = fs::read_dir(child.path()).map(|mut d| d.next().is_some()).unwrap_or(false);
            if populated && has_patterns == Some(false) {
                findings.push(TreeFinding::OrphanArchive { node: node.clone() });
            }
            continue;
        }
        visit(root, &child.path(), has_patterns, findings);
    }
}
