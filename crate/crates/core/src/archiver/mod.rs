//! Dated archival of run outputs and portable capsules of all archives.
//!
//! `archive` moves the files of a node that match its inherited patterns into
//! `jobnode.archive/<mm-dd-yyyy>/` and records them in a manifest. `export`
//! packs every `jobnode.archive` subtree of a tree into one capsule, and
//! `restore` unpacks it below a fresh clone of the tree.

mod capsule;
pub mod glob;

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

pub use capsule::{
    export, restore, CapsuleDir, CapsuleFile, CapsuleIndex, CapsuleManifest, ExportReport,
    RestoreFailure, RestoreReport, CAPSULE_INDEX, CAPSULE_VERSION, DEFAULT_CAPSULE_NAME,
};
pub use glob::{GlobError, GlobPattern};

use crate::error::{Error, IoContext, Result};
use crate::hash::sha256_file;
use crate::jobfile::JOBFILE_NAME;
use crate::lock::{NodeLock, LOCK_FILE};
use crate::tree::{collect_patterns, DeclaredPattern, NodeChain};

pub const ARCHIVE_DIR: &str = "jobnode.archive";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub node: String,
    pub date_dir: String,
    pub created_at: String,
    pub patterns_used: Vec<DeclaredPattern>,
    /// Sorted by name.
    pub entries: Vec<ManifestEntry>,
}

/// Whether archived files leave the node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransferMode {
    #[default]
    Move,
    Copy,
}

/// `mm-dd-yyyy`, zero padded.
pub fn format_date_dir(date: NaiveDate) -> String {
    date.format("%m-%d-%Y").to_string()
}

/// Strict inverse of [`format_date_dir`].
pub fn parse_date_dir(s: &str) -> Option<NaiveDate> {
    let shape_ok = s.len() == 10
        && s.bytes().enumerate().all(|(i, b)| match i {
            2 | 5 => b == b'-',
            _ => b.is_ascii_digit(),
        });
    if !shape_ok {
        return None;
    }
    NaiveDate::parse_from_str(s, "%m-%d-%Y").ok()
}

/// Names `match_files` never considers: tool-owned files and the archive itself.
pub fn is_reserved_name(name: &str) -> bool {
    name == JOBFILE_NAME || name == LOCK_FILE || name == ARCHIVE_DIR || name.starts_with("job.")
}

/// Regular files directly inside `node` whose name matches any pattern, sorted
/// by name, each listed once.
pub fn match_files(node: &Path, patterns: &[DeclaredPattern]) -> Result<Vec<PathBuf>> {
    let compiled = patterns
        .iter()
        .map(|(pattern, origin)| {
            GlobPattern::new(pattern).map_err(|e| Error::BadPattern {
                pattern: pattern.clone(),
                origin: origin.clone(),
                reason: e.reason,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if compiled.is_empty() {
        return Ok(Vec::new());
    }

    let mut names = BTreeSet::new();
    for entry in fs::read_dir(node).at(node)? {
        let entry = entry.at(node)?;
        let Ok(name) = entry.file_name().into_string() else {
            continue;
        };
        if is_reserved_name(&name) || !entry.file_type().at(entry.path())?.is_file() {
            continue;
        }
        if compiled.iter().any(|p| p.matches(&name)) {
            names.insert(name);
        }
    }
    Ok(names.into_iter().map(|n| node.join(n)).collect())
}

/// What `archive` would do, computed without touching the tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArchivePlan {
    pub node: String,
    pub date_dir: String,
    pub patterns: Vec<DeclaredPattern>,
    pub files: Vec<PathBuf>,
    pub destination: PathBuf,
    pub manifest_path: PathBuf,
    /// Matched names already present in the destination.
    pub collisions: Vec<String>,
}

pub fn plan_archive(chain: &NodeChain, today: NaiveDate) -> Result<ArchivePlan> {
    let node = chain.target();
    let patterns = collect_patterns(chain);
    let files = match_files(&node.path, &patterns)?;
    let date_dir = format_date_dir(today);
    let destination = node.path.join(ARCHIVE_DIR).join(&date_dir);
    let manifest_path = next_manifest_path(&destination);
    let manifest_name = manifest_path.file_name().unwrap_or_default();
    let collisions = files
        .iter()
        .filter_map(|f| f.file_name())
        .filter(|name| destination.join(name).exists() || *name == manifest_name)
        .map(|name| name.to_string_lossy().into_owned())
        .collect();
    Ok(ArchivePlan {
        node: node.rel.clone(),
        date_dir,
        patterns,
        files,
        destination,
        manifest_path,
        collisions,
    })
}

/// `manifest.json`, or `manifest.<n>.json` for later archives of the same day.
fn next_manifest_path(destination: &Path) -> PathBuf {
    let first = destination.join(MANIFEST_NAME);
    if !first.exists() {
        return first;
    }
    (2u32..)
        .map(|n| destination.join(format!("manifest.{n}.json")))
        .find(|p| !p.exists())
        .expect("unbounded search")
}

/// Result of a successful `archive`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveOutcome {
    pub manifest: ArchiveManifest,
    pub manifest_path: PathBuf,
}

/// Moves (or copies) the chain target's matching outputs into today's archive
/// directory and writes their manifest. Nothing is moved if any name collides.
pub fn archive(chain: &NodeChain, today: NaiveDate, mode: TransferMode) -> Result<ArchiveOutcome> {
    let node = chain.target();
    let _lock = NodeLock::acquire(&node.path, &node.rel)?;
    let plan = plan_archive(chain, today)?;
    if let Some(name) = plan.collisions.first() {
        return Err(Error::Collision {
            path: format!("{}/{ARCHIVE_DIR}/{}/{name}", node.rel, plan.date_dir)
                .trim_start_matches("./")
                .to_string(),
        });
    }
    fs::create_dir_all(&plan.destination).at(&plan.destination)?;

    let mut entries = Vec::with_capacity(plan.files.len());
    for source in &plan.files {
        let name = source
            .file_name()
            .expect("matched files have names")
            .to_string_lossy()
            .into_owned();
        let dest = plan.destination.join(&name);
        transfer(source, &dest, mode)?;
        let (sha256, bytes) = sha256_file(&dest).at(&dest)?;
        entries.push(ManifestEntry { name, sha256, bytes });
    }
    entries.sort_by(|a, b| a.name.cmp(&b.name));

    let manifest = ArchiveManifest {
        node: node.rel.clone(),
        date_dir: plan.date_dir,
        created_at: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        patterns_used: plan.patterns,
        entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&plan.manifest_path, json).at(&plan.manifest_path)?;
    Ok(ArchiveOutcome {
        manifest,
        manifest_path: plan.manifest_path,
    })
}

fn transfer(source: &Path, dest: &Path, mode: TransferMode) -> Result<()> {
    if mode == TransferMode::Move {
        match fs::rename(source, dest) {
            Ok(()) => return Ok(()),
            Err(e) if e.raw_os_error() == Some(libc::EXDEV) => {}
            Err(e) => return Err(Error::io(source, e)),
        }
    }
    copy_new(source, dest)?;
    if mode == TransferMode::Move {
        fs::remove_file(source).at(source)?;
    }
    Ok(())
}

fn copy_new(source: &Path, dest: &Path) -> Result<()> {
    let mut from = fs::File::open(source).at(source)?;
    let mut to = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(dest)
        .at(dest)?;
    io::copy(&mut from, &mut to).at(dest)?;
    Ok(())
}
