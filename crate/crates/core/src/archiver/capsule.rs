//! Capsules: one uncompressed tar holding every `jobnode.archive` subtree of
//! an experiment tree, led by a `capsule.json` index.
//!
//! Entries are path-sorted and carry zeroed ownership and timestamps, so equal
//! trees always pack to equal bytes. The index lists every directory and file
//! with its digest; `capsule_sha256` digests that listing.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::{ArchiveManifest, ARCHIVE_DIR, MANIFEST_NAME};
use crate::error::{Error, IoContext, Result};
use crate::hash::{sha256_file, sha256_hex, sha256_reader};
use crate::paths::relative;

pub const CAPSULE_INDEX: &str = "capsule.json";
pub const CAPSULE_VERSION: u32 = 1;
pub const DEFAULT_CAPSULE_NAME: &str = "jobnode.capsule.tar";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapsuleManifest {
    pub path: String,
    pub node: String,
    pub date_dir: String,
    pub entries: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapsuleFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// A directory entry of the capsule (kept so empty date directories survive).
pub type CapsuleDir = String;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapsuleIndex {
    pub v: u32,
    pub manifests: Vec<CapsuleManifest>,
    pub dirs: Vec<CapsuleDir>,
    pub files: Vec<CapsuleFile>,
    pub capsule_sha256: String,
}

impl CapsuleIndex {
    /// Digest over `d\t<path>\n` for each directory then
    /// `f\t<path>\t<sha256>\t<bytes>\n` for each file, in index order.
    pub fn payload_digest(dirs: &[CapsuleDir], files: &[CapsuleFile]) -> String {
        let mut listing = String::new();
        for d in dirs {
            listing.push_str(&format!("d\t{d}\n"));
        }
        for f in files {
            listing.push_str(&format!("f\t{}\t{}\t{}\n", f.path, f.sha256, f.bytes));
        }
        sha256_hex(listing.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportReport {
    pub path: PathBuf,
    pub index: CapsuleIndex,
    /// Digest of the capsule file itself.
    pub sha256: String,
}

/// Packs every `jobnode.archive` subtree below `root` into `output`.
pub fn export(root: &Path, output: &Path) -> Result<ExportReport> {
    let root = std::path::absolute(root).at(root)?;
    let (dirs, file_paths) = scan_archives(&root)?;

    let mut files = Vec::with_capacity(file_paths.len());
    let mut manifests = Vec::new();
    for (rel, abs) in &file_paths {
        let (sha256, bytes) = sha256_file(abs).at(abs)?;
        if let Some((node, date_dir)) = manifest_location(rel) {
            if let Some(manifest) = fs::read(abs)
                .ok()
                .and_then(|b| serde_json::from_slice::<ArchiveManifest>(&b).ok())
            {
                manifests.push(CapsuleManifest {
                    path: rel.clone(),
                    node,
                    date_dir,
                    entries: manifest.entries.len(),
                    sha256: sha256.clone(),
                });
            }
        }
        files.push(CapsuleFile {
            path: rel.clone(),
            sha256,
            bytes,
        });
    }
    let index = CapsuleIndex {
        v: CAPSULE_VERSION,
        manifests,
        capsule_sha256: CapsuleIndex::payload_digest(&dirs, &files),
        dirs,
        files,
    };
    let mut index_json = serde_json::to_vec_pretty(&index).expect("index serializes");
    index_json.push(b'\n');

    let mut partial = OsString::from(output.as_os_str());
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    write_tar(&partial, &index_json, &index, &file_paths).at(&partial)?;
    fs::rename(&partial, output).at(output)?;
    let (sha256, _) = sha256_file(output).at(output)?;
    Ok(ExportReport {
        path: output.to_path_buf(),
        index,
        sha256,
    })
}

type ScannedFiles = Vec<(String, PathBuf)>;

/// Sorted directories and files lying inside any `jobnode.archive`.
fn scan_archives(root: &Path) -> Result<(Vec<CapsuleDir>, ScannedFiles)> {
    let mut dirs = Vec::new();
    let mut files = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || e.file_name() != ".git");
    for entry in walker {
        let entry = entry.map_err(|e| {
            let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf());
            Error::io(path, io::Error::other(e))
        })?;
        let rel = relative(root, entry.path());
        let mut parts = rel.split('/');
        let inside = parts.any(|c| c == ARCHIVE_DIR);
        let below = inside && parts.next().is_some();
        let kind = entry.file_type();
        if !inside || (!below && !kind.is_dir()) {
            continue;
        }
        if kind.is_dir() {
            dirs.push(rel);
        } else if kind.is_file() {
            files.push((rel, entry.path().to_path_buf()));
        } else {
            return Err(Error::io(
                entry.path(),
                io::Error::new(io::ErrorKind::InvalidInput, "only regular files and directories can be exported"),
            ));
        }
    }
    dirs.sort();
    files.sort();
    Ok((dirs, files))
}

/// `(node, date_dir)` when `rel` names a manifest inside a dated archive directory.
fn manifest_location(rel: &str) -> Option<(String, String)> {
    let parts: Vec<&str> = rel.split('/').collect();
    let [prefix @ .., archive, date, name] = parts.as_slice() else {
        return None;
    };
    let numbered = name
        .strip_prefix("manifest.")
        .and_then(|s| s.strip_suffix(".json"))
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()));
    if *archive != ARCHIVE_DIR || !(*name == MANIFEST_NAME || numbered) {
        return None;
    }
    let node = if prefix.is_empty() { ".".to_string() } else { prefix.join("/") };
    Some((node, date.to_string()))
}

fn write_tar(path: &Path, index_json: &[u8], index: &CapsuleIndex, files: &ScannedFiles) -> io::Result<()> {
    let mut builder = tar::Builder::new(BufWriter::new(File::create(path)?));
    append(&mut builder, CAPSULE_INDEX, tar::EntryType::Regular, 0o644, index_json.len() as u64, index_json)?;

    let sources: BTreeMap<&str, &Path> = files.iter().map(|(r, a)| (r.as_str(), a.as_path())).collect();
    let mut entries: Vec<&str> = index.dirs.iter().map(String::as_str).collect();
    entries.extend(index.files.iter().map(|f| f.path.as_str()));
    entries.sort_unstable();
    for rel in entries {
        match sources.get(rel) {
            Some(abs) => {
                let file = File::open(abs)?;
                let size = file.metadata()?.len();
                append(&mut builder, rel, tar::EntryType::Regular, 0o644, size, file)?;
            }
            None => append(&mut builder, rel, tar::EntryType::Directory, 0o755, 0, io::empty())?,
        }
    }
    let mut writer = builder.into_inner()?;
    writer.flush()?;
    writer.into_inner().map_err(|e| e.into_error())?.sync_all()
}

fn append<W: Write>(
    builder: &mut tar::Builder<W>,
    path: &str,
    kind: tar::EntryType,
    mode: u32,
    size: u64,
    data: impl Read,
) -> io::Result<()> {
    let mut header = tar::Header::new_gnu();
    header.set_entry_type(kind);
    header.set_mode(mode);
    header.set_size(size);
    header.set_mtime(0);
    header.set_uid(0);
    header.set_gid(0);
    builder.append_data(&mut header, path, data)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RestoreFailure {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RestoreReport {
    pub manifests: usize,
    pub restored: Vec<String>,
    /// Files already present with identical content.
    pub already_present: Vec<String>,
    pub failed: Vec<RestoreFailure>,
}

fn corrupt(reason: impl Into<String>) -> Error {
    Error::CorruptCapsule {
        reason: reason.into(),
    }
}

/// Unpacks `capsule` below `root` after verifying every digest and that each
/// recorded node exists. Existing files are left alone when identical and
/// are a collision otherwise.
pub fn restore(capsule: &Path, root: &Path) -> Result<RestoreReport> {
    let root = std::path::absolute(root).at(root)?;
    let verified = verify(capsule, &root)?;

    let mut report = RestoreReport {
        manifests: verified.index.manifests.len(),
        ..Default::default()
    };
    let mut archive = tar::Archive::new(File::open(capsule).at(capsule)?);
    for entry in archive.entries().map_err(|e| corrupt(e.to_string()))?.skip(1) {
        let mut entry = entry.map_err(|e| corrupt(e.to_string()))?;
        let rel = entry_path(&entry)?;
        let dest = root.join(&rel);
        if entry.header().entry_type().is_dir() {
            fs::create_dir_all(&dest).at(&dest)?;
            continue;
        }
        if verified.already_present.contains(&rel) {
            report.already_present.push(rel);
            continue;
        }
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent).at(parent)?;
        }
        let mut out = match OpenOptions::new().write(true).create_new(true).open(&dest) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => return Err(Error::Collision { path: rel }),
            Err(e) => return Err(Error::io(dest, e)),
        };
        io::copy(&mut entry, &mut out).at(&dest)?;
        out.sync_all().at(&dest)?;
        drop(out);

        let expected = &verified.files[&rel];
        let (actual, bytes) = sha256_file(&dest).at(&dest)?;
        if actual == expected.sha256 && bytes == expected.bytes {
            report.restored.push(rel);
        } else {
            let _ = fs::remove_file(&dest);
            report.failed.push(RestoreFailure {
                path: rel,
                reason: format!("written sha256 {actual} differs from recorded {}", expected.sha256),
            });
        }
    }
    Ok(report)
}

struct Verified {
    index: CapsuleIndex,
    files: BTreeMap<String, CapsuleFile>,
    already_present: BTreeSet<String>,
}

/// Read-only pass: index self-consistency, entry digests, manifests, layout and collisions.
fn verify(capsule: &Path, root: &Path) -> Result<Verified> {
    let mut archive = tar::Archive::new(File::open(capsule).at(capsule)?);
    let mut entries = archive.entries().map_err(|e| corrupt(e.to_string()))?;

    let mut first = entries
        .next()
        .ok_or_else(|| corrupt("empty capsule"))?
        .map_err(|e| corrupt(e.to_string()))?;
    if entry_path_raw(&first)? != CAPSULE_INDEX {
        return Err(corrupt(format!("first entry must be {CAPSULE_INDEX}")));
    }
    let mut raw_index = Vec::new();
    first.read_to_end(&mut raw_index).map_err(|e| corrupt(e.to_string()))?;
    let index: CapsuleIndex =
        serde_json::from_slice(&raw_index).map_err(|e| corrupt(format!("{CAPSULE_INDEX}: {e}")))?;
    if index.v != CAPSULE_VERSION {
        return Err(corrupt(format!("unsupported capsule version {}", index.v)));
    }
    let digest = CapsuleIndex::payload_digest(&index.dirs, &index.files);
    if digest != index.capsule_sha256 {
        return Err(Error::HashMismatch {
            entry: CAPSULE_INDEX.into(),
            expected: index.capsule_sha256.clone(),
            actual: digest,
        });
    }

    let mut nodes = BTreeSet::new();
    let mut dirs = BTreeSet::new();
    for d in &index.dirs {
        nodes.insert(node_of(d)?);
        if !dirs.insert(d.clone()) {
            return Err(corrupt(format!("duplicate entry {d}")));
        }
    }
    let mut files = BTreeMap::new();
    for f in &index.files {
        nodes.insert(node_of(&f.path)?);
        if dirs.contains(&f.path) || files.insert(f.path.clone(), f.clone()).is_some() {
            return Err(corrupt(format!("duplicate entry {}", f.path)));
        }
    }
    for node in &nodes {
        if !root.join(node).is_dir() {
            return Err(Error::LayoutMismatch { node: node.clone() });
        }
    }

    let manifest_paths: BTreeSet<&str> = index.manifests.iter().map(|m| m.path.as_str()).collect();
    let mut manifest_bodies = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for entry in entries {
        let mut entry = entry.map_err(|e| corrupt(e.to_string()))?;
        let rel = entry_path(&entry)?;
        if !seen.insert(rel.clone()) {
            return Err(corrupt(format!("duplicate entry {rel}")));
        }
        let kind = entry.header().entry_type();
        if kind.is_dir() {
            if !dirs.contains(&rel) {
                return Err(corrupt(format!("unlisted directory {rel}")));
            }
            continue;
        }
        if !kind.is_file() {
            return Err(corrupt(format!("unsupported entry type for {rel}")));
        }
        let expected = files
            .get(&rel)
            .ok_or_else(|| corrupt(format!("unlisted file {rel}")))?;
        let (actual, bytes) = if manifest_paths.contains(rel.as_str()) {
            let mut body = Vec::new();
            entry.read_to_end(&mut body).map_err(|e| corrupt(e.to_string()))?;
            let digest = (sha256_hex(&body), body.len() as u64);
            manifest_bodies.insert(rel.clone(), body);
            digest
        } else {
            sha256_reader(&mut entry).map_err(|e| corrupt(e.to_string()))?
        };
        if actual != expected.sha256 || bytes != expected.bytes {
            return Err(Error::HashMismatch {
                entry: rel,
                expected: expected.sha256.clone(),
                actual,
            });
        }
    }
    for path in dirs.iter().chain(files.keys()) {
        if !seen.contains(path) {
            return Err(corrupt(format!("missing entry {path}")));
        }
    }

    for m in &index.manifests {
        let listed = files
            .get(&m.path)
            .ok_or_else(|| corrupt(format!("manifest {} is not in the capsule", m.path)))?;
        if listed.sha256 != m.sha256 {
            return Err(Error::HashMismatch {
                entry: m.path.clone(),
                expected: m.sha256.clone(),
                actual: listed.sha256.clone(),
            });
        }
        let manifest: ArchiveManifest = serde_json::from_slice(&manifest_bodies[&m.path])
            .map_err(|e| corrupt(format!("{}: {e}", m.path)))?;
        let dated = m.path.rsplit_once('/').map(|(d, _)| d).unwrap_or("");
        for e in &manifest.entries {
            let path = format!("{dated}/{}", e.name);
            match files.get(&path) {
                Some(f) if f.sha256 == e.sha256 && f.bytes == e.bytes => {}
                Some(f) => {
                    return Err(Error::HashMismatch {
                        entry: path,
                        expected: e.sha256.clone(),
                        actual: f.sha256.clone(),
                    })
                }
                None => return Err(corrupt(format!("{path} listed in {} is missing", m.path))),
            }
        }
    }

    let mut already_present = BTreeSet::new();
    for d in &dirs {
        let dest = root.join(d);
        if dest.exists() && !dest.is_dir() {
            return Err(Error::Collision { path: d.clone() });
        }
    }
    for (rel, f) in &files {
        let dest = root.join(rel);
        match fs::symlink_metadata(&dest) {
            Ok(meta) if meta.is_file() => {
                let (sha, bytes) = sha256_file(&dest).at(&dest)?;
                if sha == f.sha256 && bytes == f.bytes {
                    already_present.insert(rel.clone());
                } else {
                    return Err(Error::Collision { path: rel.clone() });
                }
            }
            Ok(_) => return Err(Error::Collision { path: rel.clone() }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(dest, e)),
        }
    }

    Ok(Verified {
        index,
        files,
        already_present,
    })
}

fn entry_path_raw<R: Read>(entry: &tar::Entry<'_, R>) -> Result<String> {
    let path = entry.path().map_err(|e| corrupt(e.to_string()))?;
    path.to_str()
        .map(|s| s.trim_end_matches('/').to_string())
        .ok_or_else(|| corrupt("entry path is not UTF-8"))
}

/// Entry path, validated to be a plain relative path inside an archive directory.
fn entry_path<R: Read>(entry: &tar::Entry<'_, R>) -> Result<String> {
    let rel = entry_path_raw(entry)?;
    node_of(&rel)?;
    Ok(rel)
}

/// The node owning `rel`: everything before its first `jobnode.archive` component.
fn node_of(rel: &str) -> Result<String> {
    let plain = Path::new(rel)
        .components()
        .all(|c| matches!(c, Component::Normal(_)))
        && !rel.is_empty()
        && rel.split('/').all(|c| !c.is_empty() && c != "." && c != "..");
    if !plain {
        return Err(corrupt(format!("entry path `{rel}` is not a plain relative path")));
    }
    let parts: Vec<&str> = rel.split('/').collect();
    let at = parts
        .iter()
        .position(|&c| c == ARCHIVE_DIR)
        .ok_or_else(|| corrupt(format!("entry `{rel}` lies outside any {ARCHIVE_DIR}")))?;
    Ok(if at == 0 { ".".into() } else { parts[..at].join("/") })
}
