//! Experiment-tree resolution and directory-based inheritance.
//!
//! A task run at a target node inherits the scripts of every node on the
//! root-to-target path, root first. Directories without a `Jobfile` are
//! transparent links in that chain.

use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};

use crate::error::{Error, IoContext, Result};
use crate::hash::sha256_hex;
use crate::jobfile::{parse_jobfile, JobfileError, JobfileSpec, Task, JOBFILE_NAME};
use crate::paths::relative;

/// An archive pattern paired with the root-relative node that declared it.
pub type DeclaredPattern = (String, String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainNode {
    /// Absolute directory path, symlinks left unresolved.
    pub path: PathBuf,
    /// Root-relative form of `path`.
    pub rel: String,
    pub spec: JobfileSpec,
    /// Digest of the Jobfile bytes, `None` when the node has no Jobfile.
    pub jobfile_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeChain {
    pub root: PathBuf,
    /// Root first, target last. Never empty.
    pub nodes: Vec<ChainNode>,
}

impl NodeChain {
    pub fn target(&self) -> &ChainNode {
        self.nodes.last().expect("chain always holds the root")
    }
}

/// Resolves `target` (relative to `root`) into the chain of nodes leading to it.
pub fn resolve_chain(root: &Path, target: &Path) -> Result<NodeChain> {
    let root = std::path::absolute(root).at(root)?;
    let components = normalize_target(&root, target)?;
    if !root.is_dir() {
        return Err(Error::MissingNode { node: ".".into() });
    }

    let mut nodes = vec![load_node(&root, root.clone())?];
    let mut current = root.clone();
    for component in components {
        current.push(component);
        if !current.is_dir() {
            return Err(Error::MissingNode {
                node: relative(&root, &current),
            });
        }
        nodes.push(load_node(&root, current.clone())?);
    }
    Ok(NodeChain { root, nodes })
}

/// Lexically normalizes `target` into plain components below `root`.
fn normalize_target(root: &Path, target: &Path) -> Result<Vec<std::ffi::OsString>> {
    let escape = || Error::PathEscape {
        target: target.display().to_string(),
    };
    let target = if target.is_absolute() {
        target.strip_prefix(root).map_err(|_| escape())?
    } else {
        target
    };
    let mut parts = Vec::new();
    for component in target.components() {
        match component {
            Component::CurDir => {}
            Component::ParentDir => {
                parts.pop().ok_or_else(escape)?;
            }
            Component::Normal(part) => parts.push(part.to_os_string()),
            Component::RootDir | Component::Prefix(_) => return Err(escape()),
        }
    }
    Ok(parts)
}

fn load_node(root: &Path, path: PathBuf) -> Result<ChainNode> {
    let rel = relative(root, &path);
    let jobfile = path.join(JOBFILE_NAME);
    if !jobfile.is_file() {
        return Ok(ChainNode {
            path,
            rel,
            spec: JobfileSpec::default(),
            jobfile_sha256: None,
        });
    }
    let bytes = fs::read(&jobfile).at(&jobfile)?;
    let spec = decode_jobfile(&bytes).map_err(|source| Error::Jobfile {
        node: rel.clone(),
        source,
    })?;
    Ok(ChainNode {
        path,
        rel,
        spec,
        jobfile_sha256: Some(sha256_hex(&bytes)),
    })
}

pub(crate) fn decode_jobfile(bytes: &[u8]) -> Result<JobfileSpec, JobfileError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        JobfileError::Syntax {
            line,
            message: "Jobfile is not valid UTF-8".into(),
        }
    })?;
    parse_jobfile(text)
}

/// Inherited scripts for `task`, root node first, each resolved in its own node.
pub fn collect_scripts(chain: &NodeChain, task: Task) -> Result<Vec<PathBuf>> {
    let mut scripts = Vec::new();
    for node in &chain.nodes {
        for name in node.spec.scripts(task) {
            let path = node.path.join(name);
            match fs::metadata(&path) {
                Ok(meta) if meta.is_file() => scripts.push(path),
                Ok(_) => return Err(missing_script(node, name)),
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    return Err(missing_script(node, name))
                }
                Err(e) => return Err(Error::io(path, e)),
            }
        }
    }
    Ok(scripts)
}

fn missing_script(node: &ChainNode, name: &str) -> Error {
    Error::MissingScript {
        node: node.rel.clone(),
        script: name.to_string(),
    }
}

/// Inherited archive patterns, root node first, each tagged with its origin.
pub fn collect_patterns(chain: &NodeChain) -> Vec<DeclaredPattern> {
    chain
        .nodes
        .iter()
        .flat_map(|node| {
            node.spec
                .archive_patterns
                .iter()
                .map(|p| (p.clone(), node.rel.clone()))
        })
        .collect()
}
