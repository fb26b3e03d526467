use std::fs::{File, OpenOptions, TryLockError};
use std::path::Path;

use crate::error::{Error, IoContext, Result};

pub const LOCK_FILE: &str = ".job.lock";

/// Exclusive per-node lock on `<node>/.job.lock`, released on drop.
///
/// Execution and archiving of one node are mutually exclusive; different
/// nodes never contend.
#[derive(Debug)]
pub struct NodeLock {
    _file: File,
}

impl NodeLock {
    pub fn acquire(node_dir: &Path, node_rel: &str) -> Result<Self> {
        let path = node_dir.join(LOCK_FILE);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .at(&path)?;
        match file.try_lock() {
            Ok(()) => Ok(NodeLock { _file: file }),
            Err(TryLockError::WouldBlock) => Err(Error::Busy {
                node: node_rel.to_string(),
            }),
            Err(TryLockError::Error(e)) => Err(Error::io(path, e)),
        }
    }
}
