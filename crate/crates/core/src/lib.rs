//! Core library of `jobrunner`, a manager for lab-notebook experiment trees.
//!
//! A tree is a directory hierarchy whose nodes may carry a `Jobfile`
//! declaring `setup` and `submit` scripts and `archive` patterns. Running a
//! task at a node runs the scripts of every node from the root down to it,
//! stitched into one attributed composite script. Outputs are archived into
//! dated directories with checksummed manifests, the archives of a whole tree
//! can be packed into a verifiable capsule, and every command leaves a
//! provenance record.
//!
//! ```no_run
//! use std::path::Path;
//! use jobrunner_core::{collect_scripts, compose, resolve_chain, Task};
//!
//! let chain = resolve_chain(Path::new("."), Path::new("software/amrex"))?;
//! let scripts = collect_scripts(&chain, Task::Setup)?;
//! let composite = compose(&scripts, Task::Setup, &chain.target().path, &chain.root)?;
//! print!("{}", composite.rendered);
//! # Ok::<(), jobrunner_core::Error>(())
//! ```

pub mod archiver;
pub mod composer;
mod error;
pub mod executor;
mod hash;
pub mod jobfile;
mod lock;
mod paths;
pub mod provenance;
pub mod scaffolder;
pub mod tree;

pub use archiver::{
    archive, export, match_files, plan_archive, restore, ArchiveManifest, ArchiveOutcome, ArchivePlan, CapsuleIndex,
    ExportReport, ManifestEntry, RestoreReport, TransferMode,
};
pub use composer::{compose, render, write_composite, CompositeScript, Section};
pub use error::{Error, ErrorClass, Result};
pub use executor::{execute, ExecOptions, ExecutionResult, RunStatus};
pub use hash::{sha256_file, sha256_hex};
pub use jobfile::{parse_jobfile, validate_spec, JobfileError, JobfileSpec, SpecFinding, Task, JOBFILE_NAME};
pub use lock::LOCK_FILE;
pub use paths::relative;
pub use provenance::{append_log, record, GitProbe, ProvenanceRecord, RecordInput, VcsProbe};
pub use scaffolder::{init, verify_tree, TreeFinding, TreeTemplate};
pub use tree::{collect_patterns, collect_scripts, resolve_chain, ChainNode, DeclaredPattern, NodeChain};
