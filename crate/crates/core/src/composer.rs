//! Stitching inherited scripts into one attributed composite per task.
//!
//! Layout of a rendered composite:
//!
//! ```text
//! #!/bin/sh -e
//! # jobrunner composite `job.setup` for node `software/amrex`; regenerated on every run
//! # directives hoisted from simulation/X/submitX.sh     (only when present)
//! #SBATCH --nodes=4
//! set -e
//! # --- source: environment.sh sha:<hex> ---
//! <body of environment.sh>
//! # --- source: software/amrex/setupAMReX.sh sha:<hex> ---
//! <body of setupAMReX.sh>
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, IoContext, Result};
use crate::hash::sha256_hex;
use crate::jobfile::Task;
use crate::paths::relative;

pub const SHEBANG: &str = "#!/bin/sh -e";

/// Line prefixes of batch-scheduler directives that must precede executable lines.
pub const DIRECTIVE_PREFIXES: [&str; 6] = ["#SBATCH", "#PBS", "#BSUB", "#COBALT", "#FLUX:", "#$"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub source: PathBuf,
    /// Root-relative source path, as shown in the banner.
    pub rel: String,
    pub sha256: String,
    /// The script exactly as read.
    pub body: String,
}

impl Section {
    pub fn banner(&self) -> String {
        format!("# --- source: {} sha:{} ---", self.rel, self.sha256)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeScript {
    pub task: Task,
    pub target_node: PathBuf,
    pub target_rel: String,
    pub sections: Vec<Section>,
    pub rendered: String,
}

impl CompositeScript {
    pub fn file_name(&self) -> String {
        composite_file_name(self.task)
    }

    pub fn path(&self) -> PathBuf {
        self.target_node.join(self.file_name())
    }

    pub fn sha256(&self) -> String {
        sha256_hex(self.rendered.as_bytes())
    }
}

pub fn composite_file_name(task: Task) -> String {
    format!("job.{task}")
}

pub fn compose(scripts: &[PathBuf], task: Task, target_node: &Path, root: &Path) -> Result<CompositeScript> {
    let sections = scripts
        .iter()
        .map(|source| {
            let bytes = fs::read(source).at(source)?;
            let sha256 = sha256_hex(&bytes);
            let body = String::from_utf8(bytes).map_err(|_| {
                Error::io(
                    source,
                    io::Error::new(io::ErrorKind::InvalidData, "script is not valid UTF-8"),
                )
            })?;
            Ok(Section {
                source: source.clone(),
                rel: relative(root, source),
                sha256,
                body,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let target_rel = relative(root, target_node);
    let rendered = render(task, &target_rel, &sections);
    Ok(CompositeScript {
        task,
        target_node: target_node.to_path_buf(),
        target_rel,
        sections,
        rendered,
    })
}

/// Pure rendering: depends only on the task, the relative target and the sections.
pub fn render(task: Task, target_rel: &str, sections: &[Section]) -> String {
    let mut out = String::new();
    out.push_str(SHEBANG);
    out.push('\n');
    out.push_str(&format!(
        "# jobrunner composite `{}` for node `{target_rel}`; regenerated on every run\n",
        composite_file_name(task)
    ));

    for section in sections {
        let directives: Vec<&str> = section.body.lines().filter(|l| is_directive(l)).collect();
        if directives.is_empty() {
            continue;
        }
        out.push_str(&format!("# directives hoisted from {}\n", section.rel));
        for line in directives {
            out.push_str(line);
            out.push('\n');
        }
    }
    out.push_str("set -e\n");

    for section in sections {
        out.push_str(&section.banner());
        out.push('\n');
        let mut wrote = false;
        for line in section.body.split_inclusive('\n') {
            if is_directive(line) {
                continue;
            }
            out.push_str(line);
            wrote = true;
        }
        if wrote && !out.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

fn is_directive(line: &str) -> bool {
    DIRECTIVE_PREFIXES.iter().any(|p| line.starts_with(p))
}

/// Writes `<target_node>/job.<task>` with owner-executable permissions.
pub fn write_composite(composite: &CompositeScript) -> Result<PathBuf> {
    let path = composite.path();
    let tmp = composite
        .target_node
        .join(format!("{}.tmp", composite.file_name()));
    {
        let mut file = fs::File::create(&tmp).at(&tmp)?;
        file.write_all(composite.rendered.as_bytes()).at(&tmp)?;
        file.sync_all().at(&tmp)?;
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&tmp, fs::Permissions::from_mode(0o755)).at(&tmp)?;
    }
    fs::rename(&tmp, &path).at(&path)?;
    Ok(path)
}
