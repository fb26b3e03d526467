//! Independent oracles and fixture generators shared by the test suites.
//!
//! Nothing here depends on `jobrunner-core`: every expected value is derived
//! from a separate implementation or from the generator's own model.

use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use regex::Regex;

/// Translates a basename glob to an anchored regex. `None` when the pattern
/// is malformed (unterminated class, dangling escape, reversed range).
pub fn glob_regex(pattern: &str) -> Option<Regex> {
    let chars: Vec<char> = pattern.chars().collect();
    let mut re = String::from(r"\A");
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '*' => re.push_str("(?s:.*)"),
            '?' => re.push_str("(?s:.)"),
            '\\' => {
                i += 1;
                re.push_str(&lit(*chars.get(i)?));
            }
            '[' => {
                i += 1;
                let mut class = String::from("[");
                if matches!(chars.get(i), Some('!' | '^')) {
                    class.push('^');
                    i += 1;
                }
                let start = i;
                loop {
                    let mut c = *chars.get(i)?;
                    if c == ']' && i > start {
                        break;
                    }
                    if c == '\\' {
                        i += 1;
                        c = *chars.get(i)?;
                    }
                    class.push_str(&lit(c));
                    // A `-` between two members forms a range; the regex
                    // engine rejects reversed ones for us.
                    if chars.get(i + 1) == Some(&'-') && !matches!(chars.get(i + 2), None | Some(']')) {
                        i += 2;
                        let mut hi = chars[i];
                        if hi == '\\' {
                            i += 1;
                            hi = *chars.get(i)?;
                        }
                        class.push('-');
                        class.push_str(&lit(hi));
                    }
                    i += 1;
                }
                class.push(']');
                re.push_str(&class);
            }
            c => re.push_str(&lit(c)),
        }
        i += 1;
    }
    re.push_str(r"\z");
    Regex::new(&re).ok()
}

fn lit(c: char) -> String {
    format!(r"\x{{{:X}}}", c as u32)
}

/// Names the archiver must never pick up, restated from its contract.
pub fn is_protected(name: &str) -> bool {
    matches!(name, "Jobfile" | ".job.lock" | "jobnode.archive") || name.starts_with("job.")
}

/// Brute-force counterpart of `match_files`: sorted basenames of regular,
/// non-protected, UTF-8-named files in `dir` matching any pattern. `None`
/// when any pattern is malformed.
pub fn oracle_match_files(dir: &Path, patterns: &[String]) -> Option<Vec<String>> {
    let regexes = patterns.iter().map(|p| glob_regex(p)).collect::<Option<Vec<_>>>()?;
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).expect("readable dir") {
        let entry = entry.expect("dir entry");
        let Ok(name) = entry.file_name().into_string() else {
            continue;
        };
        let meta = fs::symlink_metadata(entry.path()).expect("metadata");
        if !meta.file_type().is_file() || is_protected(&name) {
            continue;
        }
        if regexes.iter().any(|r| r.is_match(&name)) {
            out.push(name);
        }
    }
    out.sort();
    Some(out)
}

const NAME_ALPHABET: &[char] = &['a', 'b', 'c', 'A', '.', '_', '-', '1', 'é', '火', ' ', '[', ']', '*'];

/// A short file name over an alphabet rich in glob metacharacters.
pub fn random_file_name<R: Rng>(rng: &mut R) -> String {
    let len = rng.random_range(1..=6);
    let name: String = (0..len).map(|_| *NAME_ALPHABET.choose(rng).unwrap()).collect();
    if name == "." || name == ".." {
        "dot".into()
    } else {
        name
    }
}

/// A glob pattern, occasionally malformed.
pub fn random_pattern<R: Rng>(rng: &mut R) -> String {
    let mut p = String::new();
    for _ in 0..rng.random_range(1..=5) {
        match rng.random_range(0..20) {
            0..=3 => p.push('*'),
            4..=5 => p.push('?'),
            6..=11 => p.push(*NAME_ALPHABET[..10].choose(rng).unwrap()),
            12 => p.push_str(["\\*", "\\[", "\\a", "\\?"].choose(rng).unwrap()),
            13..=17 => p.push_str(
                [
                    "[abc]", "[!a]", "[^.]", "[a-c]", "[A-Za-z]", "[]a]", "[!]]", "[a-]", "[-a]", "[é火]", "[\\]]",
                    "[.-_]", "[!a-c1]",
                ]
                .choose(rng)
                .unwrap(),
            ),
            18 => p.push_str(["[ab", "[", "[!", "[c-a]", "[z-a]"].choose(rng).unwrap()),
            _ => p.push('\\'),
        }
    }
    p
}

/// One node of a generated experiment tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelNode {
    /// Root-relative path; `.` for the root.
    pub rel: String,
    pub parent: Option<usize>,
    pub jobfile: Option<ModelJobfile>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelJobfile {
    pub setup: Vec<String>,
    pub submit: Vec<String>,
    pub flow: bool,
}

impl ModelJobfile {
    fn list(&self, task: &str) -> &[String] {
        match task {
            "setup" => &self.setup,
            "submit" => &self.submit,
            other => panic!("unknown task {other}"),
        }
    }

    fn render(&self) -> String {
        let lists = [("setup", &self.setup), ("submit", &self.submit)];
        if self.flow {
            let parts: Vec<String> = lists
                .iter()
                .filter(|(_, l)| !l.is_empty())
                .map(|(k, l)| format!("{k}: [{}]", l.join(", ")))
                .collect();
            return format!("job: {{{}}}\n", parts.join(", "));
        }
        let mut out = String::from("# generated\njob:\n");
        for (key, list) in lists {
            if list.is_empty() {
                continue;
            }
            out.push_str(&format!("  {key}:\n"));
            for s in list {
                out.push_str(&format!("    - {s}\n"));
            }
        }
        out
    }
}

/// An in-memory tree, writable to disk, whose inheritance answers come from
/// walking the model rather than parsing anything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeModel {
    pub nodes: Vec<ModelNode>,
}

const SCRIPT_POOL: &[&str] = &["env.sh", "build.sh", "run.sh", "a.sh", "b.sh", "c.sh", "prep-1.sh"];
const DIR_POOL: &[&str] = &["software", "simulation", "tests", "amrex", "ünï", "run 2", "x"];

impl TreeModel {
    pub fn generate<R: Rng>(rng: &mut R, max_depth: usize, max_scripts: usize) -> Self {
        let mut nodes = vec![ModelNode {
            rel: ".".into(),
            parent: None,
            jobfile: random_jobfile(rng, max_scripts),
        }];
        let mut frontier = vec![(0usize, 0usize)];
        while let Some((idx, depth)) = frontier.pop() {
            if depth >= max_depth || nodes.len() >= 40 {
                continue;
            }
            let mut used = Vec::new();
            for _ in 0..rng.random_range(0..=3) {
                let name = DIR_POOL.choose(rng).unwrap().to_string();
                if used.contains(&name) {
                    continue;
                }
                used.push(name.clone());
                let rel = if idx == 0 {
                    name
                } else {
                    format!("{}/{name}", nodes[idx].rel)
                };
                nodes.push(ModelNode {
                    rel,
                    parent: Some(idx),
                    jobfile: random_jobfile(rng, max_scripts),
                });
                frontier.push((nodes.len() - 1, depth + 1));
            }
        }
        TreeModel { nodes }
    }

    pub fn write(&self, root: &Path) {
        for node in &self.nodes {
            let dir = root.join(&node.rel);
            fs::create_dir_all(&dir).unwrap();
            let Some(jobfile) = &node.jobfile else { continue };
            fs::write(dir.join("Jobfile"), jobfile.render()).unwrap();
            for script in jobfile.setup.iter().chain(&jobfile.submit) {
                fs::write(dir.join(script), format!("echo '{}:{script}'\n", node.rel)).unwrap();
            }
        }
    }

    /// Indices from the root down to `target`.
    pub fn chain(&self, target: usize) -> Vec<usize> {
        let mut chain = vec![target];
        while let Some(p) = self.nodes[*chain.last().unwrap()].parent {
            chain.push(p);
        }
        chain.reverse();
        chain
    }

    /// Root-relative script paths a task at `target` must run, root first.
    pub fn expected_scripts(&self, target: usize, task: &str) -> Vec<String> {
        let mut out = Vec::new();
        for idx in self.chain(target) {
            let node = &self.nodes[idx];
            let Some(jobfile) = &node.jobfile else { continue };
            for script in jobfile.list(task) {
                out.push(if node.rel == "." {
                    script.clone()
                } else {
                    format!("{}/{script}", node.rel)
                });
            }
        }
        out
    }
}

fn random_jobfile<R: Rng>(rng: &mut R, max_scripts: usize) -> Option<ModelJobfile> {
    if rng.random_bool(0.25) {
        return None;
    }
    let pick = |rng: &mut R| {
        let n = rng.random_range(0..=max_scripts);
        let mut list: Vec<String> = SCRIPT_POOL.choose_multiple(rng, n).map(|s| s.to_string()).collect();
        list.dedup();
        list
    };
    Some(ModelJobfile {
        setup: pick(rng),
        submit: pick(rng),
        flow: rng.random_bool(0.3),
    })
}

/// `len` bytes of arbitrary binary content.
pub fn random_bytes<R: Rng>(rng: &mut R, len: usize) -> Vec<u8> {
    let mut buf = vec![0u8; len];
    rng.fill(buf.as_mut_slice());
    buf
}

/// A file name mixing ASCII, accents, CJK and emoji. Never protected and
/// never `.`/`..`.
pub fn unicode_name<R: Rng>(rng: &mut R) -> String {
    const PARTS: &[&str] = &["plt", "hdf5", "données", "温度", "🚀", "run", "chk", " ", "-", "_", "Ω"];
    let mut name: String = (0..rng.random_range(1..=4)).map(|_| *PARTS.choose(rng).unwrap()).collect();
    if is_protected(&name) || name.trim().is_empty() {
        name = format!("f{name}");
    }
    name
}
