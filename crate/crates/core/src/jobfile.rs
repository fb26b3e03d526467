//! The per-node `Jobfile` declaration.
//!
//! A Jobfile is a closed subset of YAML: one top-level `job` mapping whose
//! optional keys `setup`, `submit` and `archive` hold flat lists of strings.
//!
//! ```text
//! # Location: Experiment/simulation/FlowBoiling
//! job:
//!   setup:
//!     - flashSetup.sh
//!   submit:
//!     - flashSubmit.sh
//!   archive:
//!     - "*hdf5*"
//!     - "*.log"
//! ```
//!
//! Single-line flow collections (`job: {setup: [a.sh]}`, `archive: []`) are
//! accepted as well. Anchors, aliases, tags, block scalars, nesting and
//! multiple documents are rejected, and indentation must be spaces.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{IoContext, Result};

pub const JOBFILE_NAME: &str = "Jobfile";

/// The two executable tasks a Jobfile can assign scripts to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Setup,
    Submit,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Setup, Task::Submit];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Setup => "setup",
            Task::Submit => "submit",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "setup" => Ok(Task::Setup),
            "submit" => Ok(Task::Submit),
            other => Err(format!("unknown task `{other}` (expected setup or submit)")),
        }
    }
}

/// Parsed contents of one Jobfile. Lists keep declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobfileSpec {
    pub setup_scripts: Vec<String>,
    pub submit_scripts: Vec<String>,
    pub archive_patterns: Vec<String>,
}

impl JobfileSpec {
    pub fn scripts(&self, task: Task) -> &[String] {
        match task {
            Task::Setup => &self.setup_scripts,
            Task::Submit => &self.submit_scripts,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.setup_scripts.is_empty()
            && self.submit_scripts.is_empty()
            && self.archive_patterns.is_empty()
    }

    fn list(&self, key: ListKey) -> &[String] {
        match key {
            ListKey::Setup => &self.setup_scripts,
            ListKey::Submit => &self.submit_scripts,
            ListKey::Archive => &self.archive_patterns,
        }
    }

    fn list_mut(&mut self, key: ListKey) -> &mut Vec<String> {
        match key {
            ListKey::Setup => &mut self.setup_scripts,
            ListKey::Submit => &mut self.submit_scripts,
            ListKey::Archive => &mut self.archive_patterns,
        }
    }

    /// Canonical block-style rendering; `parse_jobfile` inverts it exactly.
    pub fn to_canonical(&self) -> String {
        if self.is_empty() {
            return "job:\n".to_string();
        }
        let mut out = String::from("job:\n");
        for key in ListKey::ALL {
            let list = self.list(key);
            if list.is_empty() {
                continue;
            }
            out.push_str("  ");
            out.push_str(key.as_str());
            out.push_str(":\n");
            for entry in list {
                out.push_str("    - ");
                if key == ListKey::Archive || !is_plain_safe(entry) {
                    push_double_quoted(&mut out, entry);
                } else {
                    out.push_str(entry);
                }
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ListKey {
    Setup,
    Submit,
    Archive,
}

impl ListKey {
    const ALL: [ListKey; 3] = [ListKey::Setup, ListKey::Submit, ListKey::Archive];

    fn from_key(key: &str) -> Option<Self> {
        match key {
            "setup" => Some(ListKey::Setup),
            "submit" => Some(ListKey::Submit),
            "archive" => Some(ListKey::Archive),
            _ => None,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            ListKey::Setup => "setup",
            ListKey::Submit => "submit",
            ListKey::Archive => "archive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JobfileError {
    #[error("Jobfile line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("Jobfile line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("Jobfile line {line}: invalid entry `{entry}`: {reason}")]
    InvalidEntry {
        line: usize,
        entry: String,
        reason: String,
    },
}

impl JobfileError {
    pub fn line(&self) -> usize {
        match self {
            JobfileError::Syntax { line, .. }
            | JobfileError::UnknownKey { line, .. }
            | JobfileError::InvalidEntry { line, .. } => *line,
        }
    }
}

fn syntax(line: usize, message: impl Into<String>) -> JobfileError {
    JobfileError::Syntax {
        line,
        message: message.into(),
    }
}

/// Problems `validate_spec` reports against a node directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpecFinding {
    MissingScript { script: String },
    DuplicateEntry { key: String, entry: String },
    InvalidEntry { key: String, entry: String, reason: String },
}

pub fn parse_jobfile(text: &str) -> Result<JobfileSpec, JobfileError> {
    let lines = content_lines(text)?;
    Parser {
        lines: &lines,
        pos: 0,
        spec: JobfileSpec::default(),
        seen: Vec::new(),
    }
    .document()
}

/// Checks a spec against the directory it was read from. Archive patterns are
/// not matched here; matching nothing is legal.
pub fn validate_spec(spec: &JobfileSpec, node_dir: &Path) -> Result<Vec<SpecFinding>> {
    std::fs::read_dir(node_dir).at(node_dir)?;
    let mut findings = Vec::new();
    for key in ListKey::ALL {
        let mut seen = HashSet::new();
        for entry in spec.list(key) {
            if let Err(reason) = check_entry(key, entry) {
                findings.push(SpecFinding::InvalidEntry {
                    key: key.as_str().into(),
                    entry: entry.clone(),
                    reason,
                });
                continue;
            }
            if !seen.insert(entry.as_str()) {
                findings.push(SpecFinding::DuplicateEntry {
                    key: key.as_str().into(),
                    entry: entry.clone(),
                });
                continue;
            }
            if key != ListKey::Archive && !node_dir.join(entry).is_file() {
                findings.push(SpecFinding::MissingScript {
                    script: entry.clone(),
                });
            }
        }
    }
    Ok(findings)
}

fn check_entry(key: ListKey, entry: &str) -> std::result::Result<(), String> {
    if entry.is_empty() {
        return Err("empty entry".into());
    }
    if entry.contains('\0') {
        return Err("NUL byte in entry".into());
    }
    match key {
        ListKey::Setup | ListKey::Submit => {
            if entry.contains('/') || entry.contains('\\') {
                return Err("script entries must be bare filenames without path separators".into());
            }
            if entry == "." || entry == ".." {
                return Err("directory references are not script files".into());
            }
        }
        ListKey::Archive => {
            if entry.contains('/') {
                return Err("archive patterns match basenames and cannot contain `/`".into());
            }
        }
    }
    Ok(())
}

#[derive(Debug)]
struct Line<'a> {
    no: usize,
    indent: usize,
    body: &'a str,
}

/// Splits into non-blank, non-comment lines with their indentation.
fn content_lines(text: &str) -> Result<Vec<Line<'_>>, JobfileError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let no = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.chars().all(|c| c == ' ' || c == '\t') {
            continue;
        }
        let body = raw.trim_start_matches(' ');
        if body.starts_with('\t') {
            return Err(syntax(no, "tab character in indentation"));
        }
        if body.starts_with('#') {
            continue;
        }
        if raw.len() == body.len() && (body.starts_with("---") || body.starts_with("...")) {
            return Err(syntax(no, "document markers are not supported"));
        }
        out.push(Line {
            no,
            indent: raw.len() - body.len(),
            body: trim_ws_end(body),
        });
    }
    Ok(out)
}

fn trim_ws(s: &str) -> &str {
    s.trim_matches([' ', '\t'])
}

fn trim_ws_start(s: &str) -> &str {
    s.trim_start_matches([' ', '\t'])
}

fn trim_ws_end(s: &str) -> &str {
    s.trim_end_matches([' ', '\t'])
}

/// A parsed value. Only `Scalar` is a legal list entry.
#[derive(Debug)]
enum Node {
    Null,
    Scalar { text: String, quoted: bool },
    Seq(Vec<Node>),
    Map(Vec<(String, Node)>),
}

struct Parser<'a, 'b> {
    lines: &'b [Line<'a>],
    pos: usize,
    spec: JobfileSpec,
    seen: Vec<ListKey>,
}

impl<'a, 'b> Parser<'a, 'b> {
    fn document(mut self) -> Result<JobfileSpec, JobfileError> {
        let Some(first) = self.lines.first() else {
            return Err(syntax(1, "missing top-level `job:` mapping"));
        };
        if first.indent != 0 {
            return Err(syntax(first.no, "top-level key must start in the first column"));
        }
        let (key, rest) = split_key(first)?;
        if key != "job" {
            return Err(JobfileError::UnknownKey {
                line: first.no,
                key: key.to_string(),
            });
        }
        self.pos = 1;
        match inline_value(rest, first.no)? {
            Node::Null => self.job_block()?,
            Node::Map(pairs) => {
                for (key, value) in pairs {
                    let list = self.open_list(&key, first.no)?;
                    match value {
                        Node::Null => {}
                        Node::Seq(items) => {
                            for item in items {
                                self.push_entry(list, item, first.no)?;
                            }
                        }
                        _ => return Err(syntax(first.no, format!("`{key}` must be a list"))),
                    }
                }
            }
            _ => return Err(syntax(first.no, "`job` must be a mapping")),
        }
        if let Some(line) = self.lines.get(self.pos) {
            if line.indent > 0 {
                return Err(syntax(line.no, "unexpected indentation"));
            }
            return Err(match split_key(line) {
                Ok(("job", _)) => syntax(line.no, "duplicate `job` key"),
                Ok((key, _)) => JobfileError::UnknownKey {
                    line: line.no,
                    key: key.to_string(),
                },
                Err(e) => e,
            });
        }
        Ok(self.spec)
    }

    /// Block-style children of `job:`.
    fn job_block(&mut self) -> Result<(), JobfileError> {
        let Some(indent) = self.lines.get(self.pos).map(|l| l.indent).filter(|&i| i > 0) else {
            return Ok(());
        };
        while let Some(line) = self.lines.get(self.pos) {
            if line.indent == 0 {
                break;
            }
            if line.indent != indent {
                return Err(syntax(line.no, "inconsistent indentation under `job`"));
            }
            let (key, rest) = split_key(line)?;
            let list = self.open_list(key, line.no)?;
            self.pos += 1;
            match inline_value(rest, line.no)? {
                Node::Null => self.block_list(list, indent)?,
                Node::Seq(items) => {
                    for item in items {
                        self.push_entry(list, item, line.no)?;
                    }
                }
                _ => return Err(syntax(line.no, format!("`{key}` must be a list"))),
            }
        }
        Ok(())
    }

    /// `- entry` lines following a list key at `key_indent`.
    fn block_list(&mut self, list: ListKey, key_indent: usize) -> Result<(), JobfileError> {
        let mut item_indent = None;
        while let Some(line) = self.lines.get(self.pos) {
            let is_item = line.body == "-" || line.body.starts_with("- ");
            if line.indent < key_indent || (line.indent == key_indent && !is_item) {
                break;
            }
            if !is_item {
                return Err(syntax(line.no, "expected a `- entry` line"));
            }
            match item_indent {
                None => item_indent = Some(line.indent),
                Some(i) if i != line.indent => {
                    return Err(syntax(line.no, "inconsistent list indentation"))
                }
                Some(_) => {}
            }
            let node = block_item(&line.body[1..], line.no)?;
            self.push_entry(list, node, line.no)?;
            self.pos += 1;
        }
        Ok(())
    }

    fn open_list(&mut self, key: &str, line: usize) -> Result<ListKey, JobfileError> {
        let list = ListKey::from_key(key).ok_or_else(|| JobfileError::UnknownKey {
            line,
            key: key.to_string(),
        })?;
        if self.seen.contains(&list) {
            return Err(syntax(line, format!("duplicate key `{key}`")));
        }
        self.seen.push(list);
        Ok(list)
    }

    fn push_entry(&mut self, list: ListKey, node: Node, line: usize) -> Result<(), JobfileError> {
        let invalid = |entry: &str, reason: &str| JobfileError::InvalidEntry {
            line,
            entry: entry.to_string(),
            reason: reason.to_string(),
        };
        let text = match node {
            Node::Scalar { text, quoted } => {
                if !quoted && is_non_string_plain(&text) {
                    return Err(invalid(&text, "non-string entry (quote it to use it as a name)"));
                }
                text
            }
            Node::Null => return Err(invalid("", "empty entry")),
            Node::Seq(_) => return Err(invalid("[...]", "non-string entry (nested list)")),
            Node::Map(pairs) => {
                let key = pairs.first().map(|(k, _)| k.as_str()).unwrap_or("");
                return Err(invalid(key, "non-string entry (nested mapping)"));
            }
        };
        check_entry(list, &text).map_err(|reason| invalid(&text, &reason))?;
        let target = self.spec.list_mut(list);
        if target.contains(&text) {
            return Err(invalid(&text, "duplicate entry"));
        }
        target.push(text);
        Ok(())
    }
}

/// `key:` followed by an optional inline value.
fn split_key<'a>(line: &Line<'a>) -> Result<(&'a str, &'a str), JobfileError> {
    let body = line.body;
    if body == "-" || body.starts_with("- ") {
        return Err(syntax(line.no, "expected `key:`, found a list entry"));
    }
    let colon = body
        .char_indices()
        .find(|&(i, c)| c == ':' && matches!(body[i + 1..].chars().next(), None | Some(' ' | '\t')))
        .map(|(i, _)| i)
        .ok_or_else(|| syntax(line.no, "expected `key:`"))?;
    let key = trim_ws_end(&body[..colon]);
    if key.is_empty() || key.starts_with(['"', '\'', '{', '[', '?', '&', '*', '!']) {
        return Err(syntax(line.no, "keys must be plain words"));
    }
    Ok((key, &body[colon + 1..]))
}

/// The value after `key:` on the same line; empty or a comment means none.
fn inline_value(rest: &str, line: usize) -> Result<Node, JobfileError> {
    let rest = trim_ws_start(rest);
    if rest.is_empty() || rest.starts_with('#') {
        return Ok(Node::Null);
    }
    let mut flow = Flow {
        src: rest,
        pos: 0,
        line,
    };
    let node = match rest.as_bytes()[0] {
        b'[' | b'{' | b'"' | b'\'' => flow.node()?,
        _ => {
            let text = block_plain(rest, line)?;
            if text.contains(": ") || text.ends_with(':') {
                return Err(syntax(line, "nested mappings are not supported"));
            }
            return Ok(scalar_or_null(text));
        }
    };
    flow.finish()?;
    Ok(node)
}

/// The text after `-` on an entry line.
fn block_item(rest: &str, line: usize) -> Result<Node, JobfileError> {
    let rest = trim_ws_start(rest);
    if rest.is_empty() || rest.starts_with('#') {
        return Ok(Node::Null);
    }
    if rest == "-" || rest.starts_with("- ") {
        return Ok(Node::Seq(Vec::new()));
    }
    let mut flow = Flow {
        src: rest,
        pos: 0,
        line,
    };
    let node = match rest.as_bytes()[0] {
        b'[' | b'{' | b'"' | b'\'' => flow.node()?,
        _ => {
            let text = block_plain(rest, line)?;
            if let Some(i) = text.find(": ").or_else(|| text.ends_with(':').then(|| text.len() - 1)) {
                return Ok(Node::Map(vec![(text[..i].to_string(), Node::Null)]));
            }
            return Ok(scalar_or_null(text));
        }
    };
    flow.finish()?;
    Ok(node)
}

fn scalar_or_null(text: String) -> Node {
    if matches!(text.as_str(), "~" | "null" | "Null" | "NULL") {
        Node::Null
    } else {
        Node::Scalar {
            text,
            quoted: false,
        }
    }
}

/// A plain scalar in block context: runs to end of line or ` #`.
fn block_plain(src: &str, line: usize) -> Result<String, JobfileError> {
    check_plain_start(src, line)?;
    let mut end = src.len();
    let bytes = src.as_bytes();
    for i in 1..bytes.len() {
        if bytes[i] == b'#' && (bytes[i - 1] == b' ' || bytes[i - 1] == b'\t') {
            end = i;
            break;
        }
    }
    Ok(trim_ws_end(&src[..end]).to_string())
}

fn check_plain_start(src: &str, line: usize) -> Result<(), JobfileError> {
    match src.chars().next() {
        Some(c @ ('*' | '&' | '!' | '|' | '>' | '%' | '@' | '`')) => Err(syntax(
            line,
            format!("unquoted value may not start with `{c}`; wrap it in quotes"),
        )),
        Some('?') if matches!(src.chars().nth(1), None | Some(' ')) => {
            Err(syntax(line, "complex mapping keys are not supported"))
        }
        _ => Ok(()),
    }
}

/// Plain scalars YAML would type as bool, null or number.
fn is_non_string_plain(s: &str) -> bool {
    const WORDS: [&str; 10] = [
        "true", "True", "TRUE", "false", "False", "FALSE", "null", "Null", "NULL", "~",
    ];
    if WORDS.contains(&s) {
        return true;
    }
    if s.parse::<i64>().is_ok() {
        return true;
    }
    s.parse::<f64>().is_ok() && s.bytes().any(|b| b.is_ascii_digit())
}

/// Single-line flow collections and quoted scalars.
struct Flow<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
}

impl Flow<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t')) {
            self.pos += 1;
        }
    }

    fn err(&self, message: impl Into<String>) -> JobfileError {
        syntax(self.line, message)
    }

    /// Only whitespace or a comment may follow the value.
    fn finish(&mut self) -> Result<(), JobfileError> {
        let before = self.pos;
        self.skip_ws();
        match self.peek() {
            None => Ok(()),
            Some('#') if self.pos > before => Ok(()),
            Some(c) => Err(self.err(format!("unexpected `{c}` after value"))),
        }
    }

    fn node(&mut self) -> Result<Node, JobfileError> {
        self.skip_ws();
        match self.peek() {
            Some('[') => self.seq(),
            Some('{') => self.map(),
            Some('"') => Ok(Node::Scalar {
                text: self.double_quoted()?,
                quoted: true,
            }),
            Some('\'') => Ok(Node::Scalar {
                text: self.single_quoted()?,
                quoted: true,
            }),
            _ => {
                let text = self.flow_plain()?;
                if text.is_empty() {
                    return Err(self.err("expected a value"));
                }
                Ok(scalar_or_null(text))
            }
        }
    }

    fn seq(&mut self) -> Result<Node, JobfileError> {
        self.bump();
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(']') => {
                    self.bump();
                    return Ok(Node::Seq(items));
                }
                None => return Err(self.err("unterminated `[`")),
                _ => {}
            }
            let item = self.node()?;
            self.skip_ws();
            let item = if self.peek() == Some(':') {
                self.bump();
                let value = self.map_value()?;
                let key = match item {
                    Node::Scalar { text, .. } => text,
                    _ => String::new(),
                };
                Node::Map(vec![(key, value)])
            } else {
                item
            };
            items.push(item);
            self.skip_ws();
            match self.bump() {
                Some(',') => {}
                Some(']') => return Ok(Node::Seq(items)),
                Some(c) => return Err(self.err(format!("unexpected `{c}` in list"))),
                None => return Err(self.err("unterminated `[`")),
            }
        }
    }

    fn map(&mut self) -> Result<Node, JobfileError> {
        self.bump();
        let mut pairs = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some('}') => {
                    self.bump();
                    return Ok(Node::Map(pairs));
                }
                None => return Err(self.err("unterminated `{`")),
                _ => {}
            }
            let key = self.flow_plain()?;
            if key.is_empty() {
                return Err(self.err("expected a key"));
            }
            self.skip_ws();
            if self.bump() != Some(':') {
                return Err(self.err(format!("expected `:` after `{key}`")));
            }
            let value = self.map_value()?;
            pairs.push((key, value));
            self.skip_ws();
            match self.bump() {
                Some(',') => {}
                Some('}') => return Ok(Node::Map(pairs)),
                Some(c) => return Err(self.err(format!("unexpected `{c}` in mapping"))),
                None => return Err(self.err("unterminated `{`")),
            }
        }
    }

    fn map_value(&mut self) -> Result<Node, JobfileError> {
        self.skip_ws();
        match self.peek() {
            Some(',' | '}' | ']') | None => Ok(Node::Null),
            _ => self.node(),
        }
    }

    /// Plain scalar inside a flow collection; stops at indicators and `: `.
    fn flow_plain(&mut self) -> Result<String, JobfileError> {
        check_plain_start(&self.src[self.pos..], self.line)?;
        let start = self.pos;
        while let Some(c) = self.peek() {
            match c {
                ',' | '[' | ']' | '{' | '}' => break,
                ':' => {
                    let next = self.src[self.pos + 1..].chars().next();
                    if matches!(next, None | Some(' ' | '\t' | ',' | ']' | '}' | '[' | '{')) {
                        break;
                    }
                }
                '#' if self.pos > start
                    && matches!(self.src.as_bytes()[self.pos - 1], b' ' | b'\t') =>
                {
                    return Err(self.err("comment inside a flow collection"));
                }
                _ => {}
            }
            self.bump();
        }
        Ok(trim_ws(&self.src[start..self.pos]).to_string())
    }

    fn single_quoted(&mut self) -> Result<String, JobfileError> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                Some('\'') if self.peek() == Some('\'') => {
                    self.bump();
                    out.push('\'');
                }
                Some('\'') => return Ok(out),
                Some(c) => out.push(c),
                None => return Err(self.err("unterminated single-quoted string")),
            }
        }
    }

    fn double_quoted(&mut self) -> Result<String, JobfileError> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(out),
                Some('\\') => {
                    let c = match self.bump() {
                        Some('\\') => '\\',
                        Some('"') => '"',
                        Some('/') => '/',
                        Some(' ') => ' ',
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('r') => '\r',
                        Some('0') => '\0',
                        Some('a') => '\u{07}',
                        Some('b') => '\u{08}',
                        Some('e') => '\u{1b}',
                        Some('f') => '\u{0c}',
                        Some('v') => '\u{0b}',
                        Some('x') => self.hex_escape(2)?,
                        Some('u') => self.hex_escape(4)?,
                        Some('U') => self.hex_escape(8)?,
                        Some(c) => return Err(self.err(format!("unknown escape `\\{c}`"))),
                        None => return Err(self.err("unterminated double-quoted string")),
                    };
                    out.push(c);
                }
                Some(c) => out.push(c),
                None => return Err(self.err("unterminated double-quoted string")),
            }
        }
    }

    fn hex_escape(&mut self, digits: usize) -> Result<char, JobfileError> {
        let hex = self
            .src
            .get(self.pos..self.pos + digits)
            .filter(|h| h.bytes().all(|b| b.is_ascii_hexdigit()))
            .ok_or_else(|| self.err("malformed hex escape"))?;
        self.pos += digits;
        u32::from_str_radix(hex, 16)
            .ok()
            .and_then(char::from_u32)
            .ok_or_else(|| self.err("escape is not a valid character"))
    }
}

fn is_plain_safe(s: &str) -> bool {
    let Some(first) = s.chars().next() else {
        return false;
    };
    if "-?:,[]{}#&*!|>'\"%@`".contains(first) || first == ' ' || first == '\t' {
        return false;
    }
    if s.ends_with([' ', '\t', ':']) || s.contains(": ") || s.contains(" #") || s.contains("\t#") {
        return false;
    }
    !s.chars().any(char::is_control) && !is_non_string_plain(s)
}

/// A list entry as it would appear in a Jobfile, quoted when needed.
pub(crate) fn render_entry(entry: &str) -> String {
    if is_plain_safe(entry) {
        entry.to_string()
    } else {
        let mut out = String::new();
        push_double_quoted(&mut out, entry);
        out
    }
}

fn push_double_quoted(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c.is_control() => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(setup: &[&str], submit: &[&str], archive: &[&str]) -> JobfileSpec {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        JobfileSpec {
            setup_scripts: own(setup),
            submit_scripts: own(submit),
            archive_patterns: own(archive),
        }
    }

    #[test]
    fn root_jobfile_flow_style() {
        let parsed = parse_jobfile("job: {setup: [environment.sh], submit: [environment.sh]}").unwrap();
        assert_eq!(parsed, spec(&["environment.sh"], &["environment.sh"], &[]));
    }

    #[test]
    fn flow_boiling_jobfile_block_style() {
        let text = r#"# Location:
# Experiment/simulation/FlowBoiling
job:
  setup:
      - flashSetup.sh
  submit:
      - flashSubmit.sh
  archive:
      - "*hdf5*"
      - "*.log"
"#;
        assert_eq!(
            parse_jobfile(text).unwrap(),
            spec(&["flashSetup.sh"], &["flashSubmit.sh"], &["*hdf5*", "*.log"])
        );
    }

    #[test]
    fn empty_declarations_are_equivalent() {
        let empty = JobfileSpec::default();
        assert_eq!(parse_jobfile("job: {}").unwrap(), empty);
        assert_eq!(parse_jobfile("job:").unwrap(), empty);
        assert_eq!(parse_jobfile("job:\n  setup:\n  archive: []\n").unwrap(), empty);
        assert_eq!(parse_jobfile("job: ~\n").unwrap(), empty);
    }

    #[test]
    fn unknown_key_under_job() {
        let err = parse_jobfile("job: {run: [a.sh]}").unwrap_err();
        assert_eq!(
            err,
            JobfileError::UnknownKey {
                line: 1,
                key: "run".into()
            }
        );
        let err = parse_jobfile("job:\n  setup:\n    - a.sh\n  Setup:\n    - b.sh\n").unwrap_err();
        assert!(matches!(err, JobfileError::UnknownKey { line: 4, ref key } if key == "Setup"));
    }

    #[test]
    fn unknown_top_level_key() {
        let err = parse_jobfile("job:\nversion: 2\n").unwrap_err();
        assert!(matches!(err, JobfileError::UnknownKey { line: 2, ref key } if key == "version"));
        let err = parse_jobfile("jobs:\n  setup: []\n").unwrap_err();
        assert!(matches!(err, JobfileError::UnknownKey { line: 1, .. }));
    }

    #[test]
    fn tabs_in_indentation_are_syntax_errors() {
        let err = parse_jobfile("job:\n\tsetup:\n").unwrap_err();
        assert!(matches!(err, JobfileError::Syntax { line: 2, .. }), "{err:?}");
        let err = parse_jobfile("job:\n  setup:\n  \t- a.sh\n").unwrap_err();
        assert!(matches!(err, JobfileError::Syntax { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn path_separators_rejected() {
        for entry in ["../env.sh", "sub/a.sh", "a\\\\b.sh", ".."] {
            let text = format!("job:\n  setup:\n    - \"{entry}\"\n");
            let err = parse_jobfile(&text).unwrap_err();
            assert!(matches!(err, JobfileError::InvalidEntry { line: 3, .. }), "{entry}: {err:?}");
        }
    }

    #[test]
    fn non_string_entries_rejected() {
        for entry in ["", "[a.sh]", "{a: b}", "a: b", "true", "42", "3.5", "null", "- x"] {
            let text = format!("job:\n  setup:\n    - {entry}\n");
            let err = parse_jobfile(&text).unwrap_err();
            assert!(matches!(err, JobfileError::InvalidEntry { .. }), "{entry:?}: {err:?}");
        }
        assert!(matches!(
            parse_jobfile("job: {setup: [[a.sh]]}").unwrap_err(),
            JobfileError::InvalidEntry { .. }
        ));
        // Quoting makes them strings.
        let parsed = parse_jobfile("job:\n  setup:\n    - \"42\"\n    - 'true'\n").unwrap();
        assert_eq!(parsed.setup_scripts, ["42", "true"]);
    }

    #[test]
    fn duplicates_rejected() {
        let err = parse_jobfile("job: {submit: [a.sh, a.sh]}").unwrap_err();
        assert!(matches!(err, JobfileError::InvalidEntry { ref reason, .. } if reason == "duplicate entry"));
        let err = parse_jobfile("job:\n  setup: []\n  setup: []\n").unwrap_err();
        assert!(matches!(err, JobfileError::Syntax { line: 3, .. }));
    }

    #[test]
    fn yaml_features_outside_the_subset() {
        for (text, line) in [
            ("", 1),
            ("# only a comment\n", 1),
            ("---\njob:\n", 1),
            ("job:\n  setup: &a\n", 2),
            ("job:\n  archive:\n    - *.log\n", 3),
            ("job:\n  setup: |\n    a\n", 2),
            ("job:\n  setup: a.sh\n", 2),
            ("job:\n  setup:\n    nested: x\n", 3),
            ("job:\n  setup:\n    - a.sh\n      - b.sh\n", 4),
            ("job:\n  setup: [a.sh\n", 2),
            ("job: {setup: [a.sh]}\n  submit: []\n", 2),
            ("job:\njob:\n", 2),
            ("- a\n", 1),
            ("  job:\n", 1),
            ("job:\n    setup: []\n  submit: []\n", 3),
        ] {
            match parse_jobfile(text) {
                Err(JobfileError::Syntax { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} -> {other:?}"),
            }
        }
    }

    #[test]
    fn comments_and_sequences_at_key_indent() {
        let text = "# header\njob:   # trailing\n  setup:\n  - a.sh   # first\n\n  # between\n  - 'b c.sh'\n  archive: [\"*.out\", '*.log']\n";
        assert_eq!(
            parse_jobfile(text).unwrap(),
            spec(&["a.sh", "b c.sh"], &[], &["*.out", "*.log"])
        );
    }

    #[test]
    fn quoted_escapes() {
        let parsed = parse_jobfile(r#"job: {archive: ["a\"b", "é*", 'it''s*']}"#).unwrap();
        assert_eq!(parsed.archive_patterns, ["a\"b", "é*", "it's*"]);
    }

    #[test]
    fn crlf_input() {
        let parsed = parse_jobfile("job:\r\n  submit:\r\n    - run.sh\r\n").unwrap();
        assert_eq!(parsed.submit_scripts, ["run.sh"]);
    }

    #[test]
    fn canonical_form_round_trips() {
        let s = spec(
            &["environment.sh", "weird: name.sh", "#x", "true", " lead"],
            &["é.sh"],
            &["*hdf5*", "a\"b\\c", "tab\there"],
        );
        let text = s.to_canonical();
        assert_eq!(parse_jobfile(&text).unwrap(), s, "{text}");
        assert_eq!(JobfileSpec::default().to_canonical(), "job:\n");
    }

    #[test]
    fn validate_reports_missing_scripts() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("setupAMReX.sh"), "").unwrap();
        let ok = spec(&["setupAMReX.sh"], &[], &["*.never"]);
        assert_eq!(validate_spec(&ok, dir.path()).unwrap(), vec![]);
        assert_eq!(validate_spec(&JobfileSpec::default(), dir.path()).unwrap(), vec![]);

        let missing = spec(&["missing.sh"], &[], &[]);
        assert_eq!(
            validate_spec(&missing, dir.path()).unwrap(),
            vec![SpecFinding::MissingScript {
                script: "missing.sh".into()
            }]
        );
    }

    #[test]
    fn validate_flags_hand_built_duplicates_and_bad_entries() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.sh"), "").unwrap();
        let s = spec(&["a.sh", "a.sh", "../x.sh"], &[], &[]);
        let findings = validate_spec(&s, dir.path()).unwrap();
        assert_eq!(findings.len(), 2);
        assert!(matches!(findings[0], SpecFinding::DuplicateEntry { .. }));
        assert!(matches!(findings[1], SpecFinding::InvalidEntry { .. }));
    }

    #[test]
    fn validate_unreadable_dir_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = validate_spec(&JobfileSpec::default(), &dir.path().join("nope")).unwrap_err();
        assert_eq!(err.class(), crate::ErrorClass::Io);
    }
}
