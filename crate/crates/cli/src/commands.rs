use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context as _, Result};
use chrono::NaiveDate;
use jobrunner_core::archiver::{plan_archive, DEFAULT_CAPSULE_NAME};
use jobrunner_core::provenance::{new_run_id, Artifact, Command as Recorded, EnvCapture};
use jobrunner_core::{
    append_log, archive, collect_scripts, compose, execute, export, init, record, relative, resolve_chain, restore,
    sha256_file, verify_tree, write_composite, CompositeScript, ExecOptions, ExecutionResult, GitProbe, NodeChain,
    RecordInput, Task, TransferMode, TreeTemplate,
};
use serde_json::{json, Value};

use crate::{class_code, ArchiveArgs, Cli, Command, Failure, RunArgs};

struct Ctx {
    root: PathBuf,
    json: bool,
}

impl Ctx {
    fn emit(&self, value: Value) {
        if self.json {
            println!("{value}");
        }
    }

    fn rel(&self, path: &Path) -> String {
        if path.starts_with(&self.root) {
            relative(&self.root, path)
        } else {
            path.display().to_string()
        }
    }
}

/// What a command got through before finishing or failing, for its provenance record.
#[derive(Default)]
struct Trace {
    chain: Option<NodeChain>,
    composite: Option<CompositeScript>,
    execution: Option<ExecutionResult>,
    artifact: Option<Artifact>,
}

pub(crate) fn run(cli: Cli) -> Result<()> {
    let root = match cli.root {
        Some(root) => root,
        None => std::env::current_dir().context("cannot determine the current directory")?,
    };
    let root = std::path::absolute(&root).with_context(|| format!("bad root {}", root.display()))?;
    let ctx = Ctx { root, json: cli.json };

    match cli.command {
        Command::Setup(args) => run_tasks(&ctx, Task::Setup, &args),
        Command::Submit(args) => run_tasks(&ctx, Task::Submit, &args),
        Command::Archive(args) => run_archive(&ctx, &args),
        Command::Export { output, plain_env } => run_export(&ctx, output, env_capture(plain_env)),
        Command::Restore { capsule, plain_env } => run_restore(&ctx, &capsule, env_capture(plain_env)),
        Command::Init {
            name,
            software,
            simulation,
        } => run_init(&ctx, name, software, simulation),
        Command::Show { task, target } => run_show(&ctx, task, &target),
        Command::Verify => run_verify(&ctx),
    }
}

fn env_capture(plain: bool) -> EnvCapture {
    if plain {
        EnvCapture::Plain
    } else {
        EnvCapture::Hashed
    }
}

fn usage(message: impl Into<String>) -> anyhow::Error {
    Failure {
        code: class_code(jobrunner_core::ErrorClass::Usage),
        message: message.into(),
    }
    .into()
}

fn log_provenance(
    ctx: &Ctx,
    command: Recorded,
    target: &str,
    run_id: &str,
    trace: &Trace,
    outcome: &Result<()>,
    capture: EnvCapture,
) {
    let mut input = RecordInput::new(run_id, command, &ctx.root, target);
    input.chain = trace.chain.as_ref();
    input.composite = trace.composite.as_ref();
    input.execution = trace.execution.as_ref();
    input.artifact = trace.artifact.clone();
    input.error = outcome.as_ref().err().map(|e| format!("{e:#}"));
    input.env_capture = capture;
    let rec = record(input, &GitProbe);
    if let Err(e) = append_log(&rec, &ctx.root) {
        eprintln!("warning: provenance record not written: {e}");
    }
}

fn run_tasks(ctx: &Ctx, task: Task, args: &RunArgs) -> Result<()> {
    let dispatch = match &args.dispatch {
        None => None,
        Some(cmd) => match shlex::split(cmd) {
            Some(words) if !words.is_empty() => Some(words),
            _ => return Err(usage(format!("cannot parse --dispatch `{cmd}`"))),
        },
    };
    let capture = env_capture(args.plain_env);
    for target in &args.targets {
        let run_id = new_run_id();
        let mut trace = Trace::default();
        let outcome = run_task(ctx, task, target, &run_id, dispatch.clone(), args.timeout, args.dry_run, &mut trace);
        if !args.dry_run {
            log_provenance(ctx, task.into(), target, &run_id, &trace, &outcome, capture);
            report_task(ctx, task, target, &run_id, &trace, &outcome);
        }
        outcome?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_task(
    ctx: &Ctx,
    task: Task,
    target: &str,
    run_id: &str,
    dispatch: Option<Vec<String>>,
    timeout: Option<Duration>,
    dry_run: bool,
    trace: &mut Trace,
) -> Result<()> {
    let chain = trace.chain.insert(resolve_chain(&ctx.root, Path::new(target))?);
    let scripts = collect_scripts(chain, task)?;
    let composite = trace
        .composite
        .insert(compose(&scripts, task, &chain.target().path, &chain.root)?);

    if dry_run {
        let scripts: Vec<String> = composite.sections.iter().map(|s| s.rel.clone()).collect();
        let path = ctx.rel(&composite.path());
        if ctx.json {
            ctx.emit(json!({
                "command": task.as_str(),
                "target": composite.target_rel,
                "dry_run": true,
                "scripts": scripts,
                "composite": path,
                "composite_hash": composite.sha256(),
            }));
        } else {
            println!("{task} {} would run {} script(s) via {path}:", composite.target_rel, scripts.len());
            for s in scripts {
                println!("  {s}");
            }
        }
        return Ok(());
    }

    write_composite(composite)?;
    let opts = ExecOptions {
        run_id: run_id.to_string(),
        dispatch,
        timeout,
    };
    let result = trace.execution.insert(execute(composite, &opts)?);
    if !result.success() {
        return Err(Failure {
            code: class_code(jobrunner_core::ErrorClass::Execution),
            message: format!(
                "node `{}`: {} failed ({}); see {}",
                composite.target_rel,
                composite.file_name(),
                describe_status(result),
                ctx.rel(&result.stderr_log)
            ),
        }
        .into());
    }
    Ok(())
}

fn describe_status(result: &ExecutionResult) -> String {
    use jobrunner_core::RunStatus;
    match result.status {
        RunStatus::Exited { code } => format!("exit code {code}"),
        RunStatus::Signaled { signal } => format!("killed by signal {signal}"),
        RunStatus::TimedOut => "timed out".into(),
    }
}

fn report_task(ctx: &Ctx, task: Task, target: &str, run_id: &str, trace: &Trace, outcome: &Result<()>) {
    let target = trace.chain.as_ref().map_or(target, |c| c.target().rel.as_str());
    if let (Ok(()), Some(result)) = (outcome, &trace.execution) {
        eprintln!("{task} {target}: ok ({:.2}s)", result.duration_secs);
    }
    if !ctx.json {
        return;
    }
    let execution = trace.execution.as_ref().map(|r| {
        json!({
            "status": r.status,
            "exit_code": r.exit_code,
            "duration_secs": r.duration_secs,
            "stdout_log": ctx.rel(&r.stdout_log),
            "stderr_log": ctx.rel(&r.stderr_log),
        })
    });
    ctx.emit(json!({
        "command": task.as_str(),
        "target": target,
        "run_id": run_id,
        "ok": outcome.is_ok(),
        "composite": trace.composite.as_ref().map(|c| ctx.rel(&c.path())),
        "composite_hash": trace.composite.as_ref().map(CompositeScript::sha256),
        "execution": execution,
        "error": outcome.as_ref().err().map(|e| format!("{e:#}")),
    }));
}

fn run_archive(ctx: &Ctx, args: &ArchiveArgs) -> Result<()> {
    let date = args.date.unwrap_or_else(|| chrono::Local::now().date_naive());
    let mode = if args.copy { TransferMode::Copy } else { TransferMode::Move };
    let capture = env_capture(args.plain_env);
    for target in &args.targets {
        if args.dry_run {
            archive_dry_run(ctx, target, date)?;
            continue;
        }
        let run_id = new_run_id();
        let mut trace = Trace::default();
        let outcome = archive_one(ctx, target, date, mode, &mut trace);
        log_provenance(ctx, Recorded::Archive, target, &run_id, &trace, &outcome, capture);
        if ctx.json {
            ctx.emit(json!({
                "command": "archive",
                "target": trace.chain.as_ref().map_or(target.as_str(), |c| c.target().rel.as_str()),
                "run_id": run_id,
                "ok": outcome.is_ok(),
                "manifest": trace.artifact.as_ref().map(|a| &a.path),
                "error": outcome.as_ref().err().map(|e| format!("{e:#}")),
            }));
        }
        outcome?;
    }
    Ok(())
}

fn archive_one(ctx: &Ctx, target: &str, date: NaiveDate, mode: TransferMode, trace: &mut Trace) -> Result<()> {
    let chain = trace.chain.insert(resolve_chain(&ctx.root, Path::new(target))?);
    let outcome = archive(chain, date, mode)?;
    let (sha256, _) = sha256_file(&outcome.manifest_path)
        .with_context(|| format!("cannot read {}", outcome.manifest_path.display()))?;
    let manifest = ctx.rel(&outcome.manifest_path);
    eprintln!(
        "archive {}: {} file(s) -> {manifest}",
        chain.target().rel,
        outcome.manifest.entries.len()
    );
    trace.artifact = Some(Artifact {
        path: manifest,
        sha256,
    });
    Ok(())
}

fn archive_dry_run(ctx: &Ctx, target: &str, date: NaiveDate) -> Result<()> {
    let chain = resolve_chain(&ctx.root, Path::new(target))?;
    let plan = plan_archive(&chain, date)?;
    let files: Vec<String> = plan.files.iter().map(|f| ctx.rel(f)).collect();
    if ctx.json {
        ctx.emit(json!({
            "command": "archive",
            "target": plan.node,
            "dry_run": true,
            "patterns": plan.patterns,
            "files": files,
            "destination": ctx.rel(&plan.destination),
            "manifest": ctx.rel(&plan.manifest_path),
            "collisions": plan.collisions,
        }));
    } else {
        println!(
            "archive {} would move {} file(s) to {}:",
            plan.node,
            files.len(),
            ctx.rel(&plan.destination)
        );
        for f in &files {
            println!("  {f}");
        }
        for c in &plan.collisions {
            println!("  collision: {c} already archived");
        }
    }
    Ok(())
}

fn run_export(ctx: &Ctx, output: Option<PathBuf>, capture: EnvCapture) -> Result<()> {
    let output = output.unwrap_or_else(|| ctx.root.join(DEFAULT_CAPSULE_NAME));
    let output = std::path::absolute(&output).unwrap_or(output);
    let run_id = new_run_id();
    let mut trace = Trace {
        chain: resolve_chain(&ctx.root, Path::new(".")).ok(),
        ..Default::default()
    };
    let outcome = export(&ctx.root, &output).map_err(anyhow::Error::from);
    if let Ok(report) = &outcome {
        trace.artifact = Some(Artifact {
            path: ctx.rel(&report.path),
            sha256: report.sha256.clone(),
        });
    }
    let result = outcome.as_ref().map(|_| ()).map_err(|e| anyhow::anyhow!("{e:#}"));
    log_provenance(ctx, Recorded::Export, ".", &run_id, &trace, &result, capture);
    let report = outcome?;
    eprintln!(
        "export: {} file(s) from {} manifest(s) -> {}",
        report.index.files.len(),
        report.index.manifests.len(),
        ctx.rel(&report.path)
    );
    ctx.emit(json!({
        "command": "export",
        "run_id": run_id,
        "ok": true,
        "capsule": ctx.rel(&report.path),
        "sha256": report.sha256,
        "manifests": report.index.manifests.len(),
        "files": report.index.files.len(),
    }));
    Ok(())
}

fn run_restore(ctx: &Ctx, capsule: &Path, capture: EnvCapture) -> Result<()> {
    let capsule = std::path::absolute(capsule).unwrap_or_else(|_| capsule.to_path_buf());
    let run_id = new_run_id();
    let mut trace = Trace {
        chain: resolve_chain(&ctx.root, Path::new(".")).ok(),
        ..Default::default()
    };
    if let Ok((sha256, _)) = sha256_file(&capsule) {
        trace.artifact = Some(Artifact {
            path: ctx.rel(&capsule),
            sha256,
        });
    }
    let outcome = restore(&capsule, &ctx.root).map_err(anyhow::Error::from).and_then(|report| {
        if report.failed.is_empty() {
            Ok(report)
        } else {
            let first = &report.failed[0];
            Err(Failure {
                code: class_code(jobrunner_core::ErrorClass::Capsule),
                message: format!(
                    "{} file(s) failed verification after writing; first: {}: {}",
                    report.failed.len(),
                    first.path,
                    first.reason
                ),
            }
            .into())
        }
    });
    let result = outcome.as_ref().map(|_| ()).map_err(|e| anyhow::anyhow!("{e:#}"));
    log_provenance(ctx, Recorded::Restore, ".", &run_id, &trace, &result, capture);
    let report = outcome?;
    eprintln!(
        "restore: {} file(s) restored, {} already present, {} manifest(s) verified",
        report.restored.len(),
        report.already_present.len(),
        report.manifests
    );
    ctx.emit(json!({
        "command": "restore",
        "run_id": run_id,
        "ok": true,
        "report": report,
    }));
    Ok(())
}

fn run_init(ctx: &Ctx, name: Option<String>, software: Vec<String>, simulation: Vec<String>) -> Result<()> {
    let name = name.unwrap_or_else(|| {
        ctx.root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into())
    });
    let template = TreeTemplate::new(name, software, simulation)?;
    let report = init(&ctx.root, &template)?;
    eprintln!("init: created {} entries in {}", report.created.len(), ctx.root.display());
    ctx.emit(json!({ "command": "init", "ok": true, "created": report.created }));
    Ok(())
}

fn run_show(ctx: &Ctx, task: Task, target: &str) -> Result<()> {
    let chain = resolve_chain(&ctx.root, Path::new(target))?;
    let scripts = collect_scripts(&chain, task)?;
    let composite = compose(&scripts, task, &chain.target().path, &chain.root)?;
    if ctx.json {
        ctx.emit(json!({
            "command": "show",
            "task": task.as_str(),
            "target": composite.target_rel,
            "composite": composite.rendered,
            "composite_hash": composite.sha256(),
        }));
    } else {
        let mut out = io::stdout().lock();
        out.write_all(composite.rendered.as_bytes())?;
        out.flush()?;
    }
    Ok(())
}

fn run_verify(ctx: &Ctx) -> Result<()> {
    if !ctx.root.is_dir() {
        bail!(jobrunner_core::Error::MissingNode { node: ".".into() });
    }
    let findings = verify_tree(&ctx.root);
    for f in &findings {
        eprintln!("{f}");
    }
    ctx.emit(json!({ "command": "verify", "ok": findings.is_empty(), "findings": findings }));
    match findings.first() {
        None => {
            eprintln!("verify: tree is conformant");
            Ok(())
        }
        Some(first) => Err(Failure {
            code: class_code(first.class()),
            message: format!("{} finding(s)", findings.len()),
        }
        .into()),
    }
}
