use std::fs;
use std::hint::black_box;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use jobrunner_core::{
    archive, collect_scripts, compose, export, match_files, parse_jobfile, resolve_chain, DeclaredPattern, Task,
    TransferMode,
};

const JOBFILE: &str = "# Location: simulation/FlowBoiling\njob:\n  setup:\n    - setupFlowBoiling.sh\n    - \"env setup.sh\"\n  submit: [submitFlowBoiling.sh, post.sh]\n  archive:\n    - \"*hdf5*\"\n    - \"*.log\"\n    - \"chk_[0-9][0-9]*\"\n";

/// A chain `depth` levels deep with `per_node` setup scripts at every level.
fn deep_tree(root: &Path, depth: usize, per_node: usize) -> PathBuf {
    let mut dir = root.to_path_buf();
    for level in 0..=depth {
        if level > 0 {
            dir = dir.join(format!("level{level}"));
            fs::create_dir_all(&dir).unwrap();
        }
        let names: Vec<String> = (0..per_node).map(|i| format!("s{level}_{i}.sh")).collect();
        for name in &names {
            fs::write(dir.join(name), "#!/bin/sh\n#SBATCH -N 1\necho step\n".repeat(20)).unwrap();
        }
        fs::write(dir.join("Jobfile"), format!("job:\n  setup: [{}]\n", names.join(", "))).unwrap();
    }
    dir.strip_prefix(root).unwrap().to_path_buf()
}

fn bench_jobfile(c: &mut Criterion) {
    c.bench_function("parse_jobfile", |b| b.iter(|| parse_jobfile(black_box(JOBFILE)).unwrap()));
}

fn bench_compose(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let target = deep_tree(dir.path(), 8, 4);
    c.bench_function("resolve_collect_compose/depth8x4", |b| {
        b.iter(|| {
            let chain = resolve_chain(dir.path(), &target).unwrap();
            let scripts = collect_scripts(&chain, Task::Setup).unwrap();
            compose(&scripts, Task::Setup, &chain.target().path, &chain.root).unwrap()
        })
    });
}

fn bench_match(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..2000 {
        let name = match i % 4 {
            0 => format!("plt_hdf5_{i:04}"),
            1 => format!("run{i}.log"),
            2 => format!("chk_{i:04}"),
            _ => format!("notes{i}.txt"),
        };
        fs::write(dir.path().join(name), "").unwrap();
    }
    let patterns: Vec<DeclaredPattern> = ["*hdf5*", "*.log", "chk_[0-9][0-9]*"]
        .iter()
        .map(|p| (p.to_string(), ".".to_string()))
        .collect();
    c.bench_function("match_files/2000", |b| b.iter(|| match_files(dir.path(), &patterns).unwrap()));
}

fn bench_capsule(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let node = dir.path().join("sim");
    fs::create_dir_all(&node).unwrap();
    fs::write(dir.path().join("Jobfile"), "job: {}\n").unwrap();
    fs::write(node.join("Jobfile"), "job:\n  archive: [\"*\"]\n").unwrap();
    for i in 0..64 {
        fs::write(node.join(format!("out{i}.dat")), vec![i as u8; 64 * 1024]).unwrap();
    }
    let chain = resolve_chain(dir.path(), Path::new("sim")).unwrap();
    archive(&chain, NaiveDate::from_ymd_opt(2026, 1, 1).unwrap(), TransferMode::Move).unwrap();
    let out = tempfile::tempdir().unwrap();
    c.bench_function("export/64x64KiB", |b| {
        b.iter_batched(
            || out.path().join("c.tar"),
            |path| export(dir.path(), &path).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_jobfile, bench_compose, bench_match, bench_capsule);
criterion_main!(benches);
