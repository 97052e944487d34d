mod common;

use std::path::Path;
use std::process::Command;

use umtx::manifest::{Manifest, StageStatus, MANIFEST_FILE};
use umtx::pipeline::{run_pipeline, RunOptions, VARIANTS};

fn same(a: &Path, b: &Path) -> bool {
    std::fs::read(a).unwrap() == std::fs::read(b).unwrap()
}

fn run(cfg: &umtx::config::PipelineConfig, root: &Path) -> Manifest {
    run_pipeline(cfg, root, RunOptions::default()).unwrap()
}

/// Stage names recorded by the latest run, i.e. those past `before`.
fn executed(m: &Manifest, before: usize) -> Vec<String> {
    m.stages[before..].iter().map(|r| r.name.clone()).collect()
}

#[test]
fn resume_skips_finished_work_and_reruns_only_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut cfg = common::tiny();
    let first = run(&cfg, root);
    assert!(first.stages.iter().all(|r| r.status == StageStatus::Done));
    let files = common::snapshot(root);

    let again = run(&cfg, root);
    assert!(executed(&again, first.stages.len()).is_empty());
    assert_eq!(common::snapshot(root), files);

    cfg.lm.order = 4;
    let before = again.stages.len();
    let changed = run(&cfg, root);
    let names = executed(&changed, before);
    for upstream in ["data", "preprocess", "embed.a", "embed.b", "map", "table"] {
        assert!(!names.iter().any(|n| n == upstream), "{upstream} reran: {names:?}");
    }
    for downstream in ["lm.a", "lm.b", "initial", "backtranslate", "select", "eval"] {
        assert!(names.iter().any(|n| n == downstream), "{downstream} skipped: {names:?}");
    }
}

#[test]
fn tampered_output_is_rebuilt() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = common::tiny();
    let first = run(&cfg, root);
    let good = std::fs::read(root.join("table/a2b.moses")).unwrap();
    std::fs::write(root.join("table/a2b.moses"), b"x ||| y ||| 1 1\n").unwrap();
    let m = run(&cfg, root);
    let names = executed(&m, first.stages.len());
    assert_eq!(names.first().map(String::as_str), Some("table"));
    assert!(!names.iter().any(|n| n == "map"));
    assert_eq!(std::fs::read(root.join("table/a2b.moses")).unwrap(), good);
}

#[test]
fn outputs_cover_every_variant_and_the_manifest_is_relative() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let m = run(&common::tiny(), root);
    let fix = m.latest("fix").unwrap();
    for v in VARIANTS {
        for side in ["a", "b"] {
            let rel = format!("fix/{v}.{side}.txt");
            assert!(fix.outputs.iter().any(|a| a.path == rel), "{rel} not recorded");
            assert!(root.join(&rel).exists());
        }
    }
    let lines = |rel: &str| std::fs::read_to_string(root.join(rel)).unwrap().lines().count();
    assert_eq!(lines("fix/reordered.a.txt"), 2 * lines("fix/baseline.a.txt"));
    assert_eq!(lines("fix/reordered.b.txt"), lines("fix/reordered.a.txt"));
    for p in m.artifact_paths() {
        assert!(p.is_relative(), "{p:?}");
        assert!(root.join(&p).exists(), "{p:?}");
    }
    let report = std::fs::read_to_string(root.join("eval/report.txt")).unwrap();
    assert!(report.contains("decipherment_dev="));
    assert_eq!(Manifest::load(&root.join(MANIFEST_FILE)).unwrap(), m);
}

#[test]
fn command_line_tools_reproduce_pipeline_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ws");
    let cfg = common::tiny();
    run(&cfg, &root);
    let out = dir.path().join("cli");
    let umtx = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_umtx")).args(args).output().unwrap();
        assert!(out.status.success(), "umtx {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    let p = |rel: &str| root.join(rel).display().to_string();
    let o = |rel: &str| out.join(rel).display().to_string();

    umtx(&["--seed", "3", "gen-cipher", "--out-dir", &o(""), "--vocab", "40", "--sentences", "1500", "--dev", "80", "--names", "5"]);
    for f in ["mono.a.txt", "mono.b.txt", "dev.a.txt", "dev.b.txt", "key.tsv"] {
        assert!(same(&out.join(f), &root.join("raw").join(f)), "{f}");
    }

    umtx(&["lm", &p("prep/mono.a.txt"), "--out", &o("a.arpa"), "--order", "3"]);
    assert!(same(&out.join("a.arpa"), &root.join("lm/a.arpa")));

    umtx(&[
        "table",
        &p("map/mapped.a.txt"),
        &p("map/mapped.b.txt"),
        "--out",
        &o("a2b.moses"),
        "-k",
        "5",
        "--temperature",
        "0.1",
        "--retrieval",
        "csls",
        "--csls-k",
        "10",
    ]);
    assert!(same(&out.join("a2b.moses"), &root.join("table/a2b.moses")));

    umtx(&["bleu", &p("prep/dev.a.txt"), &p("prep/dev.a.txt")]);
}
