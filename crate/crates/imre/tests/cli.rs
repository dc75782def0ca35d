use std::path::Path;
use std::process::{Command, Output};

fn imre(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_imre"));
    cmd.args(args);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = "\
data.operators = 24
data.source_nodes = 16
data.sensor_nodes = 24
gen.epochs = 3
gen.latent_dim = 2
gen.hidden = 8
som.width = 3
som.height = 3
som.epochs = 5
sim.pairs = 2
sim.sites = 2
sim.steps = 200
inv.budget = 12
inv.max_outer = 2
";

#[test]
fn everything_off_only_validates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let cfg = dir.path().join("off.cfg");
    let off: String = ["forge", "train_gen", "train_som", "simulate", "invert", "evaluate"]
        .iter()
        .map(|s| format!("stages.{s} = false\n"))
        .collect();
    std::fs::write(&cfg, off).unwrap();
    let o = imre(&["run-all", "--out", out.to_str().unwrap()], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn bad_config_fails_with_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = 1\ngen.epochs = many\n").unwrap();
    let o = imre(&["forge"], Some(&cfg));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    std::fs::write(&cfg, "inv.budget = 2\n").unwrap();
    let o = imre(&["run-all"], Some(&cfg));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("budget"), "{}", stderr(&o));
}

#[test]
fn stage_failure_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = imre(&["invert", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stage invert failed"), "{}", stderr(&o));
    assert!(stderr(&o).contains("manifest.jsonl"), "{}", stderr(&o));
}

#[test]
fn tiny_pipeline_stage_by_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    for stage in ["forge", "train-gen", "train-som", "simulate"] {
        let o = imre(&[stage, "--out", out_s, "--seed", "5"], Some(&cfg));
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    let o = imre(&["invert", "--out", out_s, "--seed", "5"], Some(&cfg));
    let code = o.status.code().unwrap();
    assert!(code == 0 || code == 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("cases converged"));
    let o = imre(&["evaluate", "--out", out_s, "--seed", "5"], Some(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));

    for f in [
        "manifest.jsonl",
        "operators/op_0000.imo",
        "generator.imp",
        "som.ism",
        "som_clusters.csv",
        "cases.csv",
        "recordings/case_000.imo",
        "inversions/case_003_u_imre.imo",
        "traces/case_003.csv",
        "summary.csv",
        "aggregate.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
    let manifest = std::fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 24);
    let trace = std::fs::read_to_string(out.join("traces/case_000.csv")).unwrap();
    assert!(trace.starts_with("outer_iter,dfo_evals,residual,rel_du,rel_dh,u_rmse\n0,0,"));
}
