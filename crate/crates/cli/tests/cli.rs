use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_trialoc");

fn trialoc(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = trialoc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

const BINARY_CONFIG: &str = r#"{"model":"binary","seed":11,"binary":{"test_grid":[3,3]},
 "trial":{"replicates":60,"posterior_draws":200},"emulator":{"predictive_draws":150}}"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stage_seed(manifest: &serde_json::Value, stage: &str) -> String {
    manifest["stage_seeds"][stage].as_u64().unwrap().to_string()
}

#[test]
fn run_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", BINARY_CONFIG);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["run", "--config", &cfg, "--out-dir", a.to_str().unwrap()]);
    ok(&["run", "--config", &cfg, "--out-dir", b.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn run_matches_stage_sequence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", BINARY_CONFIG);
    let run_dir = tmp.path().join("run");
    ok(&["run", "--config", &cfg, "--out-dir", run_dir.to_str().unwrap()]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");

    let s = tmp.path().join("stages");
    fs::create_dir_all(&s).unwrap();
    let f = |name: &str| s.join(name).to_str().unwrap().to_string();
    ok(&["design", "--p0-range", "0.25,0.7", "--or-range", "0.65,1", "--grid", "4x5", "--out", &f("training_design.csv")]);
    ok(&["design", "--p0-range", "0.25,0.7", "--or-range", "0.65,1", "--grid", "3x3", "--kind", "test", "--out", &f("test_design.csv")]);
    let sim = ["--model", "binary", "--replicates", "60", "--posterior-draws", "200"];
    let seed = stage_seed(&manifest, "simulate");
    ok(&[&["simulate", "--design", &f("training_design.csv"), "--seed", &seed, "--out", &f("training_pi.csv")], &sim[..]].concat());
    let seed = stage_seed(&manifest, "simulate-test");
    ok(&[&["simulate", "--design", &f("test_design.csv"), "--seed", &seed, "--out", &f("test_pi.csv")], &sim[..]].concat());
    let seed = stage_seed(&manifest, "fit");
    ok(&["fit", "--pi-samples", &f("training_pi.csv"), "--design", &f("training_design.csv"), "--seed", &seed, "--out", &f("model.json")]);
    let seed = stage_seed(&manifest, "predict");
    ok(&["predict", "--model", &f("model.json"), "--test", &f("test_design.csv"), "--draws", "150", "--seed", &seed, "--out", &f("test_ab.csv")]);
    ok(&[
        "doc", "--model", &f("model.json"), "--test", &f("test_design.csv"), "--stat", "sup", "--threshold", "0.95",
        "--draws", "150", "--seed", &seed, "--out", &f("doc_superiority_0.95.csv"),
    ]);
    for id in ["fig2", "fig8"] {
        ok(&["figures", "--run-dir", s.to_str().unwrap(), "--id", id]);
    }

    let mut expected = tree(&run_dir);
    expected.remove(Path::new("manifest.json"));
    let got = tree(&s);
    assert_eq!(expected.keys().collect::<Vec<_>>(), got.keys().collect::<Vec<_>>());
    for (name, bytes) in &expected {
        assert!(bytes == &got[name], "{} differs", name.display());
    }
}

#[test]
fn manifest_records_config_hash_and_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", BINARY_CONFIG);
    let dir = tmp.path().join("out");
    ok(&["run", "--config", &cfg, "--out-dir", dir.to_str().unwrap()]);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m["files"]["model.json"].is_string());
    assert!(m["files"]["figures/fig2.csv"].is_string());
    assert!(m.get("timings_seconds").is_none());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.json", r#"{"model":"binary"}"#);
    let out = trialoc(&["run", "--config", &bad, "--out-dir", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = trialoc(&["run", "--config", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));

    let bounds = write(tmp.path(), "b.json", r#"{"lower":[0.6,0.5,0.0,0.0],"upper":[0.9,0.9,0.1,0.1]}"#);
    let out = trialoc(&["sample-simplex", "--bounds", &bounds, "--seed", "1", "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));

    let design = write(tmp.path(), "d.csv", "p0,or,kind\n0.3,0.7,training\n0.4,0.7,training\n0.5,0.7,training\n0.3,0.9,training\n0.5,0.9,training\n");
    let mut pi = String::from("theta_id,replicate,pi\n");
    for i in 0..5 {
        for r in 0..20 {
            pi.push_str(&format!("{i},{r},0.5\n"));
        }
    }
    let pi = write(tmp.path(), "pi.csv", &pi);
    let out = trialoc(&["fit", "--pi-samples", &pi, "--design", &design, "--out", tmp.path().join("m.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failed_run_keeps_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    // every pi draw identical: Beta fitting fails after simulation succeeded
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"model":"binary","seed":3,"binary":{"p0_range":[0.25,0.3],"or_range":[0.01,0.02],"test_grid":[2,2]},
            "trial":{"replicates":20,"posterior_draws":100,"n_total":4000}}"#,
    );
    let dir = tmp.path().join("out");
    let out = trialoc(&["run", "--config", &cfg, "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fit"));
    assert!(dir.join("training_pi.csv").exists());
    let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "failed");
    assert_eq!(m["failed_stage"], "fit");
}

#[test]
fn figures_name_missing_prerequisite() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trialoc(&["figures", "--run-dir", tmp.path().to_str().unwrap(), "--id", "fig8"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`design`"));
    let out = trialoc(&["figures", "--run-dir", tmp.path().to_str().unwrap(), "--id", "fig3"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("simstudy"));
}

#[test]
fn empty_test_set_gives_header_only_figure() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "test_design.csv", "p1,p2,p3,p4,or,kind\n");
    write(tmp.path(), "test_ab.csv", "theta_id,draw,a,b\n");
    ok(&["figures", "--run-dir", tmp.path().to_str().unwrap(), "--id", "fig8"]);
    let text = fs::read_to_string(tmp.path().join("figures/fig8.csv")).unwrap();
    assert_eq!(text, "theta_id,set,p0,p1,p2,p3,p4,or,threshold,series,value\n");
}

#[test]
fn figure_schema_is_fixed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", BINARY_CONFIG);
    let dir = tmp.path().join("out");
    ok(&["run", "--config", &cfg, "--out-dir", dir.to_str().unwrap()]);
    for id in ["fig2", "fig8"] {
        let text = fs::read_to_string(dir.join(format!("figures/{id}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 11);
        assert!(lines.all(|l| l.split(',').count() == 11));
    }
    let fig2 = fs::read_to_string(dir.join("figures/fig2.csv")).unwrap();
    for series in ["sim_power", "emulated", "ci_low", "ci_high"] {
        assert_eq!(fig2.lines().filter(|l| l.ends_with(&format!(",{series},")) || l.contains(&format!(",{series},"))).count(), 9);
    }
    let fig8 = fs::read_to_string(dir.join("figures/fig8.csv")).unwrap();
    for series in ["a_hat", "a_low", "a_high", "b_hat", "b_low", "b_high"] {
        assert_eq!(fig8.lines().filter(|l| l.contains(&format!(",{series},"))).count(), 9);
    }
}

#[test]
fn ordinal_stages_compose() {
    let tmp = tempfile::tempdir().unwrap();
    let bounds = write(tmp.path(), "b.json", r#"{"lower":[0.5,0.05,0.01,0.005],"upper":[0.9,0.3,0.05,0.025]}"#);
    let f = |name: &str| tmp.path().join(name).to_str().unwrap().to_string();
    ok(&["sample-simplex", "--bounds", &bounds, "--n", "300", "--seed", "4", "--out", &f("covering.csv")]);
    let text = fs::read_to_string(f("covering.csv")).unwrap();
    assert!(text.starts_with("p1,p2,p3,p4\n"));
    assert!(text.lines().count() > 290);
    ok(&["design", "--bounds", &bounds, "--k", "5", "--or-grid", "0.7,0.85,1.0", "--seed", "5", "--covering-n", "300", "--out", &f("training_design.csv")]);
    let text = fs::read_to_string(f("training_design.csv")).unwrap();
    assert!(text.starts_with("p1,p2,p3,p4,or,kind\n"));
    assert_eq!(text.lines().count(), 16);
    ok(&["simulate", "--design", &f("training_design.csv"), "--model", "ordinal", "--replicates", "30", "--posterior-draws", "200", "--seed", "6", "--out", &f("training_pi.csv")]);
    assert_eq!(fs::read_to_string(f("training_pi.csv")).unwrap().lines().count(), 1 + 15 * 30);
    let out = trialoc(&["simulate", "--design", &f("training_design.csv"), "--model", "binary", "--seed", "6", "--out", &f("x.csv")]);
    assert_eq!(out.status.code(), Some(2));
    ok(&["fit", "--pi-samples", &f("training_pi.csv"), "--design", &f("training_design.csv"), "--out", &f("model.json")]);
    ok(&["doc", "--model", &f("model.json"), "--test", &f("training_design.csv"), "--stat", "fut", "--threshold", "0.05", "--draws", "100", "--seed", "1", "--out", &f("doc.csv")]);
    let text = fs::read_to_string(f("doc.csv")).unwrap();
    assert!(text.starts_with("p1,p2,p3,p4,or,point,ci_low,ci_high\n"));
}
