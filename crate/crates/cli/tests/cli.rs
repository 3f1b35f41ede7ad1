use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cdrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdrl")).args(args).output().unwrap()
}

fn small_config(dir: &Path, method: &str) -> String {
    let path = dir.join(format!("{method}.cfg"));
    fs::write(
        &path,
        format!(
            "env = monster_treasure\nmethod = {method}\ntotal_steps = 300\nlearning_start = 64\nbatch_size = 8\nhidden = 8\n"
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "q_mask");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = cdrl(&["train", "--config", &cfg, "--seeds", "1,2", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for seed in ["seed1", "seed2"] {
        for f in ["config.cfg", "checkpoint.cdrl", "train_log.csv"] {
            let fa = fs::read(a.join(seed).join(f)).unwrap();
            let fb = fs::read(b.join(seed).join(f)).unwrap();
            assert!(fa == fb, "{seed}/{f} differs");
        }
    }
}

#[test]
fn parallel_training_matches_sequential() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "rd");
    let seq = tmp.path().join("seq");
    let par = tmp.path().join("par");
    assert!(cdrl(&["train", "--config", &cfg, "--seeds", "3,4", "--out", s(&seq)]).status.success());
    assert!(cdrl(&["train", "--config", &cfg, "--seeds", "3,4", "--out", s(&par), "--parallel"]).status.success());
    for seed in ["seed3", "seed4"] {
        assert_eq!(
            fs::read(seq.join(seed).join("checkpoint.cdrl")).unwrap(),
            fs::read(par.join(seed).join("checkpoint.cdrl")).unwrap()
        );
    }
}

#[test]
fn zero_steps_still_writes_a_loadable_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "r_mask");
    let out = tmp.path().join("run");
    assert!(cdrl(&["train", "--config", &cfg, "--total-steps", "0", "--out", s(&out)]).status.success());
    let log = fs::read_to_string(out.join("seed0/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1);
    let o = cdrl(&["eval", "--bundle", s(&out.join("seed0")), "--episodes", "3"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("episodes 3"));
}

#[test]
fn metrics_csv_has_fixed_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "q_mask");
    let out = tmp.path().join("run");
    assert!(cdrl(&["train", "--config", &cfg, "--out", s(&out)]).status.success());
    let csv = tmp.path().join("m.csv");
    let o = cdrl(&["metrics", "--bundle", s(&out.join("seed0")), "--out", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "metric,value,n_states,seed");
    let names: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    for m in ["fidelity", "sparsity", "orthogonality", "mask_score"] {
        assert!(names.contains(&m), "{m} missing from {names:?}");
    }
}

#[test]
fn explain_writes_records_and_index() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "r_mask");
    let out = tmp.path().join("run");
    assert!(cdrl(&["train", "--config", &cfg, "--out", s(&out)]).status.success());
    let exp = tmp.path().join("exp");
    let o = cdrl(&["explain", "--bundle", s(&out.join("seed0")), "--out", s(&exp)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(exp.join("index.csv").exists());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("records "));
}

#[test]
fn error_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.cfg");
    let out = tmp.path().join("run");
    assert_eq!(cdrl(&["train", "--config", s(&missing), "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(cdrl(&["train", "--method", "bogus", "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(cdrl(&["train", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(cdrl(&["eval", "--bundle", s(&tmp.path().join("empty"))]).status.code(), Some(3));

    let cfg = small_config(tmp.path(), "rd");
    assert!(cdrl(&["train", "--config", &cfg, "--total-steps", "0", "--out", s(&out)]).status.success());
    let bundle = out.join("seed0");
    assert_eq!(cdrl(&["eval", "--bundle", s(&bundle), "--env", "pixel_grid"]).status.code(), Some(2));
    // rd has no masks: every metric cell carries the error code instead of a value.
    let csv = tmp.path().join("m.csv");
    assert!(cdrl(&["metrics", "--bundle", s(&bundle), "--out", s(&csv)]).status.success());
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(1) == Some("NoMasks")), "{text}");
}
