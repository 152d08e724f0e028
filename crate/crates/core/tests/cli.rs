use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfdispatch"))
}

#[test]
fn eval_writes_per_seed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["eval", "--dispatcher", "res", "--seed", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("RES"));
    assert!(dir.path().join("RES-seed3").join("summary.csv").exists());
}

#[test]
fn mfq_emits_jsonl_report() {
    let out = bin().args(["mfq", "--updates", "3000", "--seed", "2"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["updates_run"], 3000);
}

#[test]
fn bad_input_fails_cleanly() {
    let out = bin().args(["eval", "--preset", "atlantis"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = bin().args(["compare", "--with", "RES,NOPE"]).output().unwrap();
    assert!(!out.status.success());
}
