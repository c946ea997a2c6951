use std::process::Command;

fn synthfetal() -> Command {
    Command::new(env!("CARGO_BIN_EXE_synthfetal"))
}

#[test]
fn missing_input_reports_json_error_and_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = synthfetal()
        .args(["generate", empty.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let line = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert!(v["error"].is_string() && v["message"].is_string(), "{v}");
}

#[test]
fn bad_flag_is_a_usage_error() {
    let out = synthfetal().args(["generate", "--mode", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "UsageError");
}

#[test]
fn interpolate_writes_each_alpha() {
    use synthfetal_core::soup::{read_checkpoint, write_checkpoint, Checkpoint, Tensor};
    let tmp = tempfile::tempdir().unwrap();
    let ck = |v: f32| Checkpoint::new(vec![Tensor::new("w", vec![2], vec![v, -v]).unwrap()], vec![]).unwrap();
    let (a, b) = (tmp.path().join("a.wsoup"), tmp.path().join("b.wsoup"));
    write_checkpoint(&ck(0.0), &a).unwrap();
    write_checkpoint(&ck(4.0), &b).unwrap();
    let out = tmp.path().join("soups");
    let status = synthfetal()
        .args(["interpolate", a.to_str().unwrap(), b.to_str().unwrap(), "--alphas", "0,0.25,1"])
        .args(["--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let mid = read_checkpoint(out.join("interp_alpha0.250.wsoup")).unwrap();
    assert_eq!(mid.tensors()[0].data, vec![1.0, -1.0]);
    let end = read_checkpoint(out.join("interp_alpha1.000.wsoup")).unwrap();
    assert_eq!(end.tensors(), ck(4.0).tensors());
    assert_eq!(end.meta("alpha"), Some("1"));
}
