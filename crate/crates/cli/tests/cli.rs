mod common;

use serde_json::json;

fn code(out: &std::process::Output) -> Option<i32> {
    out.status.code()
}

#[test]
fn help_lists_every_command() {
    let out = common::xprobe(&["--help"]);
    assert_eq!(code(&out), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for command in ["mse", "subexp", "saliency", "crosstest", "report"] {
        assert!(text.contains(command), "{command} missing from help");
    }
}

#[test]
fn missing_model_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = common::small_run(&dir.path().join("out"));
    config["models"] = json!([{"kind": "onnx", "config": "nowhere.json"}]);
    let path = common::write_config(dir.path(), "run.json", &config);
    let out = common::xprobe(&["mse", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.json"));
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = common::small_run(&dir.path().join("out"));
    config["beam_wdith"] = json!(3);
    let path = common::write_config(dir.path(), "run.json", &config);
    assert_eq!(code(&common::xprobe(&["mse", "--config", path.to_str().unwrap()])), Some(2));
}

#[test]
fn bad_grid_flag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = common::write_config(dir.path(), "run.json", &common::small_run(&dir.path().join("out")));
    let out = common::xprobe(&["mse", "--config", path.to_str().unwrap(), "--grid", "3by3"]);
    assert_eq!(code(&out), Some(2));
}

#[test]
fn report_before_mse_asks_for_mse() {
    let dir = tempfile::tempdir().unwrap();
    let path = common::write_config(dir.path(), "run.json", &common::small_run(&dir.path().join("out")));
    let out = common::xprobe(&["report", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("xprobe mse"));
}

#[test]
fn corrupt_explanation_file_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let path = common::write_config(dir.path(), "run.json", &common::small_run(&out_dir));
    common::run_ok("mse", &path, &[]).unwrap();
    let file = out_dir.join("conj").join("mses.jsonl");
    let mut text = std::fs::read_to_string(&file).unwrap();
    text.push_str("{\"image_id\": \n");
    let bad_line = text.lines().count();
    std::fs::write(&file, text).unwrap();

    let out = common::xprobe(&["subexp", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(&format!("line {bad_line}")), "{stderr}");
}

#[test]
fn missing_attribution_map_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = common::small_run(&dir.path().join("out"));
    config["saliency"]["maps"] = json!({"source": "files", "dir": "maps"});
    std::fs::create_dir_all(dir.path().join("maps/conj")).unwrap();
    let path = common::write_config(dir.path(), "run.json", &config);
    let out = common::xprobe(&["saliency", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("syn0000"));
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = common::write_config(dir.path(), "run.json", &common::small_run(&dir.path().join("out")));
    let elsewhere = dir.path().join("elsewhere");
    common::run_ok("mse", &path, &["--out", elsewhere.to_str().unwrap(), "--beam-width", "3", "--p-h", "0.8"]).unwrap();
    assert!(elsewhere.join("add/mses.jsonl").is_file());
    assert!(!dir.path().join("out").exists());
}
