#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn xprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xprobe"))
        .args(args)
        .env_remove("XPROBE_CACHE_DIR")
        .output()
        .expect("spawn xprobe")
}

/// Runs `xprobe <command> --config <config>`; the error carries stderr.
pub fn run_ok(command: &str, config: &Path, extra: &[&str]) -> Result<(), String> {
    let mut args = vec![command, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = xprobe(&args);
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "xprobe {command} failed ({:?}): {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

pub fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path
}

/// Three small synthetic models over a 3x3 grid.
pub fn synthetic_models() -> Value {
    json!([
        {"kind": "synthetic", "name": "conj", "spec": {"kind": "conjunctive", "required": [0, 4], "hi": 0.95, "lo": 0.05}},
        {"kind": "synthetic", "name": "disj", "spec": {"kind": "disjunctive", "groups": [[0, 1], [7, 8]], "hi": 0.9, "lo": 0.1}},
        {"kind": "synthetic", "name": "add", "spec": {"kind": "additive", "weights": [0.3, 0.1, 0.1, 0.05, 0.2, 0.05, 0.1, 0.05, 0.05], "squash": "clamp"}}
    ])
}

pub fn small_run(out: &Path) -> Value {
    json!({
        "dataset": {"synthetic": {"count": 4, "channels": 1, "blank_max": 2}},
        "models": synthetic_models(),
        "input_size": 12,
        "grid": {"rows": 3, "cols": 3},
        "beam": {"beam_width": 20},
        "saliency": {"steps": 9, "maps": {"source": "randomized", "n_masks": 100, "cell_rows": 3, "cell_cols": 3}},
        "output_dir": out,
        "seed": 7
    })
}

/// Every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), bytes);
            }
        }
    }
    files
}
