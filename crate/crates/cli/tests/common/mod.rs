//! Helpers for driving the `ambig` binary against the bundled fixture.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ambig"))
}

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/two_domain")
}

pub fn fixture_config() -> PathBuf {
    fixture_dir().join("pipeline.toml")
}

pub fn pipeline(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .args(["--log-level", "warn", "pipeline", "all", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("spawn ambig")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Relative path -> bytes for every file below `root`.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, acc);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/");
                acc.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

/// Disambiguation accuracy recorded in `scores/<t>.<domain>.json`.
pub fn accuracy(out: &Path, template: &str, domain: &str) -> Option<f64> {
    let raw = fs::read_to_string(out.join(format!("scores/{template}.{domain}.json"))).unwrap();
    let v: serde_json::Value = serde_json::from_str(&raw).unwrap();
    v["disamb"]["accuracy"].as_f64()
}
