#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use blockcanon::BlockMatrix;
use blockcanon_cli::commands::{simulate, SimulateOptions};
use blockcanon_cli::panel::Panel;

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_blockcanon"))
        .args(args)
        .output()
        .expect("binary runs");
    Output {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub const RECOVERY_SEED: u64 = 2024;
pub const RECOVERY_OBS: usize = 5000;

/// Labels `g.s` for 4 groups of 3 subgroups, one per block of the
/// recovery fixture.
pub fn recovery_labels() -> Vec<String> {
    (1..=4)
        .flat_map(|g| (1..=3).map(move |s| format!("{g}.{s}")))
        .collect()
}

pub fn recovery_truth() -> BlockMatrix {
    serde_json::from_reader(std::fs::File::open(fixture("recovery_truth.json")).unwrap()).unwrap()
}

/// Write the recovery panel and its group map into `dir`.
pub fn write_recovery_panel(dir: &Path) -> (PathBuf, PathBuf) {
    let opts = SimulateOptions {
        n_obs: RECOVERY_OBS,
        seed: RECOVERY_SEED,
        block_labels: Some(recovery_labels()),
    };
    let (panel, map) = simulate(&recovery_truth(), &opts).unwrap();
    write_panel(dir, &panel, &map.to_csv(&panel.asset_ids).unwrap())
}

pub fn write_panel(dir: &Path, panel: &Panel, groups_csv: &str) -> (PathBuf, PathBuf) {
    let returns = dir.join("returns.csv");
    let groups = dir.join("groups.csv");
    panel.write(std::fs::File::create(&returns).unwrap()).unwrap();
    std::fs::write(&groups, groups_csv).unwrap();
    (returns, groups)
}
