#![allow(dead_code)]

use std::path::{Path, PathBuf};

use lgsim::scene_sim::SceneConfig;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// The committed scene suite, sorted by file name.
pub fn suite() -> Vec<(String, SceneConfig)> {
    let dir = data_dir().join("scenes");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .expect("scene suite directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, SceneConfig::load(&p).expect("suite scene parses"))
        })
        .collect()
}

pub fn suite_configs() -> Vec<SceneConfig> {
    suite().into_iter().map(|(_, c)| c).collect()
}
