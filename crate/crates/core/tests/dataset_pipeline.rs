mod common;

use std::collections::BTreeSet;

use lgsim::dataset_io::*;
use lgsim::sampling::SamplerConfig;
use lgsim::scene_sim::SceneConfig;

fn all_modes() -> BTreeSet<GenerationMode> {
    GenerationMode::ALL.into_iter().collect()
}

#[test]
fn exported_files_match_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let scenes: Vec<SceneConfig> = common::suite_configs().into_iter().take(2).collect();
    let manifest = export_dataset(&scenes, &all_modes(), 1, &SamplerConfig::default(), dir.path()).unwrap();
    let loaded = DatasetManifest::load(dir.path()).unwrap();
    assert_eq!(loaded, manifest);
    assert_eq!(loaded.modes, GenerationMode::ALL.to_vec());
    for f in &loaded.frames {
        let scan = read_velodyne(&dir.path().join(&f.scan.path)).unwrap();
        assert_eq!(scan.len(), f.scan.points);
        let labels = read_labels(&dir.path().join(&f.labels)).unwrap();
        assert_eq!(labels.len(), f.num_lidar_pts.len());
        assert_eq!(f.clouds.len(), 3);
        // carla-origin is the in-image part of the stored scan
        assert!(f.cloud(GenerationMode::CarlaOrigin).unwrap().points <= f.scan.points);
    }
}

#[test]
fn resampling_one_mode_replaces_its_clouds() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = vec![common::suite_configs().remove(0)];
    let mut manifest = simulate_dataset(&scenes, 4, dir.path()).unwrap();
    assert!(manifest.modes.is_empty());
    let cfg = SamplerConfig::default();
    sample_dataset(&mut manifest, dir.path(), GenerationMode::LidarGuided, &cfg).unwrap();
    let once = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
    sample_dataset(&mut manifest, dir.path(), GenerationMode::LidarGuided, &cfg).unwrap();
    let twice = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(once, twice);
    assert_eq!(manifest.frames[0].clouds.len(), 1);
}

#[test]
fn empty_scene_list_gives_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = export_dataset(&[], &all_modes(), 0, &SamplerConfig::default(), dir.path()).unwrap();
    assert!(manifest.frames.is_empty());
    let loaded = DatasetManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded, manifest);
}

#[test]
fn scene_without_objects_still_exports() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = vec![SceneConfig::default()];
    let manifest = export_dataset(&scenes, &all_modes(), 0, &SamplerConfig::default(), dir.path()).unwrap();
    let f = &manifest.frames[0];
    assert!(f.num_lidar_pts.is_empty());
    assert_eq!(std::fs::read_to_string(dir.path().join(&f.labels)).unwrap(), "");
    assert!(f.scan.points > 0);
}

#[test]
fn truncated_scan_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = vec![common::suite_configs().remove(0)];
    let manifest = simulate_dataset(&scenes, 0, dir.path()).unwrap();
    let scan = dir.path().join(&manifest.frames[0].scan.path);
    let bytes = std::fs::read(&scan).unwrap();
    std::fs::write(&scan, &bytes[..bytes.len() - 16]).unwrap();
    let err = DatasetManifest::load(dir.path()).unwrap_err();
    assert!(matches!(err, DatasetError::MalformedFile { .. }), "{err}");
}

#[test]
fn random_velodyne_files_round_trip() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    let dir = tempfile::tempdir().unwrap();
    for i in 0..10 {
        let frame = VelodyneFrame {
            points: (0..rng.gen_range(0..500))
                .map(|_| [rng.gen(), rng.gen(), rng.gen(), rng.gen()])
                .collect(),
        };
        let path = dir.path().join(format!("{i}.bin"));
        write_velodyne(&frame, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let back = read_velodyne(&path).unwrap();
        assert_eq!(back, frame);
        write_velodyne(&back, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }
}
