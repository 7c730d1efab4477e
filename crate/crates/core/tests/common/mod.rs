//! Scene and dataset builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seld_core::audio::{write_foa_wav, AudioClip};
use seld_core::emulator::{
    mix_scene, LibrarySample, SampleLibrary, SceneEvent, SceneSpec, SrirSynthConfig,
};
use seld_core::geometry::Direction;
use seld_core::labels::{write_labels, ClipAnnotation};
use seld_core::manifest::{DatasetManifest, ManifestEntry, Origin};

pub const SR: u32 = 24_000;
pub const N_CLASSES: usize = 13;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_direction(rng: &mut impl Rng, max_el: f64) -> Direction {
    Direction::new(rng.random_range(-180.0..180.0), rng.random_range(-max_el..=max_el)).unwrap()
}

/// Uniform on the sphere.
pub fn uniform_direction(rng: &mut impl Rng) -> Direction {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let az: f64 = rng.random_range(-180.0..180.0);
    Direction::new(az, z.asin().to_degrees()).unwrap()
}

pub fn noise(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-0.5..0.5)).collect()
}

/// Two white-noise samples per class, 0.4 to 1.2 s long.
pub fn library(seed: u64) -> SampleLibrary {
    let mut r = rng(seed);
    let mut samples = BTreeMap::new();
    for class_id in 0..N_CLASSES {
        for k in 0..2 {
            let len = r.random_range((0.4 * SR as f64) as usize..(1.2 * SR as f64) as usize);
            samples.insert(
                format!("c{class_id:02}_{k}"),
                LibrarySample {
                    class_id,
                    data: noise(&mut r, len),
                },
            );
        }
    }
    SampleLibrary::new(SR, samples).unwrap()
}

/// A scene with up to three concurrent events. Each of three slots draws
/// classes from its own disjoint range and leaves at least 0.25 s between
/// events, so no class overlaps itself.
pub fn random_scene(seed: u64, duration_s: f64, library: &SampleLibrary) -> SceneSpec {
    let mut r = rng(seed ^ 0x5eed);
    let ranges = [0..4, 4..8, 8..N_CLASSES];
    let mut events = Vec::new();
    for range in ranges {
        let mut t = r.random_range(0.0..0.6);
        loop {
            let class_id = r.random_range(range.clone());
            let sample_id = format!("c{class_id:02}_{}", r.random_range(0..2));
            let len = library.samples[&sample_id].data.len() as f64 / SR as f64;
            if t + len > duration_s {
                break;
            }
            events.push(SceneEvent {
                class_id,
                sample_id,
                onset_s: (t * 1000.0).round() / 1000.0,
                direction: random_direction(&mut r, 70.0),
            });
            t += len + r.random_range(0.25..0.8);
        }
    }
    SceneSpec {
        duration_s,
        events,
        snr_db: 20.0,
        seed,
        n_classes: N_CLASSES,
    }
}

pub fn render(spec: &SceneSpec, library: &SampleLibrary) -> (AudioClip, ClipAnnotation) {
    mix_scene(spec, library, &SrirSynthConfig::default()).unwrap()
}

/// Renders `n` scenes into `dir` and writes `manifest.json`; returns its path.
pub fn write_dataset(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let lib = library(seed);
    let mut entries = Vec::new();
    for i in 0..n {
        let spec = random_scene(seed + i as u64, 5.0, &lib);
        let (clip, ann) = render(&spec, &lib);
        let clip_path = format!("scene{i:02}.wav");
        let label_path = format!("scene{i:02}.csv");
        write_foa_wav(&dir.join(&clip_path), &clip).unwrap();
        write_labels(&ann, &dir.join(&label_path)).unwrap();
        entries.push(ManifestEntry {
            clip_path,
            label_path,
            origin: Origin::Emulated,
            fold_tag: None,
            room_tag: None,
            class_id: None,
            duration_s: spec.duration_s,
        });
    }
    let path = dir.join("manifest.json");
    DatasetManifest::new(entries).unwrap().save(&path).unwrap();
    path
}
