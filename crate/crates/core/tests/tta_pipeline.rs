mod common;

use std::collections::BTreeMap;

use rand::Rng;

use seld_core::accdoa::{decode, DetectedEvent};
use seld_core::features::{FeatureConfig, FeatureExtractor, FeatureTensor, STFT_FRAMES_PER_LABEL};
use seld_core::geometry::angular_distance;
use seld_core::labels::{ClipAnnotation, EventLabel};
use seld_core::manifest::DatasetManifest;
use seld_core::metrics::MetricConfig;
use seld_core::pipeline::{
    run_pipeline, ConstantPredictor, OracleConfig, OraclePredictor, Predictor, PredictorSpec,
    RunConfig,
};
use seld_core::rotation::all_patterns;
use seld_core::tta::{aggregate, collect_candidates, predict_rotations, run_tta, TtaConfig};

use common::{library, random_scene, render, rng, uniform_direction, N_CLASSES};

fn rotate_annotation(ann: &ClipAnnotation, p: &seld_core::rotation::RotationPattern) -> ClipAnnotation {
    ClipAnnotation::new(
        ann.events()
            .iter()
            .map(|e| EventLabel {
                direction: p.apply_to_direction(e.direction),
                ..*e
            })
            .collect(),
        ann.n_classes(),
    )
    .unwrap()
}

fn assert_same_events(a: &[DetectedEvent], b: &[DetectedEvent], tol_deg: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert_eq!((x.frame, x.class_id), (y.frame, y.class_id));
        assert!(angular_distance(x.direction, y.direction) <= tol_deg);
        assert!((x.activity - y.activity).abs() < 1e-9);
    }
}

#[test]
fn tta_is_rotation_equivariant() {
    let lib = library(3);
    let (clip, ann) = render(&random_scene(3, 5.0, &lib), &lib);
    let extractor = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let cfg = TtaConfig::default();
    for q in [all_patterns()[5], all_patterns()[14]] {
        let oracle = OraclePredictor::new(
            BTreeMap::from([
                ("clip".to_string(), ann.clone()),
                ("rotated".to_string(), rotate_annotation(&ann, &q)),
            ]),
            OracleConfig::default(),
        )
        .unwrap();
        let base = run_tta(&[&oracle], "clip", &clip, &extractor, &cfg).unwrap();
        let rotated = run_tta(&[&oracle], "rotated", &q.apply_to_audio(&clip), &extractor, &cfg).unwrap();
        let inv = q.inverse();
        let back: Vec<DetectedEvent> = rotated
            .iter()
            .map(|e| DetectedEvent {
                direction: inv.apply_to_direction(e.direction),
                ..*e
            })
            .collect();
        assert_same_events(&base, &back, 1e-6);
        assert_eq!(base.len(), ann.events().len());
    }
}

#[test]
fn zero_jitter_tta_reproduces_annotation() {
    let lib = library(8);
    let (clip, ann) = render(&random_scene(8, 5.0, &lib), &lib);
    let extractor = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let oracle = OraclePredictor::new(BTreeMap::from([("c".to_string(), ann.clone())]), OracleConfig::default()).unwrap();
    let events = run_tta(&[&oracle], "c", &clip, &extractor, &TtaConfig::default()).unwrap();
    assert_eq!(events.len(), ann.events().len());
    for (e, t) in events.iter().zip(ann.events()) {
        assert_eq!((e.frame, e.class_id), (t.frame, t.class_id));
        assert!(angular_distance(e.direction, t.direction) < 1e-6);
    }
}

#[test]
fn constant_zero_predictor_gives_no_events() {
    let lib = library(9);
    let (clip, _) = render(&random_scene(9, 5.0, &lib), &lib);
    let extractor = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let zero = ConstantPredictor { n_classes: N_CLASSES, vector: [0.0; 3] };
    assert!(run_tta(&[&zero], "c", &clip, &extractor, &TtaConfig::default()).unwrap().is_empty());
}

#[test]
fn predictor_errors_carry_pattern() {
    let lib = library(9);
    let (clip, _) = render(&random_scene(9, 5.0, &lib), &lib);
    let extractor = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let oracle = OraclePredictor::new(BTreeMap::new(), OracleConfig::default()).unwrap();
    let err = run_tta(&[&oracle], "missing", &clip, &extractor, &TtaConfig::default()).unwrap_err();
    assert!(matches!(err, seld_core::Error::Predictor { .. }), "{err}");
}

#[test]
fn jittered_aggregate_never_worse_than_worst_candidate() {
    let cfg = TtaConfig::default();
    for trial in 0..100u64 {
        let mut r = rng(trial);
        let events: Vec<EventLabel> = (0..6)
            .map(|frame| EventLabel {
                frame,
                class_id: r.random_range(0..N_CLASSES),
                track_id: 0,
                direction: uniform_direction(&mut r),
            })
            .collect();
        let ann = ClipAnnotation::new(events, N_CLASSES).unwrap();
        let oracle = OraclePredictor::new(
            BTreeMap::from([("t".to_string(), ann.clone())]),
            OracleConfig { jitter_deg: 3.0, activity_emitted: 0.9, seed: trial },
        )
        .unwrap();
        let dummy = FeatureTensor::new(ndarray::Array3::zeros((7, 6 * STFT_FRAMES_PER_LABEL, 8))).unwrap();
        let inputs: Vec<_> = all_patterns().iter().map(|p| (*p, dummy.clone())).collect();
        let preds = predict_rotations(&oracle, "t", &inputs).unwrap();
        let set = collect_candidates(&preds, cfg.activity_threshold).unwrap();
        let out = aggregate(&set, &cfg);
        assert_eq!(out.len(), 6);
        for (e, truth) in out.iter().zip(ann.events()) {
            let worst = set
                .cell(e.frame, e.class_id)
                .iter()
                .map(|c| angular_distance(seld_core::geometry::vec_to_dir(c.vector).unwrap(), truth.direction))
                .fold(0.0, f64::max);
            assert!(worst <= 3.0 + 1e-9);
            assert!(angular_distance(e.direction, truth.direction) <= worst + 1e-9);
        }
    }
}

fn run_config(manifest: std::path::PathBuf, predictor: PredictorSpec, tta: Option<TtaConfig>) -> RunConfig {
    RunConfig {
        manifest,
        predictor,
        features: FeatureConfig::default(),
        augment: None,
        tta,
        metrics: MetricConfig::default(),
        threshold: 0.5,
        seed: 0,
    }
}

#[test]
fn direct_oracle_pipeline_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::write_dataset(dir.path(), 3, 31);
    let report = run_pipeline(&run_config(manifest, PredictorSpec::Oracle(OracleConfig::default()), None)).unwrap();
    let s = report.scores.unwrap();
    assert_eq!((s.er20, s.f20, s.lr_cd), (0.0, 1.0, 1.0));
    assert!(s.le_cd < 1e-9);
}

#[test]
fn large_jitter_crosses_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::write_dataset(dir.path(), 3, 32);
    let oracle = OracleConfig { jitter_deg: 25.0, ..Default::default() };
    let report = run_pipeline(&run_config(manifest, PredictorSpec::Oracle(oracle), None)).unwrap();
    let s = report.scores.unwrap();
    assert!(s.f20 < 1.0);
    assert_eq!(s.lr_cd, 1.0);
    assert!(s.le_cd > 0.0 && s.le_cd <= 25.0);
}

#[test]
fn failing_entries_are_reported_and_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = common::write_dataset(dir.path(), 3, 33);
    let mut m = DatasetManifest::load(&manifest_path).unwrap();
    m.entries[1].clip_path = "missing.wav".into();
    m.entries[2].label_path = "missing.csv".into();
    m.save(&manifest_path).unwrap();
    let report = run_pipeline(&run_config(manifest_path, PredictorSpec::Oracle(OracleConfig::default()), None)).unwrap();
    assert_eq!(report.entries, 3);
    assert_eq!(report.evaluated, vec!["scene00.wav".to_string()]);
    assert_eq!(report.failures.len(), 2);
    assert_eq!(report.scores.unwrap().f20, 1.0);
}

#[test]
fn constant_pipeline_scores_as_empty() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::write_dataset(dir.path(), 2, 34);
    let report = run_pipeline(&run_config(
        manifest,
        PredictorSpec::Constant { vector: [0.0; 3] },
        Some(TtaConfig::default()),
    ))
    .unwrap();
    let s = report.scores.unwrap();
    assert_eq!((s.er20, s.f20, s.le_cd, s.lr_cd), (1.0, 0.0, 180.0, 0.0));
}

#[test]
fn external_files_flow_through_tta() {
    let lib = library(12);
    let (clip, ann) = render(&random_scene(12, 5.0, &lib), &lib);
    let dir = tempfile::tempdir().unwrap();
    let oracle = OraclePredictor::new(BTreeMap::from([("scene.wav".to_string(), ann.clone())]), OracleConfig::default()).unwrap();
    for p in all_patterns() {
        let id = seld_core::pipeline::ClipIdentity { name: "scene.wav".into(), pattern: p };
        oracle.oracle_predict(&id, 50).unwrap().save(&dir.path().join(format!("scene.p{:02}.acc", p.id()))).unwrap();
    }
    let ext = seld_core::pipeline::ExternalFilePredictor::new(dir.path());
    let extractor = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    // two copies of the same model ensemble into 32 candidates per cell
    let models: [&dyn Predictor; 2] = [&ext, &ext];
    let events = run_tta(&models, "scene.wav", &clip, &extractor, &TtaConfig::default()).unwrap();
    let direct = decode(&seld_core::accdoa::encode(&ann, 50).unwrap(), 0.5);
    assert_eq!(events.len(), direct.len());
    for (a, b) in events.iter().zip(&direct) {
        assert_eq!((a.frame, a.class_id), (b.frame, b.class_id));
        // stored as f32
        assert!(angular_distance(a.direction, b.direction) < 1e-4);
    }
}
