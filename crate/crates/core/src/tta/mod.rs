//! Clustering-based test-time augmentation over the 16 rotation patterns.
//!
//! Every pattern's prediction is rotated back into the original frame; the
//! resulting candidates of each (frame, class) cell are clustered with
//! spherical DBSCAN, each cluster is averaged into one event, and at most
//! `max_tracks` events per frame are kept, ranked by
//! `member_count * norm(mean)`.

pub mod dbscan;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accdoa::{AccdoaSequence, DetectedEvent, DEFAULT_THRESHOLD};
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureTensor};
use crate::geometry::{norm3, vec_to_dir, UnitVec3};
use crate::pipeline::{ClipIdentity, Predictor, PredictorInput};
use crate::rotation::{all_patterns, RotationPattern, N_PATTERNS};

pub use dbscan::{dbscan_sphere, NOISE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TtaConfig {
    /// Cluster radius in great-circle degrees.
    pub unify_deg: f64,
    pub min_candidates: usize,
    pub min_pts: usize,
    pub max_tracks: usize,
    pub activity_threshold: f64,
}

impl Default for TtaConfig {
    fn default() -> Self {
        TtaConfig {
            unify_deg: 15.0,
            min_candidates: 8,
            min_pts: 2,
            max_tracks: 3,
            activity_threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TtaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.unify_deg > 0.0 && self.unify_deg < 180.0) {
            return Err(Error::Config("unify_deg must be in (0, 180)".into()));
        }
        if !(1..=N_PATTERNS).contains(&self.min_candidates) {
            return Err(Error::Config("min_candidates must be in 1..=16".into()));
        }
        if self.min_pts == 0 {
            return Err(Error::Config("min_pts must be >= 1".into()));
        }
        if self.max_tracks == 0 {
            return Err(Error::Config("max_tracks must be >= 1".into()));
        }
        if !(self.activity_threshold >= 0.0 && self.activity_threshold < 1.0) {
            return Err(Error::Config("activity_threshold must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One de-rotated, activity-scaled prediction vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub vector: [f64; 3],
    pub pattern_id: u8,
    /// Index of the model that produced it (0 for a single model).
    pub model: usize,
}

/// Candidates per (label frame, class) cell. Each (model, pattern) pair
/// contributes at most once to a cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSet {
    cells: BTreeMap<(usize, usize), Vec<Candidate>>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, frame: usize, class_id: usize) -> &[Candidate] {
        self.cells.get(&(frame, class_id)).map_or(&[], |v| v.as_slice())
    }

    /// Cells in (frame, class) order.
    pub fn cells(&self) -> impl Iterator<Item = ((usize, usize), &[Candidate])> {
        self.cells.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn push(&mut self, frame: usize, class_id: usize, candidate: Candidate) -> Result<()> {
        let cell = self.cells.entry((frame, class_id)).or_default();
        if cell
            .iter()
            .any(|c| c.model == candidate.model && c.pattern_id == candidate.pattern_id)
        {
            return Err(Error::Invalid(format!(
                "duplicate candidate from model {} pattern {} at frame {frame} class {class_id}",
                candidate.model, candidate.pattern_id
            )));
        }
        cell.push(candidate);
        Ok(())
    }
}

/// Candidates of one model's per-pattern predictions.
pub fn collect_candidates(
    predictions: &[(RotationPattern, AccdoaSequence)],
    threshold: f64,
) -> Result<CandidateSet> {
    collect_ensemble(&[predictions.to_vec()], threshold)
}

/// Candidates of several models, each given as per-pattern predictions.
/// Every vector with norm above `threshold` is mapped back by the inverse
/// of its pattern.
pub fn collect_ensemble(
    models: &[Vec<(RotationPattern, AccdoaSequence)>],
    threshold: f64,
) -> Result<CandidateSet> {
    let dims = models
        .iter()
        .flatten()
        .map(|(_, s)| (s.frames(), s.n_classes()))
        .next();
    let mut set = CandidateSet::default();
    for (model, preds) in models.iter().enumerate() {
        let mut seen = [false; N_PATTERNS];
        for (pattern, seq) in preds {
            if std::mem::replace(&mut seen[pattern.id() as usize], true) {
                return Err(Error::Invalid(format!(
                    "model {model}: pattern {} given twice",
                    pattern.id()
                )));
            }
            if Some((seq.frames(), seq.n_classes())) != dims {
                return Err(Error::Shape(format!(
                    "model {model} pattern {}: prediction dims differ",
                    pattern.id()
                )));
            }
            let inv = pattern.inverse();
            for frame in 0..seq.frames() {
                for class_id in 0..seq.n_classes() {
                    let v = seq.vector(frame, class_id);
                    if norm3(v) > threshold {
                        set.push(
                            frame,
                            class_id,
                            Candidate {
                                vector: inv.apply_to_vec(v),
                                pattern_id: pattern.id(),
                                model,
                            },
                        )?;
                    }
                }
            }
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub members: Vec<[f64; 3]>,
    pub mean: [f64; 3],
    pub weight: f64,
}

/// Clusters of one cell; empty below `min_candidates`.
pub fn cluster_cell(candidates: &[Candidate], config: &TtaConfig) -> Vec<Cluster> {
    if candidates.len() < config.min_candidates {
        return Vec::new();
    }
    let units: Vec<UnitVec3> = candidates
        .iter()
        .filter_map(|c| UnitVec3::from_vec(c.vector).ok())
        .collect();
    if units.len() != candidates.len() {
        return Vec::new();
    }
    let labels = dbscan_sphere(&units, config.unify_deg, config.min_pts);
    let n_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    let mut clusters = Vec::new();
    for k in 0..n_clusters {
        let members: Vec<[f64; 3]> = candidates
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l == k as i32)
            .map(|(c, _)| c.vector)
            .collect();
        if members.len() < config.min_pts {
            continue;
        }
        let n = members.len() as f64;
        let mean = [0, 1, 2].map(|i| members.iter().map(|m| m[i]).sum::<f64>() / n);
        let weight = n * norm3(mean);
        if weight > 0.0 {
            clusters.push(Cluster {
                members,
                mean,
                weight,
            });
        }
    }
    clusters
}

/// Aggregated events sorted by (frame, class); within a frame only the
/// `max_tracks` heaviest clusters survive.
pub fn aggregate(candidates: &CandidateSet, config: &TtaConfig) -> Vec<DetectedEvent> {
    let mut by_frame: BTreeMap<usize, Vec<(f64, DetectedEvent)>> = BTreeMap::new();
    for ((frame, class_id), cell) in candidates.cells() {
        for cluster in cluster_cell(cell, config) {
            let Ok(direction) = vec_to_dir(cluster.mean) else {
                continue;
            };
            by_frame.entry(frame).or_default().push((
                cluster.weight,
                DetectedEvent {
                    frame,
                    class_id,
                    direction,
                    activity: norm3(cluster.mean),
                },
            ));
        }
    }
    let mut out = Vec::new();
    for events in by_frame.into_values() {
        let mut order: Vec<usize> = (0..events.len()).collect();
        order.sort_by(|&a, &b| events[b].0.total_cmp(&events[a].0));
        order.truncate(config.max_tracks);
        order.sort_unstable();
        out.extend(order.into_iter().map(|i| events[i].1));
    }
    out
}

/// Features of the clip under each of the 16 patterns.
pub fn rotated_features(
    clip: &AudioClip,
    extractor: &FeatureExtractor,
) -> Result<Vec<(RotationPattern, FeatureTensor)>> {
    all_patterns()
        .par_iter()
        .map(|p| Ok((*p, extractor.extract(&p.apply_to_audio(clip))?)))
        .collect()
}

/// Runs `predictor` on every rotated version of the clip.
pub fn predict_rotations(
    predictor: &dyn Predictor,
    clip_name: &str,
    features: &[(RotationPattern, FeatureTensor)],
) -> Result<Vec<(RotationPattern, AccdoaSequence)>> {
    features
        .par_iter()
        .map(|(pattern, f)| {
            let clip = ClipIdentity {
                name: clip_name.to_string(),
                pattern: *pattern,
            };
            predictor
                .predict(&PredictorInput {
                    clip: &clip,
                    features: f,
                })
                .map(|seq| (*pattern, seq))
                .map_err(|e| Error::Predictor {
                    pattern: pattern.id(),
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Full TTA: rotate, predict with every model, de-rotate, cluster and
/// aggregate.
pub fn run_tta(
    predictors: &[&dyn Predictor],
    clip_name: &str,
    clip: &AudioClip,
    extractor: &FeatureExtractor,
    config: &TtaConfig,
) -> Result<Vec<DetectedEvent>> {
    config.validate()?;
    if predictors.is_empty() {
        return Err(Error::Config("TTA needs at least one predictor".into()));
    }
    let features = rotated_features(clip, extractor)?;
    let models = predictors
        .iter()
        .map(|p| predict_rotations(*p, clip_name, &features))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&collect_ensemble(&models, config.activity_threshold)?, config))
}
