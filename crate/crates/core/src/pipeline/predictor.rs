//! The predictor contract and its built-in implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::accdoa::{encode, AccdoaSequence};
use crate::error::{Error, Result};
use crate::features::FeatureTensor;
use crate::geometry::{norm3, Direction};
use crate::labels::ClipAnnotation;
use crate::rotation::RotationPattern;

use super::derive_seed;

/// Which clip, under which rotation pattern, is being predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipIdentity {
    pub name: String,
    pub pattern: RotationPattern,
}

pub struct PredictorInput<'a> {
    pub clip: &'a ClipIdentity,
    pub features: &'a FeatureTensor,
}

/// Maps a `[7 x T x M]` feature tensor to an ACCDOA sequence of
/// `floor(T / 4)` label frames with components in `[-1, 1]`.
pub trait Predictor: Send + Sync {
    fn predict(&self, input: &PredictorInput<'_>) -> Result<AccdoaSequence>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub jitter_deg: f64,
    pub activity_emitted: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            jitter_deg: 0.0,
            activity_emitted: 1.0,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_deg >= 0.0 && self.jitter_deg < 90.0) {
            return Err(Error::Config("oracle jitter_deg must be in [0, 90)".into()));
        }
        if !(self.activity_emitted > 0.0 && self.activity_emitted <= 1.0) {
            return Err(Error::Config("oracle activity_emitted must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Rotates `v` about `axis` (unit) by `angle` radians.
fn rodrigues(v: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let [kx, ky, kz] = axis;
    let cross = [ky * v[2] - kz * v[1], kz * v[0] - kx * v[2], kx * v[1] - ky * v[0]];
    let dot = kx * v[0] + ky * v[1] + kz * v[2];
    std::array::from_fn(|i| v[i] * c + cross[i] * s + axis[i] * dot * (1.0 - c))
}

fn random_axis(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = norm3(v);
        if n > 1e-9 {
            return v.map(|c| c / n);
        }
    }
}

/// Test double that answers with the ground truth, transformed by the
/// clip's rotation pattern and optionally perturbed.
pub struct OraclePredictor {
    annotations: BTreeMap<String, ClipAnnotation>,
    config: OracleConfig,
}

impl OraclePredictor {
    pub fn new(annotations: BTreeMap<String, ClipAnnotation>, config: OracleConfig) -> Result<Self> {
        config.validate()?;
        Ok(OraclePredictor {
            annotations,
            config,
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    /// The oracle's answer for `clip` with `label_frames` output frames.
    pub fn oracle_predict(&self, clip: &ClipIdentity, label_frames: usize) -> Result<AccdoaSequence> {
        let ann = self
            .annotations
            .get(&clip.name)
            .ok_or_else(|| Error::UnknownClip(clip.name.clone()))?;
        // validates collisions and frame range
        encode(ann, label_frames)?;
        let mut seq = AccdoaSequence::zeros(label_frames, ann.n_classes());
        for e in ann.events() {
            let mut v = clip.pattern.apply_to_direction(e.direction).to_unit().to_array();
            if self.config.jitter_deg > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    self.config.seed,
                    &[
                        clip.name.as_bytes(),
                        &[clip.pattern.id()],
                        &(e.frame as u64).to_le_bytes(),
                        &(e.class_id as u64).to_le_bytes(),
                    ],
                ));
                let angle = rng.random_range(0.0..=self.config.jitter_deg).to_radians();
                v = rodrigues(v, random_axis(&mut rng), angle);
            }
            seq.set_vector(e.frame, e.class_id, v.map(|c| c * self.config.activity_emitted));
        }
        Ok(seq)
    }
}

impl Predictor for OraclePredictor {
    fn predict(&self, input: &PredictorInput<'_>) -> Result<AccdoaSequence> {
        self.oracle_predict(input.clip, input.features.label_frames())
    }
}

/// Emits the same vector for every frame and class.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPredictor {
    pub n_classes: usize,
    pub vector: [f64; 3],
}

impl Predictor for ConstantPredictor {
    fn predict(&self, input: &PredictorInput<'_>) -> Result<AccdoaSequence> {
        if self.vector.iter().any(|c| !(-1.0..=1.0).contains(c)) {
            return Err(Error::Config("constant vector components must be in [-1, 1]".into()));
        }
        let mut seq = AccdoaSequence::zeros(input.features.label_frames(), self.n_classes);
        for f in 0..seq.frames() {
            for c in 0..self.n_classes {
                seq.set_vector(f, c, self.vector);
            }
        }
        Ok(seq)
    }
}

/// Reads predictions computed elsewhere: `<dir>/<clip>.pNN.acc` for pattern
/// `NN`, with `<dir>/<clip>.acc` accepted for the identity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalFilePredictor {
    pub dir: PathBuf,
}

impl ExternalFilePredictor {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ExternalFilePredictor { dir: dir.into() }
    }

    pub fn path_for(&self, clip: &ClipIdentity) -> PathBuf {
        let stem = Path::new(&clip.name)
            .file_stem()
            .map_or_else(|| clip.name.clone(), |s| s.to_string_lossy().into_owned());
        let rotated = self.dir.join(format!("{stem}.p{:02}.acc", clip.pattern.id()));
        if clip.pattern.is_identity() && !rotated.exists() {
            self.dir.join(format!("{stem}.acc"))
        } else {
            rotated
        }
    }
}

impl Predictor for ExternalFilePredictor {
    fn predict(&self, input: &PredictorInput<'_>) -> Result<AccdoaSequence> {
        let path = self.path_for(input.clip);
        if !path.exists() {
            return Err(Error::UnknownClip(format!(
                "{} (no prediction file {})",
                input.clip.name,
                path.display()
            )));
        }
        let seq = AccdoaSequence::load(&path)?;
        if seq.frames() != input.features.label_frames() {
            return Err(Error::Shape(format!(
                "{}: {} frames, features imply {}",
                path.display(),
                seq.frames(),
                input.features.label_frames()
            )));
        }
        Ok(seq)
    }
}

/// Rotates `d` about the unit `axis` by `angle_deg`.
pub fn jitter_direction(d: Direction, axis: [f64; 3], angle_deg: f64) -> Result<Direction> {
    crate::geometry::vec_to_dir(rodrigues(d.to_unit().to_array(), axis, angle_deg.to_radians()))
}
