//! Predictor contract, segmentation, fold splitting and the end-to-end
//! evaluation run.

mod kfold;
mod predictor;
mod segment;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accdoa::{decode, DEFAULT_THRESHOLD};
use crate::audio::read_foa_wav;
use crate::augment::{augment_clip, AugmentConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureExtractor};
use crate::labels::{read_labels, ClipAnnotation};
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::metrics::{clip_stats, finalize, merge_stats, ClassStats, MetricConfig, SeldScores};
use crate::rotation::RotationPattern;
use crate::tta::{run_tta, TtaConfig};

pub use kfold::{kfold_split, SplitMode};
pub use predictor::{
    jitter_direction, ClipIdentity, ConstantPredictor, ExternalFilePredictor, OracleConfig,
    OraclePredictor, Predictor, PredictorInput,
};
pub use segment::{segment_clip, segment_starts};

/// Environment variable holding the worker count of [`run_pipeline`].
pub const WORKERS_ENV: &str = "SELD_WORKERS";

/// First eight bytes of SHA-256 over the seed and the length-prefixed parts.
pub fn derive_seed(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PredictorSpec {
    Oracle(OracleConfig),
    Constant {
        #[serde(default)]
        vector: [f64; 3],
    },
    ExternalFile { dirs: Vec<PathBuf> },
}

impl PredictorSpec {
    /// Parses `oracle[:jitter_deg]`, `constant[:x,y,z]` or
    /// `external-file:dir[,dir...]`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let bad = || Error::Config(format!("bad predictor spec {s:?}"));
        match kind {
            "oracle" => Ok(PredictorSpec::Oracle(OracleConfig {
                jitter_deg: if arg.is_empty() { 0.0 } else { arg.parse().map_err(|_| bad())? },
                ..Default::default()
            })),
            "constant" => {
                let vector = if arg.is_empty() {
                    [0.0; 3]
                } else {
                    let v: Vec<f64> = arg
                        .split(',')
                        .map(|x| x.trim().parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad())?;
                    v.try_into().map_err(|_| bad())?
                };
                Ok(PredictorSpec::Constant { vector })
            }
            "external-file" if !arg.is_empty() => Ok(PredictorSpec::ExternalFile {
                dirs: arg.split(',').map(PathBuf::from).collect(),
            }),
            _ => Err(bad()),
        }
    }

    /// Instantiates the models. The oracle answers from `annotations`.
    pub fn build(
        &self,
        annotations: BTreeMap<String, ClipAnnotation>,
        n_classes: usize,
        seed: u64,
    ) -> Result<Vec<Box<dyn Predictor>>> {
        Ok(match self {
            PredictorSpec::Oracle(cfg) => {
                let cfg = OracleConfig {
                    seed: derive_seed(seed, &[b"oracle", &cfg.seed.to_le_bytes()]),
                    ..cfg.clone()
                };
                vec![Box::new(OraclePredictor::new(annotations, cfg)?)]
            }
            PredictorSpec::Constant { vector } => vec![Box::new(ConstantPredictor {
                n_classes,
                vector: *vector,
            })],
            PredictorSpec::ExternalFile { dirs } => {
                if dirs.is_empty() {
                    return Err(Error::Config("external-file needs at least one dir".into()));
                }
                dirs.iter()
                    .map(|d| Box::new(ExternalFilePredictor::new(d)) as Box<dyn Predictor>)
                    .collect()
            }
        })
    }
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

/// One JSON document describing an evaluation run. Relative paths resolve
/// against the directory of the file they appear in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub predictor: PredictorSpec,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub augment: Option<AugmentConfig>,
    /// TTA settings; direct decoding when absent.
    #[serde(default)]
    pub tta: Option<TtaConfig>,
    #[serde(default)]
    pub metrics: MetricConfig,
    /// Decoding threshold when TTA is off.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = resolve(base, &cfg.manifest);
        if let PredictorSpec::ExternalFile { dirs } = &mut cfg.predictor {
            for d in dirs.iter_mut() {
                *d = resolve(base, d);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.metrics.validate()?;
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        if let Some(t) = &self.tta {
            t.validate()?;
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must be in [0, 1)".into()));
        }
        if let (None, PredictorSpec::ExternalFile { dirs }) = (&self.tta, &self.predictor) {
            if dirs.len() > 1 {
                return Err(Error::Config("several models need TTA to be merged".into()));
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub entry: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Absent when nothing could be scored.
    pub scores: Option<SeldScores>,
    pub entries: usize,
    pub evaluated: Vec<String>,
    pub failures: Vec<EntryFailure>,
    pub seed: u64,
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV}={v:?} is not a count")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}

struct RunContext<'a> {
    config: &'a RunConfig,
    base: PathBuf,
    extractor: FeatureExtractor,
    predictors: Vec<Box<dyn Predictor>>,
}

impl RunContext<'_> {
    fn evaluate_entry(&self, entry: &ManifestEntry, ann: &ClipAnnotation) -> Result<Vec<ClassStats>> {
        let cfg = self.config;
        let mut clip = read_foa_wav(&resolve(&self.base, Path::new(&entry.clip_path)))?;
        if let Some(aug) = &cfg.augment {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[b"augment", entry.clip_path.as_bytes()]));
            clip = augment_clip(&clip, aug, &mut rng)?.0;
        }
        let events = match &cfg.tta {
            Some(tta) => {
                let models: Vec<&dyn Predictor> = self.predictors.iter().map(|p| p.as_ref()).collect();
                run_tta(&models, &entry.clip_path, &clip, &self.extractor, tta)?
            }
            None => {
                let features = self.extractor.extract(&clip)?;
                let id = ClipIdentity {
                    name: entry.clip_path.clone(),
                    pattern: RotationPattern::identity(),
                };
                let seq = self.predictors[0].predict(&PredictorInput {
                    clip: &id,
                    features: &features,
                })?;
                decode(&seq, cfg.threshold)
            }
        };
        clip_stats(&events, ann, &cfg.metrics)
    }
}

/// Evaluates every manifest entry. Failing entries are listed in the report
/// and skipped; the scores pool all other entries in manifest order, so the
/// result does not depend on the worker count.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineReport> {
    config.validate()?;
    let manifest = DatasetManifest::load(&config.manifest)?;
    let base = config.manifest.parent().unwrap_or(Path::new("")).to_path_buf();
    let pool = worker_pool()?;
    let n_classes = config.metrics.n_classes;

    pool.install(|| {
        let labels: Vec<Result<ClipAnnotation>> = manifest
            .entries
            .par_iter()
            .map(|e| read_labels(&resolve(&base, Path::new(&e.label_path)), n_classes))
            .collect();
        let annotations: BTreeMap<String, ClipAnnotation> = manifest
            .entries
            .iter()
            .zip(&labels)
            .filter_map(|(e, l)| Some((e.clip_path.clone(), l.as_ref().ok()?.clone())))
            .collect();
        let ctx = RunContext {
            config,
            base: base.clone(),
            extractor: FeatureExtractor::new(config.features.clone())?,
            predictors: config.predictor.build(annotations, n_classes, config.seed)?,
        };
        let results: Vec<Result<Vec<ClassStats>>> = manifest
            .entries
            .par_iter()
            .zip(labels.par_iter())
            .map(|(entry, ann)| match ann {
                Ok(ann) => ctx.evaluate_entry(entry, ann),
                Err(e) => Err(Error::Invalid(e.to_string())),
            })
            .collect();

        let mut stats: Vec<ClassStats> = Vec::new();
        let mut evaluated = Vec::new();
        let mut failures = Vec::new();
        for (entry, res) in manifest.entries.iter().zip(results) {
            match res {
                Ok(s) => {
                    merge_stats(&mut stats, &s);
                    evaluated.push(entry.clip_path.clone());
                }
                Err(e) => {
                    log::warn!("{}: {e}", entry.clip_path);
                    failures.push(EntryFailure {
                        entry: entry.clip_path.clone(),
                        error: e.to_string(),
                    });
                }
            }
        }
        let scores = if evaluated.is_empty() {
            None
        } else {
            match finalize(&stats, &config.metrics) {
                Ok(s) => Some(s),
                Err(Error::UndefinedMetrics) => None,
                Err(e) => return Err(e),
            }
        };
        Ok(PipelineReport {
            scores,
            entries: manifest.len(),
            evaluated,
            failures,
            seed: config.seed,
        })
    })
}
