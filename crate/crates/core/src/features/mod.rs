//! Frame-wise FOA features: four log-mel spectrograms and a mel-aggregated
//! acoustic intensity vector, stacked as a `[7 x frames x n_mels]` tensor.

mod mel;
mod stft;
pub mod tensor_io;

use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayViewMut3, Axis};
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::geometry::{vec_to_dir, Direction};

pub use mel::{hz_to_mel, mel_band_edges, mel_filterbank, mel_to_hz};
pub use stft::{frame_count, hann, stft, Spectrogram, StftPlan};
use tensor_io::{read_tensor, write_tensor, TensorHeader};

/// STFT frames per 100 ms label frame at the default hop of 25 ms.
pub const STFT_FRAMES_PER_LABEL: usize = 4;

pub const CHANNEL_NAMES: [&str; 7] = [
    "logmel_w", "logmel_x", "logmel_y", "logmel_z", "intensity_x", "intensity_y", "intensity_z",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub nfft: usize,
    pub hop: usize,
    pub window: usize,
    pub n_mels: usize,
    pub floor_eps: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sample_rate: 24_000,
            nfft: 2048,
            hop: 600,
            window: 1200,
            n_mels: 64,
            floor_eps: 1e-10,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.nfft == 0 || self.hop == 0 || self.window == 0 {
            return Err(Error::Config("STFT parameters must be positive".into()));
        }
        if self.window > self.nfft {
            return Err(Error::Config("window longer than nfft".into()));
        }
        if self.hop > self.window {
            return Err(Error::Config("hop longer than window".into()));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be at least 1".into()));
        }
        if !(self.floor_eps > 0.0) {
            return Err(Error::Config("floor_eps must be positive".into()));
        }
        Ok(())
    }
}

/// `[7 x frames x n_mels]`: log-mel of W, X, Y, Z then intensity x, y, z.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub data: Array3<f64>,
}

impl FeatureTensor {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        if data.dim().0 != 7 {
            return Err(Error::Shape(format!(
                "feature tensor needs 7 channels, got {}",
                data.dim().0
            )));
        }
        Ok(FeatureTensor { data })
    }

    pub fn frames(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_mels(&self) -> usize {
        self.data.dim().2
    }

    /// Label frames covered by this tensor.
    pub fn label_frames(&self) -> usize {
        self.frames() / STFT_FRAMES_PER_LABEL
    }

    /// Writes the tensor (f32) and a sidecar recording `config`.
    pub fn save(&self, path: &Path, config: &FeatureConfig) -> Result<()> {
        let (c, t, m) = self.data.dim();
        let header = TensorHeader {
            dims: vec![c, t, m],
            channel_names: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
            config: serde_json::to_value(config)?,
        };
        write_tensor(path, &header, self.data.iter())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, values) = read_tensor(path)?;
        let [c, t, m] = header.dims[..] else {
            return Err(Error::Shape(format!(
                "{}: feature dims must have rank 3, got {:?}",
                path.display(),
                header.dims
            )));
        };
        let data = Array3::from_shape_vec((c, t, m), values).map_err(|e| Error::Shape(e.to_string()))?;
        FeatureTensor::new(data)
    }
}

/// Reusable extractor; holds the FFT plan and filterbank.
pub struct FeatureExtractor {
    config: FeatureConfig,
    plan: StftPlan,
    filterbank: Array2<f64>,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        let plan = StftPlan::new(&config)?;
        let filterbank = mel_filterbank(&config)?;
        Ok(FeatureExtractor {
            config,
            plan,
            filterbank,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    fn spectrograms(&self, clip: &AudioClip) -> Result<[Spectrogram; 4]> {
        if clip.sample_rate() != self.config.sample_rate {
            return Err(Error::SampleRate {
                expected: self.config.sample_rate,
                actual: clip.sample_rate(),
            });
        }
        let [w, x, y, z] = clip.channels();
        Ok([
            self.plan.process(w)?,
            self.plan.process(x)?,
            self.plan.process(y)?,
            self.plan.process(z)?,
        ])
    }

    fn log_mel_into(&self, specs: &[Spectrogram; 4], mut out: ArrayViewMut3<f64>) {
        for (c, spec) in specs.iter().enumerate() {
            let power = spec.data.mapv(|v| v.norm_sqr());
            let mel = power.dot(&self.filterbank.t());
            out.slice_mut(s![c, .., ..])
                .assign(&mel.mapv(|p| (p + self.config.floor_eps).ln()));
        }
    }

    fn intensity_into(&self, specs: &[Spectrogram; 4], mut out: ArrayViewMut3<f64>) -> Result<()> {
        let dims = specs[0].data.dim();
        if specs.iter().any(|s| s.data.dim() != dims) {
            return Err(Error::Shape("spectrograms differ in shape".into()));
        }
        if dims.1 != self.filterbank.ncols() {
            return Err(Error::Shape(format!(
                "spectrogram has {} bins, filterbank expects {}",
                dims.1,
                self.filterbank.ncols()
            )));
        }
        let w = &specs[0].data;
        let mut mel_components = Vec::with_capacity(3);
        for comp in &specs[1..] {
            let active = ndarray::Zip::from(w)
                .and(&comp.data)
                .map_collect(|w, a| (w.conj() * a).re);
            mel_components.push(active.dot(&self.filterbank.t()));
        }
        let (frames, n_mels) = mel_components[0].dim();
        for t in 0..frames {
            for m in 0..n_mels {
                let v = [
                    mel_components[0][[t, m]],
                    mel_components[1][[t, m]],
                    mel_components[2][[t, m]],
                ];
                let n = crate::geometry::norm3(v);
                let scale = if n > self.config.floor_eps { 1.0 / n } else { 0.0 };
                for (i, c) in v.iter().enumerate() {
                    out[[i, t, m]] = c * scale;
                }
            }
        }
        Ok(())
    }

    pub fn log_mel(&self, clip: &AudioClip) -> Result<Array3<f64>> {
        let specs = self.spectrograms(clip)?;
        let mut out = Array3::zeros((4, specs[0].frames(), self.config.n_mels));
        self.log_mel_into(&specs, out.view_mut());
        Ok(out)
    }

    pub fn intensity(&self, specs: &[Spectrogram; 4]) -> Result<Array3<f64>> {
        let mut out = Array3::zeros((3, specs[0].frames(), self.config.n_mels));
        self.intensity_into(specs, out.view_mut())?;
        Ok(out)
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureTensor> {
        let specs = self.spectrograms(clip)?;
        let frames = specs[0].frames();
        let mut data = Array3::zeros((7, frames, self.config.n_mels));
        self.log_mel_into(&specs, data.slice_mut(s![0..4, .., ..]));
        self.intensity_into(&specs, data.slice_mut(s![4..7, .., ..]))?;
        Ok(FeatureTensor { data })
    }
}

/// Log-mel power (natural log, additive floor) of the four FOA channels.
pub fn log_mel(clip: &AudioClip, config: &FeatureConfig) -> Result<Array3<f64>> {
    FeatureExtractor::new(config.clone())?.log_mel(clip)
}

/// Unit-normalized mel-band intensity vectors `[3 x frames x n_mels]`,
/// zero where the band carries no energy.
pub fn intensity_vector(
    stft_w: &Spectrogram,
    stft_x: &Spectrogram,
    stft_y: &Spectrogram,
    stft_z: &Spectrogram,
    config: &FeatureConfig,
) -> Result<Array3<f64>> {
    let ex = FeatureExtractor::new(config.clone())?;
    ex.intensity(&[stft_w.clone(), stft_x.clone(), stft_y.clone(), stft_z.clone()])
}

pub fn extract_features(clip: &AudioClip, config: &FeatureConfig) -> Result<FeatureTensor> {
    FeatureExtractor::new(config.clone())?.extract(clip)
}

/// Power-weighted mean of the intensity channels over `frames`, as a
/// direction. Weights are the W-channel mel power recovered from the log-mel
/// channel.
pub fn intensity_doa(
    features: &FeatureTensor,
    frames: Range<usize>,
    floor_eps: f64,
) -> Result<Direction> {
    let d = &features.data;
    let mut acc = [0.0; 3];
    for t in frames {
        if t >= features.frames() {
            break;
        }
        for m in 0..features.n_mels() {
            let power = (d[[0, t, m]].exp() - floor_eps).max(0.0);
            for (i, a) in acc.iter_mut().enumerate() {
                *a += power * d[[4 + i, t, m]];
            }
        }
    }
    vec_to_dir(acc)
}

/// Per-channel mean over frames and bands.
pub(crate) fn channel_means(data: &Array3<f64>) -> Vec<f64> {
    data.axis_iter(Axis(0))
        .map(|ch| ch.mean().unwrap_or(0.0))
        .collect()
}
