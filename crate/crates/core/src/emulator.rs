//! Spatial scene emulation from dry mono samples.
//!
//! A dry sample is placed at a static direction by convolving it with a
//! four-channel spatial room impulse response (a parametric direct path plus
//! exponentially decaying diffuse tail), summed into a scene at its onset,
//! and mixed with spatially diffuse ambient noise at a target SNR. The
//! module also provides class balancing of sample libraries and the
//! per-epoch real/emulated dataset sampler.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{read_mono_wav, AudioClip, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::geometry::{dir_to_unit, Direction};
use crate::labels::{ClipAnnotation, EventLabel, DEFAULT_N_CLASSES, LABEL_FRAME_S};
use crate::manifest::DatasetManifest;

/// Ambient noise RMS used when a scene has no events to reference the SNR to.
pub const AMBIENT_RMS_WITHOUT_EVENTS: f64 = 1e-3;

/// SN3D first-order encoding gains (W, X, Y, Z) for a plane wave.
pub fn foa_encode_gains(d: Direction) -> [f64; 4] {
    let u = dir_to_unit(d);
    [1.0, u.x(), u.y(), u.z()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrirSynthConfig {
    pub direct_delay_ms: f64,
    pub rt60_s: f64,
    /// Direct-path to diffuse-tail energy ratio on W. `+inf` disables the
    /// tail.
    pub direct_to_diffuse_db: f64,
    pub ir_length_s: f64,
    pub seed: u64,
}

impl Default for SrirSynthConfig {
    fn default() -> Self {
        SrirSynthConfig {
            direct_delay_ms: 5.0,
            rt60_s: 0.3,
            direct_to_diffuse_db: 20.0,
            ir_length_s: 0.5,
            seed: 0,
        }
    }
}

impl SrirSynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.direct_delay_ms >= 0.0) {
            return Err(Error::Config("direct_delay_ms must be >= 0".into()));
        }
        if !(self.rt60_s > 0.0) {
            return Err(Error::Config("rt60_s must be positive".into()));
        }
        if !(self.ir_length_s > self.direct_delay_ms / 1000.0) {
            return Err(Error::Config("ir_length_s must exceed the direct delay".into()));
        }
        if self.direct_to_diffuse_db.is_nan() {
            return Err(Error::Config("direct_to_diffuse_db is NaN".into()));
        }
        Ok(())
    }
}

/// Synthesizes a four-channel SRIR for a source at `d`.
///
/// The direct path is a unit delta at the direct delay, weighted by the FOA
/// encode gains. The tail is independent Gaussian noise on every channel
/// (W included, at the same level) shaped by an envelope falling 60 dB over
/// `rt60_s`, scaled so that its expected W energy sits
/// `direct_to_diffuse_db` below the direct path.
pub fn synth_srir(
    d: Direction,
    config: &SrirSynthConfig,
    sample_rate: u32,
    rng: &mut impl Rng,
) -> Result<AudioClip> {
    config.validate()?;
    let sr = sample_rate as f64;
    let len = (config.ir_length_s * sr).round() as usize;
    let delay = (config.direct_delay_ms * sr / 1000.0).round() as usize;
    if delay >= len {
        return Err(Error::Config("IR too short for the direct delay".into()));
    }
    let gains = foa_encode_gains(d);
    let mut channels: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; len]);
    for (ch, g) in channels.iter_mut().zip(gains) {
        ch[delay] = g;
    }
    let tail_energy = 10f64.powf(-config.direct_to_diffuse_db / 10.0);
    if tail_energy > 0.0 {
        let env: Vec<f64> = (delay + 1..len)
            .map(|i| 10f64.powf(-3.0 * ((i - delay) as f64 / sr) / config.rt60_s))
            .collect();
        let env_energy: f64 = env.iter().map(|e| e * e).sum();
        let sigma = (tail_energy / env_energy).sqrt();
        for ch in channels.iter_mut() {
            for (i, e) in env.iter().enumerate() {
                let n: f64 = rng.sample(StandardNormal);
                ch[delay + 1 + i] = sigma * e * n;
            }
        }
    }
    AudioClip::new(sample_rate, channels)
}

/// Linear convolution via FFT; output length `a.len() + b.len() - 1`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    convolve_many(a, &[b]).pop().unwrap_or_default()
}

/// Convolves `signal` with several kernels sharing one forward transform.
fn convolve_many(signal: &[f64], kernels: &[&[f64]]) -> Vec<Vec<f64>> {
    if signal.is_empty() || kernels.iter().any(|k| k.is_empty()) {
        return kernels.iter().map(|_| Vec::new()).collect();
    }
    let max_k = kernels.iter().map(|k| k.len()).max().unwrap_or(0);
    let n = (signal.len() + max_k - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let to_spec = |x: &[f64]| {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(n, Complex64::new(0.0, 0.0));
        fwd.process(&mut buf);
        buf
    };
    let sig = to_spec(signal);
    kernels
        .iter()
        .map(|k| {
            let mut spec = to_spec(k);
            for (s, x) in spec.iter_mut().zip(sig.iter()) {
                *s *= x;
            }
            inv.process(&mut spec);
            spec.truncate(signal.len() + k.len() - 1);
            spec.iter().map(|c| c.re / n as f64).collect()
        })
        .collect()
}

/// A dry mono source.
#[derive(Debug, Clone, PartialEq)]
pub struct MonoSample {
    pub sample_rate: u32,
    pub data: Vec<f64>,
}

impl MonoSample {
    pub fn duration_s(&self) -> f64 {
        self.data.len() as f64 / self.sample_rate as f64
    }
}

/// Convolves a dry sample with each SRIR channel.
pub fn render_event(sample: &MonoSample, srir: &AudioClip) -> Result<AudioClip> {
    if sample.sample_rate != srir.sample_rate() {
        return Err(Error::SampleRate {
            expected: srir.sample_rate(),
            actual: sample.sample_rate,
        });
    }
    let kernels: Vec<&[f64]> = srir.channels().iter().map(|c| c.as_slice()).collect();
    let out = convolve_many(&sample.data, &kernels);
    AudioClip::from_channels(sample.sample_rate, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LibrarySample {
    pub class_id: usize,
    pub data: Vec<f64>,
}

/// Dry samples keyed by id, all at one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleLibrary {
    pub sample_rate: u32,
    pub samples: BTreeMap<String, LibrarySample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LibraryFile {
    #[serde(default = "default_rate")]
    sample_rate: u32,
    samples: Vec<LibraryFileEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LibraryFileEntry {
    id: String,
    class_id: usize,
    path: String,
}

fn default_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

impl SampleLibrary {
    pub fn new(sample_rate: u32, samples: BTreeMap<String, LibrarySample>) -> Result<Self> {
        if let Some((id, _)) = samples.iter().find(|(_, s)| s.data.is_empty()) {
            return Err(Error::Invalid(format!("library sample {id:?} is empty")));
        }
        Ok(SampleLibrary {
            sample_rate,
            samples,
        })
    }

    pub fn get(&self, id: &str) -> Option<MonoSample> {
        self.samples.get(id).map(|s| MonoSample {
            sample_rate: self.sample_rate,
            data: s.data.clone(),
        })
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for s in self.samples.values() {
            *out.entry(s.class_id).or_insert(0) += 1;
        }
        out
    }

    /// Loads `{sample_rate, samples: [{id, class_id, path}]}`; relative
    /// paths resolve against the JSON file's directory. Multichannel WAVs
    /// contribute their first (W) channel.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: LibraryFile = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut samples = BTreeMap::new();
        for entry in file.samples {
            let (sr, data) = read_mono_wav(&base.join(&entry.path))?;
            if sr != file.sample_rate {
                return Err(Error::SampleRate {
                    expected: file.sample_rate,
                    actual: sr,
                });
            }
            samples.insert(
                entry.id,
                LibrarySample {
                    class_id: entry.class_id,
                    data,
                },
            );
        }
        SampleLibrary::new(file.sample_rate, samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEvent {
    pub class_id: usize,
    pub sample_id: String,
    pub onset_s: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub duration_s: f64,
    #[serde(default)]
    pub events: Vec<SceneEvent>,
    pub snr_db: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_classes")]
    pub n_classes: usize,
}

fn default_n_classes() -> usize {
    DEFAULT_N_CLASSES
}

/// Half-open label frame range covering `[start_s, end_s)`: floor of the
/// start, ceiling of the end.
pub fn label_frame_span(start_s: f64, end_s: f64) -> std::ops::Range<usize> {
    const SLACK: f64 = 1e-9;
    let first = (start_s / LABEL_FRAME_S + SLACK).floor().max(0.0) as usize;
    let last = (end_s / LABEL_FRAME_S - SLACK).ceil().max(0.0) as usize;
    first..last.max(first)
}

/// Renders a scene and its per-frame labels.
///
/// Each event gets its own synthesized SRIR (seeded from the scene seed and
/// the event index). Ambient noise is independent white noise per channel,
/// scaled so that the W-channel event-to-noise power ratio over the samples
/// where any dry sample is active equals `snr_db`.
pub fn mix_scene(
    spec: &SceneSpec,
    library: &SampleLibrary,
    srir_config: &SrirSynthConfig,
) -> Result<(AudioClip, ClipAnnotation)> {
    if !spec.snr_db.is_finite() {
        return Err(Error::Invalid("scene snr_db must be finite".into()));
    }
    if !(spec.duration_s > 0.0) {
        return Err(Error::Invalid("scene duration must be positive".into()));
    }
    let sr = library.sample_rate;
    let len = (spec.duration_s * sr as f64).round() as usize;
    let n_label_frames = (spec.duration_s / LABEL_FRAME_S - 1e-9).ceil() as usize;
    let mut scene = AudioClip::silence(sr, len);
    let mut active = vec![false; len];
    let mut labels = Vec::new();
    // (class, frame span, track) of already placed events
    let mut placed: Vec<(usize, std::ops::Range<usize>, usize)> = Vec::new();

    for (i, ev) in spec.events.iter().enumerate() {
        let sample = library
            .get(&ev.sample_id)
            .ok_or_else(|| Error::Invalid(format!("unknown sample id {:?}", ev.sample_id)))?;
        let lib_class = library.samples[&ev.sample_id].class_id;
        if lib_class != ev.class_id {
            return Err(Error::Invalid(format!(
                "event {i}: class {} but sample {:?} is class {lib_class}",
                ev.class_id, ev.sample_id
            )));
        }
        if ev.class_id >= spec.n_classes {
            return Err(Error::Invalid(format!("event {i}: class {} out of range", ev.class_id)));
        }
        let end_s = ev.onset_s + sample.duration_s();
        if ev.onset_s < 0.0 || end_s > spec.duration_s + 1e-9 {
            return Err(Error::Invalid(format!(
                "event {i} spans {:.3}..{:.3} s outside the {:.3} s scene",
                ev.onset_s, end_s, spec.duration_s
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ srir_config.seed);
        rng.set_stream(i as u64 + 1);
        let srir = synth_srir(ev.direction, srir_config, sr, &mut rng)?;
        let rendered = render_event(&sample, &srir)?;
        let onset = (ev.onset_s * sr as f64).round() as usize;
        scene.add_at(&rendered, onset);
        for a in active.iter_mut().skip(onset).take(sample.data.len()) {
            *a = true;
        }

        let span = label_frame_span(ev.onset_s, end_s);
        let span = span.start.min(n_label_frames)..span.end.min(n_label_frames);
        let track = (0..)
            .find(|t| {
                !placed.iter().any(|(c, s, tr)| {
                    *c == ev.class_id && tr == t && s.start < span.end && span.start < s.end
                })
            })
            .unwrap();
        for frame in span.clone() {
            labels.push(EventLabel {
                frame,
                class_id: ev.class_id,
                track_id: track,
                direction: ev.direction,
            });
        }
        placed.push((ev.class_id, span, track));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let noise: [Vec<f64>; 4] =
        std::array::from_fn(|_| (0..len).map(|_| rng.sample(StandardNormal)).collect());
    let n_active = active.iter().filter(|&&a| a).count();
    let scale = if n_active == 0 {
        AMBIENT_RMS_WITHOUT_EVENTS
    } else {
        let power = |x: &[f64]| -> f64 {
            x.iter()
                .zip(&active)
                .filter(|(_, &a)| a)
                .map(|(v, _)| v * v)
                .sum::<f64>()
                / n_active as f64
        };
        let event_power = power(scene.channel(0));
        let noise_power = power(&noise[0]);
        (event_power / 10f64.powf(spec.snr_db / 10.0) / noise_power).sqrt()
    };
    let mut mixed = scene.into_channels();
    for (ch, n) in mixed.iter_mut().zip(noise.iter()) {
        for (s, v) in ch.iter_mut().zip(n) {
            *s += scale * v;
        }
    }
    let clip = AudioClip::new(sr, mixed)?;
    let ann = ClipAnnotation::new(labels, spec.n_classes)?;
    Ok((clip, ann))
}

/// Down-samples every class uniformly at random to the smallest non-zero
/// class count.
pub fn balance_classes(library: &SampleLibrary, seed: u64) -> SampleLibrary {
    let mut by_class: BTreeMap<usize, Vec<&String>> = BTreeMap::new();
    for (id, s) in &library.samples {
        by_class.entry(s.class_id).or_default().push(id);
    }
    let Some(target) = by_class.values().map(|v| v.len()).min() else {
        return library.clone();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = BTreeMap::new();
    for ids in by_class.values() {
        let chosen = index::sample(&mut rng, ids.len(), target);
        for i in chosen.iter() {
            let id = ids[i];
            keep.insert(id.clone(), library.samples[id].clone());
        }
    }
    SampleLibrary {
        sample_rate: library.sample_rate,
        samples: keep,
    }
}

/// One epoch's training set: every real entry plus an equal number of
/// emulated entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSample {
    pub manifest: DatasetManifest,
    /// Set when no emulated entries were available.
    pub warning: Option<String>,
}

/// Draws an epoch: all real entries plus `|real|` emulated entries (without
/// replacement when enough exist, with replacement otherwise), shuffled.
pub fn sample_epoch(
    real: &DatasetManifest,
    emulated: &DatasetManifest,
    seed: u64,
) -> Result<EpochSample> {
    if real.is_empty() {
        return Err(Error::Invalid("real manifest is empty".into()));
    }
    if emulated.is_empty() {
        return Ok(EpochSample {
            manifest: real.clone(),
            warning: Some("emulated manifest is empty; epoch holds real entries only".into()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = real.len();
    let picks: Vec<usize> = if emulated.len() >= n {
        index::sample(&mut rng, emulated.len(), n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..emulated.len())).collect()
    };
    let mut entries = real.entries.clone();
    entries.extend(picks.into_iter().map(|i| emulated.entries[i].clone()));
    entries.shuffle(&mut rng);
    Ok(EpochSample {
        manifest: DatasetManifest { entries },
        warning: None,
    })
}
