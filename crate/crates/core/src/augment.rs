//! Waveform augmentation (gain, pitch shift, band-pass) and SpecAugment-style
//! masking. Waveform transforms act identically on all four FOA channels so
//! the spatial image of every source is kept.

use std::f64::consts::PI;
use std::ops::Range;

use ndarray::s;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::features::{channel_means, FeatureTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecAugmentConfig {
    pub n_time_masks: usize,
    pub max_time_frames: usize,
    pub n_freq_masks: usize,
    pub max_mel_bins: usize,
}

impl Default for SpecAugmentConfig {
    fn default() -> Self {
        SpecAugmentConfig {
            n_time_masks: 2,
            max_time_frames: 20,
            n_freq_masks: 2,
            max_mel_bins: 8,
        }
    }
}

/// Sampling ranges for [`augment_clip`]. A `None` range disables that
/// transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub gain_db_range: Option<[f64; 2]>,
    pub pitch_semitone_range: Option<[f64; 2]>,
    pub bandpass_lo_range: Option<[f64; 2]>,
    pub bandpass_hi_range: Option<[f64; 2]>,
    pub spec_augment: Option<SpecAugmentConfig>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            gain_db_range: Some([-6.0, 6.0]),
            pitch_semitone_range: Some([-2.0, 2.0]),
            bandpass_lo_range: Some([50.0, 300.0]),
            bandpass_hi_range: Some([6000.0, 11_000.0]),
            spec_augment: Some(SpecAugmentConfig::default()),
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: Option<[f64; 2]>) -> Result<()> {
    match r {
        Some([lo, hi]) if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
            Err(Error::Config(format!("{name} range [{lo}, {hi}] is not ordered")))
        }
        _ => Ok(()),
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        check_range("gain_db", self.gain_db_range)?;
        check_range("pitch_semitone", self.pitch_semitone_range)?;
        check_range("bandpass_lo", self.bandpass_lo_range)?;
        check_range("bandpass_hi", self.bandpass_hi_range)?;
        if let Some([lo, hi]) = self.pitch_semitone_range {
            if lo.abs() > 12.0 || hi.abs() > 12.0 {
                return Err(Error::Config("pitch shift limited to 12 semitones".into()));
            }
        }
        if self.bandpass_lo_range.is_some() != self.bandpass_hi_range.is_some() {
            return Err(Error::Config("band-pass needs both edge ranges".into()));
        }
        Ok(())
    }
}

pub fn apply_gain(clip: &AudioClip, gain_db: f64) -> AudioClip {
    let g = 10f64.powf(gain_db / 20.0);
    clip.map_samples(|s| s * g)
}

/// Windowed-sinc resampling at `ratio` input samples per output sample;
/// the output keeps the input length (reads past the end are zero).
fn resample_keep_length(x: &[f64], ratio: f64) -> Vec<f64> {
    const HALF_TAPS: f64 = 16.0;
    let cutoff = (1.0 / ratio).min(1.0);
    let half = HALF_TAPS / cutoff;
    (0..x.len())
        .map(|n| {
            let t = n as f64 * ratio;
            let lo = (t - half).ceil().max(0.0) as usize;
            let hi = ((t + half).floor() as usize).min(x.len().saturating_sub(1));
            let mut acc = 0.0;
            for (k, xk) in x.iter().enumerate().take(hi + 1).skip(lo) {
                let d = t - k as f64;
                let arg = cutoff * d;
                let sinc = if arg.abs() < 1e-12 {
                    1.0
                } else {
                    (PI * arg).sin() / (PI * arg)
                };
                // Blackman window over [-half, half]
                let u = d / half;
                let w = 0.42 + 0.5 * (PI * u).cos() + 0.08 * (2.0 * PI * u).cos();
                acc += xk * cutoff * sinc * w;
            }
            acc
        })
        .collect()
}

/// Shifts pitch by resampling with factor `2^(semitones/12)`; duration is
/// restored by truncation or zero padding.
pub fn pitch_shift(clip: &AudioClip, semitones: f64) -> Result<AudioClip> {
    if !(semitones.abs() <= 12.0) {
        return Err(Error::Invalid(format!("pitch shift of {semitones} semitones")));
    }
    if semitones == 0.0 {
        return Ok(clip.clone());
    }
    let ratio = 2f64.powf(semitones / 12.0);
    clip.map_channels(|c| resample_keep_length(c, ratio))
}

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn butterworth(kind: FilterKind, freq: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * freq / sample_rate;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let a0 = 1.0 + alpha;
        let b = match kind {
            FilterKind::LowPass => [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0],
            FilterKind::HighPass => [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0],
        };
        Biquad {
            b: b.map(|v| v / a0),
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    fn run(&self, x: &[f64]) -> Vec<f64> {
        let (mut z1, mut z2) = (0.0, 0.0);
        x.iter()
            .map(|&v| {
                let y = self.b[0] * v + z1;
                z1 = self.b[1] * v - self.a[0] * y + z2;
                z2 = self.b[2] * v - self.a[1] * y;
                y
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
enum FilterKind {
    LowPass,
    HighPass,
}

/// Second-order Butterworth high-pass at `f_lo` followed by a second-order
/// Butterworth low-pass at `f_hi`.
pub fn band_pass(clip: &AudioClip, f_lo: f64, f_hi: f64) -> Result<AudioClip> {
    let sr = clip.sample_rate() as f64;
    if !(f_lo > 0.0 && f_lo < f_hi && f_hi < sr / 2.0) {
        return Err(Error::Invalid(format!(
            "band-pass edges {f_lo}..{f_hi} Hz invalid at {sr} Hz"
        )));
    }
    let hp = Biquad::butterworth(FilterKind::HighPass, f_lo, sr);
    let lp = Biquad::butterworth(FilterKind::LowPass, f_hi, sr);
    clip.map_channels(|c| lp.run(&hp.run(c)))
}

/// Masks random time spans and mel-band spans with each channel's mean. All
/// seven channels share mask positions.
pub fn spec_augment(
    features: &FeatureTensor,
    config: &SpecAugmentConfig,
    rng: &mut impl Rng,
) -> FeatureTensor {
    let mut data = features.data.clone();
    let means = channel_means(&features.data);
    let (_, frames, mels) = data.dim();
    let fill = |data: &mut ndarray::Array3<f64>, t: Range<usize>, m: Range<usize>| {
        for (c, mean) in means.iter().enumerate() {
            data.slice_mut(s![c, t.clone(), m.clone()]).fill(*mean);
        }
    };
    for _ in 0..config.n_time_masks {
        let width = rng.random_range(0..=config.max_time_frames).min(frames);
        let start = rng.random_range(0..=frames - width);
        fill(&mut data, start..start + width, 0..mels);
    }
    for _ in 0..config.n_freq_masks {
        let width = rng.random_range(0..=config.max_mel_bins).min(mels);
        let start = rng.random_range(0..=mels - width);
        fill(&mut data, 0..frames, start..start + width);
    }
    FeatureTensor { data }
}

/// Parameters drawn by [`augment_clip`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AugmentDraw {
    pub gain_db: Option<f64>,
    pub semitones: Option<f64>,
    pub band: Option<(f64, f64)>,
}

fn draw(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Draws and applies gain, pitch shift and band-pass in that order.
pub fn augment_clip(
    clip: &AudioClip,
    config: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<(AudioClip, AugmentDraw)> {
    config.validate()?;
    let mut out = clip.clone();
    let mut drawn = AugmentDraw::default();
    if let Some(r) = config.gain_db_range {
        let g = draw(rng, r);
        out = apply_gain(&out, g);
        drawn.gain_db = Some(g);
    }
    if let Some(r) = config.pitch_semitone_range {
        let st = draw(rng, r);
        out = pitch_shift(&out, st)?;
        drawn.semitones = Some(st);
    }
    if let (Some(lo), Some(hi)) = (config.bandpass_lo_range, config.bandpass_hi_range) {
        let nyq = clip.sample_rate() as f64 / 2.0;
        let f_lo = draw(rng, lo);
        let f_hi = draw(rng, hi).min(nyq * 0.99);
        out = band_pass(&out, f_lo, f_hi)?;
        drawn.band = Some((f_lo, f_hi));
    }
    Ok((out, drawn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::foa_encode_gains;
    use crate::features::{extract_features, intensity_doa, FeatureConfig};
    use crate::geometry::{angular_distance, Direction};
    use ndarray::Array3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rustfft::num_complex::Complex64;

    fn tone(freq: f64, len: usize) -> Vec<f64> {
        (0..len)
            .map(|n| (2.0 * PI * freq * n as f64 / 24_000.0).sin())
            .collect()
    }

    fn plane(src: &[f64], az: f64, el: f64) -> AudioClip {
        let g = foa_encode_gains(Direction::new(az, el).unwrap());
        AudioClip::new(24_000, std::array::from_fn(|c| src.iter().map(|s| s * g[c]).collect()))
            .unwrap()
    }

    fn peak_hz(x: &[f64]) -> f64 {
        let n = x.len();
        let mut buf: Vec<Complex64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| Complex64::new(v * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()), 0.0))
            .collect();
        rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let k = (1..n / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
        k as f64 * 24_000.0 / n as f64
    }

    #[test]
    fn gain_cases() {
        let c = plane(&tone(300.0, 1000), 10.0, 5.0);
        assert_eq!(apply_gain(&c, 0.0), c);
        let doubled = apply_gain(&c, 6.020599913279624);
        for ch in 0..4 {
            for (a, b) in doubled.channel(ch).iter().zip(c.channel(ch)) {
                assert!((a - 2.0 * b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gain_keeps_doa() {
        let cfg = FeatureConfig::default();
        let src: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            (0..6000).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let d = Direction::new(-70.0, 25.0).unwrap();
        for g in [-12.0, -3.0, 4.5, 9.0] {
            let f = extract_features(&apply_gain(&plane(&src, -70.0, 25.0), g), &cfg).unwrap();
            let est = intensity_doa(&f, 0..f.frames(), cfg.floor_eps).unwrap();
            assert!(angular_distance(est, d) < 1.0);
        }
    }

    #[test]
    fn pitch_shift_octave_up() {
        let len = 24_000;
        let c = plane(&tone(440.0, len), 0.0, 0.0);
        let up = pitch_shift(&c, 12.0).unwrap();
        assert_eq!(up.len(), len);
        // the first half holds the shifted tone, the rest is padding
        let f = peak_hz(&up.channel(0)[..len / 2]);
        let bin = 24_000.0 / (len / 2) as f64;
        assert!((f - 880.0).abs() <= bin, "{f}");
        let down = pitch_shift(&c, -5.0).unwrap();
        assert_eq!(down.len(), len);
        let f = peak_hz(down.channel(0));
        let want = 440.0 * 2f64.powf(-5.0 / 12.0);
        assert!((f - want).abs() <= 24_000.0 / len as f64, "{f} vs {want}");
    }

    #[test]
    fn pitch_shift_zero_is_identity() {
        let c = plane(&tone(440.0, 500), 20.0, 0.0);
        assert_eq!(pitch_shift(&c, 0.0).unwrap(), c);
        assert!(pitch_shift(&c, 13.0).is_err());
    }

    #[test]
    fn pitch_shift_keeps_doa_on_sustained_tone() {
        let cfg = FeatureConfig::default();
        let d = Direction::new(135.0, -20.0).unwrap();
        let c = pitch_shift(&plane(&tone(700.0, 12_000), 135.0, -20.0), 2.0).unwrap();
        let f = extract_features(&c, &cfg).unwrap();
        let est = intensity_doa(&f, 2..f.frames() - 2, cfg.floor_eps).unwrap();
        assert!(angular_distance(est, d) < 1.0);
    }

    /// Steady-state amplitude ratio of a filtered tone.
    fn measured_gain_db(freq: f64, f_lo: f64, f_hi: f64) -> f64 {
        let len = 48_000;
        let x = tone(freq, len);
        let clip = AudioClip::new(24_000, [x.clone(), x.clone(), x.clone(), x.clone()]).unwrap();
        let y = band_pass(&clip, f_lo, f_hi).unwrap();
        let tail = len / 2..len;
        let rms = |v: &[f64]| (v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64).sqrt();
        20.0 * (rms(&y.channel(0)[tail.clone()]) / rms(&x[tail])).log10()
    }

    /// Bilinear-transformed analog Butterworth magnitude with prewarping.
    fn analytic_gain_db(freq: f64, f_lo: f64, f_hi: f64) -> f64 {
        let warp = |f: f64| (PI * f / 24_000.0).tan();
        let hp = (warp(freq) / warp(f_lo)).powi(4);
        let lp = (warp(freq) / warp(f_hi)).powi(4);
        10.0 * (hp / (1.0 + hp)).log10() + 10.0 * (1.0 / (1.0 + lp)).log10()
    }

    #[test]
    fn band_pass_matches_analytic_response() {
        let (lo, hi): (f64, f64) = (200.0, 3000.0);
        for f in [100.0, 200.0, (lo * hi).sqrt(), 3000.0, 6000.0, 9000.0] {
            let m = measured_gain_db(f, lo, hi);
            let a = analytic_gain_db(f, lo, hi);
            assert!((m - a).abs() < 0.05, "{f} Hz: {m} vs {a}");
        }
        assert!(measured_gain_db((lo * hi).sqrt(), lo, hi) > -3.0);
        assert!(measured_gain_db(2.0 * hi, lo, hi) < -10.0);
    }

    #[test]
    fn band_pass_kills_dc() {
        let clip = AudioClip::new(24_000, std::array::from_fn(|_| vec![0.7; 24_000])).unwrap();
        let y = band_pass(&clip, 100.0, 5000.0).unwrap();
        let rms = (y.channel(0)[12_000..].iter().map(|v| v * v).sum::<f64>() / 12_000.0).sqrt();
        assert!(rms < 0.01 * 0.7);
    }

    #[test]
    fn band_pass_rejects_bad_band() {
        let clip = AudioClip::silence(24_000, 10);
        assert!(band_pass(&clip, 0.0, 100.0).is_err());
        assert!(band_pass(&clip, 500.0, 400.0).is_err());
        assert!(band_pass(&clip, 100.0, 12_000.0).is_err());
    }

    fn tensor(frames: usize, mels: usize) -> FeatureTensor {
        let data = Array3::from_shape_fn((7, frames, mels), |(c, t, m)| {
            (c * 1000 + t * 10 + m) as f64 * 0.01
        });
        FeatureTensor::new(data).unwrap()
    }

    #[test]
    fn zero_masks_is_identity() {
        let f = tensor(30, 16);
        let cfg = SpecAugmentConfig {
            n_time_masks: 0,
            n_freq_masks: 0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(spec_augment(&f, &cfg, &mut rng), f);
    }

    #[test]
    fn full_width_mask_flattens_channels() {
        let f = tensor(12, 8);
        let means = channel_means(&f.data);
        let cfg = SpecAugmentConfig {
            n_time_masks: 1,
            max_time_frames: 12,
            n_freq_masks: 0,
            max_mel_bins: 0,
        };
        let mut hit = false;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = spec_augment(&f, &cfg, &mut rng);
            let changed = out.data.iter().zip(f.data.iter()).filter(|(a, b)| a != b).count();
            if changed == f.data.len() {
                for (c, mean) in means.iter().enumerate() {
                    assert!(out.data.slice(s![c, .., ..]).iter().all(|v| v == mean));
                }
                hit = true;
            }
        }
        assert!(hit, "full-width mask never drawn");
    }

    #[test]
    fn masking_is_seeded_and_bounded() {
        let f = tensor(100, 64);
        let cfg = SpecAugmentConfig::default();
        let run = |seed| spec_augment(&f, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(run(5), run(5));
        let distinct = (0..100).filter(|&s| run(s) != run(s + 1000)).count();
        assert!(distinct >= 95);
        let bound = cfg.n_time_masks * cfg.max_time_frames * 64 + cfg.n_freq_masks * cfg.max_mel_bins * 100;
        for s in 0..50 {
            let out = run(s);
            for c in 0..7 {
                let changed = out
                    .data
                    .slice(s![c, .., ..])
                    .iter()
                    .zip(f.data.slice(s![c, .., ..]).iter())
                    .filter(|(a, b)| a != b)
                    .count();
                assert!(changed <= bound);
            }
        }
    }

    #[test]
    fn augment_clip_draws_within_ranges() {
        let clip = plane(&tone(500.0, 6000), 0.0, 0.0);
        let cfg = AugmentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (out, d) = augment_clip(&clip, &cfg, &mut rng).unwrap();
        assert_eq!(out.len(), clip.len());
        let g = d.gain_db.unwrap();
        assert!((-6.0..=6.0).contains(&g));
        let (lo, hi) = d.band.unwrap();
        assert!((50.0..=300.0).contains(&lo) && (6000.0..=11_000.0).contains(&hi));
        let bad = AugmentConfig {
            gain_db_range: Some([3.0, -3.0]),
            ..Default::default()
        };
        assert!(augment_clip(&clip, &bad, &mut rng).is_err());
    }
}
