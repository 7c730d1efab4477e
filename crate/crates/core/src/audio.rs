//! Four-channel FOA clips and WAV I/O.

use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 24_000;

/// FOA channel indices in ACN order.
pub const W: usize = 0;
pub const X: usize = 1;
pub const Y: usize = 2;
pub const Z: usize = 3;

/// A first-order ambisonic clip: channels W, X, Y, Z (ACN, SN3D), all of
/// equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    sample_rate: u32,
    channels: [Vec<f64>; 4],
}

impl AudioClip {
    pub fn new(sample_rate: u32, channels: [Vec<f64>; 4]) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Invalid("sample rate must be positive".into()));
        }
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("FOA channels differ in length".into()));
        }
        Ok(AudioClip {
            sample_rate,
            channels,
        })
    }

    /// Builds a clip from a channel list, rejecting anything that is not
    /// exactly four channels.
    pub fn from_channels(sample_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        let arr: [Vec<f64>; 4] = channels.try_into().map_err(|c: Vec<Vec<f64>>| {
            Error::Invalid(format!("FOA clip needs 4 channels, got {}", c.len()))
        })?;
        Self::new(sample_rate, arr)
    }

    pub fn silence(sample_rate: u32, len: usize) -> Self {
        AudioClip {
            sample_rate,
            channels: std::array::from_fn(|_| vec![0.0; len]),
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, idx: usize) -> &[f64] {
        &self.channels[idx]
    }

    pub fn channels(&self) -> &[Vec<f64>; 4] {
        &self.channels
    }

    pub fn into_channels(self) -> [Vec<f64>; 4] {
        self.channels
    }

    /// Applies `f` to every sample of every channel.
    pub fn map_samples(&self, f: impl Fn(f64) -> f64) -> AudioClip {
        AudioClip {
            sample_rate: self.sample_rate,
            channels: std::array::from_fn(|c| self.channels[c].iter().map(|&s| f(s)).collect()),
        }
    }

    /// Applies the same single-channel transform to all four channels.
    pub fn map_channels(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<AudioClip> {
        AudioClip::new(
            self.sample_rate,
            std::array::from_fn(|c| f(&self.channels[c])),
        )
    }

    /// Adds `other` into `self` starting at sample `offset`, growing nothing:
    /// samples past the end of `self` are dropped.
    pub fn add_at(&mut self, other: &AudioClip, offset: usize) {
        for (dst, src) in self.channels.iter_mut().zip(other.channels.iter()) {
            for (d, s) in dst.iter_mut().skip(offset).zip(src.iter()) {
                *d += s;
            }
        }
    }

    /// Samples `[start, start + len)`, zero-padded past the end.
    pub fn slice_padded(&self, start: usize, len: usize) -> AudioClip {
        AudioClip {
            sample_rate: self.sample_rate,
            channels: std::array::from_fn(|c| {
                let src = &self.channels[c];
                (start..start + len)
                    .map(|i| src.get(i).copied().unwrap_or(0.0))
                    .collect()
            }),
        }
    }
}

/// Reads every channel of a WAV file as floats in [-1, 1].
pub fn read_wav_channels(path: &Path) -> Result<(u32, Vec<Vec<f64>>)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch.max(1)); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (c, &s) in frame.iter().enumerate() {
            channels[c].push(s);
        }
    }
    Ok((spec.sample_rate, channels))
}

pub fn read_foa_wav(path: &Path) -> Result<AudioClip> {
    let (sr, channels) = read_wav_channels(path)?;
    AudioClip::from_channels(sr, channels)
}

/// Reads a mono source. For multichannel files the first channel is used,
/// which is W for ambisonic recordings.
pub fn read_mono_wav(path: &Path) -> Result<(u32, Vec<f64>)> {
    let (sr, mut channels) = read_wav_channels(path)?;
    if channels.is_empty() {
        return Err(Error::Invalid(format!("{} has no channels", path.display())));
    }
    Ok((sr, channels.swap_remove(0)))
}

/// Writes 32-bit float WAV.
pub fn write_wav(path: &Path, sample_rate: u32, channels: &[&[f64]]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    let n = channels.first().map_or(0, |c| c.len());
    for i in 0..n {
        for ch in channels {
            writer.write_sample(ch[i] as f32)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

pub fn write_foa_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let refs: Vec<&[f64]> = clip.channels.iter().map(|c| c.as_slice()).collect();
    write_wav(path, clip.sample_rate, &refs)
}
