//! Fixed-length overlapping windows over a clip.

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Start sample of every window: `1 + floor((len - window) / hop)` windows
/// for clips at least one window long, a single window otherwise.
pub fn segment_starts(len: usize, window: usize, hop: usize) -> Vec<usize> {
    if len <= window {
        return vec![0];
    }
    (0..=(len - window) / hop).map(|k| k * hop).collect()
}

/// Splits `clip` into `window_s` windows every `hop_s`; short clips are
/// zero-padded to one full window.
pub fn segment_clip(clip: &AudioClip, window_s: f64, hop_s: f64) -> Result<Vec<AudioClip>> {
    if !(window_s > 0.0 && hop_s > 0.0) {
        return Err(Error::Config("segment window and hop must be positive".into()));
    }
    let sr = clip.sample_rate() as f64;
    let window = (window_s * sr).round() as usize;
    let hop = (hop_s * sr).round() as usize;
    if window == 0 || hop == 0 {
        return Err(Error::Config("segment window or hop shorter than one sample".into()));
    }
    Ok(segment_starts(clip.len(), window, hop)
        .into_iter()
        .map(|s| clip.slice_padded(s, window))
        .collect())
}
