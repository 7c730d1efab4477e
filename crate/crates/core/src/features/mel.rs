use ndarray::Array2;

use super::FeatureConfig;
use crate::error::{Error, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Lower edge, centre and upper edge (Hz) of every filter.
pub fn mel_band_edges(n_mels: usize, sample_rate: u32) -> Vec<(f64, f64, f64)> {
    let nyquist = sample_rate as f64 / 2.0;
    let step = hz_to_mel(nyquist) / (n_mels + 1) as f64;
    let mut pts: Vec<f64> = (0..n_mels + 2).map(|i| mel_to_hz(i as f64 * step)).collect();
    pts[n_mels + 1] = nyquist;
    pts.windows(3).map(|w| (w[0], w[1], w[2])).collect()
}

/// Triangular HTK-scale filterbank spanning 0 Hz to Nyquist, peak weight 1,
/// `[n_mels x (nfft/2 + 1)]`.
pub fn mel_filterbank(config: &FeatureConfig) -> Result<Array2<f64>> {
    config.validate()?;
    let bins = config.nfft / 2 + 1;
    let bin_hz = config.sample_rate as f64 / config.nfft as f64;
    let edges = mel_band_edges(config.n_mels, config.sample_rate);
    let mut fb = Array2::zeros((config.n_mels, bins));
    for (m, &(lo, c, hi)) in edges.iter().enumerate() {
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = ((f - lo) / (c - lo)).min((hi - f) / (hi - c));
            if w > 0.0 {
                fb[[m, k]] = w;
            }
        }
        if fb.row(m).iter().all(|&w| w == 0.0) {
            return Err(Error::Config(format!(
                "n_mels = {} too large for nfft = {}: filter {m} covers no FFT bin",
                config.n_mels, config.nfft
            )));
        }
    }
    Ok(fb)
}
