use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::FeatureConfig;
use crate::error::{Error, Result};

/// Complex STFT, `[frames x (nfft/2 + 1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Array2<Complex64>,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn bins(&self) -> usize {
        self.data.ncols()
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Index into a signal of length `n` under repeated mirror reflection
/// (edge samples not repeated).
fn reflect(j: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = j.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Number of centered frames for a signal of `len` samples.
pub fn frame_count(len: usize, hop: usize) -> usize {
    1 + len / hop
}

/// Reusable STFT plan for one configuration.
pub struct StftPlan {
    nfft: usize,
    hop: usize,
    window: Vec<f64>,
    win_offset: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl StftPlan {
    pub fn new(config: &FeatureConfig) -> Result<Self> {
        config.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(config.nfft);
        Ok(StftPlan {
            nfft: config.nfft,
            hop: config.hop,
            window: hann(config.window),
            win_offset: (config.nfft - config.window) / 2,
            fft,
        })
    }

    /// Hann-windowed STFT with reflect center padding of nfft/2; the window
    /// sits centered inside each zero-padded nfft frame.
    pub fn process(&self, signal: &[f64]) -> Result<Spectrogram> {
        if signal.is_empty() {
            return Err(Error::Invalid("STFT of an empty signal".into()));
        }
        let n = signal.len();
        let frames = frame_count(n, self.hop);
        let bins = self.nfft / 2 + 1;
        let pad = (self.nfft / 2) as isize;
        let mut out = Array2::zeros((frames, bins));
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for t in 0..frames {
            buf.fill(Complex64::new(0.0, 0.0));
            let start = (t * self.hop) as isize - pad + self.win_offset as isize;
            for (k, &w) in self.window.iter().enumerate() {
                let s = signal[reflect(start + k as isize, n)];
                buf[self.win_offset + k] = Complex64::new(s * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (o, v) in out.row_mut(t).iter_mut().zip(buf.iter()) {
                *o = *v;
            }
        }
        Ok(Spectrogram { data: out })
    }
}

pub fn stft(signal: &[f64], config: &FeatureConfig) -> Result<Spectrogram> {
    StftPlan::new(config)?.process(signal)
}
