use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{RfFrame, TransducerConfig};
use crate::error::{Error, Result};
use crate::rng::{derive, stream};

/// Band-limited Gaussian noise, level in dB (RMS) relative to the
/// reference amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColoredNoise {
    pub f_lo: f64,
    pub f_hi: f64,
    pub level_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Reference amplitude over white-noise RMS, in dB. `None` disables it.
    pub white_snr_db: Option<f64>,
    pub colored: Option<ColoredNoise>,
    /// Time gain compensation applied to signal and coloured noise.
    pub tgc_db_per_cm: f64,
    /// Amplitude the dB levels refer to; when unset, the peak RF of one
    /// bubble on axis at `reference_depth`.
    pub reference_amplitude: Option<f64>,
    pub reference_depth: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            white_snr_db: None,
            colored: None,
            tgc_db_per_cm: 0.0,
            reference_amplitude: None,
            reference_depth: 15e-3,
        }
    }
}

impl NoiseConfig {
    pub fn is_silent(&self) -> bool {
        self.white_snr_db.is_none() && self.colored.is_none() && self.tgc_db_per_cm == 0.0
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if let Some(c) = &self.colored {
            if !(c.f_lo >= 0.0 && c.f_lo < c.f_hi && c.f_hi < 0.5 * fs) {
                return Err(Error::param("colored", "need 0 <= f_lo < f_hi < fs/2"));
            }
            if !c.level_db.is_finite() {
                return Err(Error::param("colored.level_db", "must be finite"));
            }
        }
        if let Some(s) = self.white_snr_db {
            if !s.is_finite() {
                return Err(Error::param("white_snr_db", "must be finite"));
            }
        }
        if !self.tgc_db_per_cm.is_finite() {
            return Err(Error::param("tgc_db_per_cm", "must be finite"));
        }
        if !(self.reference_depth > 0.0) {
            return Err(Error::param("reference_depth", "must be positive"));
        }
        Ok(())
    }
}

/// Linear TGC gain at RF sample `n` (depth `c t / 2`).
pub fn tgc_gain(n: usize, tx: &TransducerConfig, db_per_cm: f64) -> f64 {
    let depth_cm = 0.5 * tx.c * n as f64 / tx.fs * 100.0;
    10f64.powf(db_per_cm * depth_cm / 20.0)
}

/// Adds coloured noise, applies TGC, then adds white noise. Each channel
/// draws from its own stream derived from `seed`, angle and element.
pub fn apply_noise(
    frame: &mut RfFrame,
    tx: &TransducerConfig,
    noise: &NoiseConfig,
    reference: f64,
    seed: u64,
) -> Result<()> {
    noise.validate(tx.fs)?;
    if noise.is_silent() {
        return Ok(());
    }
    let n = frame.n_samples;
    let fft = noise.colored.as_ref().map(|c| {
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        // keep bins inside the band on both sides of the spectrum
        let keep: Vec<bool> = (0..n)
            .map(|k| {
                let f = k.min(n - k) as f64 * tx.fs / n as f64;
                f >= c.f_lo && f <= c.f_hi
            })
            .collect();
        let kept = keep.iter().filter(|&&k| k).count().max(1);
        // unit-variance white noise keeps kept/n of its variance
        let norm = (n as f64 / kept as f64).sqrt() / n as f64;
        (fwd, inv, keep, norm, reference * 10f64.powf(c.level_db / 20.0))
    });
    let gains: Vec<f64> = (0..n).map(|i| tgc_gain(i, tx, noise.tgc_db_per_cm)).collect();
    let white = noise.white_snr_db.map(|s| reference / 10f64.powf(s / 20.0));
    for a in 0..frame.n_angles {
        for e in 0..frame.n_elements {
            let mut rng = stream(derive(derive(seed, a as u64), e as u64));
            let ch = frame.channel_mut(a, e);
            if let Some((fwd, inv, keep, norm, sigma)) = &fft {
                let mut buf: Vec<Complex64> = (0..n)
                    .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
                    .collect();
                fwd.process(&mut buf);
                for (b, &k) in buf.iter_mut().zip(keep) {
                    if !k {
                        *b = Complex64::new(0.0, 0.0);
                    }
                }
                inv.process(&mut buf);
                for (v, b) in ch.iter_mut().zip(&buf) {
                    *v += sigma * norm * b.re;
                }
            }
            for (v, g) in ch.iter_mut().zip(&gains) {
                *v *= g;
            }
            if let Some(sigma) = white {
                for v in ch.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += sigma * z;
                }
            }
        }
    }
    Ok(())
}
