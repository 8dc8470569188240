//! Linear acoustic transmit/receive with nonlinear bubble scattering,
//! noise, and delay-and-sum beamforming.
//!
//! Elements are point sources/receivers on the x axis at z = 0. Transmit
//! and receive share one propagation kernel (delay `r/c`, spreading `1/r`,
//! optional baffle directivity) and one impulse response.

mod beamform;
mod io;
mod noise;
mod simulate;

pub use beamform::{beamform_das, envelope_log, Apodization, BModeImage, BeamformConfig, ComplexImage, ImageGrid};
pub use io::{read_bmode_raw, write_bmode, RfHeader, RfReader, RfWriter, RF_MAGIC, RF_VERSION};
pub use noise::{apply_noise, tgc_gain, ColoredNoise, NoiseConfig};
pub use simulate::{
    receive_convolve, simulate_frame, transmit_pressure_at, Population, RfContribution, RfFrame, Simulator,
};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rect,
}

impl Window {
    /// Window value at `u` in [-1/2, 1/2].
    pub fn at(self, u: f64) -> f64 {
        if u.abs() > 0.5 {
            return 0.0;
        }
        match self {
            Window::Hann => (PI * u).cos().powi(2),
            Window::Rect => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransducerConfig {
    pub n_elements: usize,
    pub pitch: f64,
    pub f0: f64,
    /// -6 dB fractional bandwidth of the element impulse response.
    pub bandwidth: f64,
    pub fs: f64,
    pub c: f64,
    pub n_cycles: f64,
    pub window: Window,
    /// Plane-wave steering angles, radians.
    pub angles: Vec<f64>,
    /// Peak pressure 1 cm from the aperture when every element fires in
    /// phase from one point; each element carries `1/n_elements` of it.
    pub amplitude: f64,
    /// ODE rate is `fs * oversample`.
    pub oversample: usize,
    /// Hard-baffle obliquity factor `cos θ` on transmit and receive.
    pub baffle: bool,
    /// Deepest point the receive window covers, metres.
    pub record_depth: f64,
    /// Extra integration time after the drive ends, seconds.
    pub ringdown: f64,
}

impl Default for TransducerConfig {
    fn default() -> Self {
        TransducerConfig {
            n_elements: 64,
            pitch: 0.3e-3,
            f0: 5e6,
            bandwidth: 0.6,
            fs: 25e6,
            c: 1540.0,
            n_cycles: 3.0,
            window: Window::Hann,
            angles: vec![0.0],
            amplitude: amplitude_for_mi(0.1, 5e6),
            oversample: 20,
            baffle: false,
            record_depth: 25e-3,
            ringdown: 1e-6,
        }
    }
}

/// Peak negative pressure for a mechanical index at centre frequency `f0`.
pub fn amplitude_for_mi(mi: f64, f0: f64) -> f64 {
    mi * (f0 / 1e6).sqrt() * 1e6
}

impl TransducerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_elements == 0 {
            return Err(Error::param("n_elements", "must be at least 1"));
        }
        for (name, v) in [
            ("pitch", self.pitch),
            ("f0", self.f0),
            ("bandwidth", self.bandwidth),
            ("fs", self.fs),
            ("c", self.c),
            ("n_cycles", self.n_cycles),
            ("record_depth", self.record_depth),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.fs > 4.0 * self.f0) {
            return Err(Error::param("fs", "must exceed four times f0"));
        }
        if self.oversample == 0 {
            return Err(Error::param("oversample", "must be at least 1"));
        }
        if self.angles.is_empty() {
            return Err(Error::param("angles", "need at least one transmit angle"));
        }
        if self.angles.iter().any(|a| !(a.abs() < PI / 2.0)) {
            return Err(Error::param("angles", "steering angles must lie in (-90°, 90°)"));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::param("amplitude", "must be non-negative"));
        }
        if !(self.ringdown >= 0.0) {
            return Err(Error::param("ringdown", "must be non-negative"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        self.c / self.f0
    }

    pub fn ode_dt(&self) -> f64 {
        1.0 / (self.fs * self.oversample as f64)
    }

    pub fn element_x(&self, e: usize) -> f64 {
        (e as f64 - 0.5 * (self.n_elements as f64 - 1.0)) * self.pitch
    }

    pub fn element_position(&self, e: usize) -> Vec3 {
        Vec3::new(self.element_x(e), 0.0, 0.0)
    }

    pub fn aperture(&self) -> f64 {
        self.pitch * (self.n_elements as f64 - 1.0)
    }

    /// Firing delay of element `e` for a plane wave steered by `angle`;
    /// the first element to fire has delay zero.
    pub fn firing_delay(&self, e: usize, angle: f64) -> f64 {
        let s = angle.sin();
        let min = (0..self.n_elements)
            .map(|k| self.element_x(k) * s)
            .fold(f64::INFINITY, f64::min);
        (self.element_x(e) * s - min) / self.c
    }

    /// Plane-wave arrival time at `point` for steering `angle`.
    pub fn plane_wave_arrival(&self, point: &Vec3, angle: f64) -> f64 {
        let s = angle.sin();
        let min = (0..self.n_elements)
            .map(|k| self.element_x(k) * s)
            .fold(f64::INFINITY, f64::min);
        (point.x * s + point.z * angle.cos() - min) / self.c
    }

    /// Propagation between element `e` and `point`: (delay, 1/r spreading
    /// times directivity). Used for both transmit and receive.
    pub fn propagation(&self, e: usize, point: &Vec3) -> (f64, f64) {
        let d = point - self.element_position(e);
        let r = d.norm();
        let dir = if self.baffle { d.z / r } else { 1.0 };
        (r / self.c, dir / r)
    }

    pub fn n_samples(&self) -> usize {
        let span = (2.0 * self.record_depth + self.aperture()) / self.c;
        (span * self.fs).ceil() as usize + 1
    }
}

/// Zero-phase element impulse response sampled at `dt`: a Gaussian-windowed
/// cosine at `f0`, truncated at ±4σ and scaled to unit gain at `f0` so that
/// `(h * s)[n] = dt Σ h[k] s[n-k]`. Index `k` corresponds to lag
/// `(k - half) dt`.
pub fn impulse_response(f0: f64, bandwidth: f64, dt: f64) -> (Vec<f64>, usize) {
    let sigma_f = bandwidth * f0 / (2.0 * (2.0 * 2f64.ln()).sqrt());
    let sigma_t = 1.0 / (2.0 * PI * sigma_f);
    let half = (4.0 * sigma_t / dt).ceil() as usize;
    let mut h: Vec<f64> = (0..=2 * half)
        .map(|k| {
            let t = (k as f64 - half as f64) * dt;
            (-t * t / (2.0 * sigma_t * sigma_t)).exp() * (2.0 * PI * f0 * t).cos()
        })
        .collect();
    let gain: f64 = h
        .iter()
        .enumerate()
        .map(|(k, v)| v * (2.0 * PI * f0 * (k as f64 - half as f64) * dt).cos())
        .sum::<f64>()
        * dt;
    for v in &mut h {
        *v /= gain;
    }
    (h, half)
}

/// Excitation burst convolved with the impulse response, peak-normalised,
/// sampled at the ODE rate and centred: index `k` is lag `(k - half) dt`.
pub fn transmit_pulse(tx: &TransducerConfig) -> (Vec<f64>, usize) {
    let dt = tx.ode_dt();
    let duration = tx.n_cycles / tx.f0;
    let e_half = (0.5 * duration / dt).ceil() as usize;
    let excitation: Vec<f64> = (0..=2 * e_half)
        .map(|k| {
            let t = (k as f64 - e_half as f64) * dt;
            tx.window.at(t / duration) * (2.0 * PI * tx.f0 * t).cos()
        })
        .collect();
    let (h, h_half) = impulse_response(tx.f0, tx.bandwidth, dt);
    let mut pulse = vec![0.0; excitation.len() + h.len() - 1];
    for (i, &e) in excitation.iter().enumerate() {
        if e == 0.0 {
            continue;
        }
        for (j, &hv) in h.iter().enumerate() {
            pulse[i + j] += e * hv * dt;
        }
    }
    let peak = pulse.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut pulse {
            *v /= peak;
        }
    }
    (pulse, e_half + h_half)
}

#[cfg(test)]
mod tests;
