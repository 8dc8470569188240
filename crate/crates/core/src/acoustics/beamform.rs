use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{RfFrame, TransducerConfig};
use crate::error::{Error, Result};
use crate::network::Vec3;

/// Regular pixel grid in the imaging plane (y = 0). Pixel `(iz, ix)` sits
/// at `(x0 + ix dx, z0 + iz dz)`; images are stored row by row in z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub x0: f64,
    pub dx: f64,
    pub nx: usize,
    pub z0: f64,
    pub dz: f64,
    pub nz: usize,
}

impl ImageGrid {
    /// Grid covering `[x_min, x_max] × [z_min, z_max]` at `spacing`.
    pub fn covering(x_min: f64, x_max: f64, z_min: f64, z_max: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && x_max > x_min && z_max > z_min) {
            return Err(Error::param("grid", "need positive spacing and non-empty extents"));
        }
        Ok(ImageGrid {
            x0: x_min,
            dx: spacing,
            nx: ((x_max - x_min) / spacing).floor() as usize + 1,
            z0: z_min,
            dz: spacing,
            nz: ((z_max - z_min) / spacing).floor() as usize + 1,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.x0 + ix as f64 * self.dx
    }

    pub fn z(&self, iz: usize) -> f64 {
        self.z0 + iz as f64 * self.dz
    }

    pub fn index(&self, iz: usize, ix: usize) -> usize {
        iz * self.nx + ix
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.nz == 0 || !(self.dx > 0.0) || !(self.dz > 0.0) {
            return Err(Error::param("grid", "must have positive size and spacing"));
        }
        if !(self.z0 > 0.0) {
            return Err(Error::param("grid.z0", "image must start in front of the array"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Apodization {
    #[default]
    Hann,
    Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformConfig {
    pub grid: ImageGrid,
    #[serde(default)]
    pub apodization: Apodization,
    /// Receive f-number for a depth-dependent aperture; `None` uses every
    /// element at every depth.
    #[serde(default)]
    pub f_number: Option<f64>,
}

impl BeamformConfig {
    /// Grid spanning the aperture laterally from `z_min` to the recorded
    /// depth, at a quarter wavelength.
    pub fn for_transducer(tx: &TransducerConfig, z_min: f64) -> Result<Self> {
        let half = 0.5 * tx.aperture();
        Ok(BeamformConfig {
            grid: ImageGrid::covering(-half, half, z_min, tx.record_depth, tx.wavelength() / 4.0)?,
            apodization: Apodization::Hann,
            f_number: None,
        })
    }
}

/// Complex beamformed image on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    pub grid: ImageGrid,
    pub data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn envelope(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }
}

/// Baseband analytic signal `a(t) e^{-i 2π f0 t}` of each channel.
fn baseband(frame: &RfFrame, tx: &TransducerConfig) -> Vec<Vec<Complex64>> {
    let n = frame.n_samples;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let rot: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0 / n as f64, -2.0 * PI * tx.f0 * i as f64 / tx.fs))
        .collect();
    let mut out = Vec::with_capacity(frame.n_angles * frame.n_elements);
    for a in 0..frame.n_angles {
        for e in 0..frame.n_elements {
            let mut buf: Vec<Complex64> = frame
                .channel(a, e)
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect();
            fwd.process(&mut buf);
            for (k, b) in buf.iter_mut().enumerate() {
                if k == 0 || 2 * k == n {
                    continue;
                }
                *b *= if 2 * k < n { 2.0 } else { 0.0 };
            }
            inv.process(&mut buf);
            for (b, r) in buf.iter_mut().zip(&rot) {
                *b *= r;
            }
            out.push(buf);
        }
    }
    out
}

fn apodize(kind: Apodization, u: f64) -> f64 {
    if u.abs() > 0.5 {
        return 0.0;
    }
    match kind {
        Apodization::Hann => (PI * u).cos().powi(2),
        Apodization::Rect => 1.0,
    }
}

/// Delay-and-sum with dynamic receive focusing and coherent compounding
/// over all transmit angles in the frame.
pub fn beamform_das(frame: &RfFrame, tx: &TransducerConfig, config: &BeamformConfig) -> Result<ComplexImage> {
    tx.validate()?;
    config.grid.validate()?;
    if frame.n_elements != tx.n_elements || frame.n_angles != tx.angles.len() {
        return Err(Error::Input("RF frame does not match the transducer".into()));
    }
    let grid = config.grid;
    let iq = baseband(frame, tx);
    let n = frame.n_samples;
    let xs: Vec<f64> = (0..tx.n_elements).map(|e| tx.element_x(e)).collect();
    let aperture = tx.aperture().max(tx.pitch);
    let fixed: Vec<f64> = xs
        .iter()
        .map(|x| if tx.n_elements == 1 { 1.0 } else { apodize(config.apodization, x / (aperture + tx.pitch)) })
        .collect();
    let omega = 2.0 * PI * tx.f0;
    let rows: Vec<Vec<Complex64>> = (0..grid.nz)
        .into_par_iter()
        .map(|iz| {
            let z = grid.z(iz);
            let mut row = vec![Complex64::new(0.0, 0.0); grid.nx];
            for (ix, px) in row.iter_mut().enumerate() {
                let x = grid.x(ix);
                let point = Vec3::new(x, 0.0, z);
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, &angle) in tx.angles.iter().enumerate() {
                    let t_tx = tx.plane_wave_arrival(&point, angle);
                    for (e, &xe) in xs.iter().enumerate() {
                        let w = match config.f_number {
                            Some(f) => apodize(config.apodization, (x - xe) * f / z),
                            None => fixed[e],
                        };
                        if w == 0.0 {
                            continue;
                        }
                        let dxe = x - xe;
                        let tau = t_tx + (dxe * dxe + z * z).sqrt() / tx.c;
                        let s = tau * tx.fs;
                        let i = s.floor();
                        if i < 0.0 || i as usize + 1 >= n {
                            continue;
                        }
                        let i = i as usize;
                        let f = s - i as f64;
                        let ch = &iq[a * tx.n_elements + e];
                        let v = ch[i] + (ch[i + 1] - ch[i]) * f;
                        acc += v * Complex64::from_polar(w, omega * tau);
                    }
                }
                *px = acc;
            }
            row
        })
        .collect();
    Ok(ComplexImage {
        grid,
        data: rows.into_iter().flatten().collect(),
    })
}

/// Envelope and log-compressed image.
#[derive(Debug, Clone, PartialEq)]
pub struct BModeImage {
    pub grid: ImageGrid,
    pub envelope: Vec<f64>,
    /// 20 log10 of the peak-normalised envelope, clipped at `-dynamic_range`.
    pub db: Vec<f64>,
    pub dynamic_range: f64,
}

/// Peak-normalised log compression. An all-zero image maps to the floor.
pub fn envelope_log(image: &ComplexImage, dynamic_range: f64) -> BModeImage {
    let envelope = image.envelope();
    let peak = envelope.iter().fold(0.0f64, |m, &v| m.max(v));
    let db = envelope
        .iter()
        .map(|&v| {
            if peak > 0.0 && v > 0.0 {
                (20.0 * (v / peak).log10()).max(-dynamic_range)
            } else {
                -dynamic_range
            }
        })
        .collect();
    BModeImage {
        grid: image.grid,
        envelope,
        db,
        dynamic_range,
    }
}
