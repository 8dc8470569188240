use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{impulse_response, transmit_pulse, NoiseConfig, TransducerConfig};
use crate::bubble::{integrate_radius, scattered_pressure, BubbleParams, DriveSignal, Method};
use crate::error::{Error, Result};
use crate::network::Vec3;
use crate::rng::{derive, stream};
use crate::tracks::Event;

/// Received channel data: `n_angles × n_elements × n_samples`, sample `n`
/// at time `n / fs` after the first element fires.
#[derive(Debug, Clone, PartialEq)]
pub struct RfFrame {
    pub n_angles: usize,
    pub n_elements: usize,
    pub n_samples: usize,
    pub data: Vec<f64>,
}

impl RfFrame {
    pub fn zeros(n_angles: usize, n_elements: usize, n_samples: usize) -> Self {
        RfFrame {
            n_angles,
            n_elements,
            n_samples,
            data: vec![0.0; n_angles * n_elements * n_samples],
        }
    }

    pub fn for_transducer(tx: &TransducerConfig) -> Self {
        RfFrame::zeros(tx.angles.len(), tx.n_elements, tx.n_samples())
    }

    pub fn channel(&self, angle: usize, element: usize) -> &[f64] {
        let start = (angle * self.n_elements + element) * self.n_samples;
        &self.data[start..start + self.n_samples]
    }

    pub fn channel_mut(&mut self, angle: usize, element: usize) -> &mut [f64] {
        let start = (angle * self.n_elements + element) * self.n_samples;
        &mut self.data[start..start + self.n_samples]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// One scatterer's received signal for one transmit angle; each element
/// holds a run of samples starting at a sample index.
#[derive(Debug, Clone, PartialEq)]
pub struct RfContribution {
    pub angle: usize,
    pub elements: Vec<(usize, Vec<f64>)>,
}

impl RfContribution {
    pub fn add_to(&self, frame: &mut RfFrame) {
        for (e, (start, values)) in self.elements.iter().enumerate() {
            let ch = frame.channel_mut(self.angle, e);
            for (dst, v) in ch[*start..].iter_mut().zip(values) {
                *dst += v;
            }
        }
    }
}

/// Per-bubble shell parameters, fixed for a bubble over the whole video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Population {
    pub bubble: BubbleParams,
    /// Rest radius drawn uniformly in `R0 · [1 - spread, 1 + spread]`.
    pub r0_spread: f64,
    pub seed: u64,
}

impl Default for Population {
    fn default() -> Self {
        Population {
            bubble: BubbleParams::default(),
            r0_spread: 0.0,
            seed: 0,
        }
    }
}

impl Population {
    pub fn params_for(&self, bubble_id: u64) -> BubbleParams {
        if self.r0_spread == 0.0 {
            return self.bubble.clone();
        }
        let u: f64 = stream(derive(self.seed, bubble_id)).random();
        self.bubble.scaled(1.0 + self.r0_spread * (2.0 * u - 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        self.bubble.validate()?;
        if !(0.0..1.0).contains(&self.r0_spread) {
            return Err(Error::param("r0_spread", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

struct Plan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel: Vec<Complex64>,
}

/// Precomputed transmit pulse, impulse response and FFT plans for one
/// transducer setup.
pub struct Simulator {
    tx: TransducerConfig,
    pulse: Vec<f64>,
    pulse_half: usize,
    h: Vec<f64>,
    h_half: usize,
    planner: Mutex<FftPlanner<f64>>,
    plans: Mutex<HashMap<usize, Arc<Plan>>>,
}

impl Simulator {
    pub fn new(tx: &TransducerConfig) -> Result<Self> {
        tx.validate()?;
        let (pulse, pulse_half) = transmit_pulse(tx);
        let (h, h_half) = impulse_response(tx.f0, tx.bandwidth, tx.ode_dt());
        Ok(Simulator {
            tx: tx.clone(),
            pulse,
            pulse_half,
            h,
            h_half,
            planner: Mutex::new(FftPlanner::new()),
            plans: Mutex::new(HashMap::new()),
        })
    }

    pub fn transducer(&self) -> &TransducerConfig {
        &self.tx
    }

    /// Incident pressure at `point` for transmit angle index `angle`, on the
    /// global ODE grid (times are integer multiples of the ODE step).
    pub fn drive_at(&self, point: &Vec3, angle: usize) -> Result<DriveSignal> {
        let tx = &self.tx;
        if !(point.z > 0.0) {
            return Err(Error::Domain(format!("point z = {} is not in front of the array", point.z)));
        }
        let dt = tx.ode_dt();
        let theta = tx.angles[angle];
        let scale = tx.amplitude / tx.n_elements as f64 * 0.01;
        let paths: Vec<(f64, f64)> = (0..tx.n_elements)
            .map(|e| {
                let (delay, gain) = tx.propagation(e, point);
                (tx.firing_delay(e, theta) + delay, scale * gain)
            })
            .collect();
        let first = paths.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let last = paths.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let half = self.pulse_half as i64;
        let j0 = (first / dt).floor() as i64 - half - 1;
        let j1 = (last / dt).ceil() as i64 + half + 1;
        let tail = (tx.ringdown / dt).ceil() as i64;
        let mut samples = vec![0.0; (j1 - j0 + 1 + tail) as usize];
        for &(tau, gain) in &paths {
            add_shifted(&mut samples, j0, &self.pulse, self.pulse_half, tau / dt, gain);
        }
        DriveSignal::new(j0 as f64 * dt, dt, samples)
    }

    fn plan(&self, n: usize) -> Arc<Plan> {
        if let Some(p) = self.plans.lock().expect("plan cache").get(&n) {
            return p.clone();
        }
        let (forward, inverse) = {
            let mut planner = self.planner.lock().expect("fft planner");
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        };
        let dt = self.tx.ode_dt();
        let mut kernel: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(self.h.get(i).map_or(0.0, |v| v * dt / n as f64), 0.0))
            .collect();
        forward.process(&mut kernel);
        let plan = Arc::new(Plan {
            forward,
            inverse,
            kernel,
        });
        self.plans.lock().expect("plan cache").insert(n, plan.clone());
        plan
    }

    /// Receive-filters a scattered-pressure series (computed at 1 m) and
    /// propagates it to every element.
    pub fn receive(&self, scatter: &DriveSignal, point: &Vec3, angle: usize) -> RfContribution {
        let tx = &self.tx;
        let dt = tx.ode_dt();
        let len = scatter.samples.len() + self.h.len() - 1;
        let plan = self.plan(len.next_power_of_two());
        let n = plan.kernel.len();
        let mut buf: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(scatter.samples.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        plan.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&plan.kernel) {
            *b *= k;
        }
        plan.inverse.process(&mut buf);
        let filtered: Vec<f64> = buf[..len].iter().map(|c| c.re).collect();
        // filtered[i] is at time t0 + (i - h_half) dt
        let f_t0 = scatter.t0 - self.h_half as f64 * dt;
        let os = tx.oversample as f64;
        let n_samples = tx.n_samples();
        let elements = (0..tx.n_elements)
            .map(|e| {
                let (delay, gain) = tx.propagation(e, point);
                // fractional index into `filtered` of RF sample m
                let offset = (delay + f_t0) / dt;
                let lo = ((offset / os).ceil().max(0.0)) as usize;
                let hi_t = (offset + (len - 1) as f64) / os;
                if hi_t < 0.0 || lo >= n_samples {
                    return (0, Vec::new());
                }
                let hi = (hi_t.floor() as usize).min(n_samples - 1);
                let values = (lo..=hi)
                    .map(|m| gain * interp(&filtered, m as f64 * os - offset))
                    .collect();
                (lo, values)
            })
            .collect();
        RfContribution { angle, elements }
    }

    /// Full transmit → bubble → receive chain for one scatterer and angle.
    pub fn bubble_contribution(&self, point: &Vec3, params: &BubbleParams, angle: usize) -> Result<RfContribution> {
        let drive = self.drive_at(point, angle)?;
        let trace = integrate_radius(&drive, params, Method::Rk4)?;
        let scatter = scattered_pressure(&trace, 1.0, params.rho_l)?;
        let series = DriveSignal {
            t0: trace.t0,
            dt: trace.dt,
            samples: scatter,
        };
        Ok(self.receive(&series, point, angle))
    }

    /// Noise-free RF of all bubbles in one frame. Contributions are summed
    /// in input order, so the result does not depend on the thread count.
    pub fn clean_frame(&self, events: &[Event], population: &Population) -> Result<RfFrame> {
        let n_angles = self.tx.angles.len();
        let jobs: Vec<(usize, usize)> = (0..events.len())
            .flat_map(|b| (0..n_angles).map(move |a| (b, a)))
            .collect();
        let parts: Vec<RfContribution> = jobs
            .par_iter()
            .map(|&(b, a)| {
                let ev = &events[b];
                let params = population.params_for(ev.bubble_id);
                self.bubble_contribution(&Vec3::from(ev.position), &params, a)
                    .map_err(|e| Error::Bubble {
                        bubble_id: ev.bubble_id,
                        source: Box::new(e),
                    })
            })
            .collect::<Result<_>>()?;
        let mut frame = RfFrame::for_transducer(&self.tx);
        for part in &parts {
            part.add_to(&mut frame);
        }
        Ok(frame)
    }

    /// Peak received amplitude of one unjittered bubble on the array axis
    /// at `depth`; the reference level for noise settings.
    pub fn reference_amplitude(&self, bubble: &BubbleParams, depth: f64) -> Result<f64> {
        let point = Vec3::new(0.0, 0.0, depth);
        let mut frame = RfFrame::for_transducer(&self.tx);
        self.bubble_contribution(&point, bubble, 0)?.add_to(&mut frame);
        Ok(frame.max_abs())
    }

    /// Clean frame plus noise drawn from `seed`.
    pub fn simulate_frame(
        &self,
        events: &[Event],
        population: &Population,
        noise: &NoiseConfig,
        reference: f64,
        seed: u64,
    ) -> Result<RfFrame> {
        let mut frame = self.clean_frame(events, population)?;
        super::apply_noise(&mut frame, &self.tx, noise, reference, seed)?;
        Ok(frame)
    }
}

/// Adds `gain · pulse(t - tau)` onto a grid starting at index `j0`, where
/// `tau` is in grid units and `pulse[k]` is at lag `k - half`.
fn add_shifted(out: &mut [f64], j0: i64, pulse: &[f64], half: usize, tau: f64, gain: f64) {
    // grid index j maps to pulse position x = j - tau + half
    let base = tau - half as f64;
    let start = base.ceil() as i64;
    let frac = start as f64 - base;
    for k in 0..pulse.len() as i64 {
        let j = start + k;
        let idx = j - j0;
        if idx < 0 || idx as usize >= out.len() {
            continue;
        }
        let i = k as usize;
        let a = pulse[i];
        let b = pulse.get(i + 1).copied().unwrap_or(0.0);
        out[idx as usize] += gain * (a + (b - a) * frac);
    }
}

fn interp(v: &[f64], x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let i = x.floor() as usize;
    if i + 1 >= v.len() {
        return if i + 1 == v.len() { v[i] } else { 0.0 };
    }
    let f = x - i as f64;
    v[i] + (v[i + 1] - v[i]) * f
}

/// Incident pressure at `point` for a steering angle, at the ODE rate.
pub fn transmit_pressure_at(point: &Vec3, tx: &TransducerConfig, angle: f64) -> Result<DriveSignal> {
    let single = TransducerConfig {
        angles: vec![angle],
        ..tx.clone()
    };
    Simulator::new(&single)?.drive_at(point, 0)
}

/// Receive chain for a scattered-pressure series computed at 1 m.
pub fn receive_convolve(scatter: &DriveSignal, point: &Vec3, tx: &TransducerConfig) -> Result<RfContribution> {
    Ok(Simulator::new(tx)?.receive(scatter, point, 0))
}

/// One noisy RF frame for the events of a single frame.
pub fn simulate_frame(
    events: &[Event],
    population: &Population,
    tx: &TransducerConfig,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<RfFrame> {
    let sim = Simulator::new(tx)?;
    let reference = match noise.reference_amplitude {
        Some(r) => r,
        None => sim.reference_amplitude(&population.bubble, noise.reference_depth)?,
    };
    sim.simulate_frame(events, population, noise, reference, seed)
}
