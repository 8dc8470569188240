//! Encapsulated microbubble dynamics: a Rayleigh–Plesset equation with a
//! buckling/elastic/ruptured lipid shell, and the far-field scattered
//! pressure of the oscillating bubble.

mod io;

pub use io::{read_params, write_params, write_trace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of one bubble and its surrounding liquid.
///
/// Field names in files follow the usual symbols (`rho_l`, `sigma_l`,
/// `mu_l`, `kappa`, `kappa_s`, `chi`, `R0`, `R_buckle`, ...). `kappa_s` is
/// in N·s/m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub rho_l: f64,
    #[serde(rename = "sigma_l")]
    pub sigma_water: f64,
    pub mu_l: f64,
    pub kappa: f64,
    pub kappa_s: f64,
    pub chi: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "R_buckle")]
    pub r_buckle: f64,
    /// Defaults to the radius where the elastic tension reaches `sigma_l`.
    #[serde(rename = "R_break", default, skip_serializing_if = "Option::is_none")]
    pub r_break: Option<f64>,
    /// Defaults to `R_break`.
    #[serde(rename = "R_ruptured", default, skip_serializing_if = "Option::is_none")]
    pub r_ruptured: Option<f64>,
    #[serde(rename = "P0")]
    pub p0: f64,
    pub c: f64,
}

/// SonoVue-like phospholipid shelled bubble in water.
pub fn sonovue_preset() -> BubbleParams {
    BubbleParams {
        rho_l: 1e3,
        sigma_water: 0.073,
        mu_l: 2.0e-3,
        kappa: 1.095,
        kappa_s: 7.2e-9,
        chi: 1.0,
        r0: 0.975e-6,
        r_buckle: 0.975e-6,
        r_break: None,
        r_ruptured: None,
        p0: 101_325.0,
        c: 1540.0,
    }
}

impl Default for BubbleParams {
    fn default() -> Self {
        sonovue_preset()
    }
}

impl BubbleParams {
    pub fn r_break(&self) -> f64 {
        self.r_break
            .unwrap_or_else(|| self.r_buckle * (1.0 + self.sigma_water / self.chi).sqrt())
    }

    pub fn r_ruptured(&self) -> f64 {
        self.r_ruptured.unwrap_or_else(|| self.r_break())
    }

    /// Same bubble with its rest and buckling radii scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> BubbleParams {
        BubbleParams {
            r0: self.r0 * factor,
            r_buckle: self.r_buckle * factor,
            r_break: self.r_break.map(|r| r * factor),
            r_ruptured: self.r_ruptured.map(|r| r * factor),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho_l", self.rho_l),
            ("sigma_l", self.sigma_water),
            ("kappa", self.kappa),
            ("chi", self.chi),
            ("R0", self.r0),
            ("R_buckle", self.r_buckle),
            ("P0", self.p0),
            ("c", self.c),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [("mu_l", self.mu_l), ("kappa_s", self.kappa_s)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be non-negative, got {v}")));
            }
        }
        if self.r_buckle > self.r0 {
            return Err(Error::param("R_buckle", "must not exceed R0"));
        }
        if self.r0 > self.r_break() {
            return Err(Error::param("R_break", "must not be below R0"));
        }
        if !(self.r_ruptured() > 0.0) {
            return Err(Error::param("R_ruptured", "must be positive"));
        }
        Ok(())
    }

    /// Pressure inside the gas core at rest.
    pub fn equilibrium_pressure(&self) -> f64 {
        self.p0 + 2.0 * surface_tension(self.r0, false, self) / self.r0
    }
}

/// Shell surface tension.
///
/// Buckled (zero) at or below `R_buckle`, elastic above it and capped at
/// `sigma_l`. Once ruptured the shell behaves as a free gas/liquid
/// interface with tension `sigma_l` down to `R_ruptured`, and zero below.
pub fn surface_tension(r: f64, ruptured: bool, p: &BubbleParams) -> f64 {
    if ruptured {
        return if r >= p.r_ruptured() { p.sigma_water } else { 0.0 };
    }
    if r <= p.r_buckle {
        return 0.0;
    }
    (p.chi * (r * r / (p.r_buckle * p.r_buckle) - 1.0)).min(p.sigma_water)
}

/// Radial acceleration from the equation of motion.
///
/// The gas pressure term is written relative to the rest state so that a
/// bubble at rest with no drive has exactly zero acceleration.
pub fn marmottant_rhs(r: f64, rdot: f64, p_ac: f64, ruptured: bool, p: &BubbleParams) -> f64 {
    let sigma0 = surface_tension(p.r0, false, p);
    let p_eq = p.p0 + 2.0 * sigma0 / p.r0;
    let gas = (r / p.r0).powf(-3.0 * p.kappa);
    let radiation = 1.0 - 3.0 * p.kappa * rdot / p.c;
    let pressure = p_eq * (gas * radiation - 1.0)
        + 2.0 * (sigma0 / p.r0 - surface_tension(r, ruptured, p) / r)
        - 4.0 * p.mu_l * rdot / r
        - 4.0 * p.kappa_s * rdot / (r * r)
        - p_ac;
    (pressure / p.rho_l - 1.5 * rdot * rdot) / r
}

/// Incident pressure as a function of time.
pub trait Drive {
    fn pressure(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Drive for F {
    fn pressure(&self, t: f64) -> f64 {
        self(t)
    }
}

/// Uniformly sampled incident pressure, linearly interpolated between
/// samples and zero outside the sampled span.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSignal {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl DriveSignal {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("drive sample {i} is not finite")));
        }
        Ok(DriveSignal { t0, dt, samples })
    }

    pub fn zeros(dt: f64, n: usize) -> Self {
        DriveSignal {
            t0: 0.0,
            dt,
            samples: vec![0.0; n],
        }
    }

    /// Linear interpolation of a signal sampled at `dt` onto a grid
    /// `oversample` times finer.
    pub fn resample(t0: f64, dt: f64, samples: &[f64], oversample: usize) -> Result<Self> {
        if oversample == 0 {
            return Err(Error::param("oversample", "must be at least 1"));
        }
        let coarse = DriveSignal::new(t0, dt, samples.to_vec())?;
        let fine_dt = dt / oversample as f64;
        let n = (samples.len().max(1) - 1) * oversample + 1;
        let fine = (0..n)
            .map(|i| coarse.pressure(t0 + i as f64 * fine_dt))
            .collect();
        DriveSignal::new(t0, fine_dt, fine)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

impl Drive for DriveSignal {
    fn pressure(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.dt;
        if !(x >= 0.0) || self.samples.is_empty() {
            return 0.0;
        }
        let i = x.floor() as usize;
        let last = self.samples.len() - 1;
        if i >= last {
            // tolerate rounding at the final sample
            return if x - last as f64 <= 1e-9 { self.samples[last] } else { 0.0 };
        }
        let f = x - i as f64;
        self.samples[i] * (1.0 - f) + self.samples[i + 1] * f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classical fourth-order Runge–Kutta.
    #[default]
    Rk4,
    /// Second-order explicit midpoint rule.
    Midpoint,
}

/// Radius history on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleTrace {
    pub t0: f64,
    pub dt: f64,
    pub r: Vec<f64>,
    pub rdot: Vec<f64>,
    pub rddot: Vec<f64>,
    pub ruptured: Vec<bool>,
}

impl BubbleTrace {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
}

/// Fraction of `R0` below which a step is treated as collapse.
const COLLAPSE_FRACTION: f64 = 0.05;
const GUARD_SUBSTEPS: usize = 10;

fn step<D: Drive + ?Sized>(
    method: Method,
    drive: &D,
    p: &BubbleParams,
    ruptured: bool,
    t: f64,
    h: f64,
    (r, v): (f64, f64),
) -> (f64, f64) {
    let f = |t: f64, r: f64, v: f64| marmottant_rhs(r, v, drive.pressure(t), ruptured, p);
    match method {
        Method::Rk4 => {
            let a1 = f(t, r, v);
            let (r2, v2) = (r + 0.5 * h * v, v + 0.5 * h * a1);
            let a2 = f(t + 0.5 * h, r2, v2);
            let (r3, v3) = (r + 0.5 * h * v2, v + 0.5 * h * a2);
            let a3 = f(t + 0.5 * h, r3, v3);
            let (r4, v4) = (r + h * v3, v + h * a3);
            let a4 = f(t + h, r4, v4);
            (
                r + h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4),
                v + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
            )
        }
        Method::Midpoint => {
            let a1 = f(t, r, v);
            let (rm, vm) = (r + 0.5 * h * v, v + 0.5 * h * a1);
            (r + h * vm, v + h * f(t + 0.5 * h, rm, vm))
        }
    }
}

/// Radius below which the elastic tension reaches `sigma_l`.
fn elastic_cap(p: &BubbleParams) -> f64 {
    p.r_buckle * (1.0 + p.sigma_water / p.chi).sqrt()
}

/// Radii where the shell tension changes form, ascending.
fn kinks(p: &BubbleParams, ruptured: bool) -> Vec<f64> {
    if ruptured {
        return vec![p.r_ruptured()];
    }
    let mut k = vec![p.r_buckle, elastic_cap(p), p.r_break()];
    k.sort_by(f64::total_cmp);
    k.dedup();
    k
}

fn regime(kinks: &[f64], r: f64) -> usize {
    kinks.iter().filter(|&&k| r > k).count()
}

/// Shell state carried between steps.
struct Shell {
    ruptured: bool,
    kinks: Vec<f64>,
    regime: usize,
}

impl Shell {
    fn new(p: &BubbleParams, r: f64) -> Shell {
        let ruptured = r > p.r_break();
        let kinks = kinks(p, ruptured);
        let regime = regime(&kinks, r);
        Shell {
            ruptured,
            kinks,
            regime,
        }
    }

    fn rupture(&mut self, p: &BubbleParams) {
        self.ruptured = true;
        self.kinks = kinks(p, true);
        self.regime = usize::from(p.r_break() >= p.r_ruptured());
    }
}

/// One step of length `h`, split where the radius crosses a kink of the
/// shell tension so that each piece integrates a smooth right-hand side.
#[allow(clippy::too_many_arguments)]
fn advance<D: Drive + ?Sized>(
    method: Method,
    drive: &D,
    p: &BubbleParams,
    shell: &mut Shell,
    t: f64,
    h: f64,
    state: (f64, f64),
) -> (f64, f64) {
    let (mut t, mut rem, mut s) = (t, h, state);
    for _ in 0..8 {
        let end = step(method, drive, p, shell.ruptured, t, rem, s);
        let to = regime(&shell.kinks, end.0);
        if to == shell.regime || !end.0.is_finite() {
            return end;
        }
        let up = to > shell.regime;
        let target = shell.kinks[if up { shell.regime } else { shell.regime - 1 }];
        // regula falsi (Illinois) on the fraction of the remaining step
        let g = |theta: f64| step(method, drive, p, shell.ruptured, t, theta * rem, s).0 - target;
        let (mut a, mut fa) = (0.0, s.0 - target);
        let (mut b, mut fb) = (1.0, end.0 - target);
        let mut theta = 1.0;
        for _ in 0..60 {
            theta = (a * fb - b * fa) / (fb - fa);
            let ft = g(theta);
            if ft.abs() <= 1e-15 * target || (b - a) < 1e-14 {
                break;
            }
            if (ft > 0.0) == (fb > 0.0) {
                b = theta;
                fb = ft;
                fa *= 0.5;
            } else {
                a = theta;
                fa = ft;
                fb *= 0.5;
            }
        }
        let hit = theta * rem;
        s = step(method, drive, p, shell.ruptured, t, hit, s);
        t += hit;
        rem -= hit;
        if up && !shell.ruptured && target >= p.r_break() {
            shell.rupture(p);
        } else {
            shell.regime = if up { shell.regime + 1 } else { shell.regime - 1 };
        }
        if rem <= 0.0 {
            return s;
        }
    }
    step(method, drive, p, shell.ruptured, t, rem, s)
}

/// Integrates the radius from `(R, Rdot) = initial` over `n` samples spaced
/// `dt` starting at `t0`.
///
/// Steps that cross a kink of the shell tension are split at the crossing.
/// Rupture latches the first time `R` exceeds `R_break`. A step that would
/// take the radius below 5% of `R0` is retried with ten substeps before
/// giving up with [`Error::Collapse`].
pub fn integrate<D: Drive + ?Sized>(
    drive: &D,
    p: &BubbleParams,
    method: Method,
    t0: f64,
    dt: f64,
    n: usize,
    initial: (f64, f64),
) -> Result<BubbleTrace> {
    p.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", "must be positive"));
    }
    let floor = COLLAPSE_FRACTION * p.r0;
    let mut trace = BubbleTrace {
        t0,
        dt,
        r: Vec::with_capacity(n),
        rdot: Vec::with_capacity(n),
        rddot: Vec::with_capacity(n),
        ruptured: Vec::with_capacity(n),
    };
    let (mut r, mut v) = initial;
    let mut shell = Shell::new(p, r);
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        if !(r.is_finite() && v.is_finite()) {
            return Err(Error::Blowup { time: t });
        }
        trace.r.push(r);
        trace.rdot.push(v);
        trace.rddot.push(marmottant_rhs(r, v, drive.pressure(t), shell.ruptured, p));
        trace.ruptured.push(shell.ruptured);
        if i + 1 == n {
            break;
        }
        let ruptured_before = shell.ruptured;
        let regime_before = shell.regime;
        let mut next = advance(method, drive, p, &mut shell, t, dt, (r, v));
        if next.0.is_finite() && next.0 < floor {
            shell.ruptured = ruptured_before;
            shell.kinks = kinks(p, ruptured_before);
            shell.regime = regime_before;
            let h = dt / GUARD_SUBSTEPS as f64;
            let mut s = (r, v);
            for k in 0..GUARD_SUBSTEPS {
                s = advance(method, drive, p, &mut shell, t + k as f64 * h, h, s);
                if !(s.0 >= floor) {
                    return Err(Error::Collapse { time: t + (k + 1) as f64 * h });
                }
            }
            next = s;
        }
        (r, v) = next;
        if !shell.ruptured && r > p.r_break() {
            shell.rupture(p);
        }
    }
    Ok(trace)
}

/// Integrates from rest over the span of a sampled drive.
pub fn integrate_radius(drive: &DriveSignal, p: &BubbleParams, method: Method) -> Result<BubbleTrace> {
    integrate(drive, p, method, drive.t0, drive.dt, drive.len(), (p.r0, 0.0))
}

/// Far-field pressure radiated by the bubble wall at distance `d`.
pub fn scattered_pressure(trace: &BubbleTrace, d: f64, rho_l: f64) -> Result<Vec<f64>> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    let k = rho_l / d;
    Ok(trace
        .r
        .iter()
        .zip(&trace.rdot)
        .zip(&trace.rddot)
        .map(|((&r, &v), &a)| k * (r * r * a + 2.0 * r * v * v))
        .collect())
}

/// Small-signal model about the rest radius: `rho R0 x'' + B x' + K x = -P_ac`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
}

impl Linearization {
    /// Valid when `R0` lies strictly inside one shell regime.
    pub fn about_rest(p: &BubbleParams) -> Linearization {
        let r0 = p.r0;
        let sigma0 = surface_tension(r0, false, p);
        let elastic = sigma0 > 0.0 && sigma0 < p.sigma_water;
        let dsigma = if elastic {
            2.0 * p.chi * r0 / (p.r_buckle * p.r_buckle)
        } else {
            0.0
        };
        let p_eq = p.equilibrium_pressure();
        Linearization {
            mass: p.rho_l * r0,
            damping: 3.0 * p.kappa * p_eq / p.c + 4.0 * p.mu_l / r0 + 4.0 * p.kappa_s / (r0 * r0),
            stiffness: 3.0 * p.kappa * p_eq / r0 + 2.0 * dsigma / r0 - 2.0 * sigma0 / (r0 * r0),
        }
    }

    /// Steady-state radial amplitude for a sinusoidal drive.
    pub fn amplitude(&self, drive_amplitude: f64, omega: f64) -> f64 {
        let re = self.stiffness - self.mass * omega * omega;
        let im = self.damping * omega;
        drive_amplitude / (re * re + im * im).sqrt()
    }

    pub fn resonance(&self) -> f64 {
        (self.stiffness / self.mass).sqrt()
    }
}
