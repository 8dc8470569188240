use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Frame, Vec3};
use crate::error::{Error, Result};

/// Generator state visible to the parameter functions.
#[derive(Debug, Clone, Copy)]
pub struct GenState {
    /// Index of the current node.
    pub node: usize,
    pub position: Vec3,
    pub frame: Frame,
    pub radius: f64,
    pub level: u32,
}

/// Scalar-valued parameter function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarParam {
    Constant { value: f64 },
    /// `base + per_level * lvl`
    LinearInLevel { base: f64, per_level: f64 },
    /// Uniform draw in `[low, high)`.
    Uniform { low: f64, high: f64 },
    /// `factor * r` for the current radius.
    RadiusMultiple { factor: f64 },
}

impl ScalarParam {
    pub fn eval<R: Rng + ?Sized>(&self, state: &GenState, rng: &mut R) -> f64 {
        match *self {
            ScalarParam::Constant { value } => value,
            ScalarParam::LinearInLevel { base, per_level } => base + per_level * state.level as f64,
            ScalarParam::Uniform { low, high } => {
                // One draw per evaluation regardless of the range, so the
                // stream position never depends on parameter values.
                let u: f64 = rng.random();
                low + (high - low) * u
            }
            ScalarParam::RadiusMultiple { factor } => factor * state.radius,
        }
    }

    /// Smallest value over levels `0..=max_level`, when bounded.
    fn lower_bound(&self, max_level: u32) -> f64 {
        match *self {
            ScalarParam::Constant { value } => value,
            ScalarParam::LinearInLevel { base, per_level } => {
                base.min(base + per_level * max_level as f64)
            }
            ScalarParam::Uniform { low, high } => low.min(high),
            ScalarParam::RadiusMultiple { factor } => factor,
        }
    }

    fn upper_bound(&self, max_level: u32) -> f64 {
        match *self {
            ScalarParam::Constant { value } => value,
            ScalarParam::LinearInLevel { base, per_level } => {
                base.max(base + per_level * max_level as f64)
            }
            ScalarParam::Uniform { low, high } => low.max(high),
            ScalarParam::RadiusMultiple { factor } => factor,
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            ScalarParam::Constant { value } => value.is_finite(),
            ScalarParam::LinearInLevel { base, per_level } => base.is_finite() && per_level.is_finite(),
            ScalarParam::Uniform { low, high } => low.is_finite() && high.is_finite(),
            ScalarParam::RadiusMultiple { factor } => factor.is_finite(),
        }
    }
}

/// Orientation update for the next segment.
///
/// `Cone` tilts the axis by a polar angle drawn uniformly over the solid
/// angle of the spherical band `[min_angle, max_angle]` and an azimuth
/// uniform in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RotationParam {
    None,
    Fixed { polar: f64, azimuth: f64 },
    Cone { min_angle: f64, max_angle: f64 },
}

impl RotationParam {
    pub fn apply<R: Rng + ?Sized>(&self, frame: &Frame, rng: &mut R) -> Frame {
        let (polar, azimuth) = match *self {
            RotationParam::None => return *frame,
            RotationParam::Fixed { polar, azimuth } => (polar, azimuth),
            RotationParam::Cone {
                min_angle,
                max_angle,
            } => {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                let (c_hi, c_lo) = (min_angle.cos(), max_angle.cos());
                let cos_a = c_lo + (c_hi - c_lo) * u;
                (cos_a.clamp(-1.0, 1.0).acos(), 2.0 * PI * v)
            }
        };
        tilt(frame, polar, azimuth)
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        match *self {
            RotationParam::None => Ok(()),
            RotationParam::Fixed { polar, azimuth } => {
                if polar.is_finite() && azimuth.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param(name, "angles must be finite"))
                }
            }
            RotationParam::Cone {
                min_angle,
                max_angle,
            } => {
                if !(0.0..=PI).contains(&min_angle)
                    || !(0.0..=PI).contains(&max_angle)
                    || min_angle > max_angle
                {
                    Err(Error::param(name, "cone angles must satisfy 0 <= min <= max <= pi"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Rotates `frame` so that its axis tilts by `polar` toward the in-plane
/// direction at `azimuth` (measured from `e1` toward `e2`).
pub(crate) fn tilt(frame: &Frame, polar: f64, azimuth: f64) -> Frame {
    let (sa, ca) = polar.sin_cos();
    let (sp, cp) = azimuth.sin_cos();
    let u = frame.e1 * cp + frame.e2 * sp;
    let w = frame.e2 * cp - frame.e1 * sp;
    let d = frame.d * ca + u * sa;
    let u_new = u * ca - frame.d * sa;
    let e1 = u_new * cp - w * sp;
    Frame {
        d,
        e1,
        e2: d.cross(&e1),
    }
    .orthonormalized()
}

/// Domain restricting where vessels may grow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Box { min: [f64; 3], max: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
    Ellipsoid { center: [f64; 3], semi_axes: [f64; 3] },
}

impl Region {
    pub fn contains(&self, p: &Vec3) -> bool {
        match self {
            Region::Box { min, max } => (0..3).all(|i| p[i] >= min[i] && p[i] <= max[i]),
            Region::Sphere { center, radius } => {
                (p - Vec3::from(*center)).norm_squared() <= radius * radius
            }
            Region::Ellipsoid { center, semi_axes } => {
                (0..3)
                    .map(|i| ((p[i] - center[i]) / semi_axes[i]).powi(2))
                    .sum::<f64>()
                    <= 1.0
            }
        }
    }
}

fn default_max_edges() -> usize {
    1_000_000
}

/// Configuration of the randomized recursive generator.
///
/// The seven `*_f` fields are the parameter functions evaluated against the
/// current [`GenState`]. `r_decay_f` and `bif_r_decay_f` are multiplicative
/// factors on the current radius; `bif_occurs_f` is a per-node probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub edge_step_f: ScalarParam,
    pub inside_f: Region,
    pub rot_f: RotationParam,
    pub r_decay_f: ScalarParam,
    pub bif_occurs_f: ScalarParam,
    pub bif_r_decay_f: ScalarParam,
    pub bif_rot_f: RotationParam,
    pub max_level: u32,
    pub seed: u64,
    pub origin: [f64; 3],
    pub direction: [f64; 3],
    pub initial_radius: f64,
    #[serde(default = "default_max_edges")]
    pub max_edges: usize,
}

impl GenParams {
    /// Rejects degenerate configurations before any generation happens.
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_radius > 0.0 && self.initial_radius.is_finite()) {
            return Err(Error::param("initial_radius", "must be positive"));
        }
        for (name, p) in [
            ("edge_step_f", &self.edge_step_f),
            ("r_decay_f", &self.r_decay_f),
            ("bif_occurs_f", &self.bif_occurs_f),
            ("bif_r_decay_f", &self.bif_r_decay_f),
        ] {
            if !p.is_finite() {
                return Err(Error::param(name, "values must be finite"));
            }
        }
        if !(self.edge_step_f.lower_bound(self.max_level) > 0.0) {
            return Err(Error::param("edge_step_f", "step must be positive"));
        }
        if !(self.r_decay_f.lower_bound(self.max_level) > 0.0) {
            return Err(Error::param("r_decay_f", "radius factor must be positive"));
        }
        if !(self.bif_r_decay_f.lower_bound(self.max_level) > 0.0) {
            return Err(Error::param("bif_r_decay_f", "radius factor must be positive"));
        }
        if matches!(self.bif_occurs_f, ScalarParam::RadiusMultiple { .. }) {
            return Err(Error::param("bif_occurs_f", "must be a probability, not radius-relative"));
        }
        let (plo, phi) = (
            self.bif_occurs_f.lower_bound(self.max_level),
            self.bif_occurs_f.upper_bound(self.max_level),
        );
        if plo < 0.0 || phi > 1.0 {
            return Err(Error::param("bif_occurs_f", "probability must lie in [0, 1]"));
        }
        self.rot_f.validate("rot_f")?;
        self.bif_rot_f.validate("bif_rot_f")?;
        let dir = Vec3::from(self.direction);
        if !(dir.norm() > 0.0 && dir.iter().all(|v| v.is_finite())) {
            return Err(Error::param("direction", "must be a finite non-zero vector"));
        }
        let origin = Vec3::from(self.origin);
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::param("origin", "must be finite"));
        }
        if !self.inside_f.contains(&origin) {
            return Err(Error::param("origin", "initial position lies outside inside_f"));
        }
        if self.max_edges == 0 {
            return Err(Error::param("max_edges", "must be at least 1"));
        }
        Ok(())
    }
}

impl GenParams {
    /// A randomized tortuous tree growing along +z inside a thin slab, in the
    /// range of sizes used for the demonstration networks.
    pub fn demo(seed: u64, max_level: u32) -> GenParams {
        GenParams {
            edge_step_f: ScalarParam::Uniform {
                low: 150e-6,
                high: 300e-6,
            },
            inside_f: Region::Box {
                min: [-5e-3, -1.5e-3, 8e-3],
                max: [5e-3, 1.5e-3, 20e-3],
            },
            rot_f: RotationParam::Cone {
                min_angle: 0.0,
                max_angle: 0.15,
            },
            r_decay_f: ScalarParam::Uniform {
                low: 0.97,
                high: 1.0,
            },
            bif_occurs_f: ScalarParam::Constant { value: 0.2 },
            bif_r_decay_f: ScalarParam::Uniform {
                low: 0.7,
                high: 0.85,
            },
            bif_rot_f: RotationParam::Cone {
                min_angle: 0.5,
                max_angle: 1.2,
            },
            max_level,
            seed,
            origin: [0.0, 0.0, 8.1e-3],
            direction: [0.0, 0.0, 1.0],
            initial_radius: 60e-6,
            max_edges: default_max_edges(),
        }
    }
}
