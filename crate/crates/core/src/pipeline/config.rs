use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acoustics::{amplitude_for_mi, Apodization, ColoredNoise, ImageGrid, NoiseConfig, TransducerConfig};
use crate::bubble::BubbleParams;
use crate::error::{Error, Result};
use crate::eval::Projection;
use crate::flow::FluidParams;
use crate::network::GenParams;
use crate::tracks::{RadialLaw, SeedingConfig};

/// Where the vessel network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSection {
    /// `count` randomized trees side by side, merged into one network.
    Demo {
        max_level: u32,
        #[serde(default = "one")]
        count: usize,
    },
    /// Explicit generator parameters, one network each; seeds are replaced
    /// by ones derived from the master seed.
    Generator { params: Vec<GenParams> },
    /// Straight vessel along x at `depth`, centred on the array axis.
    Tube {
        length: f64,
        radius: f64,
        depth: f64,
        #[serde(default = "one")]
        n_edges: usize,
    },
    /// Network TOML file, relative to the output directory.
    File { path: PathBuf },
}

fn one() -> usize {
    1
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection::Demo { max_level: 3, count: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePressure {
    pub node: u64,
    pub pressure: f64,
}

/// Inlet/outlet pressures for the hanging nodes, Pa. Entries in
/// `pressures` override individual nodes by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundarySection {
    pub inlet: f64,
    pub outlet: f64,
    pub pressures: Vec<NodePressure>,
}

impl Default for BoundarySection {
    fn default() -> Self {
        BoundarySection {
            inlet: 500.0,
            outlet: 0.0,
            pressures: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleSection {
    #[serde(flatten)]
    pub seeding: SeedingConfig,
    #[serde(default)]
    pub shell: BubbleParams,
    #[serde(default)]
    pub r0_spread: f64,
}

impl Default for BubbleSection {
    fn default() -> Self {
        BubbleSection {
            seeding: SeedingConfig::default(),
            shell: BubbleParams::default(),
            r0_spread: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImagingSection {
    /// Explicit grid; otherwise the aperture width from `z_min` to the
    /// recorded depth at `spacing`.
    pub grid: Option<ImageGrid>,
    pub z_min: f64,
    /// Defaults to a quarter wavelength.
    pub spacing: Option<f64>,
    pub apodization: Apodization,
    pub f_number: Option<f64>,
    pub dynamic_range: f64,
}

impl Default for ImagingSection {
    fn default() -> Self {
        ImagingSection {
            grid: None,
            z_min: 5e-3,
            spacing: None,
            apodization: Apodization::Hann,
            f_number: None,
            dynamic_range: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizeSection {
    pub threshold_db: f64,
    /// Defaults to one wavelength.
    pub min_sep: Option<f64>,
}

impl Default for LocalizeSection {
    fn default() -> Self {
        LocalizeSection {
            threshold_db: -12.0,
            min_sep: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackSection {
    /// Defaults to one wavelength.
    pub max_link: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSection {
    /// Defaults to half a wavelength.
    pub radius: Option<f64>,
    pub projection: Projection,
    /// External prediction CSV, relative to the output directory. When
    /// unset the tracked (or else untracked) reference predictions are used.
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderSource {
    #[default]
    Tracks,
    GroundTruth,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSection {
    pub source: RenderSource,
    /// Defaults to the imaging region at a tenth of a wavelength.
    pub grid: Option<ImageGrid>,
}

/// Everything one dataset run needs. Module seeds are derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub fluid: FluidParams,
    #[serde(default)]
    pub boundary: BoundarySection,
    #[serde(default)]
    pub bubbles: BubbleSection,
    #[serde(default)]
    pub transducer: TransducerConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub imaging: ImagingSection,
    #[serde(default)]
    pub localize: LocalizeSection,
    #[serde(default)]
    pub track: TrackSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub render: RenderSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        match &self.network {
            NetworkSection::Demo { count, .. } if *count == 0 => {
                return Err(Error::param("network.count", "must be at least 1"));
            }
            NetworkSection::Generator { params } => {
                if params.is_empty() {
                    return Err(Error::param("network.params", "need at least one generator"));
                }
                for p in params {
                    p.validate()?;
                }
            }
            NetworkSection::Tube {
                length,
                radius,
                depth,
                n_edges,
            } => {
                if !(*length > 0.0 && *radius > 0.0 && *depth > 0.0 && *n_edges > 0) {
                    return Err(Error::param("network", "tube needs positive length, radius, depth and edges"));
                }
            }
            _ => {}
        }
        self.bubbles.seeding.validate()?;
        self.bubbles.shell.validate()?;
        self.transducer.validate()?;
        self.noise.validate(self.transducer.fs)?;
        if let Some(g) = &self.imaging.grid {
            g.validate()?;
        }
        if !(self.imaging.dynamic_range > 0.0) {
            return Err(Error::param("imaging.dynamic_range", "must be positive"));
        }
        if let Some(r) = self.evaluation.radius {
            if !(r > 0.0) {
                return Err(Error::param("evaluation.radius", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        self.transducer.wavelength()
    }

    pub fn search_radius(&self) -> f64 {
        self.evaluation.radius.unwrap_or(0.5 * self.wavelength())
    }

    pub fn min_sep(&self) -> f64 {
        self.localize.min_sep.unwrap_or(self.wavelength())
    }

    pub fn max_link(&self) -> f64 {
        self.track.max_link.unwrap_or(self.wavelength())
    }

    pub fn image_grid(&self) -> Result<ImageGrid> {
        if let Some(g) = self.imaging.grid {
            return Ok(g);
        }
        let tx = &self.transducer;
        let half = 0.5 * tx.aperture().max(tx.pitch);
        let spacing = self.imaging.spacing.unwrap_or(tx.wavelength() / 4.0);
        ImageGrid::covering(-half, half, self.imaging.z_min, tx.record_depth, spacing)
    }

    pub fn render_grid(&self) -> Result<ImageGrid> {
        if let Some(g) = self.render.grid {
            return Ok(g);
        }
        let img = self.image_grid()?;
        let x1 = img.x(img.nx - 1);
        let z1 = img.z(img.nz - 1);
        ImageGrid::covering(img.x0, x1, img.z0, z1, self.wavelength() / 10.0)
    }

    /// Named starting points: `training`, `challenge`, `desk`, `hf`, `lf`.
    pub fn preset(name: &str) -> Result<Self> {
        let base = PipelineConfig {
            seed: 1,
            network: NetworkSection::default(),
            fluid: FluidParams::default(),
            boundary: BoundarySection::default(),
            bubbles: BubbleSection::default(),
            transducer: TransducerConfig::default(),
            noise: NoiseConfig {
                white_snr_db: Some(30.0),
                colored: Some(ColoredNoise {
                    f_lo: 3e6,
                    f_hi: 7e6,
                    level_db: -35.0,
                }),
                tgc_db_per_cm: 0.5,
                ..NoiseConfig::default()
            },
            imaging: ImagingSection::default(),
            localize: LocalizeSection::default(),
            track: TrackSection::default(),
            evaluation: EvaluationSection::default(),
            render: RenderSection::default(),
        };
        let seeding = |n_bubbles, n_frames| SeedingConfig {
            n_bubbles,
            n_frames,
            frame_rate: 500.0,
            radial: RadialLaw::Area,
            ..SeedingConfig::default()
        };
        let cfg = match name {
            // one vessel, few bubbles
            "training" => PipelineConfig {
                network: NetworkSection::Demo { max_level: 0, count: 1 },
                bubbles: BubbleSection {
                    seeding: seeding(20, 100),
                    ..BubbleSection::default()
                },
                ..base
            },
            // several trees merged, dense bubbles
            "challenge" => PipelineConfig {
                network: NetworkSection::Demo { max_level: 4, count: 2 },
                bubbles: BubbleSection {
                    seeding: seeding(800, 100),
                    r0_spread: 0.1,
                    ..BubbleSection::default()
                },
                ..base
            },
            "desk" => PipelineConfig {
                network: NetworkSection::Demo { max_level: 4, count: 1 },
                bubbles: BubbleSection {
                    seeding: seeding(500, 200),
                    ..BubbleSection::default()
                },
                ..base
            },
            "hf" => PipelineConfig {
                transducer: TransducerConfig {
                    n_elements: 128,
                    pitch: 0.1e-3,
                    f0: 15e6,
                    fs: 62.5e6,
                    amplitude: amplitude_for_mi(0.1, 15e6),
                    ..TransducerConfig::default()
                },
                network: NetworkSection::Demo { max_level: 3, count: 1 },
                bubbles: BubbleSection {
                    seeding: seeding(100, 100),
                    ..BubbleSection::default()
                },
                noise: NoiseConfig {
                    colored: Some(ColoredNoise {
                        f_lo: 9e6,
                        f_hi: 21e6,
                        level_db: -35.0,
                    }),
                    ..base.noise.clone()
                },
                ..base
            },
            "lf" => PipelineConfig {
                transducer: TransducerConfig {
                    n_elements: 64,
                    pitch: 0.3e-3,
                    f0: 3e6,
                    fs: 15e6,
                    amplitude: amplitude_for_mi(0.1, 3e6),
                    ..TransducerConfig::default()
                },
                network: NetworkSection::Demo { max_level: 3, count: 1 },
                bubbles: BubbleSection {
                    seeding: seeding(100, 100),
                    ..BubbleSection::default()
                },
                noise: NoiseConfig {
                    colored: Some(ColoredNoise {
                        f_lo: 1.8e6,
                        f_hi: 4.2e6,
                        level_db: -35.0,
                    }),
                    ..base.noise.clone()
                },
                ..base
            },
            other => {
                return Err(Error::Input(format!(
                    "unknown preset `{other}` (expected training, challenge, desk, hf or lf)"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
