//! Configuration-driven dataset generation: network, flow, bubble tracks,
//! RF, B-mode, reference localization/tracking, scoring and rendering.
//!
//! Every stage reads and writes fixed file names inside one output
//! directory. A stage whose inputs are missing runs its producers first.

mod config;

pub use config::{
    BoundarySection, BubbleSection, EvaluationSection, ImagingSection, LocalizeSection, NetworkSection, NodePressure,
    PipelineConfig, RenderSection, RenderSource, TrackSection,
};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acoustics::{
    beamform_das, envelope_log, read_bmode_raw, write_bmode, BModeImage, BeamformConfig, Population, RfHeader,
    RfReader, RfWriter, Simulator,
};
use crate::error::{Error, Result};
use crate::eval::{
    self, read_predictions_csv, reference_localizer, reference_tracker, render_sr_image, render_velocity_map,
    tracks_from_ground_truth, write_predictions_csv, write_report, write_scalar_image, EvalReport, Localization,
    TrackAssignment,
};
use crate::flow::{self, BoundaryConditions, FlowSolution};
use crate::network::{self, generate_network, io::NetworkMeta, GenParams, Region, Vec3, VesselNetwork};
use crate::rng::{derive, stage_seed};
use crate::tracks::{read_events_csv, simulate_events, write_events_csv, EventTable};

pub const NETWORK_FILE: &str = "network.toml";
pub const FLOW_EDGES_FILE: &str = "flow_edges.csv";
pub const FLOW_NODES_FILE: &str = "flow_nodes.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const RF_FILE: &str = "rf.bin";
pub const BMODE_DIR: &str = "bmode";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const TRACKS_FILE: &str = "tracks.csv";
pub const REPORT_FILE: &str = "report.json";
pub const SR_IMAGE: &str = "sr_image";
pub const VELOCITY_MAP: &str = "velocity_map";
pub const MANIFEST_FILE: &str = "manifest.json";
const RF_CHECKPOINT: &str = "rf.bin.ckpt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Generate,
    Flow,
    Seed,
    Simulate,
    Beamform,
    Localize,
    Track,
    Evaluate,
    Render,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Generate,
        Stage::Flow,
        Stage::Seed,
        Stage::Simulate,
        Stage::Beamform,
        Stage::Localize,
        Stage::Track,
        Stage::Evaluate,
        Stage::Render,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Flow => "flow",
            Stage::Seed => "seed",
            Stage::Simulate => "simulate",
            Stage::Beamform => "beamform",
            Stage::Localize => "localize",
            Stage::Track => "track",
            Stage::Evaluate => "evaluate",
            Stage::Render => "render",
        }
    }

    /// Stages whose outputs this one reads.
    fn inputs(self) -> &'static [Stage] {
        match self {
            Stage::Generate => &[],
            Stage::Flow => &[Stage::Generate],
            Stage::Seed => &[Stage::Generate, Stage::Flow],
            Stage::Simulate => &[Stage::Seed],
            Stage::Beamform => &[Stage::Simulate],
            Stage::Localize => &[Stage::Beamform],
            Stage::Track => &[Stage::Localize],
            Stage::Evaluate => &[Stage::Seed, Stage::Track],
            Stage::Render => &[Stage::Seed, Stage::Track],
        }
    }

    /// A file whose presence marks the stage as done.
    fn marker(self) -> &'static str {
        match self {
            Stage::Generate => NETWORK_FILE,
            Stage::Flow => FLOW_EDGES_FILE,
            Stage::Seed => GROUND_TRUTH_FILE,
            Stage::Simulate => RF_FILE,
            Stage::Beamform => BMODE_DIR,
            Stage::Localize => PREDICTIONS_FILE,
            Stage::Track => TRACKS_FILE,
            Stage::Evaluate => REPORT_FILE,
            Stage::Render => "sr_image.f32",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

/// Inventory of the files in an output directory and the config that made
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub files: BTreeMap<String, FileEntry>,
}

impl DatasetManifest {
    fn new(cfg: &PipelineConfig) -> Result<Self> {
        Ok(DatasetManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            stage_seeds: SEEDED_STAGES
                .iter()
                .map(|s| (s.to_string(), stage_seed(cfg.seed, s)))
                .collect(),
            files: BTreeMap::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

const SEEDED_STAGES: [&str; 4] = ["network", "seed", "population", "noise"];

pub fn file_sha256(path: &Path) -> Result<FileEntry> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = std::io::Read::read(&mut f, &mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileEntry {
        sha256: hex::encode(hasher.finalize()),
        bytes,
    })
}

/// What a stage produced.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: Stage,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Runs stages against one output directory.
pub struct Pipeline {
    cfg: PipelineConfig,
    out: PathBuf,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, out: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        let out = out.into();
        std::fs::create_dir_all(&out)?;
        Ok(Pipeline { cfg, out })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn seed_for(&self, stage: &str) -> u64 {
        stage_seed(self.cfg.seed, stage)
    }

    /// Runs every stage in order.
    pub fn run_all(&self) -> Result<Vec<StageOutcome>> {
        Stage::ALL.iter().map(|&s| self.run(s)).collect()
    }

    /// Runs `stage`, first running any producer whose output is missing.
    pub fn run(&self, stage: Stage) -> Result<StageOutcome> {
        for &dep in stage.inputs() {
            if !self.path(dep.marker()).exists() && !self.satisfied_externally(dep) {
                log::info!("{} needs {}; running it first", stage.name(), dep.name());
                self.run(dep)?;
            }
        }
        log::info!("stage {}", stage.name());
        let outcome = self.run_stage(stage).map_err(|e| Error::Stage {
            stage: stage.name(),
            source: Box::new(e),
        })?;
        self.record(&outcome.files)?;
        Ok(outcome)
    }

    /// External predictions replace the localize/track chain for scoring.
    fn satisfied_externally(&self, dep: Stage) -> bool {
        dep == Stage::Track && self.cfg.evaluation.predictions.is_some()
    }

    fn run_stage(&self, stage: Stage) -> Result<StageOutcome> {
        match stage {
            Stage::Generate => self.generate(),
            Stage::Flow => self.flow(),
            Stage::Seed => self.seed(),
            Stage::Simulate => self.simulate(),
            Stage::Beamform => self.beamform(),
            Stage::Localize => self.localize(),
            Stage::Track => self.track(),
            Stage::Evaluate => self.evaluate().map(|(o, _)| o),
            Stage::Render => self.render(),
        }
    }

    fn record(&self, files: &[PathBuf]) -> Result<()> {
        let path = self.path(MANIFEST_FILE);
        let fresh = DatasetManifest::new(&self.cfg)?;
        let mut manifest = match DatasetManifest::load(&path) {
            Ok(m) if m.config_hash == fresh.config_hash => m,
            _ => fresh,
        };
        for f in files {
            let rel = f.strip_prefix(&self.out).unwrap_or(f).to_string_lossy().replace('\\', "/");
            manifest.files.insert(rel, file_sha256(f)?);
        }
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        std::fs::write(self.path("config.toml"), self.cfg.to_toml_string()?)?;
        Ok(())
    }

    // ---- generate -------------------------------------------------------

    /// Builds the network described by the config.
    pub fn build_network(&self) -> Result<(VesselNetwork, NetworkMeta)> {
        let seed = self.seed_for("network");
        match &self.cfg.network {
            NetworkSection::Demo { max_level, count } => {
                let params: Vec<GenParams> = (0..*count)
                    .map(|k| demo_slice(derive(seed, k as u64), *max_level, k, *count))
                    .collect();
                generate_all(&params, seed)
            }
            NetworkSection::Generator { params } => {
                let params: Vec<GenParams> = params
                    .iter()
                    .enumerate()
                    .map(|(k, p)| GenParams {
                        seed: derive(seed, k as u64),
                        ..p.clone()
                    })
                    .collect();
                generate_all(&params, seed)
            }
            NetworkSection::Tube {
                length,
                radius,
                depth,
                n_edges,
            } => {
                let mut net = VesselNetwork::new();
                let ids: Vec<usize> = (0..=*n_edges)
                    .map(|i| {
                        let x = -0.5 * length + length * i as f64 / *n_edges as f64;
                        net.add_node(Vec3::new(x, 0.0, *depth))
                    })
                    .collect();
                for w in ids.windows(2) {
                    net.add_edge(w[0], w[1], *radius)?;
                }
                Ok((net, NetworkMeta::default()))
            }
            NetworkSection::File { path } => network::io::read(&self.out.join(path)),
        }
    }

    fn generate(&self) -> Result<StageOutcome> {
        let (net, meta) = self.build_network()?;
        let path = self.path(NETWORK_FILE);
        network::io::write(&path, &net, &meta)?;
        Ok(StageOutcome {
            stage: Stage::Generate,
            files: vec![path],
            summary: format!("{} nodes, {} edges", net.node_count(), net.edge_count()),
        })
    }

    // ---- flow -----------------------------------------------------------

    pub fn load_network(&self) -> Result<VesselNetwork> {
        Ok(network::io::read(&self.path(NETWORK_FILE))?.0)
    }

    pub fn boundary(&self, net: &VesselNetwork) -> Result<BoundaryConditions> {
        let b = &self.cfg.boundary;
        let mut bc = BoundaryConditions::inlet_outlet(net, b.inlet, b.outlet)?;
        for p in &b.pressures {
            let idx = net
                .node_index(p.node)
                .ok_or_else(|| Error::Input(format!("boundary pressure for unknown node {}", p.node)))?;
            bc.set(idx, p.pressure);
        }
        Ok(bc)
    }

    fn flow(&self) -> Result<StageOutcome> {
        let net = self.load_network()?;
        let bc = self.boundary(&net)?;
        let sol = flow::solve_flow(&net, &bc, &self.cfg.fluid)?;
        let re = flow::max_reynolds(&net, &sol, &self.cfg.fluid);
        if re > flow::LAMINAR_LIMIT {
            log::warn!("maximum Reynolds number {re:.0} exceeds the laminar limit");
        }
        let (edges, nodes) = (self.path(FLOW_EDGES_FILE), self.path(FLOW_NODES_FILE));
        flow::io::write_edge_csv(&edges, &net, &sol)?;
        flow::io::write_node_csv(&nodes, &net, &sol)?;
        let umax = sol.edge_max_velocity.iter().cloned().fold(0.0, f64::max);
        Ok(StageOutcome {
            stage: Stage::Flow,
            files: vec![edges, nodes],
            summary: format!("max centre-line speed {:.3} mm/s, max Re {re:.3}", umax * 1e3),
        })
    }

    // ---- seed -----------------------------------------------------------

    pub fn load_flow(&self, net: &VesselNetwork) -> Result<FlowSolution> {
        flow::io::read_flow_csv(&self.path(FLOW_EDGES_FILE), &self.path(FLOW_NODES_FILE), net)
    }

    fn seed(&self) -> Result<StageOutcome> {
        let net = self.load_network()?;
        let sol = self.load_flow(&net)?;
        let table = simulate_events(&net, &sol, &self.cfg.bubbles.seeding, self.seed_for("seed"))?;
        let path = self.path(GROUND_TRUTH_FILE);
        write_events_csv(&table, BufWriter::new(File::create(&path)?))?;
        Ok(StageOutcome {
            stage: Stage::Seed,
            files: vec![path],
            summary: format!("{} events over {} frames", table.rows.len(), self.cfg.bubbles.seeding.n_frames),
        })
    }

    // ---- simulate -------------------------------------------------------

    pub fn load_ground_truth(&self) -> Result<EventTable> {
        read_events_csv(BufReader::new(File::open(self.path(GROUND_TRUTH_FILE))?))
    }

    pub fn population(&self) -> Population {
        Population {
            bubble: self.cfg.bubbles.shell.clone(),
            r0_spread: self.cfg.bubbles.r0_spread,
            seed: self.seed_for("population"),
        }
    }

    /// RF for every frame, written frame by frame. An interrupted run with
    /// the same config resumes after the last complete frame.
    fn simulate(&self) -> Result<StageOutcome> {
        let table = self.load_ground_truth()?;
        let tx = &self.cfg.transducer;
        let n_frames = self.cfg.bubbles.seeding.n_frames;
        let sim = Simulator::new(tx)?;
        let population = self.population();
        population.validate()?;
        let noise = &self.cfg.noise;
        let reference = match noise.reference_amplitude {
            Some(r) => r,
            None => sim.reference_amplitude(&population.bubble, noise.reference_depth)?,
        };
        let path = self.path(RF_FILE);
        let ckpt = self.path(RF_CHECKPOINT);
        let hash = self.cfg.hash()?;
        let header = RfHeader::new(tx, n_frames);
        let resumable = std::fs::read_to_string(&ckpt).map(|h| h.trim() == hash).unwrap_or(false);
        let (mut writer, done) = if resumable {
            RfWriter::resume(&path, header)?
        } else {
            (RfWriter::create(&path, header)?, 0)
        };
        std::fs::write(&ckpt, &hash)?;
        if done > 0 {
            log::info!("resuming RF simulation at frame {done}");
        }
        let noise_seed = self.seed_for("noise");
        let chunk = rayon::current_num_threads().max(1);
        let mut frame = done;
        while frame < n_frames {
            let end = (frame + chunk).min(n_frames);
            let frames = (frame..end)
                .into_par_iter()
                .map(|f| {
                    sim.simulate_frame(table.frame(f as u32), &population, noise, reference, derive(noise_seed, f as u64))
                        .map_err(|e| Error::Input(format!("frame {f}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            for rf in &frames {
                writer.write_frame(rf)?;
            }
            log::debug!("RF frames {frame}..{end} written");
            frame = end;
        }
        drop(writer);
        std::fs::remove_file(&ckpt)?;
        Ok(StageOutcome {
            stage: Stage::Simulate,
            files: vec![path],
            summary: format!("{n_frames} frames, reference amplitude {reference:.4e}"),
        })
    }

    // ---- beamform -------------------------------------------------------

    pub fn bmode_stem(&self, frame: usize) -> PathBuf {
        self.out.join(BMODE_DIR).join(format!("frame_{frame:05}"))
    }

    fn beamform(&self) -> Result<StageOutcome> {
        let tx = &self.cfg.transducer;
        let mut reader = RfReader::open(&self.path(RF_FILE))?;
        let n = reader.header.n_frames as usize;
        if reader.frames_available() < n {
            return Err(Error::Input(format!(
                "RF file holds {} of {n} frames; rerun simulate",
                reader.frames_available()
            )));
        }
        let cfg = BeamformConfig {
            grid: self.cfg.image_grid()?,
            apodization: self.cfg.imaging.apodization,
            f_number: self.cfg.imaging.f_number,
        };
        std::fs::create_dir_all(self.path(BMODE_DIR))?;
        let mut files = Vec::with_capacity(3 * n);
        for k in 0..n {
            let rf = reader.read_frame(k)?;
            let img = envelope_log(&beamform_das(&rf, tx, &cfg)?, self.cfg.imaging.dynamic_range);
            let stem = self.bmode_stem(k);
            write_bmode(&stem, &img)?;
            for ext in ["pgm", "f32", "json"] {
                files.push(stem.with_extension(ext));
            }
        }
        Ok(StageOutcome {
            stage: Stage::Beamform,
            files,
            summary: format!("{n} B-mode frames on a {}×{} grid", cfg.grid.nx, cfg.grid.nz),
        })
    }

    // ---- localize / track -----------------------------------------------

    fn localize(&self) -> Result<StageOutcome> {
        let n = self.cfg.bubbles.seeding.n_frames;
        let per_frame: Vec<Vec<Localization>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let (grid, dynamic_range, db) = read_bmode_raw(&self.bmode_stem(k))?;
                let image = BModeImage {
                    grid,
                    envelope: db.iter().map(|v| 10f64.powf(v / 20.0)).collect(),
                    db,
                    dynamic_range,
                };
                Ok(reference_localizer(&image, k as u32, self.cfg.localize.threshold_db, self.cfg.min_sep()))
            })
            .collect::<Result<_>>()?;
        let locs: Vec<Localization> = per_frame.into_iter().flatten().collect();
        let path = self.path(PREDICTIONS_FILE);
        write_predictions_csv(&locs, BufWriter::new(File::create(&path)?))?;
        Ok(StageOutcome {
            stage: Stage::Localize,
            files: vec![path],
            summary: format!("{} localizations", locs.len()),
        })
    }

    fn read_locs(&self, path: &Path) -> Result<Vec<Localization>> {
        read_predictions_csv(BufReader::new(File::open(path)?))
    }

    fn track(&self) -> Result<StageOutcome> {
        let mut locs = self.read_locs(&self.path(PREDICTIONS_FILE))?;
        let assign: TrackAssignment = reference_tracker(&locs, self.cfg.max_link());
        assign.apply(&mut locs);
        let n_tracks = assign.tracks.values().collect::<std::collections::BTreeSet<_>>().len();
        let path = self.path(TRACKS_FILE);
        write_predictions_csv(&locs, BufWriter::new(File::create(&path)?))?;
        Ok(StageOutcome {
            stage: Stage::Track,
            files: vec![path],
            summary: format!("{n_tracks} tracks"),
        })
    }

    // ---- evaluate / render ----------------------------------------------

    fn predictions_path(&self) -> PathBuf {
        match &self.cfg.evaluation.predictions {
            Some(p) => self.out.join(p),
            None if self.path(TRACKS_FILE).exists() => self.path(TRACKS_FILE),
            None => self.path(PREDICTIONS_FILE),
        }
    }

    /// Scores the predictions and writes the report.
    pub fn evaluate(&self) -> Result<(StageOutcome, EvalReport)> {
        let gt = self.load_ground_truth()?;
        let pred = self.read_locs(&self.predictions_path())?;
        let report = eval::evaluate(&gt, &pred, self.cfg.search_radius(), self.cfg.evaluation.projection)?;
        let path = self.path(REPORT_FILE);
        write_report(&path, &report)?;
        let h = report.headline();
        Ok((
            StageOutcome {
                stage: Stage::Evaluate,
                files: vec![path],
                summary: format!(
                    "precision {:.4}, recall {:.4}, mean error {:.3e} m, track precision {:.4}, track recall {:.4}, J_map {:.4}",
                    h[0], h[1], h[2], h[3], h[4], h[5]
                ),
            },
            report,
        ))
    }

    fn render(&self) -> Result<StageOutcome> {
        let tracks = match self.cfg.render.source {
            RenderSource::GroundTruth => tracks_from_ground_truth(&self.load_ground_truth()?),
            RenderSource::Tracks => self.read_locs(&self.predictions_path())?,
        };
        let grid = self.cfg.render_grid()?;
        let rate = self.cfg.bubbles.seeding.frame_rate;
        let sr = render_sr_image(&tracks, &grid);
        let vel = render_velocity_map(&tracks, &grid, rate);
        let mut files = Vec::new();
        for (name, img) in [(SR_IMAGE, &sr), (VELOCITY_MAP, &vel)] {
            let stem = self.path(name);
            write_scalar_image(&stem, img)?;
            for ext in ["f32", "pgm", "json"] {
                files.push(stem.with_extension(ext));
            }
        }
        Ok(StageOutcome {
            stage: Stage::Render,
            files,
            summary: format!("{}×{} images", grid.nx, grid.nz),
        })
    }
}

/// Demo tree `k` of `count`, grown inside its own lateral slice of the
/// demo region.
fn demo_slice(seed: u64, max_level: u32, k: usize, count: usize) -> GenParams {
    let mut p = GenParams::demo(seed, max_level);
    if count > 1 {
        if let Region::Box { min, max } = &mut p.inside_f {
            let width = (max[0] - min[0]) / count as f64;
            let lo = min[0] + width * k as f64;
            min[0] = lo;
            max[0] = lo + width;
            p.origin[0] = lo + 0.5 * width;
        }
    }
    p
}

fn generate_all(params: &[GenParams], seed: u64) -> Result<(VesselNetwork, NetworkMeta)> {
    let parts = params.iter().map(generate_network).collect::<Result<Vec<_>>>()?;
    let net = if parts.len() == 1 {
        parts.into_iter().next().expect("one part")
    } else {
        VesselNetwork::merge(&parts)
    };
    let meta = NetworkMeta {
        seed: Some(seed),
        generator: if params.len() == 1 { Some(params[0].clone()) } else { None },
    };
    Ok((net, meta))
}
