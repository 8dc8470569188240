//! Root-to-leaf tracks weighted by flow, and particle advection along them.

mod io;

pub use io::{read_events_csv, write_events_csv};

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowSolution;
use crate::network::{Vec3, VesselNetwork};
use crate::rng::{derive, stream};

/// One root-to-leaf path following the flow direction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackPath {
    /// Edge indices in travel order.
    pub edges: Vec<usize>,
    /// Node indices visited, `edges.len() + 1` long.
    pub nodes: Vec<usize>,
    /// Product of the branch probabilities along the path.
    pub probability: f64,
    /// Volume flow entering the network at the root node.
    pub root_flow: f64,
}

impl TrackPath {
    pub fn root(&self) -> usize {
        self.nodes[0]
    }

    pub fn leaf(&self) -> usize {
        self.nodes[self.nodes.len() - 1]
    }

    /// Whether step `k` runs from the edge's source to its target.
    pub fn forward(&self, net: &VesselNetwork, k: usize) -> bool {
        net.edges()[self.edges[k]].source == self.nodes[k]
    }
}

/// Fraction of a junction's throughput that continues into a child branch.
pub fn branch_probability(q_parent: f64, q_child: f64) -> Result<f64> {
    if !(q_parent.abs() > 0.0) {
        return Err(Error::DeadBranch { node: usize::MAX });
    }
    if q_child < 0.0 || q_child > q_parent.abs() * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "child flow {q_child:e} is not a share of parent flow {q_parent:e}"
        )));
    }
    Ok((q_child / q_parent.abs()).min(1.0))
}

/// Signed flow leaving `node` through edge `e`.
fn outflow(net: &VesselNetwork, flow: &FlowSolution, e: usize, node: usize) -> f64 {
    let q = flow.edge_flow[e];
    if net.edges()[e].source == node {
        q
    } else {
        -q
    }
}

fn other_end(net: &VesselNetwork, e: usize, node: usize) -> usize {
    let edge = &net.edges()[e];
    if edge.source == node {
        edge.target
    } else {
        edge.source
    }
}

/// Enumerates every path from an inflow hanging node to an outflow hanging
/// node along the direction of flow.
///
/// At each junction the probability of a child is its flow over the total
/// flow leaving the junction, so probabilities from one root sum to one even
/// where branches converge. Loops in the vessel graph are fine because flow
/// runs from high to low pressure; a directed flow cycle is rejected.
pub fn enumerate_tracks(net: &VesselNetwork, flow: &FlowSolution) -> Result<Vec<TrackPath>> {
    if flow.edge_flow.len() != net.edge_count() {
        return Err(Error::Input("flow solution does not match the network".into()));
    }
    let adj = net.adjacency();
    let out_edges: Vec<Vec<(usize, f64)>> = (0..net.node_count())
        .map(|v| {
            adj[v]
                .iter()
                .map(|&e| (e, outflow(net, flow, e, v)))
                .filter(|&(_, q)| q > 0.0)
                .collect()
        })
        .collect();

    let mut tracks = Vec::new();
    let mut on_path = vec![false; net.node_count()];
    for root in 0..net.node_count() {
        if adj[root].len() != 1 || out_edges[root].is_empty() {
            continue;
        }
        let (root_edge, root_flow) = out_edges[root][0];
        // (node reached, edge taken, depth of that edge, probability so far)
        let mut stack = vec![(other_end(net, root_edge, root), root_edge, 0usize, 1.0)];
        let mut edges: Vec<usize> = Vec::new();
        let mut nodes: Vec<usize> = vec![root];
        on_path[root] = true;
        while let Some((v, e, depth, prob)) = stack.pop() {
            for &n in &nodes[depth + 1..] {
                on_path[n] = false;
            }
            edges.truncate(depth);
            nodes.truncate(depth + 1);
            if on_path[v] {
                return Err(Error::InvalidNetwork(format!(
                    "flow contains a directed cycle through node {}",
                    net.nodes()[v].id
                )));
            }
            edges.push(e);
            nodes.push(v);
            on_path[v] = true;
            let outs = &out_edges[v];
            if outs.is_empty() {
                if adj[v].len() == 1 {
                    tracks.push(TrackPath {
                        edges: edges.clone(),
                        nodes: nodes.clone(),
                        probability: prob,
                        root_flow,
                    });
                } else {
                    log::warn!("track pruned at node {}: no outgoing flow", net.nodes()[v].id);
                }
                continue;
            }
            let total: f64 = outs.iter().map(|&(_, q)| q).sum();
            // reversed so the first child is explored first
            for &(child, q) in outs.iter().rev() {
                let p = branch_probability(total, q).map_err(|err| match err {
                    Error::DeadBranch { .. } => Error::DeadBranch { node: v },
                    other => other,
                })?;
                stack.push((other_end(net, child, v), child, depth + 1, prob * p));
            }
        }
        for &n in &nodes {
            on_path[n] = false;
        }
    }
    Ok(tracks)
}

/// A bubble's state on its track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub track: usize,
    /// Index into the track's edge list.
    pub step: usize,
    /// Distance travelled along the current edge from its entry node.
    pub offset: f64,
    pub r_frac: f64,
    pub theta: f64,
    pub finished: bool,
}

/// Centreline speed on each step of a track.
fn step_speed(track: &TrackPath, flow: &FlowSolution, k: usize) -> f64 {
    flow.edge_max_velocity[track.edges[k]]
}

/// Moves a particle by `dt` along its streamtube.
///
/// Speed on an edge is `u_max (1 - r_frac²)`. When the particle passes the
/// end of an edge the leftover distance is rescaled by the ratio of the
/// next and current edge speeds, repeatedly if several edges are crossed.
/// Reaching the end of the last edge finishes the particle.
pub fn advect(
    p: &ParticleState,
    dt: f64,
    track: &TrackPath,
    net: &VesselNetwork,
    flow: &FlowSolution,
) -> ParticleState {
    let mut s = *p;
    if s.finished || !(dt > 0.0) {
        return s;
    }
    let shape = 1.0 - s.r_frac * s.r_frac;
    let mut pos = s.offset + step_speed(track, flow, s.step) * shape * dt;
    loop {
        let len = net.edges()[track.edges[s.step]].length();
        if pos <= len {
            s.offset = pos;
            return s;
        }
        if s.step + 1 == track.edges.len() {
            s.offset = len;
            s.finished = true;
            return s;
        }
        let v_cur = step_speed(track, flow, s.step);
        let v_next = step_speed(track, flow, s.step + 1);
        pos = (pos - len) * (v_next / v_cur);
        s.step += 1;
    }
}

/// Maps edge-local cylindrical coordinates to world space.
pub fn world_position(p: &ParticleState, track: &TrackPath, net: &VesselNetwork) -> Vec3 {
    let edge = &net.edges()[track.edges[p.step]];
    let axial = if track.forward(net, p.step) {
        p.offset
    } else {
        edge.length() - p.offset
    };
    let f = edge.frame();
    net.nodes()[edge.source].position
        + f.d * axial
        + (f.e1 * p.theta.cos() + f.e2 * p.theta.sin()) * (p.r_frac * edge.radius)
}

/// Law for a bubble's fractional radial position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialLaw {
    /// Uniform over the cross-section area.
    #[default]
    Area,
    /// Weighted by the local flux through the cross-section.
    Flux,
    /// Every bubble on the vessel axis.
    Axis,
}

impl RadialLaw {
    pub fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let r = match self {
            RadialLaw::Area => u.sqrt(),
            // pdf ∝ r (1 - r²)  ⇒  r² = 1 - sqrt(1 - u)
            RadialLaw::Flux => (1.0 - (1.0 - u).sqrt()).sqrt(),
            RadialLaw::Axis => 0.0,
        };
        r.min(1.0 - f64::EPSILON)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedingConfig {
    pub n_bubbles: usize,
    pub frame_rate: f64,
    pub n_frames: usize,
    pub radial: RadialLaw,
    /// Upper bound on how long before frame 0 a bubble may enter, seconds.
    /// Bubbles enter uniformly over `[-min(transit, max_prefill), T)` so
    /// the network is already populated at the first frame.
    pub max_prefill: f64,
    /// Add speed and r_frac columns to the event table.
    pub extra_columns: bool,
}

impl Default for SeedingConfig {
    fn default() -> Self {
        SeedingConfig {
            n_bubbles: 100,
            frame_rate: 500.0,
            n_frames: 100,
            radial: RadialLaw::Area,
            max_prefill: 10.0,
            extra_columns: true,
        }
    }
}

impl SeedingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bubbles == 0 {
            return Err(Error::param("n_bubbles", "must be at least 1"));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::param("frame_rate", "must be positive"));
        }
        if !(self.max_prefill >= 0.0) {
            return Err(Error::param("max_prefill", "must be non-negative"));
        }
        Ok(())
    }
}

/// Initial conditions drawn for one bubble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleSeed {
    pub bubble_id: u64,
    pub track: usize,
    pub r_frac: f64,
    pub theta: f64,
    /// Time the bubble passes the root node, seconds relative to frame 0.
    pub entry_time: f64,
}

/// Time to traverse a whole track at fractional radius `r_frac`.
pub fn transit_time(track: &TrackPath, net: &VesselNetwork, flow: &FlowSolution, r_frac: f64) -> f64 {
    let shape = 1.0 - r_frac * r_frac;
    track
        .edges
        .iter()
        .map(|&e| net.edges()[e].length() / (flow.edge_max_velocity[e] * shape))
        .sum()
}

/// Draws track, streamtube and entry time for every bubble. Bubble `i`
/// uses its own stream, so its draw does not depend on `n_bubbles`.
///
/// Tracks are chosen with probability proportional to root inflow times
/// track probability.
pub fn seed_bubbles(
    tracks: &[TrackPath],
    net: &VesselNetwork,
    flow: &FlowSolution,
    config: &SeedingConfig,
    seed: u64,
) -> Result<Vec<BubbleSeed>> {
    config.validate()?;
    if tracks.is_empty() {
        return Err(Error::InvalidNetwork("network has no track carrying flow".into()));
    }
    let mut cumulative = Vec::with_capacity(tracks.len());
    let mut acc = 0.0;
    for t in tracks {
        acc += t.root_flow * t.probability;
        cumulative.push(acc);
    }
    let duration = config.n_frames as f64 / config.frame_rate;
    Ok((0..config.n_bubbles as u64)
        .map(|id| {
            let mut rng = stream(derive(seed, id));
            let u: f64 = rng.random::<f64>() * acc;
            let track = cumulative.partition_point(|&c| c <= u).min(tracks.len() - 1);
            let r_frac = config.radial.sample(&mut rng);
            let theta = rng.random::<f64>() * 2.0 * PI;
            let transit = transit_time(&tracks[track], net, flow, r_frac);
            let lead = transit.min(config.max_prefill);
            let entry_time = -lead + rng.random::<f64>() * (duration + lead);
            BubbleSeed {
                bubble_id: id,
                track,
                r_frac,
                theta,
                entry_time,
            }
        })
        .collect())
}

/// One ground-truth row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub frame: u32,
    pub bubble_id: u64,
    pub position: [f64; 3],
    pub speed: Option<f64>,
    pub r_frac: Option<f64>,
}

/// Ground-truth events sorted by frame, then bubble id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventTable {
    pub rows: Vec<Event>,
}

impl EventTable {
    pub fn from_rows(mut rows: Vec<Event>) -> Self {
        rows.sort_by_key(|e| (e.frame, e.bubble_id));
        EventTable { rows }
    }

    pub fn has_extras(&self) -> bool {
        self.rows.iter().any(|e| e.speed.is_some() || e.r_frac.is_some())
    }

    pub fn n_frames(&self) -> usize {
        self.rows.last().map_or(0, |e| e.frame as usize + 1)
    }

    /// Rows of one frame.
    pub fn frame(&self, frame: u32) -> &[Event] {
        let lo = self.rows.partition_point(|e| e.frame < frame);
        let hi = self.rows.partition_point(|e| e.frame <= frame);
        &self.rows[lo..hi]
    }
}

/// Events of a single seeded bubble.
pub fn bubble_events(
    seed: &BubbleSeed,
    tracks: &[TrackPath],
    net: &VesselNetwork,
    flow: &FlowSolution,
    config: &SeedingConfig,
) -> Vec<Event> {
    let track = &tracks[seed.track];
    let dt = 1.0 / config.frame_rate;
    let first = (seed.entry_time * config.frame_rate).ceil().max(0.0) as usize;
    if first >= config.n_frames {
        return Vec::new();
    }
    let start = ParticleState {
        track: seed.track,
        step: 0,
        offset: 0.0,
        r_frac: seed.r_frac,
        theta: seed.theta,
        finished: false,
    };
    let mut state = advect(&start, first as f64 * dt - seed.entry_time, track, net, flow);
    let shape = 1.0 - seed.r_frac * seed.r_frac;
    let mut out = Vec::new();
    for frame in first..config.n_frames {
        if state.finished {
            break;
        }
        let pos = world_position(&state, track, net);
        let (speed, r_frac) = if config.extra_columns {
            (Some(step_speed(track, flow, state.step) * shape), Some(seed.r_frac))
        } else {
            (None, None)
        };
        out.push(Event {
            frame: frame as u32,
            bubble_id: seed.bubble_id,
            position: [pos.x, pos.y, pos.z],
            speed,
            r_frac,
        });
        state = advect(&state, dt, track, net, flow);
    }
    out
}

/// Seeds bubbles, advects them frame by frame and returns the merged,
/// frame-sorted event table.
pub fn simulate_events(
    net: &VesselNetwork,
    flow: &FlowSolution,
    config: &SeedingConfig,
    seed: u64,
) -> Result<EventTable> {
    let tracks = enumerate_tracks(net, flow)?;
    let seeds = seed_bubbles(&tracks, net, flow, config, seed)?;
    let rows: Vec<Event> = seeds
        .par_iter()
        .flat_map_iter(|s| bubble_events(s, &tracks, net, flow, config))
        .collect();
    Ok(EventTable::from_rows(rows))
}
