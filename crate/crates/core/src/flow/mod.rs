//! Hagen-Poiseuille network flow.
//!
//! Unknown pressures at non-hanging nodes solve `M p = b` with
//! `M = I_nhᵀ C I_nh`, the weighted graph Laplacian restricted to interior
//! nodes, and `b` collecting the prescribed hanging-node pressures. Edge
//! pressure drops, flows and centre-line velocities follow from `p`.

pub mod io;
mod solver;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{split_incidence, VesselNetwork};

pub use solver::{SolverMethod, SolverOptions};

/// Reynolds number above which flow is no longer considered laminar.
pub const LAMINAR_LIMIT: f64 = 2300.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    /// Dynamic viscosity μ, Pa·s.
    pub viscosity: f64,
    /// Density, kg/m³.
    pub density: f64,
}

impl Default for FluidParams {
    fn default() -> Self {
        FluidParams {
            viscosity: 3.5e-3,
            density: 1060.0,
        }
    }
}

impl FluidParams {
    /// Kinematic viscosity ν = μ/ρ, m²/s.
    pub fn kinematic_viscosity(&self) -> f64 {
        self.viscosity / self.density
    }
}

/// Prescribed pressures (Pa) keyed by node index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryConditions {
    pressures: BTreeMap<usize, f64>,
}

impl BoundaryConditions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, node: usize, pressure: f64) -> &mut Self {
        self.pressures.insert(node, pressure);
        self
    }

    pub fn get(&self, node: usize) -> Option<f64> {
        self.pressures.get(&node).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pressures.iter().map(|(&k, &v)| (k, v))
    }

    /// Hanging nodes whose edge leaves them get `inlet`, those whose edge
    /// enters them get `outlet`. Matches the orientation produced by the
    /// generator, where each tree grows away from its root.
    pub fn inlet_outlet(net: &VesselNetwork, inlet: f64, outlet: f64) -> Result<Self> {
        let split = split_incidence(net)?;
        let mut bc = BoundaryConditions::new();
        let deg_out = {
            let mut d = vec![0usize; net.node_count()];
            for e in net.edges() {
                d[e.source] += 1;
            }
            d
        };
        for &h in &split.hanging {
            bc.set(h, if deg_out[h] == 1 { inlet } else { outlet });
        }
        Ok(bc)
    }

    /// Multiplies every pressure by `alpha` and adds `offset`.
    pub fn affine(&self, alpha: f64, offset: f64) -> Self {
        BoundaryConditions {
            pressures: self
                .pressures
                .iter()
                .map(|(&k, &v)| (k, alpha * v + offset))
                .collect(),
        }
    }
}

/// Hydrodynamic resistance ξ = 8μl/(πr⁴) of a cylindrical segment, Pa·s/m³.
pub fn edge_resistance(radius: f64, length: f64, mu: f64) -> Result<f64> {
    if !(radius > 0.0 && length > 0.0 && mu > 0.0) {
        return Err(Error::Domain(format!(
            "resistance needs positive radius, length and viscosity (r={radius}, l={length}, mu={mu})"
        )));
    }
    Ok(8.0 * mu * length / (PI * radius.powi(4)))
}

/// Diagonal of the edge conductance matrix, 1/ξ per edge, m³/(s·Pa).
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceMatrix(pub Vec<f64>);

impl ConductanceMatrix {
    pub fn new(net: &VesselNetwork, fluid: &FluidParams) -> Result<Self> {
        net.edges()
            .iter()
            .map(|e| edge_resistance(e.radius, e.length(), fluid.viscosity).map(|xi| 1.0 / xi))
            .collect::<Result<Vec<_>>>()
            .map(ConductanceMatrix)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Pa, indexed by node.
    pub node_pressure: Vec<f64>,
    /// `p[source] - p[target]`, Pa, indexed by edge.
    pub edge_pressure_drop: Vec<f64>,
    /// m³/s, positive along the edge orientation.
    pub edge_flow: Vec<f64>,
    /// Centre-line speed 2|Q|/(πR²), m/s.
    pub edge_max_velocity: Vec<f64>,
}

impl FlowSolution {
    /// Largest net flow imbalance over non-hanging nodes, relative to the
    /// largest edge flow. Zero when there is no flow at all.
    pub fn conservation_residual(&self, net: &VesselNetwork) -> f64 {
        let deg = net.degrees();
        let mut net_in = vec![0.0; net.node_count()];
        for (e, q) in net.edges().iter().zip(&self.edge_flow) {
            net_in[e.source] -= q;
            net_in[e.target] += q;
        }
        let qmax = self.edge_flow.iter().fold(0.0f64, |m, q| m.max(q.abs()));
        if qmax == 0.0 {
            return 0.0;
        }
        net_in
            .iter()
            .zip(&deg)
            .filter(|(_, &d)| d > 1)
            .fold(0.0f64, |m, (s, _)| m.max(s.abs()))
            / qmax
    }
}

pub fn solve_flow(
    net: &VesselNetwork,
    bc: &BoundaryConditions,
    fluid: &FluidParams,
) -> Result<FlowSolution> {
    solve_flow_with(net, bc, fluid, &SolverOptions::default())
}

pub fn solve_flow_with(
    net: &VesselNetwork,
    bc: &BoundaryConditions,
    fluid: &FluidParams,
    options: &SolverOptions,
) -> Result<FlowSolution> {
    if !(fluid.viscosity > 0.0) {
        return Err(Error::param("viscosity", "must be positive"));
    }
    let split = split_incidence(net)?;
    for &h in &split.hanging {
        if bc.get(h).is_none() {
            return Err(Error::MissingBoundary(h));
        }
    }
    for (node, p) in bc.iter() {
        if node >= net.node_count() || !split.is_hanging[node] {
            return Err(Error::Input(format!(
                "pressure prescribed at node {node}, which is not a hanging node"
            )));
        }
        if !p.is_finite() {
            return Err(Error::Input(format!("non-finite pressure at node {node}")));
        }
    }
    for comp in net.components() {
        if !comp.iter().any(|&i| split.is_hanging[i]) {
            return Err(Error::SingularSystem { nodes: comp });
        }
    }

    let conductance = ConductanceMatrix::new(net, fluid)?;
    let n = split.non_hanging.len();
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(4 * net.edge_count());
    let mut rhs = vec![0.0; n];
    for (e, &c) in net.edges().iter().zip(&conductance.0) {
        let (s, t) = (e.source, e.target);
        match (split.is_hanging[s], split.is_hanging[t]) {
            (false, false) => {
                let (i, j) = (split.column_of[s], split.column_of[t]);
                entries.push((i, i, c));
                entries.push((j, j, c));
                entries.push((i, j, -c));
                entries.push((j, i, -c));
            }
            (false, true) => {
                let i = split.column_of[s];
                entries.push((i, i, c));
                rhs[i] += c * bc.get(t).unwrap_or_default();
            }
            (true, false) => {
                let j = split.column_of[t];
                entries.push((j, j, c));
                rhs[j] += c * bc.get(s).unwrap_or_default();
            }
            (true, true) => {}
        }
    }
    let interior = solver::solve_spd(n, &entries, &rhs, options)?;

    let mut node_pressure = vec![0.0; net.node_count()];
    for &h in &split.hanging {
        node_pressure[h] = bc.get(h).unwrap_or_default();
    }
    for (col, &node) in split.non_hanging.iter().enumerate() {
        node_pressure[node] = interior[col];
    }
    let edge_pressure_drop: Vec<f64> = net
        .edges()
        .iter()
        .map(|e| node_pressure[e.source] - node_pressure[e.target])
        .collect();
    let edge_flow: Vec<f64> = edge_pressure_drop
        .iter()
        .zip(&conductance.0)
        .map(|(dp, c)| c * dp)
        .collect();
    let edge_max_velocity = net
        .edges()
        .iter()
        .zip(&edge_flow)
        .map(|(e, q)| 2.0 * q.abs() / (PI * e.radius * e.radius))
        .collect();
    Ok(FlowSolution {
        node_pressure,
        edge_pressure_drop,
        edge_flow,
        edge_max_velocity,
    })
}

/// Laminar profile u = u_max (1 - r²/R²) at fractional radius `r_frac`.
pub fn velocity_profile(u_max: f64, r_frac: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r_frac) {
        return Err(Error::Domain(format!("r_frac {r_frac} outside [0, 1]")));
    }
    Ok(u_max * (1.0 - r_frac * r_frac))
}

/// Reynolds number u·D/ν with ν the kinematic viscosity.
pub fn reynolds(u: f64, diameter: f64, nu: f64) -> f64 {
    let re = u * diameter / nu;
    if re >= LAMINAR_LIMIT {
        log::warn!("Reynolds number {re:.1} is outside the laminar regime");
    }
    re
}

/// Largest Reynolds number over all edges of a solved network.
pub fn max_reynolds(net: &VesselNetwork, flow: &FlowSolution, fluid: &FluidParams) -> f64 {
    let nu = fluid.kinematic_viscosity();
    net.edges()
        .iter()
        .zip(&flow.edge_max_velocity)
        .map(|(e, &u)| reynolds(0.5 * u, 2.0 * e.radius, nu))
        .fold(0.0, f64::max)
}


/// Random tree builders shared by tests and benchmarks.
pub mod testing {
    use rand::Rng;

    use super::BoundaryConditions;
    use crate::network::{Vec3, VesselNetwork};

    /// Random-attachment tree with `n_edges` edges, radii in 10–200 µm,
    /// segment lengths 0.1–1 mm, and random pressures (0–5 kPa) on every
    /// hanging node.
    pub fn random_tree<R: Rng>(rng: &mut R, n_edges: usize) -> (VesselNetwork, BoundaryConditions) {
        let mut net = VesselNetwork::new();
        net.add_node(Vec3::zeros());
        for _ in 0..n_edges {
            let parent = rng.random_range(0..net.node_count());
            let dir = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.1..1.0),
            )
            .normalize();
            let len = rng.random_range(1e-4..1e-3);
            let pos = net.nodes()[parent].position + dir * len;
            let child = net.add_node(pos);
            let r = rng.random_range(10e-6..200e-6);
            net.add_edge(parent, child, r).expect("valid random edge");
        }
        let mut bc = BoundaryConditions::new();
        for (i, d) in net.degrees().into_iter().enumerate() {
            if d == 1 {
                bc.set(i, rng.random_range(0.0..5000.0));
            }
        }
        (net, bc)
    }
}
