//! CSV export of solved flows.

use std::path::Path;

use super::FlowSolution;
use crate::error::{Error, Result};
use crate::network::VesselNetwork;

/// Columns `edge_id,flow_m3s,dp_pa,umax_ms`.
pub fn write_edge_csv(path: &Path, net: &VesselNetwork, flow: &FlowSolution) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["edge_id", "flow_m3s", "dp_pa", "umax_ms"])?;
    for (k, e) in net.edges().iter().enumerate() {
        w.write_record(&[
            e.id.to_string(),
            flow.edge_flow[k].to_string(),
            flow.edge_pressure_drop[k].to_string(),
            flow.edge_max_velocity[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `node_id,pressure_pa`.
pub fn write_node_csv(path: &Path, net: &VesselNetwork, flow: &FlowSolution) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node_id", "pressure_pa"])?;
    for (n, p) in net.nodes().iter().zip(&flow.node_pressure) {
        w.write_record(&[n.id.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the two files written by [`write_edge_csv`] and [`write_node_csv`]
/// back into a solution for `net`. Rows are matched by id.
pub fn read_flow_csv(edges: &Path, nodes: &Path, net: &VesselNetwork) -> Result<FlowSolution> {
    let bad = |reason: String| Error::Format {
        what: "flow table".into(),
        reason,
    };
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
    let mut by_edge = std::collections::HashMap::new();
    for rec in csv::Reader::from_path(edges)?.records() {
        let rec = rec?;
        let id: u64 = rec[0].trim().parse().map_err(|_| bad(format!("edge id `{}`", &rec[0])))?;
        by_edge.insert(id, (parse(&rec[1])?, parse(&rec[2])?, parse(&rec[3])?));
    }
    let mut by_node = std::collections::HashMap::new();
    for rec in csv::Reader::from_path(nodes)?.records() {
        let rec = rec?;
        let id: u64 = rec[0].trim().parse().map_err(|_| bad(format!("node id `{}`", &rec[0])))?;
        by_node.insert(id, parse(&rec[1])?);
    }
    let mut sol = FlowSolution {
        node_pressure: Vec::with_capacity(net.node_count()),
        edge_pressure_drop: Vec::with_capacity(net.edge_count()),
        edge_flow: Vec::with_capacity(net.edge_count()),
        edge_max_velocity: Vec::with_capacity(net.edge_count()),
    };
    for n in net.nodes() {
        sol.node_pressure
            .push(*by_node.get(&n.id).ok_or_else(|| bad(format!("node {} missing", n.id)))?);
    }
    for e in net.edges() {
        let (q, dp, u) = *by_edge.get(&e.id).ok_or_else(|| bad(format!("edge {} missing", e.id)))?;
        sol.edge_flow.push(q);
        sol.edge_pressure_drop.push(dp);
        sol.edge_max_velocity.push(u);
    }
    Ok(sol)
}
