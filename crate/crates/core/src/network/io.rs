//! TOML network files.
//!
//! ```toml
//! version = 1
//! [meta]
//! seed = 42
//! [meta.generator]   # optional GenParams
//! ...
//! [[node]]
//! id = 0
//! x = 0.0
//! y = 0.0
//! z = 0.0081
//! [[edge]]
//! id = 0
//! src = 0
//! dst = 1
//! radius = 6e-5
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a written
//! file reproduces every coordinate and radius bit for bit.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GenParams, Vec3, VesselNetwork};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GenParams>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRow {
    id: u64,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRow {
    id: u64,
    src: u64,
    dst: u64,
    radius: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    version: u32,
    #[serde(default)]
    meta: NetworkMeta,
    #[serde(default)]
    node: Vec<NodeRow>,
    #[serde(default)]
    edge: Vec<EdgeRow>,
}

pub fn to_toml_string(net: &VesselNetwork, meta: &NetworkMeta) -> Result<String> {
    let file = NetworkFile {
        version: FORMAT_VERSION,
        meta: meta.clone(),
        node: net
            .nodes()
            .iter()
            .map(|n| NodeRow {
                id: n.id,
                x: n.position.x,
                y: n.position.y,
                z: n.position.z,
            })
            .collect(),
        edge: net
            .edges()
            .iter()
            .map(|e| EdgeRow {
                id: e.id,
                src: net.nodes()[e.source].id,
                dst: net.nodes()[e.target].id,
                radius: e.radius,
            })
            .collect(),
    };
    Ok(toml::to_string(&file)?)
}

pub fn from_toml_str(text: &str) -> Result<(VesselNetwork, NetworkMeta)> {
    let file: NetworkFile = toml::from_str(text)?;
    if file.version != FORMAT_VERSION {
        return Err(Error::Format {
            what: "network file".into(),
            reason: format!("unsupported version {}", file.version),
        });
    }
    let mut net = VesselNetwork::new();
    let mut index = HashMap::with_capacity(file.node.len());
    for n in &file.node {
        let idx = net.add_node_with_id(n.id, Vec3::new(n.x, n.y, n.z));
        if index.insert(n.id, idx).is_some() {
            return Err(Error::InvalidNetwork(format!("duplicate node id {}", n.id)));
        }
    }
    for e in &file.edge {
        let lookup = |id: u64| {
            index.get(&id).copied().ok_or_else(|| {
                Error::InvalidNetwork(format!("edge {} references unknown node {id}", e.id))
            })
        };
        net.add_edge_with_id(e.id, lookup(e.src)?, lookup(e.dst)?, e.radius)?;
    }
    net.validate()?;
    Ok((net, file.meta))
}

pub fn write(path: &Path, net: &VesselNetwork, meta: &NetworkMeta) -> Result<()> {
    std::fs::write(path, to_toml_string(net, meta)?)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(VesselNetwork, NetworkMeta)> {
    from_toml_str(&std::fs::read_to_string(path)?)
}
