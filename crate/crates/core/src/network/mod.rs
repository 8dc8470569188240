//! Vessel networks as directed graphs of cylindrical segments.
//!
//! Nodes carry explicit positions; an edge stores its endpoints and radius,
//! and its length and local frame are derived from the endpoint positions.
//! Edge orientation (source to target) is the positive flow direction.

mod generate;
pub mod io;
mod params;

use std::collections::{BTreeSet, HashSet};

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};

pub use generate::generate_network;
pub use params::{GenParams, GenState, Region, RotationParam, ScalarParam};

pub type Vec3 = Vector3<f64>;

/// Orthonormal frame of an edge: `d` is the axis, `e1`/`e2` span the cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub d: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl Frame {
    /// Canonical frame for an axis direction. `e1` is built from the world axis
    /// least aligned with `d`, so the result depends only on `d`.
    pub fn from_direction(dir: &Vec3) -> Frame {
        let d = dir.normalize();
        let helper = if d.x.abs() <= d.y.abs() && d.x.abs() <= d.z.abs() {
            Vec3::x()
        } else if d.y.abs() <= d.z.abs() {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let e1 = (helper - d * helper.dot(&d)).normalize();
        let e2 = d.cross(&e1);
        Frame { d, e1, e2 }
    }

    /// Re-orthonormalize after accumulated rotations (Gram-Schmidt on d, e1).
    pub fn orthonormalized(&self) -> Frame {
        let d = self.d.normalize();
        let e1 = (self.e1 - d * self.e1.dot(&d)).normalize();
        let e2 = d.cross(&e1);
        Frame { d, e1, e2 }
    }

    pub fn orthonormality_error(&self) -> f64 {
        let dots = [
            self.d.dot(&self.e1),
            self.d.dot(&self.e2),
            self.e1.dot(&self.e2),
            self.d.norm_squared() - 1.0,
            self.e1.norm_squared() - 1.0,
            self.e2.norm_squared() - 1.0,
        ];
        dots.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: u64,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: u64,
    /// Index into [`VesselNetwork::nodes`].
    pub source: usize,
    /// Index into [`VesselNetwork::nodes`].
    pub target: usize,
    pub radius: f64,
    length: f64,
    frame: Frame,
}

impl Edge {
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VesselNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl VesselNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Appends a node and returns its index. The id defaults to the index.
    pub fn add_node(&mut self, position: Vec3) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(Node {
            id: idx as u64,
            position,
        });
        idx
    }

    pub(crate) fn add_node_with_id(&mut self, id: u64, position: Vec3) -> usize {
        let idx = self.nodes.len();
        self.nodes.push(Node { id, position });
        idx
    }

    /// Appends an edge between two node indices and returns its index.
    pub fn add_edge(&mut self, source: usize, target: usize, radius: f64) -> Result<usize> {
        let id = self.edges.len() as u64;
        self.add_edge_with_id(id, source, target, radius)
    }

    pub(crate) fn add_edge_with_id(
        &mut self,
        id: u64,
        source: usize,
        target: usize,
        radius: f64,
    ) -> Result<usize> {
        let n = self.nodes.len();
        if source >= n || target >= n {
            return Err(Error::InvalidNetwork(format!(
                "edge {id} references a missing node ({source} -> {target})"
            )));
        }
        if source == target {
            return Err(Error::InvalidNetwork(format!("edge {id} is a self-loop")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidNetwork(format!(
                "edge {id} has non-positive radius {radius}"
            )));
        }
        let delta = self.nodes[target].position - self.nodes[source].position;
        let length = delta.norm();
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidNetwork(format!(
                "edge {id} has degenerate length {length}"
            )));
        }
        let idx = self.edges.len();
        self.edges.push(Edge {
            id,
            source,
            target,
            radius,
            length,
            frame: Frame::from_direction(&delta),
        });
        Ok(idx)
    }

    /// Node degree in the undirected sense.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            deg[e.source] += 1;
            deg[e.target] += 1;
        }
        deg
    }

    /// Per-node list of incident edge indices.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.source].push(i);
            adj[e.target].push(i);
        }
        adj
    }

    /// Checks the structural invariants: unique ids, finite positions, no
    /// duplicate edges, and no cycles.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::with_capacity(self.nodes.len());
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(Error::InvalidNetwork(format!("duplicate node id {}", n.id)));
            }
            if !n.position.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "node {} has a non-finite position",
                    n.id
                )));
            }
        }
        let mut edge_ids = HashSet::with_capacity(self.edges.len());
        let mut pairs = HashSet::with_capacity(self.edges.len());
        let mut uf = UnionFind::new(self.nodes.len());
        for e in &self.edges {
            if !edge_ids.insert(e.id) {
                return Err(Error::InvalidNetwork(format!("duplicate edge id {}", e.id)));
            }
            let key = (e.source.min(e.target), e.source.max(e.target));
            if !pairs.insert(key) {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate edge between nodes {} and {}",
                    self.nodes[key.0].id, self.nodes[key.1].id
                )));
            }
            if !uf.union(e.source, e.target) {
                return Err(Error::InvalidNetwork(format!(
                    "edge {} closes a cycle; networks must be forests",
                    e.id
                )));
            }
        }
        Ok(())
    }

    /// Connected components as lists of node indices, ordered by smallest index.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut uf = UnionFind::new(self.nodes.len());
        for e in &self.edges {
            uf.union(e.source, e.target);
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..self.nodes.len() {
            groups.entry(uf.find(i)).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        out.sort_by_key(|c| c[0]);
        out
    }

    /// Disjoint union of several networks; ids are renumbered densely.
    pub fn merge(parts: &[VesselNetwork]) -> VesselNetwork {
        let mut out = VesselNetwork::new();
        for part in parts {
            let offset = out.nodes.len();
            for n in &part.nodes {
                out.add_node(n.position);
            }
            for e in &part.edges {
                let id = out.edges.len() as u64;
                out.edges.push(Edge {
                    id,
                    source: e.source + offset,
                    target: e.target + offset,
                    ..e.clone()
                });
            }
        }
        out
    }

    pub fn node_index(&self, id: u64) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Axis-aligned bounding box of all node positions, dilated by the
    /// largest radius.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = self.nodes.first()?;
        let mut lo = first.position;
        let mut hi = first.position;
        for n in &self.nodes {
            lo = lo.inf(&n.position);
            hi = hi.sup(&n.position);
        }
        let r = self.edges.iter().map(|e| e.radius).fold(0.0, f64::max);
        let pad = Vec3::repeat(r);
        Some((lo - pad, hi + pad))
    }
}

/// Edge-node incidence matrix stored by rows: each edge row holds `+1` at its
/// source column and `-1` at its target column.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    pub n_nodes: usize,
    pub rows: Vec<(usize, usize)>,
}

impl Incidence {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.n_nodes);
        for (r, &(s, t)) in self.rows.iter().enumerate() {
            m[(r, s)] = 1.0;
            m[(r, t)] = -1.0;
        }
        m
    }
}

pub fn incidence_matrix(net: &VesselNetwork) -> Incidence {
    Incidence {
        n_nodes: net.node_count(),
        rows: net.edges.iter().map(|e| (e.source, e.target)).collect(),
    }
}

/// Indices of degree-1 nodes, ascending.
pub fn hanging_nodes(net: &VesselNetwork) -> Result<BTreeSet<usize>> {
    let set: BTreeSet<usize> = net
        .degrees()
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 1)
        .map(|(i, _)| i)
        .collect();
    if set.len() < 2 {
        return Err(Error::InvalidNetwork(format!(
            "a network needs at least 2 hanging nodes, found {}",
            set.len()
        )));
    }
    Ok(set)
}

/// Column partition of the incidence matrix into hanging and non-hanging
/// node columns, each in ascending node-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitIncidence {
    pub incidence: Incidence,
    pub hanging: Vec<usize>,
    pub non_hanging: Vec<usize>,
    /// `column_of[node]` is the column of `node` within its block.
    pub column_of: Vec<usize>,
    pub is_hanging: Vec<bool>,
}

impl SplitIncidence {
    pub fn hanging_dense(&self) -> DMatrix<f64> {
        self.block_dense(&self.hanging)
    }

    pub fn non_hanging_dense(&self) -> DMatrix<f64> {
        self.block_dense(&self.non_hanging)
    }

    fn block_dense(&self, cols: &[usize]) -> DMatrix<f64> {
        let full = self.incidence.to_dense();
        DMatrix::from_fn(full.nrows(), cols.len(), |r, c| full[(r, cols[c])])
    }

    /// Rebuilds the full incidence matrix from the two blocks and the recorded
    /// column order.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let h = self.hanging_dense();
        let nh = self.non_hanging_dense();
        let mut full = DMatrix::zeros(self.incidence.rows.len(), self.incidence.n_nodes);
        for (c, &node) in self.hanging.iter().enumerate() {
            full.set_column(node, &h.column(c));
        }
        for (c, &node) in self.non_hanging.iter().enumerate() {
            full.set_column(node, &nh.column(c));
        }
        full
    }
}

pub fn split_incidence(net: &VesselNetwork) -> Result<SplitIncidence> {
    let hanging_set = hanging_nodes(net)?;
    let n = net.node_count();
    let mut is_hanging = vec![false; n];
    for &h in &hanging_set {
        is_hanging[h] = true;
    }
    let hanging: Vec<usize> = hanging_set.into_iter().collect();
    let non_hanging: Vec<usize> = (0..n).filter(|&i| !is_hanging[i]).collect();
    let mut column_of = vec![0; n];
    for (c, &i) in hanging.iter().enumerate() {
        column_of[i] = c;
    }
    for (c, &i) in non_hanging.iter().enumerate() {
        column_of[i] = c;
    }
    Ok(SplitIncidence {
        incidence: incidence_matrix(net),
        hanging,
        non_hanging,
        column_of,
        is_hanging,
    })
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already connected.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::sample_network;
    use super::*;

    #[test]
    fn sample_incidence_rows() {
        let net = sample_network();
        let i = incidence_matrix(&net).to_dense();
        let expected: [[f64; 7]; 7] = [
            [1., -1., 0., 0., 0., 0., 0.],
            [0., 1., -1., 0., 0., 0., 0.],
            [0., 1., 0., -1., 0., 0., 0.],
            [0., 0., 1., -1., 0., 0., 0.],
            [0., 0., 1., 0., -1., 0., 0.],
            [0., 0., 1., 0., 0., -1., 0.],
            [0., 0., 0., 1., 0., 0., -1.],
        ];
        for r in 0..7 {
            for c in 0..7 {
                assert_eq!(i[(r, c)], expected[r][c], "({r},{c})");
            }
            assert_eq!(i.row(r).sum(), 0.0);
        }
    }

    #[test]
    fn sample_hanging_and_split() {
        // The sample graph contains the cycle b-c-d, so it is only used for
        // the matrix layout, not for forest validation.
        let net = sample_network();
        let hanging: Vec<usize> = hanging_nodes(&net).unwrap().into_iter().collect();
        assert_eq!(hanging, vec![0, 4, 5, 6]);

        let split = split_incidence(&net).unwrap();
        let ih = split.hanging_dense();
        let inh = split.non_hanging_dense();
        assert_eq!((ih.nrows(), ih.ncols()), (7, 4));
        assert_eq!((inh.nrows(), inh.ncols()), (7, 3));
        let ih_expected: [[f64; 4]; 7] = [
            [1., 0., 0., 0.],
            [0., 0., 0., 0.],
            [0., 0., 0., 0.],
            [0., 0., 0., 0.],
            [0., -1., 0., 0.],
            [0., 0., -1., 0.],
            [0., 0., 0., -1.],
        ];
        let inh_expected: [[f64; 3]; 7] = [
            [-1., 0., 0.],
            [1., -1., 0.],
            [1., 0., -1.],
            [0., 1., -1.],
            [0., 1., 0.],
            [0., 1., 0.],
            [0., 0., 1.],
        ];
        for r in 0..7 {
            for c in 0..4 {
                assert_eq!(ih[(r, c)], ih_expected[r][c]);
            }
            for c in 0..3 {
                assert_eq!(inh[(r, c)], inh_expected[r][c]);
            }
        }
        assert_eq!(split.reassemble(), incidence_matrix(&net).to_dense());
    }

    #[test]
    fn single_edge() {
        let mut net = VesselNetwork::new();
        let a = net.add_node(Vec3::zeros());
        let b = net.add_node(Vec3::new(0.0, 0.0, 1e-3));
        net.add_edge(a, b, 1e-5).unwrap();
        let i = incidence_matrix(&net).to_dense();
        assert_eq!(i.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, -1.0]);
        let h: Vec<usize> = hanging_nodes(&net).unwrap().into_iter().collect();
        assert_eq!(h, vec![0, 1]);
        let split = split_incidence(&net).unwrap();
        assert_eq!(split.non_hanging_dense().ncols(), 0);
        assert_eq!(split.reassemble(), i);
    }

    #[test]
    fn balanced_depth_two_tree_has_five_hanging_nodes() {
        // root -> hub -> {m1, m2}, each mid -> two leaves
        let mut net = VesselNetwork::new();
        let root = net.add_node(Vec3::new(0.0, 0.0, 0.0));
        let hub = net.add_node(Vec3::new(0.0, 0.0, 1.0));
        net.add_edge(root, hub, 0.1).unwrap();
        let mids: Vec<usize> = [-1.0, 1.0]
            .iter()
            .map(|&x| {
                let m = net.add_node(Vec3::new(x, 0.0, 2.0));
                net.add_edge(hub, m, 0.1).unwrap();
                m
            })
            .collect();
        for (k, &m) in mids.iter().enumerate() {
            for dx in [-0.25, 0.25] {
                let x = if k == 0 { -1.0 } else { 1.0 } + dx;
                let leaf = net.add_node(Vec3::new(x, 0.0, 3.0));
                net.add_edge(m, leaf, 0.1).unwrap();
            }
        }
        net.validate().unwrap();
        assert_eq!(hanging_nodes(&net).unwrap().len(), 5);
    }

    #[test]
    fn too_few_hanging_nodes_is_an_error() {
        let mut net = VesselNetwork::new();
        net.add_node(Vec3::zeros());
        assert!(matches!(hanging_nodes(&net), Err(Error::InvalidNetwork(_))));
    }

    #[test]
    fn rejects_degenerate_edges() {
        let mut net = VesselNetwork::new();
        let a = net.add_node(Vec3::zeros());
        let b = net.add_node(Vec3::zeros());
        assert!(net.add_edge(a, a, 1.0).is_err());
        assert!(net.add_edge(a, b, 1.0).is_err());
        let c = net.add_node(Vec3::x());
        assert!(net.add_edge(a, c, 0.0).is_err());
        assert!(net.add_edge(a, c, -1.0).is_err());
    }

    #[test]
    fn validate_detects_cycle_and_duplicates() {
        let net = sample_network();
        assert!(net.validate().is_err());

        let mut dup = VesselNetwork::new();
        let a = dup.add_node(Vec3::zeros());
        let b = dup.add_node(Vec3::x());
        dup.add_edge(a, b, 1.0).unwrap();
        dup.add_edge(b, a, 1.0).unwrap();
        assert!(dup.validate().is_err());
    }

    #[test]
    fn canonical_frames_are_orthonormal() {
        for dir in [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, -3.0),
            Vec3::new(0.3, -0.7, 0.2),
            Vec3::new(1e-9, 1.0, 1e-9),
        ] {
            let f = Frame::from_direction(&dir);
            assert!(f.orthonormality_error() < 1e-12);
            assert!((f.d - dir.normalize()).norm() < 1e-15);
        }
    }

    #[test]
    fn merge_renumbers() {
        let mut a = VesselNetwork::new();
        let n0 = a.add_node(Vec3::zeros());
        let n1 = a.add_node(Vec3::z());
        a.add_edge(n0, n1, 1.0).unwrap();
        let m = VesselNetwork::merge(&[a.clone(), a]);
        assert_eq!(m.node_count(), 4);
        assert_eq!(m.edges()[1].source, 2);
        assert_eq!(m.edges()[1].id, 1);
        assert_eq!(m.components().len(), 2);
        m.validate().unwrap();
    }
}
