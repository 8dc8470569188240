use rand::Rng;

use super::{Frame, GenParams, GenState, Vec3, VesselNetwork};
use crate::error::{Error, Result};
use crate::rng::{derive, stream};

/// Grows a randomized binary vessel tree.
///
/// A vessel is extended edge by edge until the next node would leave
/// `inside_f`. Each interior node of the finished vessel draws whether it
/// sprouts a branch; sprouts recurse one level deeper up to `max_level`.
/// Every vessel draws from its own stream keyed by its position in the
/// recursion, so raising `max_level` only adds branches.
pub fn generate_network(params: &GenParams) -> Result<VesselNetwork> {
    params.validate()?;
    let mut net = VesselNetwork::new();
    let origin = Vec3::from(params.origin);
    let root = net.add_node(origin);
    let start = GenState {
        node: root,
        position: origin,
        frame: Frame::from_direction(&Vec3::from(params.direction)),
        radius: params.initial_radius,
        level: 0,
    };
    let mut gen = Generator { params, net };
    gen.grow(start, derive(params.seed, 0))?;
    Ok(gen.net)
}

struct Generator<'a> {
    params: &'a GenParams,
    net: VesselNetwork,
}

impl Generator<'_> {
    fn grow(&mut self, start: GenState, key: u64) -> Result<()> {
        let p = self.params;
        let mut rng = stream(key);
        let mut state = start;
        // (state at node, sprout drawn) for every node created by this vessel
        let mut created: Vec<(GenState, bool)> = Vec::new();
        loop {
            let step = p.edge_step_f.eval(&state, &mut rng);
            let frame = p.rot_f.apply(&state.frame, &mut rng);
            let next = state.position + frame.d * step;
            if !p.inside_f.contains(&next) {
                break;
            }
            if self.net.edge_count() >= p.max_edges {
                return Err(Error::EdgeCapExceeded { cap: p.max_edges });
            }
            let node = self.net.add_node(next);
            self.net.add_edge(state.node, node, state.radius)?;
            let radius = state.radius * p.r_decay_f.eval(&state, &mut rng);
            state = GenState {
                node,
                position: next,
                frame,
                radius,
                level: state.level,
            };
            let prob = p.bif_occurs_f.eval(&state, &mut rng);
            let u: f64 = rng.random();
            created.push((state, u < prob));
        }

        if start.level >= p.max_level {
            return Ok(());
        }
        // The last node ends the vessel; only interior nodes may bifurcate.
        let interior = created.len().saturating_sub(1);
        for (k, (at, sprout)) in created.iter().take(interior).enumerate() {
            if !sprout {
                continue;
            }
            let child_key = derive(key, k as u64 + 1);
            let mut child_rng = stream(derive(child_key, u64::MAX));
            let frame = p.bif_rot_f.apply(&at.frame, &mut child_rng);
            let radius = at.radius * p.bif_r_decay_f.eval(at, &mut child_rng);
            let child = GenState {
                frame,
                radius,
                level: at.level + 1,
                ..*at
            };
            self.grow(child, child_key)?;
        }
        Ok(())
    }
}
