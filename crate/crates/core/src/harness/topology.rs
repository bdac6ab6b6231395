use crate::error::{Error, Result};
use crate::medium::{NodeId, NodeKind, NodePosition, OperatorId, Technology};
use crate::sim_core::RngStream;

use super::config::ScenarioConfig;

#[derive(Debug, Clone)]
pub struct Topology {
    pub nodes: Vec<NodePosition>,
    /// Serving infrastructure node of every client; `None` for
    /// infrastructure nodes.
    pub serving: Vec<Option<NodeId>>,
    pub op2_offset_m: f64,
}

impl Topology {
    pub fn infrastructure(&self, op: u8) -> impl Iterator<Item = &NodePosition> + '_ {
        self.nodes
            .iter()
            .filter(move |n| n.operator.0 == op && n.kind.is_infrastructure())
    }

    pub fn clients(&self, op: u8) -> impl Iterator<Item = &NodePosition> + '_ {
        self.nodes
            .iter()
            .filter(move |n| n.operator.0 == op && !n.kind.is_infrastructure())
    }
}

fn kinds(tech: Technology) -> (NodeKind, NodeKind) {
    match tech {
        Technology::Wifi => (NodeKind::WifiAp, NodeKind::WifiSta),
        Technology::Laa => (NodeKind::LaaEnb, NodeKind::LaaUe),
    }
}

/// Places each operator's infrastructure nodes equally spaced along the
/// building's long centerline (operator 2 shifted by a random offset) and
/// drops clients uniformly over the footprint. Node ids run operator by
/// operator, infrastructure first. Each client is served by the nearest
/// node of its own operator.
///
/// Draws depend only on the stream, never on technologies, so both steps
/// of a replication see the same geometry.
pub fn build_indoor_topology(
    cfg: &ScenarioConfig,
    techs: [Technology; 2],
    stream: &mut RngStream,
) -> Result<Topology> {
    let (len, wid) = (cfg.building_length_m, cfg.building_width_m);
    let along_x = len >= wid;
    let (long, short) = if along_x { (len, wid) } else { (wid, len) };
    let n = cfg.nodes_per_operator as usize;
    let spacing = long / n as f64;
    if spacing < 1.0 {
        return Err(Error::Config("building too small for the node count".into()));
    }
    let offset = stream.uniform_f64(-cfg.op2_offset_max_m, cfg.op2_offset_max_m);
    let mut nodes = Vec::with_capacity(cfg.total_nodes());
    let mut serving = Vec::with_capacity(cfg.total_nodes());
    for op in 0..2u8 {
        let (infra_kind, client_kind) = kinds(techs[op as usize]);
        let shift = if op == 1 { offset } else { 0.0 };
        let first = nodes.len();
        for i in 0..n {
            let a = (spacing * (i as f64 + 0.5) + shift).clamp(0.0, long);
            let (x, y) = if along_x { (a, short / 2.0) } else { (short / 2.0, a) };
            nodes.push(NodePosition {
                node_id: NodeId(nodes.len() as u32),
                operator: OperatorId(op),
                kind: infra_kind,
                x_m: x,
                y_m: y,
            });
            serving.push(None);
        }
        for _ in 0..cfg.clients_per_operator {
            let x = stream.uniform_f64(0.0, len);
            let y = stream.uniform_f64(0.0, wid);
            let client = NodePosition {
                node_id: NodeId(nodes.len() as u32),
                operator: OperatorId(op),
                kind: client_kind,
                x_m: x,
                y_m: y,
            };
            let best = (first..first + n)
                .min_by(|&a, &b| {
                    nodes[a]
                        .distance_m(&client)
                        .total_cmp(&nodes[b].distance_m(&client))
                })
                .expect("at least one node");
            nodes.push(client);
            serving.push(Some(NodeId(best as u32)));
        }
    }
    Ok(Topology {
        nodes,
        serving,
        op2_offset_m: offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const WW: [Technology; 2] = [Technology::Wifi, Technology::Wifi];

    #[test]
    fn default_footprint_rows() {
        let cfg = ScenarioConfig::default();
        let t = build_indoor_topology(&cfg, WW, &mut RngStream::new(1, "topology")).unwrap();
        let xs: Vec<f64> = t.infrastructure(0).map(|n| n.x_m).collect();
        assert_eq!(xs, vec![15.0, 45.0, 75.0, 105.0]);
        assert!(t.infrastructure(0).all(|n| n.y_m == 25.0));
        for (n, x) in t.infrastructure(1).zip(&xs) {
            assert!((n.x_m - t.op2_offset_m - x).abs() < 1e-9);
        }
        assert_eq!(t.nodes.len(), 28);
    }

    #[test]
    fn seeds_change_the_drop() {
        let cfg = ScenarioConfig::default();
        let a = build_indoor_topology(&cfg, WW, &mut RngStream::new(1, "topology")).unwrap();
        let b = build_indoor_topology(&cfg, WW, &mut RngStream::new(2, "topology")).unwrap();
        assert_ne!(a.op2_offset_m, b.op2_offset_m);
        assert_ne!(a.nodes[4].x_m, b.nodes[4].x_m);
    }

    #[test]
    fn clients_inside_and_served_by_own_operator() {
        let cfg = ScenarioConfig::default();
        for seed in 0..50 {
            let t = build_indoor_topology(
                &cfg,
                [Technology::Wifi, Technology::Laa],
                &mut RngStream::new(seed, "topology"),
            )
            .unwrap();
            for (node, srv) in t.nodes.iter().zip(&t.serving) {
                assert!((0.0..=120.0).contains(&node.x_m) && (0.0..=50.0).contains(&node.y_m));
                if let Some(s) = srv {
                    let s = &t.nodes[s.0 as usize];
                    assert_eq!(s.operator, node.operator);
                    assert!(s.kind.is_infrastructure());
                }
            }
        }
    }

    #[test]
    fn geometry_independent_of_technology() {
        let cfg = ScenarioConfig::default();
        let a = build_indoor_topology(&cfg, WW, &mut RngStream::new(9, "topology")).unwrap();
        let b = build_indoor_topology(
            &cfg,
            [Technology::Wifi, Technology::Laa],
            &mut RngStream::new(9, "topology"),
        )
        .unwrap();
        for (x, y) in a.nodes.iter().zip(&b.nodes) {
            assert_eq!((x.x_m, x.y_m), (y.x_m, y.y_m));
        }
        assert_eq!(b.nodes[14].kind, NodeKind::LaaEnb);
        assert_eq!(b.nodes[20].kind, NodeKind::LaaUe);
    }
}
