//! Minimum-weight routes over the road graph.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{unproject, GeoPoint, PlanePoint};
use crate::riskmap::EdgeWeights;
use crate::roadnet::{EdgeId, NodeId, RoadGraph};
use crate::round6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouteError {
    #[error("unknown road node {0}")]
    UnknownNode(NodeId),
    #[error("no route from node {from} (component {from_component}) to node {to} (component {to_component})")]
    NoRoute {
        from: NodeId,
        to: NodeId,
        from_component: usize,
        to_component: usize,
    },
    #[error("edge {edge} has invalid weight {value}")]
    InvalidWeight { edge: EdgeId, value: f64 },
    #[error("weight table has {got} rows but graph has {expected} edges")]
    WeightMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRequest {
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub alpha: f64,
    pub ego_device: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub node_path: Vec<NodeId>,
    pub edge_path: Vec<EdgeId>,
    /// Meters.
    pub travel_distance: f64,
    /// Sum of `w_sft` along the route.
    pub safety_score: f64,
    /// Sum of `w_dist` along the route.
    pub distance_cost: f64,
    /// Sum of `w_total` along the route.
    pub total_cost: f64,
}

impl Route {
    /// Route geometry from first to last node, oriented along travel.
    pub fn polyline(&self, graph: &RoadGraph) -> Vec<PlanePoint> {
        let mut pts: Vec<PlanePoint> = Vec::new();
        if let Some(first) = self.node_path.first().and_then(|id| graph.node(*id)) {
            pts.push(first.plane);
        }
        for (k, eid) in self.edge_path.iter().enumerate() {
            let e = graph.edge(*eid).expect("route edge in graph");
            if e.a == self.node_path[k] {
                pts.extend(e.geometry.iter().skip(1));
            } else {
                pts.extend(e.geometry.iter().rev().skip(1));
            }
        }
        pts
    }

    /// GeoJSON Feature with a LineString geometry.
    pub fn to_geojson(&self, graph: &RoadGraph, alpha: f64, snapshot_id: &str) -> Value {
        let mut coords: Vec<Value> = self
            .polyline(graph)
            .into_iter()
            .map(|q| {
                let g = unproject(graph.origin(), q);
                json!([round6(g.lon), round6(g.lat)])
            })
            .collect();
        if coords.len() == 1 {
            // a LineString needs two positions
            coords.push(coords[0].clone());
        }
        json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {
                "alpha": round6(alpha),
                "travel_distance_m": round6(self.travel_distance),
                "safety_score": round6(self.safety_score),
                "total_cost": round6(self.total_cost),
                "snapshot_id": snapshot_id,
                "node_path": self.node_path,
                "edge_path": self.edge_path,
            },
        })
    }
}

/// Relative tolerance under which two path costs count as tied. Sums of the
/// same weights in a different order differ in the last bits; without it a
/// route and its own suffix could break ties differently.
pub const COST_TIE_EPS: f64 = 1e-13;

fn cost_cmp(a: f64, b: f64) -> Ordering {
    if b.is_infinite() {
        return if a.is_infinite() { Ordering::Equal } else { Ordering::Less };
    }
    if (a - b).abs() <= COST_TIE_EPS * a.abs().max(b.abs()).max(1.0) {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

/// Dijkstra on `w_total`. Among equal-cost paths (within [`COST_TIE_EPS`])
/// the one with fewer edges wins, then the lexicographically smallest node-id
/// sequence, then the smallest edge ids.
pub fn dijkstra(graph: &RoadGraph, weights: &EdgeWeights, src: NodeId, dst: NodeId) -> Result<Route, RouteError> {
    if weights.rows.len() != graph.edge_count() {
        return Err(RouteError::WeightMismatch {
            expected: graph.edge_count(),
            got: weights.rows.len(),
        });
    }
    for r in &weights.rows {
        if !(r.w_total >= 0.0 && r.w_total.is_finite()) {
            return Err(RouteError::InvalidWeight {
                edge: r.edge,
                value: r.w_total,
            });
        }
    }
    let s = graph.node_idx(src).ok_or(RouteError::UnknownNode(src))?;
    let t = graph.node_idx(dst).ok_or(RouteError::UnknownNode(dst))?;
    let n = graph.node_count();
    let nodes = graph.nodes();

    let mut cost = vec![f64::INFINITY; n];
    let mut hops = vec![usize::MAX; n];
    // (predecessor node index, edge index)
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    cost[s] = 0.0;
    hops[s] = 0;
    heap.push(Reverse((OrderedFloat(0.0), 0usize, s)));

    let path_ids = |parent: &[Option<(usize, usize)>], mut v: usize| {
        let mut ids = vec![nodes[v].id];
        while let Some((p, _)) = parent[v] {
            ids.push(nodes[p].id);
            v = p;
        }
        ids.reverse();
        ids
    };

    while let Some(Reverse((OrderedFloat(c), h, u))) = heap.pop() {
        if done[u] || c != cost[u] || h != hops[u] {
            continue;
        }
        done[u] = true;
        if u == t {
            break;
        }
        for &(ei, v) in graph.neighbors(u) {
            if done[v] {
                continue;
            }
            let nc = c + weights.rows[ei].w_total;
            let nh = h + 1;
            let better = match (cost_cmp(nc, cost[v]), nh.cmp(&hops[v])) {
                (Ordering::Less, _) => true,
                (Ordering::Equal, Ordering::Less) => true,
                (Ordering::Equal, Ordering::Equal) => {
                    let (pu, pe) = parent[v].expect("reached node has a parent");
                    if pu == u {
                        graph.edges()[ei].id < graph.edges()[pe].id
                    } else {
                        path_ids(&parent, u) < path_ids(&parent, pu)
                    }
                }
                _ => false,
            };
            if better {
                cost[v] = nc;
                hops[v] = nh;
                parent[v] = Some((u, ei));
                heap.push(Reverse((OrderedFloat(nc), nh, v)));
            }
        }
    }

    if !done[t] {
        return Err(RouteError::NoRoute {
            from: src,
            to: dst,
            from_component: graph.component_of(s),
            to_component: graph.component_of(t),
        });
    }

    let mut node_path = vec![nodes[t].id];
    let mut edge_idx = Vec::new();
    let mut v = t;
    while let Some((p, e)) = parent[v] {
        node_path.push(nodes[p].id);
        edge_idx.push(e);
        v = p;
    }
    node_path.reverse();
    edge_idx.reverse();
    let mut route = Route {
        node_path,
        edge_path: Vec::with_capacity(edge_idx.len()),
        travel_distance: 0.0,
        safety_score: 0.0,
        distance_cost: 0.0,
        total_cost: cost[t],
    };
    for e in edge_idx {
        let row = &weights.rows[e];
        route.edge_path.push(graph.edges()[e].id);
        route.travel_distance += graph.edges()[e].length;
        route.safety_score += row.w_sft;
        route.distance_cost += row.w_dist;
    }
    Ok(route)
}

/// Snaps both endpoints to their nearest nodes and runs [`dijkstra`].
pub fn route_between(graph: &RoadGraph, weights: &EdgeWeights, from: PlanePoint, to: PlanePoint) -> Result<Route, RouteError> {
    let a = graph.nearest_node(from).id;
    let b = graph.nearest_node(to).id;
    dijkstra(graph, weights, a, b)
}
