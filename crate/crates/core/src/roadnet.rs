//! Road network ingestion and segmentation.
//!
//! Ways are split at every shared node so graph vertices are intersections and
//! way ends. Long edges are then cut into `⌈L / l_th⌉` equal-length pieces.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{project, unproject, Bounds, GeoError, GeoPoint, PlanePoint};
use crate::round6;

/// Default maximum segment length, in meters.
pub const DEFAULT_L_TH: f64 = 200.0;

/// Way classes a pedestrian may use.
pub const WALKABLE_HIGHWAYS: &[&str] = &[
    "residential",
    "footway",
    "path",
    "pedestrian",
    "living_street",
    "service",
    "tertiary",
    "tertiary_link",
    "unclassified",
    "track",
    "steps",
    "cycleway",
    "bridleway",
    "corridor",
    "road",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoadError {
    #[error("parse error at line {line}, column {column} ({context}): {message}")]
    Parse {
        line: u32,
        column: u32,
        context: String,
        message: String,
    },
    #[error("map contains no walkable ways")]
    EmptyMap,
    #[error("invalid road graph: {0}")]
    InvalidGraph(String),
    #[error("unknown road node {0}")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNode {
    pub id: NodeId,
    pub location: GeoPoint,
    pub plane: PlanePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadEdge {
    pub id: EdgeId,
    pub a: NodeId,
    pub b: NodeId,
    /// Meters.
    pub length: f64,
    /// Polyline from `a` to `b`.
    pub geometry: Vec<PlanePoint>,
    pub highway: String,
}

impl RoadEdge {
    pub fn other(&self, n: NodeId) -> NodeId {
        if n == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub l_th: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig { l_th: DEFAULT_L_TH }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapFormat {
    Osm,
    Geojson,
}

impl MapFormat {
    /// Guesses the format from the first non-blank character.
    pub fn detect(text: &str) -> Option<MapFormat> {
        match text.trim_start().chars().next()? {
            '<' => Some(MapFormat::Osm),
            '{' => Some(MapFormat::Geojson),
            _ => None,
        }
    }
}

/// Undirected road graph. Nodes and edges are kept sorted by id.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    origin: GeoPoint,
    nodes: Vec<RoadNode>,
    edges: Vec<RoadEdge>,
    node_index: HashMap<NodeId, usize>,
    edge_index: HashMap<EdgeId, usize>,
    // per node: (edge index, neighbor node index)
    adjacency: Vec<Vec<(usize, usize)>>,
    component: Vec<usize>,
    main_component: usize,
}

pub fn polyline_length(line: &[PlanePoint]) -> f64 {
    line.windows(2).map(|w| w[0].distance(w[1])).sum()
}

impl RoadGraph {
    pub fn new(origin: GeoPoint, mut nodes: Vec<RoadNode>, mut edges: Vec<RoadEdge>) -> Result<Self, RoadError> {
        if nodes.is_empty() {
            return Err(RoadError::EmptyMap);
        }
        nodes.sort_by_key(|n| n.id);
        edges.sort_by_key(|e| e.id);
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id, i).is_some() {
                return Err(RoadError::InvalidGraph(format!("duplicate node id {}", n.id)));
            }
        }
        let mut edge_index = HashMap::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            if edge_index.insert(e.id, i).is_some() {
                return Err(RoadError::InvalidGraph(format!("duplicate edge id {}", e.id)));
            }
            if e.a == e.b {
                return Err(RoadError::InvalidGraph(format!("edge {} is a self-loop", e.id)));
            }
            if !(e.length > 0.0 && e.length.is_finite()) {
                return Err(RoadError::InvalidGraph(format!("edge {} has length {}", e.id, e.length)));
            }
            let ia = *node_index.get(&e.a).ok_or(RoadError::UnknownNode(e.a))?;
            let ib = *node_index.get(&e.b).ok_or(RoadError::UnknownNode(e.b))?;
            adjacency[ia].push((i, ib));
            adjacency[ib].push((i, ia));
        }
        let (component, main_component) = components(&adjacency);
        Ok(RoadGraph {
            origin,
            nodes,
            edges,
            node_index,
            edge_index,
            adjacency,
            component,
            main_component,
        })
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn nodes(&self) -> &[RoadNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RoadEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_idx(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn edge_idx(&self, id: EdgeId) -> Option<usize> {
        self.edge_index.get(&id).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&RoadNode> {
        self.node_idx(id).map(|i| &self.nodes[i])
    }

    pub fn edge(&self, id: EdgeId) -> Option<&RoadEdge> {
        self.edge_idx(id).map(|i| &self.edges[i])
    }

    /// `(edge index, neighbor node index)` pairs incident to node index `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, id: NodeId) -> Option<usize> {
        self.node_idx(id).map(|i| self.adjacency[i].len())
    }

    /// Connected component label of node index `i`.
    pub fn component_of(&self, i: usize) -> usize {
        self.component[i]
    }

    /// Label of the largest connected component (ties: lowest label).
    pub fn main_component(&self) -> usize {
        self.main_component
    }

    pub fn component_count(&self) -> usize {
        self.component.iter().max().map_or(0, |m| m + 1)
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(0.0, f64::max)
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::of(self.nodes.iter().map(|n| &n.plane)).expect("graph is non-empty")
    }

    /// Node closest to `p`; ties go to the smallest id.
    pub fn nearest_node(&self, p: PlanePoint) -> &RoadNode {
        let mut best = &self.nodes[0];
        let mut best_d = best.plane.distance(p);
        for n in &self.nodes[1..] {
            let d = n.plane.distance(p);
            if d < best_d {
                best = n;
                best_d = d;
            }
        }
        best
    }

    /// GeoJSON FeatureCollection of edges (LineStrings) and nodes (Points).
    pub fn to_geojson(&self) -> Value {
        let mut features = Vec::with_capacity(self.edges.len() + self.nodes.len());
        for e in &self.edges {
            let coords: Vec<Value> = e
                .geometry
                .iter()
                .map(|q| {
                    let g = unproject(self.origin, *q);
                    json!([round6(g.lon), round6(g.lat)])
                })
                .collect();
            let comp = self.component[self.node_index[&e.a]];
            features.push(json!({
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": {
                    "kind": "edge",
                    "id": e.id.0,
                    "from": e.a.0,
                    "to": e.b.0,
                    "length_m": round6(e.length),
                    "highway": e.highway,
                    "component": comp,
                    "main_component": comp == self.main_component,
                }
            }));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            features.push(json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [round6(n.location.lon), round6(n.location.lat)]},
                "properties": {
                    "kind": "node",
                    "id": n.id.0,
                    "component": self.component[i],
                    "main_component": self.component[i] == self.main_component,
                }
            }));
        }
        json!({"type": "FeatureCollection", "features": features})
    }
}

fn components(adjacency: &[Vec<(usize, usize)>]) -> (Vec<usize>, usize) {
    let n = adjacency.len();
    let mut label = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let c = sizes.len();
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        label[start] = c;
        while let Some(u) = queue.pop_front() {
            size += 1;
            for &(_, v) in &adjacency[u] {
                if label[v] == usize::MAX {
                    label[v] = c;
                    queue.push_back(v);
                }
            }
        }
        sizes.push(size);
    }
    let main = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(i, _)| i);
    (label, main)
}

pub fn is_walkable(highway: &str) -> bool {
    WALKABLE_HIGHWAYS.contains(&highway)
}

struct RawWay {
    nodes: Vec<u64>,
    highway: String,
}

/// Parses a road-map document of the given format.
pub fn ingest_roads(text: &str, format: MapFormat) -> Result<RoadGraph, RoadError> {
    let (ways, coords) = match format {
        MapFormat::Osm => parse_osm(text)?,
        MapFormat::Geojson => parse_geojson(text)?,
    };
    build_from_ways(ways, &coords)
}

fn parse_osm(text: &str) -> Result<(Vec<RawWay>, HashMap<u64, GeoPoint>), RoadError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        RoadError::Parse {
            line: pos.row,
            column: pos.col,
            context: "xml".into(),
            message: e.to_string(),
        }
    })?;
    let err_at = |node: roxmltree::Node, message: String| {
        let pos = doc.text_pos_at(node.range().start);
        let id = node.attribute("id").unwrap_or("?");
        RoadError::Parse {
            line: pos.row,
            column: pos.col,
            context: format!("<{} id={}>", node.tag_name().name(), id),
            message,
        }
    };
    let root = doc.root_element();
    if root.tag_name().name() != "osm" {
        return Err(err_at(root, "root element must be <osm>".into()));
    }

    let mut coords = HashMap::new();
    let mut ways = Vec::new();
    for el in root.children().filter(|n| n.is_element()) {
        match el.tag_name().name() {
            "node" => {
                let id = attr_u64(el, "id").map_err(|m| err_at(el, m))?;
                let lat = attr_f64(el, "lat").map_err(|m| err_at(el, m))?;
                let lon = attr_f64(el, "lon").map_err(|m| err_at(el, m))?;
                let p = GeoPoint::new(lat, lon).map_err(|e| err_at(el, e.to_string()))?;
                coords.insert(id, p);
            }
            "way" => {
                attr_u64(el, "id").map_err(|m| err_at(el, m))?;
                let mut refs = Vec::new();
                let mut tags: HashMap<&str, &str> = HashMap::new();
                for c in el.children().filter(|n| n.is_element()) {
                    match c.tag_name().name() {
                        "nd" => refs.push(attr_u64(c, "ref").map_err(|m| err_at(c, m))?),
                        "tag" => {
                            let k = c.attribute("k").ok_or_else(|| err_at(c, "tag without k".into()))?;
                            let v = c.attribute("v").ok_or_else(|| err_at(c, "tag without v".into()))?;
                            tags.insert(k, v);
                        }
                        _ => {}
                    }
                }
                let highway = tags.get("highway").copied().unwrap_or("");
                let foot = tags.get("foot").copied().unwrap_or("");
                let walkable = match foot {
                    "no" => false,
                    "yes" | "designated" => !highway.is_empty(),
                    _ => is_walkable(highway),
                };
                if walkable && tags.get("area").copied() != Some("yes") {
                    ways.push(RawWay {
                        nodes: refs,
                        highway: highway.to_string(),
                    });
                }
            }
            _ => {}
        }
    }
    // refs to nodes outside the extract are dropped
    for w in &mut ways {
        w.nodes.retain(|id| coords.contains_key(id));
    }
    Ok((ways, coords))
}

fn attr_u64(node: roxmltree::Node, name: &str) -> Result<u64, String> {
    let raw = node.attribute(name).ok_or_else(|| format!("missing attribute {name}"))?;
    raw.parse::<i64>()
        .ok()
        .and_then(|v| u64::try_from(v).ok())
        .ok_or_else(|| format!("attribute {name}={raw:?} is not a non-negative integer"))
}

fn attr_f64(node: roxmltree::Node, name: &str) -> Result<f64, String> {
    let raw = node.attribute(name).ok_or_else(|| format!("missing attribute {name}"))?;
    raw.parse::<f64>()
        .map_err(|_| format!("attribute {name}={raw:?} is not a number"))
}

fn parse_geojson(text: &str) -> Result<(Vec<RawWay>, HashMap<u64, GeoPoint>), RoadError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| RoadError::Parse {
        line: e.line() as u32,
        column: e.column() as u32,
        context: "json".into(),
        message: e.to_string(),
    })?;
    let bad = |context: String, message: &str| RoadError::Parse {
        line: 0,
        column: 0,
        context,
        message: message.to_string(),
    };
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("root".into(), "expected a FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("root".into(), "missing features array"))?;

    let mut ids: HashMap<(i64, i64), u64> = HashMap::new();
    let mut coords = HashMap::new();
    let mut ways = Vec::new();
    for (fi, f) in features.iter().enumerate() {
        let ctx = || format!("features[{fi}]");
        let geometry = f.get("geometry").ok_or_else(|| bad(ctx(), "missing geometry"))?;
        if geometry.get("type").and_then(Value::as_str) != Some("LineString") {
            continue;
        }
        let highway = f
            .get("properties")
            .and_then(|p| p.get("highway"))
            .and_then(Value::as_str)
            .unwrap_or("");
        if !is_walkable(highway) {
            continue;
        }
        let line = geometry
            .get("coordinates")
            .and_then(Value::as_array)
            .ok_or_else(|| bad(ctx(), "LineString without coordinates"))?;
        let mut refs = Vec::with_capacity(line.len());
        for (ci, c) in line.iter().enumerate() {
            let pair = c.as_array().filter(|a| a.len() >= 2);
            let (lon, lat) = match pair.map(|a| (a[0].as_f64(), a[1].as_f64())) {
                Some((Some(lon), Some(lat))) => (lon, lat),
                _ => return Err(bad(format!("features[{fi}].coordinates[{ci}]"), "expected [lon, lat]")),
            };
            let p = GeoPoint::new(lat, lon)
                .map_err(|e| bad(format!("features[{fi}].coordinates[{ci}]"), &e.to_string()))?;
            // vertices within 1e-7 degrees are the same junction
            let key = ((lat * 1e7).round() as i64, (lon * 1e7).round() as i64);
            let next = ids.len() as u64 + 1;
            let id = *ids.entry(key).or_insert(next);
            coords.entry(id).or_insert(p);
            refs.push(id);
        }
        ways.push(RawWay {
            nodes: refs,
            highway: highway.to_string(),
        });
    }
    Ok((ways, coords))
}

fn build_from_ways(mut ways: Vec<RawWay>, coords: &HashMap<u64, GeoPoint>) -> Result<RoadGraph, RoadError> {
    for w in &mut ways {
        w.nodes.dedup();
    }
    ways.retain(|w| w.nodes.len() >= 2);
    if ways.is_empty() {
        return Err(RoadError::EmptyMap);
    }

    let mut refs: HashMap<u64, usize> = HashMap::new();
    for w in &ways {
        for id in &w.nodes {
            *refs.entry(*id).or_default() += 1;
        }
        *refs.entry(w.nodes[0]).or_default() += 1;
        *refs.entry(*w.nodes.last().unwrap()).or_default() += 1;
    }
    let mut used: Vec<u64> = refs.keys().copied().collect();
    used.sort_unstable();
    let pts: Vec<PlanePoint> = used
        .iter()
        .map(|id| PlanePoint::new(coords[id].lon, coords[id].lat))
        .collect();
    let bb = Bounds::of(&pts).expect("non-empty");
    let origin = GeoPoint::new((bb.min_y + bb.max_y) / 2.0, (bb.min_x + bb.max_x) / 2.0)?;
    let plane = |id: u64| project(origin, coords[&id]);

    let mut vertices: HashSet<u64> = refs.iter().filter(|(_, c)| **c >= 2).map(|(id, _)| *id).collect();
    let mut edges = Vec::new();
    for w in &ways {
        let mut start = 0;
        for i in 1..w.nodes.len() {
            if !vertices.contains(&w.nodes[i]) && i != w.nodes.len() - 1 {
                continue;
            }
            let run = &w.nodes[start..=i];
            start = i;
            let pieces: Vec<&[u64]> = if run[0] == run[run.len() - 1] {
                // closed run: split at an interior node so no self-loop appears
                if run.len() < 3 {
                    continue;
                }
                let mid = run.len() / 2;
                vertices.insert(run[mid]);
                vec![&run[..=mid], &run[mid..]]
            } else {
                vec![run]
            };
            for piece in pieces {
                let geometry = piece.iter().map(|id| plane(*id)).collect::<Result<Vec<_>, _>>()?;
                let length = polyline_length(&geometry);
                if length <= 0.0 {
                    continue;
                }
                edges.push(RoadEdge {
                    id: EdgeId(edges.len() as u64 + 1),
                    a: NodeId(piece[0]),
                    b: NodeId(piece[piece.len() - 1]),
                    length,
                    geometry,
                    highway: w.highway.clone(),
                });
            }
        }
    }
    if edges.is_empty() {
        return Err(RoadError::EmptyMap);
    }
    let mut endpoint_ids: Vec<u64> = edges.iter().flat_map(|e| [e.a.0, e.b.0]).collect();
    endpoint_ids.sort_unstable();
    endpoint_ids.dedup();
    let nodes = endpoint_ids
        .into_iter()
        .map(|id| {
            Ok(RoadNode {
                id: NodeId(id),
                location: coords[&id],
                plane: plane(id)?,
            })
        })
        .collect::<Result<Vec<_>, RoadError>>()?;
    RoadGraph::new(origin, nodes, edges)
}

/// Cuts `line` at each arc-length position in `cuts` (ascending, strictly
/// inside the line), returning the cut points and the resulting pieces.
fn split_polyline(line: &[PlanePoint], cuts: &[f64]) -> Vec<Vec<PlanePoint>> {
    let mut pieces = Vec::with_capacity(cuts.len() + 1);
    let mut current = vec![line[0]];
    let mut walked = 0.0;
    let mut next_cut = cuts.iter().peekable();
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        let seg = a.distance(b);
        while let Some(&&cut) = next_cut.peek() {
            if cut > walked + seg {
                break;
            }
            let t = if seg > 0.0 { (cut - walked) / seg } else { 0.0 };
            let p = a.lerp(b, t.clamp(0.0, 1.0));
            current.push(p);
            pieces.push(std::mem::replace(&mut current, vec![p]));
            next_cut.next();
        }
        walked += seg;
        current.push(b);
    }
    // rounding can leave a cut a hair past the final vertex
    for _ in next_cut {
        let p = *line.last().unwrap();
        current.push(p);
        pieces.push(std::mem::replace(&mut current, vec![p]));
    }
    pieces.push(current);
    for piece in &mut pieces {
        piece.dedup();
        if piece.len() == 1 {
            let only = piece[0];
            piece.push(only);
        }
    }
    pieces
}

/// Replaces every edge of length `L > l_th` by `⌈L / l_th⌉` equal pieces.
pub fn segment_long_edges(g: &RoadGraph, cfg: SegmentationConfig) -> Result<RoadGraph, RoadError> {
    if !(cfg.l_th > 0.0 && cfg.l_th.is_finite()) {
        return Err(RoadError::Geo(GeoError::InvalidParameter {
            name: "l_th",
            value: cfg.l_th,
        }));
    }
    let mut next_node = g.nodes.last().map_or(1, |n| n.id.0 + 1);
    let mut next_edge = g.edges.last().map_or(1, |e| e.id.0 + 1);
    let mut nodes = g.nodes.clone();
    let mut edges = Vec::with_capacity(g.edges.len());
    for e in &g.edges {
        let count = (e.length / cfg.l_th).ceil() as usize;
        if count <= 1 {
            edges.push(e.clone());
            continue;
        }
        let piece_len = e.length / count as f64;
        let arc = polyline_length(&e.geometry);
        let cuts: Vec<f64> = (1..count).map(|k| arc * k as f64 / count as f64).collect();
        let pieces = split_polyline(&e.geometry, &cuts);
        debug_assert_eq!(pieces.len(), count);
        let mut prev = e.a;
        for (k, geometry) in pieces.into_iter().enumerate() {
            let end = if k + 1 == count {
                e.b
            } else {
                let plane = *geometry.last().unwrap();
                let id = NodeId(next_node);
                next_node += 1;
                nodes.push(RoadNode {
                    id,
                    location: unproject(g.origin, plane),
                    plane,
                });
                id
            };
            edges.push(RoadEdge {
                id: EdgeId(next_edge),
                a: prev,
                b: end,
                length: piece_len,
                geometry,
                highway: e.highway.clone(),
            });
            next_edge += 1;
            prev = end;
        }
    }
    RoadGraph::new(g.origin, nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn osm_doc(nodes: &[(u64, f64, f64)], ways: &[(&[u64], &str)]) -> String {
        let mut s = String::from("<?xml version=\"1.0\"?>\n<osm version=\"0.6\">\n");
        for (id, lat, lon) in nodes {
            s += &format!("  <node id=\"{id}\" lat=\"{lat}\" lon=\"{lon}\"/>\n");
        }
        for (i, (refs, hw)) in ways.iter().enumerate() {
            s += &format!("  <way id=\"{}\">\n", 1000 + i);
            for r in refs.iter() {
                s += &format!("    <nd ref=\"{r}\"/>\n");
            }
            s += &format!("    <tag k=\"highway\" v=\"{hw}\"/>\n  </way>\n");
        }
        s + "</osm>\n"
    }

    fn straight_graph(length: f64) -> RoadGraph {
        let origin = GeoPoint::new(43.46, -3.8).unwrap();
        let a = PlanePoint::new(0.0, 0.0);
        let b = PlanePoint::new(length, 0.0);
        let nodes = vec![
            RoadNode { id: NodeId(1), location: unproject(origin, a), plane: a },
            RoadNode { id: NodeId(2), location: unproject(origin, b), plane: b },
        ];
        let edges = vec![RoadEdge {
            id: EdgeId(1),
            a: NodeId(1),
            b: NodeId(2),
            length,
            geometry: vec![a, b],
            highway: "footway".into(),
        }];
        RoadGraph::new(origin, nodes, edges).unwrap()
    }

    #[test]
    fn two_nodes_one_way() {
        let doc = osm_doc(&[(1, 43.46, -3.80), (2, 43.461, -3.80)], &[(&[1, 2], "residential")]);
        let g = ingest_roads(&doc, MapFormat::Osm).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        let len = g.edges()[0].length;
        assert!((len - 111.19492664455873).abs() < 1e-6, "{len}");
    }

    #[test]
    fn motorway_is_excluded() {
        let doc = osm_doc(
            &[(1, 43.46, -3.80), (2, 43.461, -3.80), (3, 43.462, -3.80)],
            &[(&[1, 2], "footway"), (&[2, 3], "motorway")],
        );
        let g = ingest_roads(&doc, MapFormat::Osm).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.node(NodeId(3)).is_none());
    }

    #[test]
    fn only_non_walkable_is_empty_map() {
        let doc = osm_doc(&[(1, 43.46, -3.80), (2, 43.461, -3.80)], &[(&[1, 2], "trunk")]);
        assert_eq!(ingest_roads(&doc, MapFormat::Osm).unwrap_err(), RoadError::EmptyMap);
    }

    #[test]
    fn four_way_crossing_has_degree_four() {
        let doc = osm_doc(
            &[
                (1, 43.460, -3.801),
                (2, 43.460, -3.800),
                (3, 43.460, -3.799),
                (4, 43.459, -3.800),
                (5, 43.461, -3.800),
            ],
            &[(&[1, 2, 3], "residential"), (&[4, 2, 5], "footway")],
        );
        let g = ingest_roads(&doc, MapFormat::Osm).unwrap();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.degree(NodeId(2)), Some(4));
        for id in [1, 3, 4, 5] {
            assert_eq!(g.degree(NodeId(id)), Some(1));
        }
    }

    #[test]
    fn interior_nodes_become_geometry() {
        let doc = osm_doc(
            &[(1, 43.460, -3.800), (2, 43.4605, -3.7995), (3, 43.461, -3.800)],
            &[(&[1, 2, 3], "path")],
        );
        let g = ingest_roads(&doc, MapFormat::Osm).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges()[0].geometry.len(), 3);
        let e = &g.edges()[0];
        assert!((e.length - polyline_length(&e.geometry)).abs() < 1e-9);
    }

    #[test]
    fn closed_way_has_no_self_loop() {
        let doc = osm_doc(
            &[(1, 43.460, -3.800), (2, 43.460, -3.799), (3, 43.461, -3.799), (4, 43.461, -3.800)],
            &[(&[1, 2, 3, 4, 1], "footway")],
        );
        let g = ingest_roads(&doc, MapFormat::Osm).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert!(g.edges().iter().all(|e| e.a != e.b));
    }

    #[test]
    fn malformed_xml_reports_position() {
        let doc = "<osm>\n  <node id=\"1\" lat=\"43.4\" lon=\"-3.8\">\n</osm>";
        match ingest_roads(doc, MapFormat::Osm) {
            Err(RoadError::Parse { line, .. }) => assert!(line >= 2),
            other => panic!("unexpected {other:?}"),
        }
        let doc = "<osm>\n<node id=\"1\" lat=\"abc\" lon=\"-3.8\"/>\n</osm>";
        match ingest_roads(doc, MapFormat::Osm) {
            Err(RoadError::Parse { line, context, .. }) => {
                assert_eq!(line, 2);
                assert!(context.contains("node"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn geojson_shared_vertex_joins_ways() {
        let doc = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"highway":"footway"},
             "geometry":{"type":"LineString","coordinates":[[-3.801,43.46],[-3.800,43.46],[-3.799,43.46]]}},
            {"type":"Feature","properties":{"highway":"residential"},
             "geometry":{"type":"LineString","coordinates":[[-3.800,43.459],[-3.800,43.46],[-3.800,43.461]]}},
            {"type":"Feature","properties":{"highway":"motorway"},
             "geometry":{"type":"LineString","coordinates":[[-3.700,43.46],[-3.69,43.46]]}}
        ]}"#;
        let g = ingest_roads(doc, MapFormat::Geojson).unwrap();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.edge_count(), 4);
        assert_eq!(g.nodes().iter().map(|n| g.degree(n.id).unwrap()).max(), Some(4));
    }

    #[test]
    fn geojson_errors() {
        assert!(matches!(ingest_roads("{\"type\": ", MapFormat::Geojson), Err(RoadError::Parse { .. })));
        assert!(matches!(
            ingest_roads(r#"{"type":"Feature"}"#, MapFormat::Geojson),
            Err(RoadError::Parse { .. })
        ));
        let empty = r#"{"type":"FeatureCollection","features":[]}"#;
        assert_eq!(ingest_roads(empty, MapFormat::Geojson).unwrap_err(), RoadError::EmptyMap);
    }

    #[test]
    fn ingestion_is_deterministic() {
        let doc = osm_doc(
            &[(5, 43.460, -3.801), (3, 43.460, -3.800), (9, 43.460, -3.799), (1, 43.459, -3.800)],
            &[(&[5, 3, 9], "residential"), (&[1, 3], "footway")],
        );
        let a = ingest_roads(&doc, MapFormat::Osm).unwrap();
        let b = ingest_roads(&doc, MapFormat::Osm).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn segment_450_into_three() {
        let g = segment_long_edges(&straight_graph(450.0), SegmentationConfig { l_th: 200.0 }).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.node_count(), 4);
        for e in g.edges() {
            assert!((e.length - 150.0).abs() < 1e-9);
            assert!((polyline_length(&e.geometry) - 150.0).abs() < 1e-9);
        }
        // synthetic nodes have degree 2, originals keep degree 1
        assert_eq!(g.degree(NodeId(1)), Some(1));
        assert_eq!(g.degree(NodeId(2)), Some(1));
        assert_eq!(g.degree(NodeId(3)), Some(2));
        assert_eq!(g.degree(NodeId(4)), Some(2));
    }

    #[test]
    fn segment_boundary_unchanged() {
        let orig = straight_graph(200.0);
        let g = segment_long_edges(&orig, SegmentationConfig { l_th: 200.0 }).unwrap();
        assert_eq!(g.edges(), orig.edges());
        assert_eq!(g.nodes(), orig.nodes());
    }

    #[test]
    fn segment_curved_edge_by_arc_length() {
        let origin = GeoPoint::new(43.46, -3.8).unwrap();
        let pts = [PlanePoint::new(0.0, 0.0), PlanePoint::new(300.0, 0.0), PlanePoint::new(300.0, 300.0)];
        let nodes = vec![
            RoadNode { id: NodeId(1), location: unproject(origin, pts[0]), plane: pts[0] },
            RoadNode { id: NodeId(2), location: unproject(origin, pts[2]), plane: pts[2] },
        ];
        let edges = vec![RoadEdge {
            id: EdgeId(1),
            a: NodeId(1),
            b: NodeId(2),
            length: 600.0,
            geometry: pts.to_vec(),
            highway: "path".into(),
        }];
        let g = RoadGraph::new(origin, nodes, edges).unwrap();
        let s = segment_long_edges(&g, SegmentationConfig { l_th: 250.0 }).unwrap();
        assert_eq!(s.edge_count(), 3);
        let mid = s.node(NodeId(3)).unwrap();
        assert!(mid.plane.distance(PlanePoint::new(200.0, 0.0)) < 1e-9);
        let corner_piece = &s.edges()[1];
        assert_eq!(corner_piece.geometry.len(), 3);
        assert!((polyline_length(&corner_piece.geometry) - 200.0).abs() < 1e-9);
    }

    #[test]
    fn segment_rejects_bad_threshold() {
        assert!(segment_long_edges(&straight_graph(10.0), SegmentationConfig { l_th: 0.0 }).is_err());
    }

    #[test]
    fn nearest_node_examples() {
        let g = straight_graph(100.0);
        assert_eq!(g.nearest_node(PlanePoint::new(100.0, 0.0)).id, NodeId(2));
        // equidistant: smallest id wins
        assert_eq!(g.nearest_node(PlanePoint::new(50.0, 10.0)).id, NodeId(1));
        assert_eq!(g.nearest_node(PlanePoint::new(51.0, 10.0)).id, NodeId(2));
    }

    #[test]
    fn components_flag_debris() {
        let doc = osm_doc(
            &[(1, 43.460, -3.800), (2, 43.461, -3.800), (3, 43.462, -3.800), (7, 43.47, -3.7), (8, 43.471, -3.7)],
            &[(&[1, 2, 3], "residential"), (&[7, 8], "footway")],
        );
        let g = ingest_roads(&doc, MapFormat::Osm).unwrap();
        assert_eq!(g.component_count(), 2);
        let main = g.main_component();
        assert_eq!(g.component_of(g.node_idx(NodeId(1)).unwrap()), main);
        assert_ne!(g.component_of(g.node_idx(NodeId(7)).unwrap()), main);
        let fc = g.to_geojson();
        assert_eq!(fc["features"].as_array().unwrap().len(), 2 + 4);
    }
}
