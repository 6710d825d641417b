//! Per-edge safety weights from community footprints and nearby friends.
//!
//! Each CLOR community becomes a footprint: the convex hull of its members
//! dilated by `rho`. An edge's CLOR term averages the normalised densities of
//! the footprints it touches; its SFOR term averages the relation strength of
//! the ego device's friends standing within `d_th` of it.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::community::Partition;
use crate::geo::{footprint_polygon, point_polyline_distance, polygon_area, polyline_intersects_polygon, unproject};
use crate::geo::{Bounds, GeoError, GeoPoint, PlanePoint, SimplePolygon};
use crate::roadnet::{EdgeId, RoadEdge, RoadGraph};
use crate::round6;
use crate::siot::{SiotError, SocialGraph};

pub const DEFAULT_RHO: f64 = 20.0;
pub const DEFAULT_D_TH: f64 = 50.0;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DENSITY_CLASSES: u8 = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },
    #[error("expected {expected} per-edge values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Siot(#[from] SiotError),
}

/// How the CLOR term combines the footprints an edge touches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClorAggregation {
    /// Mean normalised density; stays in [0, 1].
    #[default]
    Mean,
    /// Sum of normalised densities; grows with the number of footprints crossed.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    /// Footprint dilation, meters.
    pub rho: f64,
    /// Friend proximity threshold, meters.
    pub d_th: f64,
    pub alpha: f64,
    #[serde(default)]
    pub clor_aggregation: ClorAggregation,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig {
            rho: DEFAULT_RHO,
            d_th: DEFAULT_D_TH,
            alpha: DEFAULT_ALPHA,
            clor_aggregation: ClorAggregation::Mean,
        }
    }
}

pub fn check_alpha(alpha: f64) -> Result<(), RiskError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(RiskError::InvalidParameter {
            name: "alpha",
            message: format!("{alpha} is outside [0, 1]"),
        })
    }
}

pub fn check_rho(rho: f64) -> Result<(), RiskError> {
    if rho >= 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(RiskError::InvalidParameter {
            name: "rho",
            message: format!("{rho} must be a finite value >= 0"),
        })
    }
}

pub fn check_d_th(d_th: f64) -> Result<(), RiskError> {
    if d_th > 0.0 && d_th.is_finite() {
        Ok(())
    } else {
        Err(RiskError::InvalidParameter {
            name: "d_th",
            message: format!("{d_th} must be positive"),
        })
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<(), RiskError> {
        check_rho(self.rho)?;
        check_d_th(self.d_th)?;
        check_alpha(self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityFootprint {
    pub community: usize,
    pub polygon: SimplePolygon,
    pub member_count: usize,
    /// Square meters.
    pub area: f64,
    /// Devices per square kilometer.
    pub density: f64,
    /// 1 (sparsest) to 5 (densest).
    pub density_class: u8,
}

/// One footprint per community of `partition`, classified by density.
/// `positions` is indexed like the partition.
pub fn build_footprints(
    partition: &Partition,
    positions: &[PlanePoint],
    rho: f64,
) -> Result<Vec<CommunityFootprint>, RiskError> {
    check_rho(rho)?;
    if partition.len() != positions.len() {
        return Err(RiskError::LengthMismatch {
            expected: partition.len(),
            got: positions.len(),
        });
    }
    let mut out = Vec::with_capacity(partition.count());
    for (community, members) in partition.groups().into_iter().enumerate() {
        let pts: Vec<PlanePoint> = members.iter().map(|&i| positions[i]).collect();
        let polygon = footprint_polygon(&pts, rho)?;
        let area = polygon_area(&polygon)?;
        out.push(CommunityFootprint {
            community,
            member_count: members.len(),
            density: members.len() as f64 / (area / 1e6),
            area,
            polygon,
            density_class: 0,
        });
    }
    classify_density(&mut out);
    Ok(out)
}

/// Quintile classes: a footprint's class is `1 + ⌊5·r/n⌋` where `r` counts
/// footprints with strictly lower density, so ties share the lower class.
pub fn classify_density(footprints: &mut [CommunityFootprint]) {
    let n = footprints.len();
    let mut sorted: Vec<f64> = footprints.iter().map(|f| f.density).collect();
    sorted.sort_by(f64::total_cmp);
    for f in footprints.iter_mut() {
        let below = sorted.partition_point(|&d| d < f.density);
        f.density_class = 1 + (DENSITY_CLASSES as usize * below / n) as u8;
    }
}

/// Footprints prepared for repeated edge queries.
#[derive(Debug, Clone)]
pub struct FootprintIndex<'a> {
    footprints: &'a [CommunityFootprint],
    bounds: Vec<Bounds>,
    max_density: f64,
    aggregation: ClorAggregation,
}

impl<'a> FootprintIndex<'a> {
    pub fn new(footprints: &'a [CommunityFootprint]) -> Self {
        FootprintIndex {
            bounds: footprints.iter().map(|f| f.polygon.bounds()).collect(),
            max_density: footprints.iter().map(|f| f.density).fold(0.0, f64::max),
            footprints,
            aggregation: ClorAggregation::Mean,
        }
    }

    pub fn with_aggregation(mut self, aggregation: ClorAggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    /// Communities whose footprint meets the polyline.
    pub fn touching(&self, line: &[PlanePoint]) -> Vec<usize> {
        let Some(lb) = Bounds::of(line) else {
            return Vec::new();
        };
        self.footprints
            .iter()
            .zip(&self.bounds)
            .filter(|(f, b)| b.intersects(&lb) && polyline_intersects_polygon(line, &f.polygon))
            .map(|(f, _)| f.community)
            .collect()
    }

    /// Mean (or sum) of the normalised densities of touching footprints; 0 if none.
    pub fn clor_weight(&self, line: &[PlanePoint]) -> f64 {
        let hits = self.touching(line);
        if hits.is_empty() || self.max_density <= 0.0 {
            return 0.0;
        }
        let sum: f64 = hits
            .iter()
            .map(|&c| self.footprints[c].density / self.max_density)
            .sum();
        match self.aggregation {
            ClorAggregation::Mean => sum / hits.len() as f64,
            ClorAggregation::Sum => sum,
        }
    }
}

pub fn clor_edge_weight(edge: &RoadEdge, footprints: &[CommunityFootprint]) -> f64 {
    FootprintIndex::new(footprints).clor_weight(&edge.geometry)
}

/// A device related to the ego device, with its position and relation weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SforContact {
    pub device: usize,
    pub position: PlanePoint,
    pub weight: f64,
}

/// Devices in the ego device's SFOR community that share an SFOR edge with it.
pub fn sfor_contacts(
    sfor: &SocialGraph,
    partition: &Partition,
    u_star: &str,
    positions: &[PlanePoint],
) -> Result<Vec<SforContact>, RiskError> {
    let ego = sfor
        .index_of(u_star)
        .ok_or_else(|| SiotError::UnknownDevice(u_star.to_string()))?;
    if positions.len() != sfor.node_count() || partition.len() != sfor.node_count() {
        return Err(RiskError::LengthMismatch {
            expected: sfor.node_count(),
            got: positions.len().min(partition.len()),
        });
    }
    let c = partition.community_of(ego);
    Ok(sfor
        .neighbors(ego)
        .iter()
        .filter(|&&(v, _)| partition.community_of(v) == c)
        .map(|&(v, w)| SforContact {
            device: v,
            position: positions[v],
            weight: w,
        })
        .collect())
}

/// Mean relation weight of contacts within `d_th` of the polyline; 0 if none.
pub fn sfor_weight(line: &[PlanePoint], contacts: &[SforContact], d_th: f64) -> f64 {
    let Some(lb) = Bounds::of(line) else {
        return 0.0;
    };
    let reach = lb.expanded(d_th);
    let (mut sum, mut count) = (0.0, 0usize);
    for c in contacts {
        if reach.contains(c.position) && point_polyline_distance(c.position, line) <= d_th {
            sum += c.weight;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub fn sfor_edge_weight(
    edge: &RoadEdge,
    u_star: &str,
    sfor: &SocialGraph,
    partition: &Partition,
    positions: &[PlanePoint],
    d_th: f64,
) -> Result<f64, RiskError> {
    check_d_th(d_th)?;
    let contacts = sfor_contacts(sfor, partition, u_star, positions)?;
    Ok(sfor_weight(&edge.geometry, &contacts, d_th))
}

/// CLOR term for every edge of `graph`, in edge order.
pub fn clor_weights(graph: &RoadGraph, footprints: &[CommunityFootprint], aggregation: ClorAggregation) -> Vec<f64> {
    let index = FootprintIndex::new(footprints).with_aggregation(aggregation);
    graph.edges().iter().map(|e| index.clor_weight(&e.geometry)).collect()
}

/// SFOR term for every edge of `graph`, in edge order.
pub fn sfor_weights(graph: &RoadGraph, contacts: &[SforContact], d_th: f64) -> Result<Vec<f64>, RiskError> {
    check_d_th(d_th)?;
    Ok(graph.edges().iter().map(|e| sfor_weight(&e.geometry, contacts, d_th)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeight {
    pub edge: EdgeId,
    pub w_dist: f64,
    pub w_clor: f64,
    pub w_sfor: f64,
    pub w_sft: f64,
    pub w_total: f64,
}

/// Weights for every edge of a graph, aligned with `RoadGraph::edges()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeights {
    pub alpha: f64,
    pub rows: Vec<EdgeWeight>,
}

impl EdgeWeights {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("edge_id,w_dist,w_clor,w_sfor,w_sft,w_total\n");
        for r in &self.rows {
            s += &format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.edge, r.w_dist, r.w_clor, r.w_sfor, r.w_sft, r.w_total
            );
        }
        s
    }
}

/// Combines the per-edge terms: `w_dist = length / max length`,
/// `w_sft = w_clor + w_sfor`, `w_total = (1 − α)·w_dist + α·w_sft`.
pub fn compose_weights(graph: &RoadGraph, alpha: f64, clor_w: &[f64], sfor_w: &[f64]) -> Result<EdgeWeights, RiskError> {
    check_alpha(alpha)?;
    for got in [clor_w.len(), sfor_w.len()] {
        if got != graph.edge_count() {
            return Err(RiskError::LengthMismatch {
                expected: graph.edge_count(),
                got,
            });
        }
    }
    let max_len = graph.max_edge_length();
    let rows = graph
        .edges()
        .iter()
        .zip(clor_w.iter().zip(sfor_w))
        .map(|(e, (&w_clor, &w_sfor))| {
            let w_dist = e.length / max_len;
            let w_sft = w_clor + w_sfor;
            EdgeWeight {
                edge: e.id,
                w_dist,
                w_clor,
                w_sfor,
                w_sft,
                w_total: (1.0 - alpha) * w_dist + alpha * w_sft,
            }
        })
        .collect();
    Ok(EdgeWeights { alpha, rows })
}

/// Footprints as a GeoJSON FeatureCollection of polygons.
pub fn footprints_geojson(footprints: &[CommunityFootprint], origin: GeoPoint) -> Value {
    let features: Vec<Value> = footprints
        .iter()
        .map(|f| {
            let mut ring: Vec<Value> = f
                .polygon
                .vertices()
                .iter()
                .map(|q| {
                    let g = unproject(origin, *q);
                    json!([round6(g.lon), round6(g.lat)])
                })
                .collect();
            ring.push(ring[0].clone());
            json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {
                    "community": f.community,
                    "member_count": f.member_count,
                    "area_m2": round6(f.area),
                    "density_per_km2": round6(f.density),
                    "density_class": f.density_class,
                },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}
