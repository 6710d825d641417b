//! Time-slotted scenarios: device mobility, per-slot snapshots, dynamic
//! re-routing of a walking pedestrian, and alpha/rho sweeps.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::community::{louvain, Partition};
use crate::geo::{project, unproject, Bounds, GeoPoint, PlanePoint};
use crate::riskmap::{self, check_alpha, check_d_th, check_rho, ClorAggregation, CommunityFootprint, EdgeWeights, DEFAULT_D_TH, DEFAULT_RHO};
use crate::roadnet::{ingest_roads, segment_long_edges, MapFormat, NodeId, RoadGraph, SegmentationConfig, DEFAULT_L_TH};
use crate::router::{dijkstra, Route, RouteRequest};
use crate::siot::{
    build_clor, build_sfor, filter_personal, generate_owner_network, load_devices, project_devices, Device, OwnerNetwork,
    RowError, SforWeightRule, SocialGraph, DEFAULT_D_CLOR, DEFAULT_WS_BETA, DEFAULT_WS_K,
};
use crate::{round6, Error};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SLOT_SECONDS: f64 = 60.0;
pub const DEFAULT_WALKING_SPEED: f64 = 1.4;
pub const DEFAULT_MIN_SPEED: f64 = 0.5;
pub const DEFAULT_MAX_SPEED: f64 = 1.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilityConfig {
    pub min_speed: f64,
    pub max_speed: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            min_speed: DEFAULT_MIN_SPEED,
            max_speed: DEFAULT_MAX_SPEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Segmentation threshold, meters.
    pub l_th: f64,
    /// CLOR cutoff, meters.
    pub d_clor: f64,
    pub ws_k: usize,
    pub ws_beta: f64,
    pub sfor: SforWeightRule,
    pub rho: f64,
    pub d_th: f64,
    /// Seconds per slot.
    pub slot_duration: f64,
    /// Pedestrian speed, meters per second.
    pub walking_speed: f64,
    pub mobility: MobilityConfig,
    /// Keep only private, mobile, person-carried devices.
    pub personal_only: bool,
    pub clor_aggregation: ClorAggregation,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            l_th: DEFAULT_L_TH,
            d_clor: DEFAULT_D_CLOR,
            ws_k: DEFAULT_WS_K,
            ws_beta: DEFAULT_WS_BETA,
            sfor: SforWeightRule::default(),
            rho: DEFAULT_RHO,
            d_th: DEFAULT_D_TH,
            slot_duration: DEFAULT_SLOT_SECONDS,
            walking_speed: DEFAULT_WALKING_SPEED,
            mobility: MobilityConfig::default(),
            personal_only: true,
            clor_aggregation: ClorAggregation::Mean,
        }
    }
}

fn invalid(name: &'static str, message: String) -> Error {
    Error::InvalidParameter { name, message }
}

fn positive(name: &'static str, v: f64) -> Result<(), Error> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} must be positive")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), Error> {
        positive("l_th", self.l_th)?;
        positive("d_clor", self.d_clor)?;
        positive("slot_duration", self.slot_duration)?;
        positive("walking_speed", self.walking_speed)?;
        positive("min_speed", self.mobility.min_speed)?;
        if !(self.mobility.max_speed >= self.mobility.min_speed && self.mobility.max_speed.is_finite()) {
            return Err(invalid("max_speed", format!("{} is below min_speed", self.mobility.max_speed)));
        }
        if !(0.0..=1.0).contains(&self.ws_beta) {
            return Err(invalid("ws_beta", format!("{} is outside [0, 1]", self.ws_beta)));
        }
        if self.ws_k < 2 || !self.ws_k.is_multiple_of(2) {
            return Err(invalid("ws_k", format!("{} must be an even integer >= 2", self.ws_k)));
        }
        self.sfor.validate()?;
        check_rho(self.rho)?;
        check_d_th(self.d_th)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapInput {
    /// Detected from the content when absent.
    #[serde(default)]
    pub format: Option<MapFormat>,
    pub content: String,
}

/// Everything needed to rebuild a scenario; with a seed it fixes every slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInputs {
    pub map: MapInput,
    pub devices_csv: String,
    /// Owner friendship edge list; a Watts–Strogatz network is generated when absent.
    #[serde(default)]
    pub owner_edges: Option<String>,
    #[serde(default)]
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub road_nodes: usize,
    pub road_edges: usize,
    pub road_components: usize,
    pub main_component_nodes: usize,
    pub devices_total: usize,
    pub devices_kept: usize,
    pub devices_filtered: usize,
    pub rows_rejected: Vec<RowError>,
    pub owners: usize,
    pub owner_edges: usize,
    /// Watts–Strogatz neighbour count actually used (None for imported networks).
    pub ws_k: Option<usize>,
}

/// Device motion between slots.
#[derive(Debug, Clone, PartialEq)]
pub enum Mobility {
    /// Mobile devices walk toward uniform random waypoints inside the map bounds.
    RandomWaypoint,
    /// Positions given per slot; the last frame holds once the script runs out.
    Scripted(Vec<Vec<PlanePoint>>),
}

/// Per-device waypoint state for the random-waypoint model.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityState {
    pub targets: Vec<PlanePoint>,
    /// Meters per second; zero for static devices.
    pub speeds: Vec<f64>,
    rng: ChaCha8Rng,
}

/// World state for one slot. Immutable apart from its weight caches.
#[derive(Debug)]
pub struct Snapshot {
    pub slot: usize,
    pub positions: Vec<PlanePoint>,
    pub mobility: MobilityState,
    pub clor: SocialGraph,
    pub clor_partition: Partition,
    /// Footprints at the scenario's configured `rho`.
    pub footprints: Vec<CommunityFootprint>,
    clor_cache: Mutex<HashMap<u64, Arc<Vec<f64>>>>,
    sfor_cache: Mutex<HashMap<SforKey, Arc<Vec<f64>>>>,
}

/// Ego device id and the bit pattern of `d_th`.
type SforKey = (String, u64);

impl Snapshot {
    pub fn id(&self) -> String {
        format!("slot-{}", self.slot)
    }
}

/// Outcome of a routing request against one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteOutcome {
    pub route: Route,
    pub snapshot_id: String,
    pub weights_version: String,
}

/// Mixes a tag into the seed so that each random stream is independent.
fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_CLOR: u64 = 1;
const TAG_SFOR: u64 = 2;
const TAG_MOBILITY: u64 = 3;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub graph: RoadGraph,
    pub devices: Vec<Device>,
    pub owners: OwnerNetwork,
    pub sfor: SocialGraph,
    pub sfor_partition: Partition,
    pub mobility: Mobility,
    initial_positions: Vec<PlanePoint>,
    bounds: Bounds,
}

impl Scenario {
    /// Parses, filters and assembles a scenario from its raw inputs.
    pub fn from_inputs(inputs: &ScenarioInputs, seed: u64) -> Result<(Scenario, IngestReport), Error> {
        let config = inputs.config;
        config.validate()?;
        let format = match inputs.map.format {
            Some(f) => f,
            None => MapFormat::detect(&inputs.map.content)
                .ok_or_else(|| invalid("map", "cannot tell OSM XML from GeoJSON".into()))?,
        };
        let raw = ingest_roads(&inputs.map.content, format)?;
        let load = load_devices(inputs.devices_csv.as_bytes())?;
        let devices_total = load.devices.len();
        let devices = if config.personal_only {
            filter_personal(&load.devices)
        } else {
            load.devices
        };
        if devices.is_empty() {
            return Err(invalid("devices", "no devices left after filtering".into()));
        }
        let mut owner_ids: Vec<String> = devices.iter().map(|d| d.owner_id.clone()).collect();
        let (owners, ws_k) = match &inputs.owner_edges {
            Some(text) => {
                let pairs = OwnerNetwork::parse_edge_list(text)?;
                owner_ids.extend(pairs.iter().flat_map(|(a, b)| [a.clone(), b.clone()]));
                (OwnerNetwork::from_edges(&owner_ids, &pairs)?, None)
            }
            None => {
                owner_ids.sort();
                owner_ids.dedup();
                // small populations cannot host k neighbours each
                let n = owner_ids.len();
                let k = config.ws_k.min(n.saturating_sub(1) & !1);
                if k >= 2 {
                    (generate_owner_network(&owner_ids, k, config.ws_beta, seed)?, Some(k))
                } else {
                    (OwnerNetwork::from_edges(&owner_ids, &[])?, Some(0))
                }
            }
        };
        let scenario = Scenario::new(&raw, devices, owners, config, seed)?;
        let main = scenario.graph.main_component();
        let report = IngestReport {
            road_nodes: scenario.graph.node_count(),
            road_edges: scenario.graph.edge_count(),
            road_components: scenario.graph.component_count(),
            main_component_nodes: (0..scenario.graph.node_count())
                .filter(|&i| scenario.graph.component_of(i) == main)
                .count(),
            devices_total,
            devices_kept: scenario.devices.len(),
            devices_filtered: devices_total - scenario.devices.len(),
            rows_rejected: load.rejected,
            owners: scenario.owners.len(),
            owner_edges: scenario.owners.edge_count(),
            ws_k,
        };
        Ok((scenario, report))
    }

    /// Builds a scenario from parsed parts. The road graph is segmented with
    /// the configured threshold; devices are projected with its origin.
    pub fn new(
        roads: &RoadGraph,
        devices: Vec<Device>,
        owners: OwnerNetwork,
        config: ScenarioConfig,
        seed: u64,
    ) -> Result<Scenario, Error> {
        config.validate()?;
        if devices.is_empty() {
            return Err(invalid("devices", "scenario needs at least one device".into()));
        }
        let graph = segment_long_edges(roads, SegmentationConfig { l_th: config.l_th })?;
        let initial_positions = project_devices(graph.origin(), &devices)?;
        let sfor = build_sfor(&devices, &owners, &config.sfor)?;
        let sfor_partition = louvain(&sfor, derive_seed(seed, TAG_SFOR))?;
        let bounds = graph.bounds();
        Ok(Scenario {
            config,
            seed,
            graph,
            devices,
            owners,
            sfor,
            sfor_partition,
            mobility: Mobility::RandomWaypoint,
            initial_positions,
            bounds,
        })
    }

    /// Replaces random-waypoint motion with fixed per-slot positions.
    pub fn with_script(mut self, frames: Vec<Vec<PlanePoint>>) -> Result<Scenario, Error> {
        if frames.is_empty() || frames.iter().any(|f| f.len() != self.devices.len()) {
            return Err(invalid("script", "every frame needs one position per device".into()));
        }
        self.mobility = Mobility::Scripted(frames);
        Ok(self)
    }

    pub fn device_index(&self, id: &str) -> Option<usize> {
        self.sfor.index_of(id)
    }

    pub fn project(&self, p: GeoPoint) -> Result<PlanePoint, Error> {
        Ok(project(self.graph.origin(), p)?)
    }

    fn build_snapshot(&self, slot: usize, positions: Vec<PlanePoint>, mobility: MobilityState) -> Result<Snapshot, Error> {
        let ids: Vec<String> = self.devices.iter().map(|d| d.id.clone()).collect();
        let clor = build_clor(&ids, &positions, self.config.d_clor)?;
        // a fixed seed per scenario keeps an unchanged world unchanged
        let clor_partition = louvain(&clor, derive_seed(self.seed, TAG_CLOR))?;
        let footprints = riskmap::build_footprints(&clor_partition, &positions, self.config.rho)?;
        Ok(Snapshot {
            slot,
            positions,
            mobility,
            clor,
            clor_partition,
            footprints,
            clor_cache: Mutex::new(HashMap::new()),
            sfor_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn initial_snapshot(&self) -> Result<Snapshot, Error> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, TAG_MOBILITY));
        let n = self.devices.len();
        let mut speeds = vec![0.0; n];
        let mut targets = self.initial_positions.clone();
        for (i, d) in self.devices.iter().enumerate() {
            if d.mobile {
                speeds[i] = rng.gen_range(self.config.mobility.min_speed..=self.config.mobility.max_speed);
                targets[i] = self.random_point(&mut rng);
            }
        }
        let positions = match &self.mobility {
            Mobility::RandomWaypoint => self.initial_positions.clone(),
            Mobility::Scripted(frames) => frames[0].clone(),
        };
        self.build_snapshot(0, positions, MobilityState { targets, speeds, rng })
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> PlanePoint {
        let b = &self.bounds;
        let x = if b.width() > 0.0 { rng.gen_range(b.min_x..=b.max_x) } else { b.min_x };
        let y = if b.height() > 0.0 { rng.gen_range(b.min_y..=b.max_y) } else { b.min_y };
        PlanePoint::new(x, y)
    }

    /// Advances the world one slot and rebuilds CLOR communities and footprints.
    /// SFOR relations and communities stay fixed; only positions refresh.
    pub fn step(&self, snap: &Snapshot) -> Result<Snapshot, Error> {
        let slot = snap.slot + 1;
        let mut mobility = snap.mobility.clone();
        let positions = match &self.mobility {
            Mobility::Scripted(frames) => frames[slot.min(frames.len() - 1)].clone(),
            Mobility::RandomWaypoint => {
                let mut positions = snap.positions.clone();
                for (i, d) in self.devices.iter().enumerate() {
                    if !d.mobile {
                        continue;
                    }
                    let budget = mobility.speeds[i] * self.config.slot_duration;
                    let to_target = positions[i].distance(mobility.targets[i]);
                    if budget >= to_target {
                        positions[i] = mobility.targets[i];
                        mobility.targets[i] = self.random_point(&mut mobility.rng);
                    } else {
                        positions[i] = positions[i].lerp(mobility.targets[i], budget / to_target);
                    }
                }
                positions
            }
        };
        self.build_snapshot(slot, positions, mobility)
    }

    /// Footprints of the snapshot's CLOR communities dilated by `rho`.
    pub fn footprints(&self, snap: &Snapshot, rho: f64) -> Result<Vec<CommunityFootprint>, Error> {
        if rho == self.config.rho {
            return Ok(snap.footprints.clone());
        }
        Ok(riskmap::build_footprints(&snap.clor_partition, &snap.positions, rho)?)
    }

    pub fn clor_weights(&self, snap: &Snapshot, rho: f64) -> Result<Arc<Vec<f64>>, Error> {
        check_rho(rho)?;
        if let Some(w) = snap.clor_cache.lock().expect("cache lock").get(&rho.to_bits()) {
            return Ok(w.clone());
        }
        let w = if rho == self.config.rho {
            riskmap::clor_weights(&self.graph, &snap.footprints, self.config.clor_aggregation)
        } else {
            riskmap::clor_weights(&self.graph, &self.footprints(snap, rho)?, self.config.clor_aggregation)
        };
        let w = Arc::new(w);
        snap.clor_cache.lock().expect("cache lock").insert(rho.to_bits(), w.clone());
        Ok(w)
    }

    pub fn sfor_weights(&self, snap: &Snapshot, ego: &str, d_th: f64) -> Result<Arc<Vec<f64>>, Error> {
        check_d_th(d_th)?;
        let key = (ego.to_string(), d_th.to_bits());
        if let Some(w) = snap.sfor_cache.lock().expect("cache lock").get(&key) {
            return Ok(w.clone());
        }
        let contacts = riskmap::sfor_contacts(&self.sfor, &self.sfor_partition, ego, &snap.positions)?;
        let w = Arc::new(riskmap::sfor_weights(&self.graph, &contacts, d_th)?);
        snap.sfor_cache.lock().expect("cache lock").insert(key, w.clone());
        Ok(w)
    }

    pub fn weights(&self, snap: &Snapshot, ego: &str, alpha: f64, rho: f64, d_th: f64) -> Result<EdgeWeights, Error> {
        check_alpha(alpha)?;
        let clor = self.clor_weights(snap, rho)?;
        let sfor = self.sfor_weights(snap, ego, d_th)?;
        Ok(riskmap::compose_weights(&self.graph, alpha, &clor, &sfor)?)
    }

    /// Routes with the scenario's `rho` and `d_th`.
    pub fn route(&self, snap: &Snapshot, req: &RouteRequest) -> Result<RouteOutcome, Error> {
        self.route_with(snap, req, self.config.rho, self.config.d_th)
    }

    pub fn route_with(&self, snap: &Snapshot, req: &RouteRequest, rho: f64, d_th: f64) -> Result<RouteOutcome, Error> {
        let weights = self.weights(snap, &req.ego_device, req.alpha, rho, d_th)?;
        let from = self.graph.nearest_node(self.project(req.origin)?).id;
        let to = self.graph.nearest_node(self.project(req.destination)?).id;
        let route = dijkstra(&self.graph, &weights, from, to)?;
        Ok(RouteOutcome {
            route,
            snapshot_id: snap.id(),
            weights_version: weights_version(snap, &req.ego_device, req.alpha, rho, d_th),
        })
    }

    /// Static routes for every `(alpha, rho)` pair against one snapshot.
    pub fn alpha_sweep(&self, snap: &Snapshot, req: &RouteRequest, alphas: &[f64], rhos: &[f64]) -> Result<SweepTable, Error> {
        if alphas.is_empty() {
            return Err(invalid("alphas", "at least one alpha is required".into()));
        }
        if rhos.is_empty() {
            return Err(invalid("rhos", "at least one rho is required".into()));
        }
        for &a in alphas {
            check_alpha(a)?;
        }
        if alphas.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("alphas", "values must be sorted ascending".into()));
        }
        for &r in rhos {
            check_rho(r)?;
        }
        let from = self.graph.nearest_node(self.project(req.origin)?).id;
        let to = self.graph.nearest_node(self.project(req.destination)?).id;
        let mut rows = Vec::with_capacity(alphas.len() * rhos.len());
        for &rho in rhos {
            for &alpha in alphas {
                let w = self.weights(snap, &req.ego_device, alpha, rho, self.config.d_th)?;
                let route = dijkstra(&self.graph, &w, from, to)?;
                rows.push(SweepRow {
                    alpha,
                    rho,
                    distance_m: route.travel_distance,
                    safety_score: route.safety_score,
                });
            }
        }
        Ok(SweepTable { rows })
    }

    /// Walks a pedestrian from `req.origin` to `req.destination`, re-routing
    /// every slot against the current snapshot while the world moves.
    ///
    /// A pedestrian caught mid-edge finishes that edge first: the new route
    /// starts at the node ahead, which keeps every step on the announced path.
    pub fn run_dynamic_route(&self, req: &RouteRequest, max_slots: usize) -> Result<DynamicRouteLog, Error> {
        if max_slots < 1 {
            return Err(invalid("slots", "at least one slot is required".into()));
        }
        check_alpha(req.alpha)?;
        if self.device_index(&req.ego_device).is_none() {
            return Err(crate::siot::SiotError::UnknownDevice(req.ego_device.clone()).into());
        }
        let start = self.graph.nearest_node(self.project(req.origin)?);
        let dest = self.graph.nearest_node(self.project(req.destination)?).id;
        let budget = self.config.walking_speed * self.config.slot_duration;
        let mut ped = Pedestrian {
            position: start.plane,
            node_ahead: start.id,
            approach: vec![start.plane],
        };
        let mut log = DynamicRouteLog::default();
        let mut snap = self.initial_snapshot()?;
        for slot in 0..max_slots {
            if ped.at_node() && ped.node_ahead == dest {
                log.arrival_slot = Some(slot);
                break;
            }
            let weights = self.weights(&snap, &req.ego_device, req.alpha, self.config.rho, self.config.d_th)?;
            let mut record = SlotRecord {
                slot,
                snapshot_id: snap.id(),
                position: ped.position,
                from_node: ped.node_ahead,
                route: None,
                error: None,
                planned_path: Vec::new(),
            };
            match dijkstra(&self.graph, &weights, ped.node_ahead, dest) {
                Ok(route) => {
                    let legs = ped.legs(&self.graph, &route);
                    record.planned_path = legs.iter().flat_map(|l| l.points.iter().copied()).collect();
                    record.planned_path.dedup();
                    ped.walk(&legs, budget);
                    record.route = Some(route);
                }
                Err(e) => record.error = Some(e.to_string()),
            }
            log.records.push(record);
            if ped.at_node() && ped.node_ahead == dest {
                log.arrival_slot = Some(slot + 1);
                break;
            }
            if slot + 1 < max_slots {
                snap = self.step(&snap)?;
            }
        }
        Ok(log)
    }

    /// Device positions, community labels, roads and footprints for one slot.
    pub fn state_view(&self, snap: &Snapshot) -> Value {
        let origin = self.graph.origin();
        let devices: Vec<Value> = self
            .devices
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let g = unproject(origin, snap.positions[i]);
                json!({
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [round6(g.lon), round6(g.lat)]},
                    "properties": {
                        "id": d.id,
                        "owner_id": d.owner_id,
                        "device_class": d.device_class.as_str(),
                        "clor_community": snap.clor_partition.community_of(i),
                        "sfor_community": self.sfor_partition.community_of(i),
                    },
                })
            })
            .collect();
        json!({
            "snapshot_id": snap.id(),
            "slot": snap.slot,
            "seed": self.seed,
            "clor_community_count": snap.clor_partition.count(),
            "sfor_community_count": self.sfor_partition.count(),
            "roads": self.graph.to_geojson(),
            "devices": {"type": "FeatureCollection", "features": devices},
            "footprints": riskmap::footprints_geojson(&snap.footprints, origin),
        })
    }
}

fn weights_version(snap: &Snapshot, ego: &str, alpha: f64, rho: f64, d_th: f64) -> String {
    format!("{}:ego={}:alpha={}:rho={}:d_th={}", snap.id(), ego, alpha, rho, d_th)
}

/// A stretch of polyline ending at a road node.
struct Leg {
    points: Vec<PlanePoint>,
    end: NodeId,
}

struct Pedestrian {
    position: PlanePoint,
    node_ahead: NodeId,
    /// Remaining polyline from `position` to `node_ahead`.
    approach: Vec<PlanePoint>,
}

impl Pedestrian {
    fn at_node(&self) -> bool {
        self.approach.len() < 2
    }

    fn legs(&self, graph: &RoadGraph, route: &Route) -> Vec<Leg> {
        let mut legs = Vec::with_capacity(route.edge_path.len() + 1);
        if !self.at_node() {
            legs.push(Leg {
                points: self.approach.clone(),
                end: self.node_ahead,
            });
        }
        for (k, eid) in route.edge_path.iter().enumerate() {
            let e = graph.edge(*eid).expect("route edge in graph");
            let mut points = e.geometry.clone();
            if e.a != route.node_path[k] {
                points.reverse();
            }
            legs.push(Leg {
                points,
                end: route.node_path[k + 1],
            });
        }
        legs
    }

    fn walk(&mut self, legs: &[Leg], mut budget: f64) {
        for leg in legs {
            let len = crate::roadnet::polyline_length(&leg.points);
            if budget >= len {
                budget -= len;
                self.position = *leg.points.last().expect("non-empty leg");
                self.node_ahead = leg.end;
                self.approach = vec![self.position];
                continue;
            }
            let (point, rest) = cut_polyline(&leg.points, budget);
            self.position = point;
            self.node_ahead = leg.end;
            self.approach = rest;
            return;
        }
    }
}

/// Point at arc length `at` and the remaining polyline from it.
fn cut_polyline(line: &[PlanePoint], at: f64) -> (PlanePoint, Vec<PlanePoint>) {
    let mut acc = 0.0;
    for (i, w) in line.windows(2).enumerate() {
        let seg = w[0].distance(w[1]);
        if acc + seg > at && seg > 0.0 {
            let p = w[0].lerp(w[1], (at - acc) / seg);
            let mut rest = vec![p];
            rest.extend_from_slice(&line[i + 1..]);
            return (p, rest);
        }
        acc += seg;
    }
    let last = *line.last().expect("non-empty polyline");
    (last, vec![last])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub snapshot_id: String,
    /// Pedestrian position when the route was computed.
    pub position: PlanePoint,
    /// Node the route starts from (the pedestrian's node, or the next one ahead).
    pub from_node: NodeId,
    pub route: Option<Route>,
    pub error: Option<String>,
    /// Full polyline the pedestrian will follow from `position`.
    pub planned_path: Vec<PlanePoint>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DynamicRouteLog {
    pub records: Vec<SlotRecord>,
    /// Slot at whose start the pedestrian stood on the destination node.
    pub arrival_slot: Option<usize>,
}

impl DynamicRouteLog {
    /// One JSON object per slot.
    pub fn to_ndjson(&self, graph: &RoadGraph, alpha: f64) -> String {
        let origin = graph.origin();
        let mut out = String::new();
        for r in &self.records {
            let g = unproject(origin, r.position);
            let rec = json!({
                "slot": r.slot,
                "snapshot_id": r.snapshot_id,
                "position": {"lat": round6(g.lat), "lon": round6(g.lon)},
                "from_node": r.from_node,
                "route": r.route.as_ref().map(|route| route.to_geojson(graph, alpha, &r.snapshot_id)),
                "error": r.error,
                "arrived": self.arrival_slot.is_some_and(|a| a == r.slot + 1),
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub rho: f64,
    pub distance_m: f64,
    pub safety_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,rho,distance_m,safety_score\n");
        for r in &self.rows {
            s += &format!("{:.6},{:.6},{:.6},{:.6}\n", r.alpha, r.rho, r.distance_m, r.safety_score);
        }
        s
    }

    /// Rows rounded to 6 decimals.
    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "alpha": round6(r.alpha),
                    "rho": round6(r.rho),
                    "distance_m": round6(r.distance_m),
                    "safety_score": round6(r.safety_score),
                })
            })
            .collect();
        json!({ "rows": rows })
    }
}
