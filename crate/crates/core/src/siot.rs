//! Device registry and the two social-IoT relation graphs.
//!
//! CLOR links devices closer than a cutoff distance, weighted by linear decay.
//! SFOR links devices through their owners: same owner, direct friends, and
//! friends-of-friends up to a hop limit with geometric decay.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::community::Partition;
use crate::geo::{project, GeoError, GeoPoint, PlanePoint};

/// CLOR cutoff distance used for the city-scale scenario, in meters.
pub const DEFAULT_D_CLOR: f64 = 1000.0;
/// Watts–Strogatz neighbours per owner.
pub const DEFAULT_WS_K: usize = 6;
/// Watts–Strogatz rewiring probability.
pub const DEFAULT_WS_BETA: f64 = 0.1;

/// Smallest CLOR weight; keeps pairs exactly at the cutoff in `(0, 1]`.
const CLOR_MIN_WEIGHT: f64 = 1e-9;

/// Fraction of bad rows above which a device table is rejected outright.
const MAX_ROW_ERROR_FRACTION: f64 = 0.10;

pub const DEVICE_COLUMNS: &[&str] = &["id", "owner_id", "device_class", "ownership", "mobile", "lat", "lon"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SiotError {
    #[error("device table is missing columns: {}", missing.join(", "))]
    Schema { missing: Vec<String> },
    #[error("device table has no rows")]
    Empty,
    #[error("{failed} of {total} device rows failed to parse (first: {first})")]
    TooManyRowErrors { failed: usize, total: usize, first: RowError },
    #[error("malformed device table: {0}")]
    Csv(String),
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },
    #[error("device {device} references unknown owner {owner}")]
    UnknownOwner { device: String, owner: String },
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("owner network line {line}: {message}")]
    OwnerEdgeList { line: usize, message: String },
    #[error("social graph: {0}")]
    InvalidGraph(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("line {line}: {message}")]
pub struct RowError {
    /// 1-based line number in the source table (the header is line 1).
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceClass {
    Smartphone,
    Smartwatch,
    Tablet,
    PersonalComputer,
    Sensor,
    Streetlight,
    Other,
}

impl DeviceClass {
    /// Lenient parse; anything unrecognised is `Other`.
    pub fn parse(raw: &str) -> DeviceClass {
        let norm: String = raw
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match norm.as_str() {
            "smartphone" | "phone" | "mobilephone" => DeviceClass::Smartphone,
            "smartwatch" | "watch" | "wearable" => DeviceClass::Smartwatch,
            "tablet" => DeviceClass::Tablet,
            "personalcomputer" | "pc" | "laptop" | "computer" => DeviceClass::PersonalComputer,
            "sensor" | "environmentsensor" => DeviceClass::Sensor,
            "streetlight" | "light" => DeviceClass::Streetlight,
            _ => DeviceClass::Other,
        }
    }

    pub fn is_personal(self) -> bool {
        matches!(
            self,
            DeviceClass::Smartphone | DeviceClass::Smartwatch | DeviceClass::Tablet | DeviceClass::PersonalComputer
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceClass::Smartphone => "smartphone",
            DeviceClass::Smartwatch => "smartwatch",
            DeviceClass::Tablet => "tablet",
            DeviceClass::PersonalComputer => "personal computer",
            DeviceClass::Sensor => "sensor",
            DeviceClass::Streetlight => "streetlight",
            DeviceClass::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ownership {
    Private,
    Public,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: String,
    pub owner_id: String,
    pub device_class: DeviceClass,
    pub ownership: Ownership,
    pub mobile: bool,
    pub location: GeoPoint,
}

/// Parsed device table plus the rows that were rejected.
#[derive(Debug, Clone, Default)]
pub struct DeviceLoad {
    pub devices: Vec<Device>,
    pub rejected: Vec<RowError>,
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" | "t" => Some(true),
        "false" | "0" | "no" | "n" | "f" => Some(false),
        _ => None,
    }
}

/// Reads the comma-separated device table.
///
/// Bad rows are collected rather than fatal unless more than 10% of rows fail.
pub fn load_devices<R: Read>(source: R) -> Result<DeviceLoad, SiotError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let headers = rdr.headers().map_err(|e| SiotError::Csv(e.to_string()))?.clone();
    let col: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_ascii_lowercase(), i))
        .collect();
    let missing: Vec<String> = DEVICE_COLUMNS
        .iter()
        .filter(|c| !col.contains_key(**c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(SiotError::Schema { missing });
    }
    let idx = |name: &str| col[name];
    let (i_id, i_owner, i_class, i_own, i_mobile, i_lat, i_lon) = (
        idx("id"),
        idx("owner_id"),
        idx("device_class"),
        idx("ownership"),
        idx("mobile"),
        idx("lat"),
        idx("lon"),
    );

    let mut out = DeviceLoad::default();
    let mut seen = std::collections::HashSet::new();
    let mut total = 0;
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        total += 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.rejected.push(RowError { line, message: e.to_string() });
                continue;
            }
        };
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parsed = (|| -> Result<Device, String> {
            let id = field(i_id);
            if id.is_empty() {
                return Err("empty id".into());
            }
            let owner = field(i_owner);
            if owner.is_empty() {
                return Err("empty owner_id".into());
            }
            let ownership = match field(i_own).to_ascii_lowercase().as_str() {
                "private" => Ownership::Private,
                "public" => Ownership::Public,
                other => return Err(format!("ownership {other:?} is neither private nor public")),
            };
            let mobile = parse_bool(field(i_mobile)).ok_or_else(|| format!("mobile {:?} is not a boolean", field(i_mobile)))?;
            let lat: f64 = field(i_lat).parse().map_err(|_| format!("lat {:?} is not a number", field(i_lat)))?;
            let lon: f64 = field(i_lon).parse().map_err(|_| format!("lon {:?} is not a number", field(i_lon)))?;
            let location = GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
            Ok(Device {
                id: id.to_string(),
                owner_id: owner.to_string(),
                device_class: DeviceClass::parse(field(i_class)),
                ownership,
                mobile,
                location,
            })
        })();
        match parsed {
            Ok(d) if !seen.insert(d.id.clone()) => out.rejected.push(RowError {
                line,
                message: format!("duplicate device id {}", d.id),
            }),
            Ok(d) => out.devices.push(d),
            Err(message) => out.rejected.push(RowError { line, message }),
        }
    }
    if total == 0 {
        return Err(SiotError::Empty);
    }
    if out.rejected.len() as f64 > MAX_ROW_ERROR_FRACTION * total as f64 {
        return Err(SiotError::TooManyRowErrors {
            failed: out.rejected.len(),
            total,
            first: out.rejected[0].clone(),
        });
    }
    Ok(out)
}

/// Keeps private, mobile, person-carried devices.
pub fn filter_personal(devices: &[Device]) -> Vec<Device> {
    devices
        .iter()
        .filter(|d| d.ownership == Ownership::Private && d.mobile && d.device_class.is_personal())
        .cloned()
        .collect()
}

pub fn project_devices(origin: GeoPoint, devices: &[Device]) -> Result<Vec<PlanePoint>, GeoError> {
    devices.iter().map(|d| project(origin, d.location)).collect()
}

/// Weighted undirected simple graph over string node ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialGraph {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    // (a, b, w) with a < b, sorted
    edges: Vec<(usize, usize, f64)>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SocialGraph {
    pub fn new(ids: Vec<String>, mut edges: Vec<(usize, usize, f64)>) -> Result<Self, SiotError> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(SiotError::InvalidGraph(format!("duplicate node {id}")));
            }
        }
        for e in &mut edges {
            if e.0 == e.1 {
                return Err(SiotError::InvalidGraph(format!("self-loop on {}", ids[e.0])));
            }
            if e.0 >= ids.len() || e.1 >= ids.len() {
                return Err(SiotError::InvalidGraph("edge endpoint out of range".into()));
            }
            if !(e.2 > 0.0 && e.2.is_finite()) {
                return Err(SiotError::InvalidGraph(format!("edge weight {} is not positive", e.2)));
            }
            if e.0 > e.1 {
                std::mem::swap(&mut e.0, &mut e.1);
            }
        }
        edges.sort_by_key(|e| (e.0, e.1));
        if edges.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(SiotError::InvalidGraph("parallel edge".into()));
        }
        let mut adjacency = vec![Vec::new(); ids.len()];
        for &(a, b, w) in &edges {
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|x| x.0);
        }
        Ok(SocialGraph {
            ids,
            index,
            edges,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        let adj = &self.adjacency[a];
        adj.binary_search_by_key(&b, |x| x.0).ok().map(|k| adj[k].1)
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }
}

/// Co-location graph: an edge for each pair within `d_clor`, weighted
/// `1 − d / d_clor` (coincident devices get weight 1).
pub fn build_clor(ids: &[String], positions: &[PlanePoint], d_clor: f64) -> Result<SocialGraph, SiotError> {
    if !(d_clor > 0.0 && d_clor.is_finite()) {
        return Err(SiotError::InvalidParameter {
            name: "d_clor",
            message: format!("{d_clor} must be positive"),
        });
    }
    assert_eq!(ids.len(), positions.len(), "ids and positions must align");
    // bucket into cutoff-sized cells; candidate pairs live in adjacent cells
    let cell_of = |p: PlanePoint| ((p.x / d_clor).floor() as i64, (p.y / d_clor).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in positions.iter().enumerate() {
        grid.entry(cell_of(*p)).or_default().push(i);
    }
    let mut edges = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        let (cx, cy) = cell_of(*p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = grid.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &j in bucket {
                    if j <= i {
                        continue;
                    }
                    let d = p.distance(positions[j]);
                    if d <= d_clor {
                        edges.push((i, j, (1.0 - d / d_clor).clamp(CLOR_MIN_WEIGHT, 1.0)));
                    }
                }
            }
        }
    }
    SocialGraph::new(ids.to_vec(), edges)
}

/// Unweighted friendship network among owners.
#[derive(Debug, Clone, PartialEq)]
pub struct OwnerNetwork {
    owners: Vec<String>,
    index: HashMap<String, usize>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl OwnerNetwork {
    /// Builds a network from owner ids and friendship pairs. Duplicate pairs
    /// collapse; self-pairs are rejected.
    pub fn from_edges(owner_ids: &[String], pairs: &[(String, String)]) -> Result<Self, SiotError> {
        let mut owners: Vec<String> = owner_ids.to_vec();
        owners.sort();
        owners.dedup();
        let index: HashMap<String, usize> = owners.iter().enumerate().map(|(i, o)| (o.clone(), i)).collect();
        let mut adjacency = vec![BTreeSet::new(); owners.len()];
        for (a, b) in pairs {
            let ia = *index.get(a).ok_or_else(|| SiotError::InvalidGraph(format!("unknown owner {a}")))?;
            let ib = *index.get(b).ok_or_else(|| SiotError::InvalidGraph(format!("unknown owner {b}")))?;
            if ia == ib {
                return Err(SiotError::InvalidGraph(format!("self-friendship on {a}")));
            }
            adjacency[ia].insert(ib);
            adjacency[ib].insert(ia);
        }
        Ok(OwnerNetwork {
            owners,
            index,
            adjacency,
        })
    }

    pub fn owners(&self) -> &[String] {
        &self.owners
    }

    pub fn index_of(&self, owner: &str) -> Option<usize> {
        self.index.get(owner).copied()
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i].iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// `(owner a, owner b)` pairs with `a < b` by index.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (a, adj) in self.adjacency.iter().enumerate() {
            out.extend(adj.range(a + 1..).map(|&b| (a, b)));
        }
        out
    }

    /// Owners within `max_hops` of `start`, with their hop distance (start at 0).
    pub fn within_hops(&self, start: usize, max_hops: usize) -> Vec<(usize, usize)> {
        let mut dist = HashMap::from([(start, 0usize)]);
        let mut order = vec![(start, 0)];
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let h = dist[&u];
            if h == max_hops {
                continue;
            }
            for &v in &self.adjacency[u] {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(v) {
                    e.insert(h + 1);
                    order.push((v, h + 1));
                    queue.push_back(v);
                }
            }
        }
        order
    }

    /// Parses an edge list: one `owner_a,owner_b` pair per line (comma or
    /// whitespace separated); blank lines and `#` comments are skipped.
    pub fn parse_edge_list(text: &str) -> Result<Vec<(String, String)>, SiotError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            match parts.as_slice() {
                [a, b] => pairs.push((a.to_string(), b.to_string())),
                _ => {
                    return Err(SiotError::OwnerEdgeList {
                        line: i + 1,
                        message: format!("expected two owner ids, got {line:?}"),
                    })
                }
            }
        }
        Ok(pairs)
    }
}

/// Watts–Strogatz small-world network over the given owners.
///
/// Owners are sorted first, so the result depends only on the owner set, `k`,
/// `beta` and `seed`. Each ring-lattice edge `(u, u + j)` is rewired to
/// `(u, w)` with probability `beta`, skipping self-loops and duplicates, so the
/// edge count stays `n·k/2`.
pub fn generate_owner_network(owner_ids: &[String], k: usize, beta: f64, seed: u64) -> Result<OwnerNetwork, SiotError> {
    let mut net = OwnerNetwork::from_edges(owner_ids, &[])?;
    let n = net.len();
    if k < 2 || !k.is_multiple_of(2) {
        return Err(SiotError::InvalidParameter {
            name: "k",
            message: format!("{k} must be an even integer >= 2"),
        });
    }
    if k >= n {
        return Err(SiotError::InvalidParameter {
            name: "k",
            message: format!("{k} must be smaller than the owner count {n}"),
        });
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(SiotError::InvalidParameter {
            name: "beta",
            message: format!("{beta} is outside [0, 1]"),
        });
    }
    let adj = &mut net.adjacency;
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            adj[u].insert(v);
            adj[v].insert(u);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            if rng.gen::<f64>() >= beta {
                continue;
            }
            if !adj[u].contains(&v) || adj[u].len() >= n - 1 {
                continue;
            }
            let mut w = rng.gen_range(0..n);
            while w == u || adj[u].contains(&w) {
                w = rng.gen_range(0..n);
            }
            adj[u].remove(&v);
            adj[v].remove(&u);
            adj[u].insert(w);
            adj[w].insert(u);
        }
    }
    Ok(net)
}

/// SFOR edge weights by owner hop distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SforWeightRule {
    pub same_owner_weight: f64,
    pub friend_weight: f64,
    pub hop_decay: f64,
    pub max_hops: usize,
}

impl Default for SforWeightRule {
    fn default() -> Self {
        SforWeightRule {
            same_owner_weight: 1.0,
            friend_weight: 0.5,
            hop_decay: 0.5,
            max_hops: 3,
        }
    }
}

impl SforWeightRule {
    pub fn validate(&self) -> Result<(), SiotError> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if self.max_hops < 1 {
            return Err(SiotError::InvalidParameter {
                name: "max_hops",
                message: "must be at least 1".into(),
            });
        }
        for (name, v) in [
            ("same_owner_weight", self.same_owner_weight),
            ("friend_weight", self.friend_weight),
            ("hop_decay", self.hop_decay),
        ] {
            if !unit(v) {
                return Err(SiotError::InvalidParameter {
                    name,
                    message: format!("{v} is outside (0, 1]"),
                });
            }
        }
        Ok(())
    }

    /// Weight for owners `hops` apart; `None` past the hop limit.
    pub fn weight_for_hops(&self, hops: usize) -> Option<f64> {
        match hops {
            0 => Some(self.same_owner_weight),
            h if h <= self.max_hops => Some(self.friend_weight * self.hop_decay.powi(h as i32 - 1)),
            _ => None,
        }
    }
}

/// Friendship/ownership graph over `devices` (node order = device order).
pub fn build_sfor(devices: &[Device], owners: &OwnerNetwork, rule: &SforWeightRule) -> Result<SocialGraph, SiotError> {
    rule.validate()?;
    let mut by_owner: Vec<Vec<usize>> = vec![Vec::new(); owners.len()];
    for (i, d) in devices.iter().enumerate() {
        let o = owners.index_of(&d.owner_id).ok_or_else(|| SiotError::UnknownOwner {
            device: d.id.clone(),
            owner: d.owner_id.clone(),
        })?;
        by_owner[o].push(i);
    }
    let mut edges = Vec::new();
    for (o, members) in by_owner.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        for (other, hops) in owners.within_hops(o, rule.max_hops) {
            let w = rule.weight_for_hops(hops).expect("within hop limit");
            for &u in members {
                for &v in &by_owner[other] {
                    if u < v {
                        edges.push((u, v, w));
                    }
                }
            }
        }
    }
    SocialGraph::new(devices.iter().map(|d| d.id.clone()).collect(), edges)
}

/// Devices sharing `u_star`'s community, excluding `u_star`.
pub fn ego_community(graph: &SocialGraph, partition: &Partition, u_star: &str) -> Result<BTreeSet<String>, SiotError> {
    let i = graph
        .index_of(u_star)
        .ok_or_else(|| SiotError::UnknownDevice(u_star.to_string()))?;
    let c = partition.community_of(i);
    Ok(partition
        .labels()
        .iter()
        .enumerate()
        .filter(|&(j, &l)| l == c && j != i)
        .map(|(j, _)| graph.ids()[j].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,owner_id,device_class,ownership,mobile,lat,lon\n";

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i}")).collect()
    }

    fn device(id: &str, owner: &str) -> Device {
        Device {
            id: id.into(),
            owner_id: owner.into(),
            device_class: DeviceClass::Smartphone,
            ownership: Ownership::Private,
            mobile: true,
            location: GeoPoint { lat: 43.46, lon: -3.8 },
        }
    }

    #[test]
    fn loads_well_formed_table() {
        let csv = format!(
            "{HEADER}a,o1,smartphone,private,true,43.46,-3.80\n\
             b,o1,smartwatch,private,true,43.461,-3.80\n\
             c,o2,tablet,private,1,43.462,-3.80\n\
             d,city,streetlight,public,false,43.463,-3.80\n\
             e,o3,personal computer,private,yes,43.464,-3.80\n"
        );
        let load = load_devices(csv.as_bytes()).unwrap();
        assert_eq!(load.devices.len(), 5);
        assert!(load.rejected.is_empty());
        assert_eq!(load.devices[4].device_class, DeviceClass::PersonalComputer);
        assert_eq!(load.devices[3].ownership, Ownership::Public);
    }

    #[test]
    fn bad_latitude_row_is_rejected_not_fatal() {
        let mut csv = HEADER.to_string();
        for i in 0..10 {
            csv += &format!("d{i},o{i},smartphone,private,true,43.46,-3.80\n");
        }
        csv += "bad,o9,smartphone,private,true,95,-3.80\n";
        let load = load_devices(csv.as_bytes()).unwrap();
        assert_eq!(load.devices.len(), 10);
        assert_eq!(load.rejected.len(), 1);
        assert_eq!(load.rejected[0].line, 12);
    }

    #[test]
    fn too_many_bad_rows_is_fatal() {
        let csv = format!(
            "{HEADER}a,o1,smartphone,private,true,43.46,-3.80\nb,o1,smartphone,private,maybe,43.46,-3.80\n"
        );
        assert!(matches!(
            load_devices(csv.as_bytes()),
            Err(SiotError::TooManyRowErrors { failed: 1, total: 2, .. })
        ));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let csv = "id,device_class,ownership,mobile,lat,lon\na,smartphone,private,true,43.4,-3.8\n";
        match load_devices(csv.as_bytes()) {
            Err(SiotError::Schema { missing }) => assert_eq!(missing, vec!["owner_id".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_table_is_error() {
        assert_eq!(load_devices(HEADER.as_bytes()).unwrap_err(), SiotError::Empty);
    }

    #[test]
    fn personal_filter() {
        let mut lamp = device("lamp", "city");
        lamp.device_class = DeviceClass::Streetlight;
        lamp.ownership = Ownership::Public;
        lamp.mobile = false;
        let phone = device("phone", "alice");
        let mut parked = device("laptop", "bob");
        parked.device_class = DeviceClass::PersonalComputer;
        parked.mobile = false;
        let mut odd = device("odd", "carol");
        odd.device_class = DeviceClass::parse("drone");
        let kept = filter_personal(&[lamp, phone.clone(), parked, odd]);
        assert_eq!(kept, vec![phone]);
    }

    #[test]
    fn clor_examples() {
        let g = build_clor(&ids(2), &[PlanePoint::new(0.0, 0.0), PlanePoint::new(1500.0, 0.0)], 1000.0).unwrap();
        assert_eq!(g.edge_count(), 0);
        let g = build_clor(&ids(2), &[PlanePoint::new(5.0, 5.0), PlanePoint::new(5.0, 5.0)], 1000.0).unwrap();
        assert_eq!(g.edges(), &[(0, 1, 1.0)]);
        let h = 400.0 * 3f64.sqrt() / 2.0;
        let tri = [PlanePoint::new(0.0, 0.0), PlanePoint::new(400.0, 0.0), PlanePoint::new(200.0, h)];
        let g = build_clor(&ids(3), &tri, 1000.0).unwrap();
        assert_eq!(g.edge_count(), 3);
        for e in g.edges() {
            assert!((e.2 - 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn clor_cutoff_is_inclusive_and_positive() {
        let g = build_clor(&ids(2), &[PlanePoint::new(0.0, 0.0), PlanePoint::new(1000.0, 0.0)], 1000.0).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.edges()[0].2 > 0.0 && g.edges()[0].2 <= 1.0);
        assert!(build_clor(&ids(0), &[], 0.0).is_err());
    }

    #[test]
    fn ring_lattice_when_beta_zero() {
        let owners = ids(20);
        let net = generate_owner_network(&owners, 4, 0.0, 1).unwrap();
        assert!((0..20).all(|i| net.degree(i) == 4));
        assert_eq!(net.edge_count(), 40);
    }

    #[test]
    fn rewiring_preserves_edge_count() {
        let net = generate_owner_network(&ids(50), 4, 1.0, 7).unwrap();
        assert_eq!(net.edge_count(), 100);
        for (a, b) in net.edges() {
            assert_ne!(a, b);
        }
    }

    #[test]
    fn ws_parameter_errors() {
        assert!(generate_owner_network(&ids(5), 6, 0.1, 1).is_err());
        assert!(generate_owner_network(&ids(10), 3, 0.1, 1).is_err());
        assert!(generate_owner_network(&ids(10), 4, 1.5, 1).is_err());
    }

    #[test]
    fn ws_is_seed_deterministic() {
        let a = generate_owner_network(&ids(100), 6, 0.3, 42).unwrap();
        let b = generate_owner_network(&ids(100), 6, 0.3, 42).unwrap();
        let c = generate_owner_network(&ids(100), 6, 0.3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn sfor_weights_follow_hops() {
        // owners on a path: A - B - C - D - E
        let owners: Vec<String> = ["A", "B", "C", "D", "E"].iter().map(|s| s.to_string()).collect();
        let pairs: Vec<(String, String)> = owners.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
        let net = OwnerNetwork::from_edges(&owners, &pairs).unwrap();
        let devices = vec![
            device("a1", "A"),
            device("a2", "A"),
            device("b", "B"),
            device("c", "C"),
            device("d", "D"),
            device("e", "E"),
        ];
        let g = build_sfor(&devices, &net, &SforWeightRule::default()).unwrap();
        let w = |x: &str, y: &str| g.weight(g.index_of(x).unwrap(), g.index_of(y).unwrap());
        assert_eq!(w("a1", "a2"), Some(1.0));
        assert_eq!(w("a1", "b"), Some(0.5));
        assert_eq!(w("a1", "c"), Some(0.25));
        assert_eq!(w("a1", "d"), Some(0.125));
        assert_eq!(w("a1", "e"), None);
        assert_eq!(w("b", "e"), Some(0.125));
        for &(a, b, _) in g.edges() {
            assert_ne!(a, b);
        }
    }

    #[test]
    fn sfor_unknown_owner() {
        let net = OwnerNetwork::from_edges(&["A".to_string()], &[]).unwrap();
        assert!(matches!(
            build_sfor(&[device("x", "Z")], &net, &SforWeightRule::default()),
            Err(SiotError::UnknownOwner { .. })
        ));
    }

    #[test]
    fn edge_list_parsing() {
        let pairs = OwnerNetwork::parse_edge_list("# friends\na,b\n\nb c\n").unwrap();
        assert_eq!(pairs, vec![("a".into(), "b".into()), ("b".into(), "c".into())]);
        assert!(OwnerNetwork::parse_edge_list("a,b,c\n").is_err());
    }

    #[test]
    fn ego_community_examples() {
        let g = SocialGraph::new(ids(6), vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0)]).unwrap();
        let p = Partition::from_labels(vec![0, 0, 0, 1, 1, 2]);
        assert!(ego_community(&g, &p, "d5").unwrap().is_empty());
        let got = ego_community(&g, &p, "d1").unwrap();
        assert_eq!(got.into_iter().collect::<Vec<_>>(), vec!["d0".to_string(), "d2".to_string()]);
        assert!(matches!(ego_community(&g, &p, "nope"), Err(SiotError::UnknownDevice(_))));
    }
}
