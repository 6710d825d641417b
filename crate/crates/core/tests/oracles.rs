//! Engine output checked against brute-force oracles on small random inputs.

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use safewalk_core::community::{louvain, modularity, Partition};
use safewalk_core::geo::{point_in_polygon, point_segment_distance, unproject, GeoPoint, PlanePoint};
use safewalk_core::riskmap::{build_footprints, clor_weights, ClorAggregation, compose_weights, sfor_contacts, sfor_weights, EdgeWeight, EdgeWeights};
use safewalk_core::roadnet::{segment_long_edges, EdgeId, NodeId, RoadEdge, RoadGraph, RoadNode, SegmentationConfig};
use safewalk_core::router::dijkstra;
use safewalk_core::siot::{build_clor, build_sfor, generate_owner_network, Device, DeviceClass, OwnerNetwork, Ownership, SforWeightRule, SocialGraph};

const ORIGIN: GeoPoint = GeoPoint { lat: 43.46, lon: -3.8 };

fn planar_graph(points: &[PlanePoint], pairs: &[(usize, usize)]) -> RoadGraph {
    let nodes = points
        .iter()
        .enumerate()
        .map(|(i, p)| RoadNode {
            id: NodeId(i as u64 + 1),
            location: unproject(ORIGIN, *p),
            plane: *p,
        })
        .collect();
    let edges = pairs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| RoadEdge {
            id: EdgeId(k as u64 + 1),
            a: NodeId(a as u64 + 1),
            b: NodeId(b as u64 + 1),
            length: points[a].distance(points[b]).max(1e-3),
            geometry: vec![points[a], points[b]],
            highway: "footway".into(),
        })
        .collect();
    RoadGraph::new(ORIGIN, nodes, edges).unwrap()
}

fn random_weighted(rng: &mut ChaCha8Rng) -> (RoadGraph, EdgeWeights) {
    let n = rng.gen_range(2..=10);
    let m = rng.gen_range(1..=20);
    let points: Vec<PlanePoint> = (0..n).map(|i| PlanePoint::new(i as f64 * 10.0, 0.0)).collect();
    let mut pairs = Vec::new();
    for _ in 0..m {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n);
        while b == a {
            b = rng.gen_range(0..n);
        }
        pairs.push((a, b));
    }
    let g = planar_graph(&points, &pairs);
    let rows = g
        .edges()
        .iter()
        .map(|e| {
            let w = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..5.0) };
            EdgeWeight { edge: e.id, w_dist: w, w_clor: 0.0, w_sfor: 0.0, w_sft: 0.0, w_total: w }
        })
        .collect();
    (g, EdgeWeights { alpha: 0.0, rows })
}

/// Minimum cost over all simple paths, by depth-first enumeration.
fn enumerate_min(g: &RoadGraph, w: &EdgeWeights, s: usize, t: usize) -> Option<f64> {
    fn go(g: &RoadGraph, w: &EdgeWeights, u: usize, t: usize, seen: &mut Vec<bool>, acc: f64, best: &mut Option<f64>) {
        if u == t {
            *best = Some(best.map_or(acc, |b: f64| b.min(acc)));
            return;
        }
        for &(ei, v) in g.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                go(g, w, v, t, seen, acc + w.rows[ei].w_total, best);
                seen[v] = false;
            }
        }
    }
    let mut seen = vec![false; g.node_count()];
    seen[s] = true;
    let mut best = None;
    go(g, w, s, t, &mut seen, 0.0, &mut best);
    best
}

#[test]
fn dijkstra_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..300 {
        let (g, w) = random_weighted(&mut rng);
        let s = rng.gen_range(0..g.node_count());
        let t = rng.gen_range(0..g.node_count());
        let oracle = enumerate_min(&g, &w, s, t);
        let got = dijkstra(&g, &w, g.nodes()[s].id, g.nodes()[t].id);
        match (oracle, got) {
            (None, Err(_)) => {}
            (Some(best), Ok(route)) => {
                assert!((route.total_cost - best).abs() <= 1e-12, "{} vs {best}", route.total_cost);
                // the path is simple and consistent with its edges
                let set: BTreeSet<_> = route.node_path.iter().collect();
                assert_eq!(set.len(), route.node_path.len());
                for (k, eid) in route.edge_path.iter().enumerate() {
                    let e = g.edge(*eid).unwrap();
                    let (x, y) = (route.node_path[k], route.node_path[k + 1]);
                    assert!((e.a == x && e.b == y) || (e.a == y && e.b == x));
                }
            }
            (o, r) => panic!("oracle {o:?} vs engine {r:?}"),
        }
    }
}

/// All set partitions of `0..n` as restricted growth strings.
fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; n];
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max + 1 {
            cur[i] = c;
            rec(i + 1, max.max(c), cur, out);
        }
    }
    if n > 0 {
        rec(1, 0, &mut cur, &mut out);
    }
    out
}

#[test]
fn bell_enumeration_counts() {
    assert_eq!(all_partitions(4).len(), 15);
    assert_eq!(all_partitions(6).len(), 203);
}

#[test]
fn louvain_near_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 60 {
        let n = rng.gen_range(3..=8);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.45) {
                    edges.push((i, j, rng.gen_range(0.1..1.0)));
                }
            }
        }
        if edges.is_empty() {
            continue;
        }
        let g = SocialGraph::new((0..n).map(|i| format!("v{i}")).collect(), edges).unwrap();
        let best = all_partitions(n)
            .into_iter()
            .map(|l| modularity(&g, &Partition::from_labels(l)).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let q = modularity(&g, &louvain(&g, checked as u64).unwrap()).unwrap();
        assert!(q >= 0.95 * best - 1e-12, "louvain {q} vs optimum {best} on {:?} seed {checked}", g.edges());
        checked += 1;
    }
}

#[test]
fn clor_matches_all_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let n = rng.gen_range(2..200);
        let pos: Vec<PlanePoint> = (0..n)
            .map(|_| PlanePoint::new(rng.gen_range(0.0..3000.0), rng.gen_range(0.0..3000.0)))
            .collect();
        let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let g = build_clor(&ids, &pos, 1000.0).unwrap();
        let mut expected = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let d = pos[i].distance(pos[j]);
                if d <= 1000.0 {
                    expected.push((i, j, 1.0 - d / 1000.0));
                }
            }
        }
        assert_eq!(g.edge_count(), expected.len());
        for (i, j, w) in expected {
            assert!((g.weight(i, j).unwrap() - w.max(1e-9)).abs() < 1e-12);
        }
    }
}

fn owner_hops(net: &OwnerNetwork, a: usize, b: usize) -> Option<usize> {
    let mut dist = HashMap::from([(a, 0)]);
    let mut q = VecDeque::from([a]);
    while let Some(u) = q.pop_front() {
        if u == b {
            return Some(dist[&u]);
        }
        for v in net.neighbors(u) {
            if !dist.contains_key(&v) {
                dist.insert(v, dist[&u] + 1);
                q.push_back(v);
            }
        }
    }
    None
}

fn device(id: String, owner: String, p: PlanePoint) -> Device {
    Device {
        id,
        owner_id: owner,
        device_class: DeviceClass::Smartphone,
        ownership: Ownership::Private,
        mobile: true,
        location: unproject(ORIGIN, p),
    }
}

#[test]
fn sfor_matches_unbounded_bfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let owners: Vec<String> = (0..40).map(|i| format!("o{i:02}")).collect();
    let net = generate_owner_network(&owners, 4, 0.3, 8).unwrap();
    let devices: Vec<Device> = (0..90)
        .map(|i| device(format!("d{i}"), owners[rng.gen_range(0..40)].clone(), PlanePoint::new(0.0, 0.0)))
        .collect();
    let rule = SforWeightRule::default();
    let g = build_sfor(&devices, &net, &rule).unwrap();
    let allowed = [1.0, 0.5, 0.25, 0.125];
    for i in 0..devices.len() {
        for j in i + 1..devices.len() {
            let oi = net.index_of(&devices[i].owner_id).unwrap();
            let oj = net.index_of(&devices[j].owner_id).unwrap();
            let expected = match owner_hops(&net, oi, oj) {
                Some(0) => Some(1.0),
                Some(h) if h <= 3 => Some(0.5 * 0.5f64.powi(h as i32 - 1)),
                _ => None,
            };
            assert_eq!(g.weight(i, j), expected);
        }
    }
    assert!(g.edges().iter().all(|e| allowed.contains(&e.2)));
}

fn average_clustering(n: usize, adj: &[BTreeSet<usize>]) -> f64 {
    let mut total = 0.0;
    for u in 0..n {
        let nb: Vec<usize> = adj[u].iter().copied().collect();
        let k = nb.len();
        if k < 2 {
            continue;
        }
        let mut links = 0;
        for a in 0..k {
            for b in a + 1..k {
                if adj[nb[a]].contains(&nb[b]) {
                    links += 1;
                }
            }
        }
        total += 2.0 * links as f64 / (k * (k - 1)) as f64;
    }
    total / n as f64
}

#[test]
fn watts_strogatz_clusters_more_than_random() {
    let owners: Vec<String> = (0..200).map(|i| format!("o{i:03}")).collect();
    let net = generate_owner_network(&owners, 6, 0.1, 42).unwrap();
    let n = net.len();
    let m = net.edge_count();
    assert_eq!(m, 600);
    let ws_adj: Vec<BTreeSet<usize>> = (0..n).map(|i| net.neighbors(i).collect()).collect();

    // Erdős–Rényi G(n, m) with the same size
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut er_adj = vec![BTreeSet::new(); n];
    let mut placed = 0;
    while placed < m {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && er_adj[a].insert(b) {
            er_adj[b].insert(a);
            placed += 1;
        }
    }
    let ws = average_clustering(n, &ws_adj);
    let er = average_clustering(n, &er_adj);
    assert!(ws > er, "ws {ws} er {er}");
}

#[test]
fn nearest_node_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pts: Vec<PlanePoint> = (0..60)
        .map(|_| PlanePoint::new(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0)))
        .collect();
    let pairs: Vec<(usize, usize)> = (1..60).map(|i| (i - 1, i)).collect();
    let g = planar_graph(&pts, &pairs);
    for _ in 0..200 {
        let p = PlanePoint::new(rng.gen_range(-50.0..550.0), rng.gen_range(-50.0..550.0));
        let best = g
            .nodes()
            .iter()
            .min_by(|a, b| a.plane.distance(p).total_cmp(&b.plane.distance(p)).then(a.id.cmp(&b.id)))
            .unwrap();
        assert_eq!(g.nearest_node(p).id, best.id);
    }
}

#[test]
fn segmentation_conserves_length_and_counts_nodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let pts: Vec<PlanePoint> = (0..15)
            .map(|_| PlanePoint::new(rng.gen_range(0.0..1500.0), rng.gen_range(0.0..1500.0)))
            .collect();
        let mut pairs = Vec::new();
        for i in 1..15 {
            pairs.push((rng.gen_range(0..i), i));
        }
        let g = planar_graph(&pts, &pairs);
        let s = segment_long_edges(&g, SegmentationConfig { l_th: 120.0 }).unwrap();
        let extra: usize = g.edges().iter().map(|e| (e.length / 120.0).ceil() as usize - 1).sum();
        assert_eq!(s.node_count(), g.node_count() + extra);
        assert!(((s.total_length() - g.total_length()) / g.total_length()).abs() < 1e-6);
        assert!(s.max_edge_length() <= 120.0 + 1e-9);
        for n in g.nodes() {
            assert_eq!(s.degree(n.id), g.degree(n.id));
        }
        for n in s.nodes().iter().filter(|n| g.node(n.id).is_none()) {
            assert_eq!(s.degree(n.id), Some(2));
        }
    }
}

#[test]
fn clor_term_matches_sampling_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let n = 40;
        let pos: Vec<PlanePoint> = (0..n)
            .map(|_| PlanePoint::new(rng.gen_range(0.0..600.0), rng.gen_range(0.0..600.0)))
            .collect();
        let partition = Partition::from_labels((0..n).map(|_| rng.gen_range(0..6)).collect());
        let fps = build_footprints(&partition, &pos, 15.0).unwrap();
        let road_pts: Vec<PlanePoint> = (0..30)
            .map(|_| PlanePoint::new(rng.gen_range(-50.0..650.0), rng.gen_range(-50.0..650.0)))
            .collect();
        let pairs: Vec<(usize, usize)> = (1..30).map(|i| (i - 1, i)).collect();
        let g = planar_graph(&road_pts, &pairs);
        let got = clor_weights(&g, &fps, ClorAggregation::Mean);
        let max = fps.iter().map(|f| f.density).fold(0.0, f64::max);
        for (e, w) in g.edges().iter().zip(got) {
            let (a, b) = (e.geometry[0], e.geometry[1]);
            let hits: Vec<f64> = fps
                .iter()
                .filter(|f| (0..=200).any(|k| point_in_polygon(a.lerp(b, k as f64 / 200.0), &f.polygon)))
                .map(|f| f.density / max)
                .collect();
            let sampled = if hits.is_empty() { 0.0 } else { hits.iter().sum::<f64>() / hits.len() as f64 };
            // sampling may only miss grazing contacts, never invent them
            if (sampled - w).abs() > 1e-12 {
                let exact_hits = fps
                    .iter()
                    .filter(|f| safewalk_core::geo::segment_intersects_polygon(a, b, &f.polygon))
                    .count();
                assert!(exact_hits > hits.len(), "edge {} engine {w} sampled {sampled}", e.id);
            }
        }
    }
}

#[test]
fn sfor_term_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let owners: Vec<String> = (0..12).map(|i| format!("o{i}")).collect();
    let net = generate_owner_network(&owners, 4, 0.2, 5).unwrap();
    let pos: Vec<PlanePoint> = (0..50)
        .map(|_| PlanePoint::new(rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0)))
        .collect();
    let devices: Vec<Device> = (0..50)
        .map(|i| device(format!("d{i}"), owners[rng.gen_range(0..12)].clone(), pos[i]))
        .collect();
    let sfor = build_sfor(&devices, &net, &SforWeightRule::default()).unwrap();
    let partition = louvain(&sfor, 1).unwrap();
    let road_pts: Vec<PlanePoint> = (0..25)
        .map(|_| PlanePoint::new(rng.gen_range(0.0..400.0), rng.gen_range(0.0..400.0)))
        .collect();
    let pairs: Vec<(usize, usize)> = (1..25).map(|i| (i - 1, i)).collect();
    let g = planar_graph(&road_pts, &pairs);
    for ego in 0..50 {
        let contacts = sfor_contacts(&sfor, &partition, &format!("d{ego}"), &pos).unwrap();
        let got = sfor_weights(&g, &contacts, 60.0).unwrap();
        for (e, w) in g.edges().iter().zip(got) {
            let (a, b) = (e.geometry[0], e.geometry[1]);
            let near: Vec<f64> = (0..50)
                .filter(|&u| u != ego && partition.community_of(u) == partition.community_of(ego))
                .filter_map(|u| sfor.weight(ego, u).map(|om| (u, om)))
                .filter(|&(u, _)| point_segment_distance(pos[u], a, b) <= 60.0)
                .map(|(_, om)| om)
                .collect();
            let expected = if near.is_empty() { 0.0 } else { near.iter().sum::<f64>() / near.len() as f64 };
            assert!((w - expected).abs() < 1e-12);
        }
    }
    let _ = compose_weights(&g, 0.5, &vec![0.0; g.edge_count()], &vec![0.0; g.edge_count()]).unwrap();
}
