//! Weighted modularity and Louvain community detection.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::siot::SocialGraph;

/// A level stops the outer loop once modularity improves by less than this.
pub const LEVEL_GAIN_THRESHOLD: f64 = 1e-7;

/// Minimum local gain (in un-normalised weight units) for a node move.
const MOVE_EPS: f64 = 1e-12;

/// Hard cap on local-moving sweeps per level, as a guard against float cycling.
const MAX_SWEEPS: usize = 10_000;

/// Independent passes per call; the partition with the highest modularity wins.
pub const LOUVAIN_RESTARTS: u64 = 8;

/// Cap on refinement rounds per pass; each accepted round strictly raises modularity.
const MAX_REFINEMENTS: usize = 32;

const RANDOM_START_TAG: u64 = 0x5EED_57A7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommunityError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("modularity is undefined on a graph without edges")]
    Undefined,
    #[error("partition covers {partition} nodes but graph has {graph}")]
    SizeMismatch { partition: usize, graph: usize },
}

/// Assignment of graph nodes (by index) to dense community ids `0..count`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    count: usize,
}

impl Partition {
    /// Renumbers arbitrary labels densely in order of first appearance.
    pub fn from_labels(raw: Vec<usize>) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels: Vec<usize> = raw
            .into_iter()
            .map(|l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Partition {
            count: map.len(),
            labels,
        }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            labels: (0..n).collect(),
            count: n,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn community_of(&self, node: usize) -> usize {
        self.labels[node]
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Member node indices of every community, ascending.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, &c) in self.labels.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// One `device_id community_id` pair per line, in graph node order.
    pub fn to_text(&self, graph: &SocialGraph) -> String {
        let mut s = String::new();
        for (id, c) in graph.ids().iter().zip(&self.labels) {
            s.push_str(id);
            s.push(' ');
            s.push_str(&c.to_string());
            s.push('\n');
        }
        s
    }
}

/// Weighted Newman–Girvan modularity.
pub fn modularity(g: &SocialGraph, p: &Partition) -> Result<f64, CommunityError> {
    if p.len() != g.node_count() {
        return Err(CommunityError::SizeMismatch {
            partition: p.len(),
            graph: g.node_count(),
        });
    }
    let m = g.total_weight();
    if g.edge_count() == 0 || m <= 0.0 {
        return Err(CommunityError::Undefined);
    }
    let mut internal = vec![0.0; p.count()];
    let mut total = vec![0.0; p.count()];
    for &(a, b, w) in g.edges() {
        let (ca, cb) = (p.community_of(a), p.community_of(b));
        if ca == cb {
            internal[ca] += w;
        }
        total[ca] += w;
        total[cb] += w;
    }
    Ok(internal
        .iter()
        .zip(&total)
        .map(|(&inside, &tot)| inside / m - (tot / (2.0 * m)).powi(2))
        .sum())
}

/// One accepted node move, expressed on the original graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MoveRecord {
    pub level: usize,
    pub before: Partition,
    pub after: Partition,
    /// Modularity gain predicted by the local formula.
    pub gain: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LouvainTrace {
    /// Modularity of the original-graph partition after each completed level.
    pub level_modularity: Vec<f64>,
    pub moves: Vec<MoveRecord>,
}

/// Louvain community detection. Deterministic for a given graph and seed.
///
/// Greedy passes can lock into a poor optimum on small graphs, so
/// [`LOUVAIN_RESTARTS`] passes from singletons with derived visit orders are
/// run, plus as many from random coarse partitions, and the best modularity
/// kept (earliest pass on ties). Each pass is refined by restarting node-level
/// moves from its result until modularity stops improving, since aggregation
/// freezes nodes that would later gain by moving alone.
pub fn louvain(g: &SocialGraph, seed: u64) -> Result<Partition, CommunityError> {
    if g.edge_count() == 0 {
        return run(g, seed, None, None);
    }
    let n = g.node_count();
    let mut best: Option<(Partition, f64)> = None;
    for r in 0..2 * LOUVAIN_RESTARTS {
        let s = seed.wrapping_add(r.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let start = (r >= LOUVAIN_RESTARTS).then(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(s ^ RANDOM_START_TAG);
            let k = 2 + (r - LOUVAIN_RESTARTS) as usize % n.isqrt().max(1);
            Partition::from_labels((0..n).map(|_| rng.gen_range(0..k)).collect())
        });
        let mut p = run(g, s, start.as_ref(), None)?;
        let mut q = modularity(g, &p)?;
        for _ in 0..MAX_REFINEMENTS {
            let refined = run(g, s, Some(&p), None)?;
            let q_refined = modularity(g, &refined)?;
            if q_refined <= q + MOVE_EPS {
                break;
            }
            p = refined;
            q = q_refined;
        }
        if best.as_ref().is_none_or(|(_, b)| q > *b) {
            best = Some((p, q));
        }
    }
    Ok(best.expect("at least one pass").0)
}

/// A single Louvain pass with `seed` that records every move and the
/// modularity after each level.
pub fn louvain_traced(g: &SocialGraph, seed: u64) -> Result<(Partition, LouvainTrace), CommunityError> {
    let mut trace = LouvainTrace::default();
    let p = run(g, seed, None, Some(&mut trace))?;
    Ok((p, trace))
}

/// Graph for one Louvain level; node `i` is a community of the level below.
struct LevelGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    degree: Vec<f64>,
    two_m: f64,
}

impl LevelGraph {
    fn from_social(g: &SocialGraph) -> Self {
        let n = g.node_count();
        let adjacency: Vec<Vec<(usize, f64)>> = (0..n).map(|i| g.neighbors(i).to_vec()).collect();
        let degree: Vec<f64> = adjacency.iter().map(|a| a.iter().map(|x| x.1).sum()).collect();
        LevelGraph {
            two_m: degree.iter().sum(),
            adjacency,
            self_loops: vec![0.0; n],
            degree,
        }
    }

    fn len(&self) -> usize {
        self.degree.len()
    }

    /// Collapses each community (dense labels) into a single node.
    fn aggregate(&self, comm: &[usize], count: usize) -> Self {
        let mut self_loops = vec![0.0; count];
        let mut maps: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); count];
        for i in 0..self.len() {
            let ci = comm[i];
            self_loops[ci] += self.self_loops[i];
            for &(j, w) in &self.adjacency[i] {
                let cj = comm[j];
                if ci == cj {
                    // each internal edge is visited from both ends
                    if i < j {
                        self_loops[ci] += w;
                    }
                } else {
                    *maps[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        let adjacency: Vec<Vec<(usize, f64)>> = maps.into_iter().map(|m| m.into_iter().collect()).collect();
        let degree: Vec<f64> = adjacency
            .iter()
            .zip(&self_loops)
            .map(|(a, &s)| a.iter().map(|x| x.1).sum::<f64>() + 2.0 * s)
            .collect();
        LevelGraph {
            two_m: self.two_m,
            adjacency,
            self_loops,
            degree,
        }
    }
}

fn dense(labels: &[usize]) -> (Vec<usize>, usize) {
    let p = Partition::from_labels(labels.to_vec());
    let count = p.count();
    (p.labels, count)
}

/// One multi-level pass; node-level moves start from `start` when given.
fn run(
    g: &SocialGraph,
    seed: u64,
    start: Option<&Partition>,
    mut trace: Option<&mut LouvainTrace>,
) -> Result<Partition, CommunityError> {
    let n = g.node_count();
    if n == 0 {
        return Err(CommunityError::EmptyGraph);
    }
    if g.edge_count() == 0 {
        return Ok(Partition::singletons(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level_graph = LevelGraph::from_social(g);
    // original node -> level node
    let mut node_to_level: Vec<usize> = (0..n).collect();
    let mut best = start.cloned().unwrap_or_else(|| Partition::singletons(n));
    let mut q_prev = modularity(g, &best)?;

    for level in 0.. {
        let initial = if level == 0 { best.labels().to_vec() } else { (0..level_graph.len()).collect() };
        let (comm, moved) = local_moving(&level_graph, initial, &mut rng, level, &node_to_level, trace.as_deref_mut());
        if !moved {
            break;
        }
        let (comm, count) = dense(&comm);
        let candidate = Partition::from_labels(node_to_level.iter().map(|&l| comm[l]).collect());
        let q = modularity(g, &candidate)?;
        if let Some(t) = trace.as_deref_mut() {
            t.level_modularity.push(q);
        }
        let gain = q - q_prev;
        if gain > 0.0 {
            best = candidate;
        }
        if gain < LEVEL_GAIN_THRESHOLD {
            break;
        }
        q_prev = q;
        level_graph = level_graph.aggregate(&comm, count);
        for l in &mut node_to_level {
            *l = comm[*l];
        }
    }
    Ok(best)
}

/// Phase one: greedy single-node moves from `comm` until a full sweep
/// changes nothing. Returns level-node community labels (not dense) and
/// whether anything moved.
fn local_moving(
    g: &LevelGraph,
    mut comm: Vec<usize>,
    rng: &mut ChaCha8Rng,
    level: usize,
    node_to_level: &[usize],
    mut trace: Option<&mut LouvainTrace>,
) -> (Vec<usize>, bool) {
    let n = g.len();
    let mut tot = vec![0.0; n];
    for (i, &c) in comm.iter().enumerate() {
        tot[c] += g.degree[i];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let m = g.two_m / 2.0;
    let mut any = false;

    for _ in 0..MAX_SWEEPS {
        let mut moved = false;
        for &i in &order {
            let c_old = comm[i];
            let k_i = g.degree[i];
            for &(j, w) in &g.adjacency[i] {
                let c = comm[j];
                if link[c] == 0.0 {
                    touched.push(c);
                }
                link[c] += w;
            }
            tot[c_old] -= k_i;
            let gain_of = |c: usize, link_c: f64| link_c - tot[c] * k_i / g.two_m;
            let stay = gain_of(c_old, link[c_old]);
            let mut best = (c_old, stay);
            for &c in &touched {
                if c == c_old {
                    continue;
                }
                let gain = gain_of(c, link[c]);
                if gain > best.1 + MOVE_EPS || (best.0 != c_old && (gain - best.1).abs() <= MOVE_EPS && c < best.0) {
                    best = (c, gain);
                }
            }
            // a non-neighbouring community can never beat staying, since
            // staying alone has gain >= 0 while a disconnected one is <= 0
            let target = if best.0 != c_old && best.1 > stay + MOVE_EPS { best.0 } else { c_old };
            tot[target] += k_i;
            if target != c_old {
                let before = trace.as_ref().map(|_| expand(&comm, node_to_level));
                comm[i] = target;
                if let (Some(t), Some(before)) = (trace.as_deref_mut(), before) {
                    t.moves.push(MoveRecord {
                        level,
                        before,
                        after: expand(&comm, node_to_level),
                        gain: (best.1 - stay) / m,
                    });
                }
                moved = true;
                any = true;
            }
            for &c in &touched {
                link[c] = 0.0;
            }
            link[c_old] = 0.0;
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    (comm, any)
}

fn expand(comm: &[usize], node_to_level: &[usize]) -> Partition {
    Partition::from_labels(node_to_level.iter().map(|&l| comm[l]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> SocialGraph {
        SocialGraph::new((0..n).map(|i| format!("n{i}")).collect(), edges.to_vec()).unwrap()
    }

    fn cliques(k: usize, size: usize, bridge: bool) -> SocialGraph {
        let mut e = Vec::new();
        for c in 0..k {
            for i in 0..size {
                for j in i + 1..size {
                    e.push((c * size + i, c * size + j, 1.0));
                }
            }
        }
        if bridge {
            for c in 1..k {
                e.push(((c - 1) * size, c * size, 1.0));
            }
        }
        graph(k * size, &e)
    }

    /// Direct double sum over node pairs.
    fn naive_modularity(g: &SocialGraph, p: &Partition) -> f64 {
        let n = g.node_count();
        let m = g.total_weight();
        let k: Vec<f64> = (0..n).map(|i| g.neighbors(i).iter().map(|x| x.1).sum()).collect();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if p.community_of(i) == p.community_of(j) {
                    q += g.weight(i, j).unwrap_or(0.0) - k[i] * k[j] / (2.0 * m);
                }
            }
        }
        q / (2.0 * m)
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> SocialGraph {
        let mut e = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < p {
                    e.push((i, j, rng.gen_range(0.1..1.0)));
                }
            }
        }
        graph(n, &e)
    }

    #[test]
    fn one_community_has_zero_modularity() {
        let g = cliques(2, 4, true);
        let q = modularity(&g, &Partition::from_labels(vec![0; 8])).unwrap();
        assert!(q.abs() < 1e-15);
    }

    #[test]
    fn two_disjoint_cliques_score_half() {
        let g = cliques(2, 5, false);
        let p = Partition::from_labels((0..10).map(|i| i / 5).collect());
        assert!((modularity(&g, &p).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn edgeless_modularity_is_undefined() {
        let g = graph(3, &[]);
        assert_eq!(modularity(&g, &Partition::singletons(3)), Err(CommunityError::Undefined));
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(2..15);
            let g = random_graph(&mut rng, n, 0.4);
            if g.edge_count() == 0 {
                continue;
            }
            let p = Partition::from_labels((0..n).map(|_| rng.gen_range(0..4)).collect());
            assert!((modularity(&g, &p).unwrap() - naive_modularity(&g, &p)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_node_is_singleton() {
        let p = louvain(&graph(1, &[]), 42).unwrap();
        assert_eq!(p.labels(), &[0]);
        assert_eq!(louvain(&graph(0, &[]), 42), Err(CommunityError::EmptyGraph));
    }

    #[test]
    fn isolated_nodes_stay_alone() {
        let g = graph(5, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        let p = louvain(&g, 3).unwrap();
        assert_eq!(p.community_of(0), p.community_of(1));
        assert_eq!(p.community_of(1), p.community_of(2));
        assert_ne!(p.community_of(3), p.community_of(4));
        assert_ne!(p.community_of(3), p.community_of(0));
    }

    #[test]
    fn recovers_two_bridged_cliques() {
        let g = cliques(2, 8, true);
        for seed in 0..20 {
            let p = louvain(&g, seed).unwrap();
            assert_eq!(p.count(), 2);
            for i in 0..16 {
                assert_eq!(p.community_of(i), p.community_of((i / 8) * 8));
            }
        }
    }

    #[test]
    fn recovers_ring_of_cliques() {
        let g = cliques(6, 5, true);
        let p = louvain(&g, 9).unwrap();
        assert_eq!(p.count(), 6);
    }

    #[test]
    fn moves_match_recomputed_gain_and_levels_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let n = rng.gen_range(4..20);
            let g = random_graph(&mut rng, n, 0.3);
            if g.edge_count() == 0 {
                continue;
            }
            let (p, trace) = louvain_traced(&g, rng.gen()).unwrap();
            for mv in &trace.moves {
                let delta = modularity(&g, &mv.after).unwrap() - modularity(&g, &mv.before).unwrap();
                assert!(mv.gain > 0.0);
                assert!((delta - mv.gain).abs() < 1e-9, "{delta} vs {}", mv.gain);
            }
            let base = modularity(&g, &Partition::singletons(n)).unwrap();
            let mut prev = base;
            for &q in &trace.level_modularity {
                assert!(q >= prev - 1e-12);
                prev = q;
            }
            assert_eq!(p.len(), n);
        }
    }

    #[test]
    fn text_export() {
        let g = graph(3, &[(0, 1, 1.0)]);
        let p = Partition::from_labels(vec![0, 0, 1]);
        assert_eq!(p.to_text(&g), "n0 0\nn1 0\nn2 1\n");
    }

    proptest! {
        #[test]
        fn louvain_is_total_and_deterministic(seed in any::<u64>(), gseed in any::<u64>(), n in 1usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(gseed);
            let g = random_graph(&mut rng, n, 0.25);
            let a = louvain(&g, seed).unwrap();
            let b = louvain(&g, seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), n);
            let mut seen: Vec<usize> = a.labels().to_vec();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen, (0..a.count()).collect::<Vec<_>>());
        }
    }
}
