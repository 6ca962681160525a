//! Overlay graphs: generation, queries, churn mutation, edge-list fixtures.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;
use crate::NodeId;

/// Undirected weighted overlay over nodes `0..node_count`.
///
/// Edges carry a bandwidth in bits per second. Nodes carry a liveness flag;
/// a removed node keeps its row in the structure but all incident edges
/// become unusable (they are filtered from every alive-view query).
#[derive(Debug, Clone)]
pub struct Overlay {
    node_count: usize,
    adj: Vec<Vec<NodeId>>,
    bandwidth: BTreeMap<(NodeId, NodeId), f64>,
    alive: Vec<bool>,
    alive_count: usize,
}

fn edge_key(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl Overlay {
    pub fn empty(node_count: usize) -> Self {
        Overlay {
            node_count,
            adj: vec![Vec::new(); node_count],
            bandwidth: BTreeMap::new(),
            alive: vec![true; node_count],
            alive_count: node_count,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn alive_count(&self) -> usize {
        self.alive_count
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        self.alive[node]
    }

    pub fn alive_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.node_count).filter(|&n| self.alive[n])
    }

    pub fn edge_count(&self) -> usize {
        self.bandwidth.len()
    }

    /// All edges, dead or alive endpoints included, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.bandwidth.iter().map(|(&(u, v), &bw)| (u, v, bw))
    }

    /// Edges whose both endpoints are alive, sorted.
    pub fn alive_edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.edges().filter(|&(u, v, _)| self.alive[u] && self.alive[v])
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.bandwidth.contains_key(&edge_key(u, v))
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId, bandwidth_bps: f64) {
        assert!(u != v, "self-loop");
        assert!(u < self.node_count && v < self.node_count, "node id out of range");
        if self.bandwidth.insert(edge_key(u, v), bandwidth_bps).is_none() {
            let pos = self.adj[u].binary_search(&v).unwrap_err();
            self.adj[u].insert(pos, v);
            let pos = self.adj[v].binary_search(&u).unwrap_err();
            self.adj[v].insert(pos, u);
        }
    }

    pub fn remove_edge(&mut self, u: NodeId, v: NodeId) -> Option<f64> {
        let bw = self.bandwidth.remove(&edge_key(u, v))?;
        if let Ok(pos) = self.adj[u].binary_search(&v) {
            self.adj[u].remove(pos);
        }
        if let Ok(pos) = self.adj[v].binary_search(&u) {
            self.adj[v].remove(pos);
        }
        Some(bw)
    }

    /// Neighbors regardless of liveness, ascending.
    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adj[node]
    }

    /// Alive neighbors of an alive node, ascending.
    pub fn alive_neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adj[node].iter().copied().filter(|&m| self.alive[m])
    }

    pub fn bandwidth(&self, u: NodeId, v: NodeId) -> Option<f64> {
        self.bandwidth.get(&edge_key(u, v)).copied()
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adj[node].len()
    }

    /// Marks a node dead. Incident edges become unusable; isolated remnants
    /// are left as-is (no reconnection).
    pub fn remove_node(&mut self, node: NodeId) -> Result<()> {
        if !self.alive[node] {
            return Err(Error::DeadNode(node));
        }
        self.alive[node] = false;
        self.alive_count -= 1;
        Ok(())
    }

    /// Multiplies every edge bandwidth by a factor drawn uniformly from
    /// `[1 - jitter, 1 + jitter]`. A jitter of 0 keeps links uniform.
    pub fn apply_bandwidth_jitter(&mut self, jitter: f64, seed: u64) {
        if jitter <= 0.0 {
            return;
        }
        let mut rng = rng::stream(seed, "topology-jitter");
        for (_, bw) in self.bandwidth.iter_mut() {
            let f = 1.0 + jitter * (rng.random::<f64>() * 2.0 - 1.0);
            *bw *= f.max(0.0);
        }
    }

    /// BFS over alive nodes from `start`; returns hop distances
    /// (`usize::MAX` for unreachable or dead nodes).
    pub fn bfs_hops(&self, start: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count];
        if !self.alive[start] {
            return dist;
        }
        let mut queue = std::collections::VecDeque::new();
        dist[start] = 0;
        queue.push_back(start);
        while let Some(n) = queue.pop_front() {
            for &m in &self.adj[n] {
                if self.alive[m] && dist[m] == usize::MAX {
                    dist[m] = dist[n] + 1;
                    queue.push_back(m);
                }
            }
        }
        dist
    }

    /// True if the alive subgraph is connected (vacuously true when fewer
    /// than two nodes are alive).
    pub fn is_connected(&self) -> bool {
        let Some(start) = self.alive_nodes().next() else {
            return true;
        };
        let dist = self.bfs_hops(start);
        self.alive_nodes().all(|n| dist[n] != usize::MAX)
    }

    /// Longest shortest-path length in hops among alive nodes.
    pub fn diameter(&self) -> Result<usize> {
        if !self.is_connected() {
            return Err(Error::Disconnected);
        }
        let mut best = 0;
        for n in self.alive_nodes() {
            let dist = self.bfs_hops(n);
            for m in self.alive_nodes() {
                if dist[m] != usize::MAX {
                    best = best.max(dist[m]);
                }
            }
        }
        Ok(best)
    }

    /// Writes the edge-list fixture format: a `nodes <n>` header followed by
    /// one `u v bandwidth_bps` triple per line, edges sorted.
    pub fn write_edge_list(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "nodes {}", self.node_count)?;
        for (u, v, bw) in self.edges() {
            writeln!(w, "{} {} {}", u, v, bw)?;
        }
        Ok(())
    }

    /// Parses the edge-list fixture format produced by [`write_edge_list`].
    ///
    /// [`write_edge_list`]: Overlay::write_edge_list
    pub fn read_edge_list(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (lineno, header) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "missing header".into() })
            .and_then(|(i, l)| Ok((i + 1, l?)))?;
        let mut parts = header.split_whitespace();
        let n = match (parts.next(), parts.next()) {
            (Some("nodes"), Some(count)) => count.parse::<usize>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad node count: {e}"),
            })?,
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected `nodes <n>`, got `{header}`"),
                })
            }
        };
        let mut overlay = Overlay::empty(n);
        for (i, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            let parse = |s: Option<&str>, what: &str| -> Result<f64> {
                s.ok_or_else(|| Error::Parse { line: i + 1, msg: format!("missing {what}") })?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse { line: i + 1, msg: format!("bad {what}: {e}") })
            };
            let u = parse(f.next(), "source")? as usize;
            let v = parse(f.next(), "target")? as usize;
            let bw = parse(f.next(), "bandwidth")?;
            if u == v || u >= n || v >= n {
                return Err(Error::Parse { line: i + 1, msg: format!("bad edge {u} {v}") });
            }
            overlay.add_edge(u, v, bw);
        }
        Ok(overlay)
    }
}

/// Resample budget for connected G(n, p) generation.
const CONNECT_ATTEMPTS: u32 = 1_000;

/// Connected Erdős–Rényi overlay: a pure function of `seed`, resampled with
/// an incremented sub-seed until the graph comes out connected.
pub fn generate_random_overlay(
    n: usize,
    edge_probability: f64,
    bandwidth_bps: f64,
    seed: u64,
) -> Result<Overlay> {
    if n < 2 {
        return Err(Error::config("overlay needs at least 2 nodes"));
    }
    if !(edge_probability > 0.0 && edge_probability <= 1.0) {
        return Err(Error::config("edge_probability must be in (0, 1]"));
    }
    for attempt in 0..CONNECT_ATTEMPTS {
        let mut rng = rng::substream(seed, "topology-random", attempt as u64);
        let mut overlay = Overlay::empty(n);
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random::<f64>() < edge_probability {
                    overlay.add_edge(u, v, bandwidth_bps);
                }
            }
        }
        if overlay.is_connected() {
            return Ok(overlay);
        }
    }
    Err(Error::ResampleBudgetExhausted { attempts: CONNECT_ATTEMPTS })
}

/// Connected random graph with exactly `edges` edges: a uniformly attached
/// random tree plus uniformly sampled extra edges.
fn random_connected_with_edges(n: usize, edges: usize, bandwidth_bps: f64, rng: &mut rng::Rng) -> Result<Overlay> {
    let max_edges = n * (n - 1) / 2;
    if edges < n - 1 || edges > max_edges {
        return Err(Error::config(format!(
            "target_edges must be in [{}, {}] for {} nodes",
            n - 1,
            max_edges,
            n
        )));
    }
    let mut overlay = Overlay::empty(n);
    for v in 1..n {
        let u = rng.random_range(0..v);
        overlay.add_edge(u, v, bandwidth_bps);
    }
    while overlay.edge_count() < edges {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && !overlay.has_edge(u, v) {
            overlay.add_edge(u, v, bandwidth_bps);
        }
    }
    Ok(overlay)
}

/// Scale-free overlay via edge rewiring: start from a connected random graph
/// and repeatedly replace a uniformly chosen edge by one whose far endpoint
/// is picked proportionally to current degree. Steps that would disconnect
/// the graph (or duplicate an edge) are rolled back, so the result stays
/// connected with exactly `target_edges` edges.
pub fn generate_power_law_overlay(
    n: usize,
    target_edges: usize,
    rewire_steps: usize,
    bandwidth_bps: f64,
    seed: u64,
) -> Result<Overlay> {
    if n < 2 {
        return Err(Error::config("overlay needs at least 2 nodes"));
    }
    let mut rng = rng::stream(seed, "topology-powerlaw");
    let mut overlay = random_connected_with_edges(n, target_edges, bandwidth_bps, &mut rng)?;
    // Flat edge list mirrors the map for O(1) uniform edge choice; picking a
    // uniform (edge, side) pair is exactly degree-proportional vertex choice.
    let mut edge_list: Vec<(NodeId, NodeId)> = overlay.edges().map(|(u, v, _)| (u, v)).collect();
    for _ in 0..rewire_steps {
        let drop_idx = rng.random_range(0..edge_list.len());
        let (du, dv) = edge_list[drop_idx];
        let a = rng.random_range(0..n);
        let pick = edge_list[rng.random_range(0..edge_list.len())];
        let b = if rng.random::<bool>() { pick.0 } else { pick.1 };
        if a == b || (edge_key(a, b) == edge_key(du, dv)) || overlay.has_edge(a, b) {
            continue;
        }
        overlay.remove_edge(du, dv);
        overlay.add_edge(a, b, bandwidth_bps);
        if overlay.is_connected() {
            edge_list.swap_remove(drop_idx);
            edge_list.push((a, b));
        } else {
            overlay.remove_edge(a, b);
            overlay.add_edge(du, dv, bandwidth_bps);
        }
    }
    Ok(overlay)
}

/// Median diameter of connected G(n, p) graphs over the given seeds.
pub fn median_diameter(n: usize, p: f64, bandwidth_bps: f64, seeds: &[u64]) -> Result<usize> {
    let mut diameters = Vec::with_capacity(seeds.len());
    for &s in seeds {
        diameters.push(generate_random_overlay(n, p, bandwidth_bps, s)?.diameter()?);
    }
    diameters.sort_unstable();
    Ok(diameters[diameters.len() / 2])
}

/// Calibrates the edge probability so the median diameter over `seeds`
/// matches `target_diameter`: a bisection over p (diameter falls as p
/// grows). Used once to pin scenario defaults.
pub fn calibrate_edge_probability(
    n: usize,
    target_diameter: usize,
    bandwidth_bps: f64,
    seeds: &[u64],
) -> Result<f64> {
    let mut lo = 1.2 * (n as f64).ln() / n as f64; // safely above the connectivity threshold
    let mut hi = 0.5;
    for _ in 0..24 {
        let mid = 0.5 * (lo + hi);
        let d = median_diameter(n, mid, bandwidth_bps, seeds)?;
        if d > target_diameter {
            lo = mid;
        } else if d < target_diameter {
            hi = mid;
        } else {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent all-pairs oracle (Floyd–Warshall) over alive nodes.
    fn floyd_warshall_diameter(o: &Overlay) -> usize {
        let n = o.node_count();
        const INF: usize = usize::MAX / 4;
        let mut d = vec![vec![INF; n]; n];
        for v in o.alive_nodes() {
            d[v][v] = 0;
        }
        for (u, v, _) in o.alive_edges() {
            d[u][v] = 1;
            d[v][u] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        let mut best = 0;
        for i in o.alive_nodes() {
            for j in o.alive_nodes() {
                assert!(d[i][j] < INF, "oracle: disconnected");
                best = best.max(d[i][j]);
            }
        }
        best
    }

    fn path3() -> Overlay {
        let mut o = Overlay::empty(3);
        o.add_edge(0, 1, 1.0);
        o.add_edge(1, 2, 1.0);
        o
    }

    #[test]
    fn two_node_complete_graph() {
        let o = generate_random_overlay(2, 1.0, 1.0, 0).unwrap();
        assert_eq!(o.edge_count(), 1);
        assert!(o.has_edge(0, 1));
        assert_eq!(o.diameter().unwrap(), 1);
    }

    #[test]
    fn diameter_of_path_and_complete_graph() {
        assert_eq!(path3().diameter().unwrap(), 2);
        let mut k5 = Overlay::empty(5);
        for u in 0..5 {
            for v in (u + 1)..5 {
                k5.add_edge(u, v, 1.0);
            }
        }
        assert_eq!(k5.diameter().unwrap(), 1);
    }

    #[test]
    fn diameter_matches_floyd_warshall_oracle() {
        let o = generate_random_overlay(20, 0.2, 1.0, 3).unwrap();
        assert_eq!(o.diameter().unwrap(), floyd_warshall_diameter(&o));
        let o = generate_random_overlay(10, 0.4, 1.0, 7).unwrap();
        assert_eq!(o.diameter().unwrap(), floyd_warshall_diameter(&o));
    }

    #[test]
    fn disconnected_diameter_is_error() {
        let mut o = path3();
        o.remove_node(1).unwrap();
        assert!(matches!(o.diameter(), Err(Error::Disconnected)));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_random_overlay(30, 0.15, 5.0, 11).unwrap();
        let b = generate_random_overlay(30, 0.15, 5.0, 11).unwrap();
        let ea: Vec<_> = a.edges().collect();
        let eb: Vec<_> = b.edges().collect();
        assert_eq!(ea, eb);
    }

    #[test]
    fn edge_count_near_expectation() {
        // 4-sigma band around p*n(n-1)/2 for a 60-node graph.
        let n = 60usize;
        let p = 0.3;
        let pairs = (n * (n - 1) / 2) as f64;
        let o = generate_random_overlay(n, p, 1.0, 5).unwrap();
        let sigma = (pairs * p * (1.0 - p)).sqrt();
        let delta = (o.edge_count() as f64 - pairs * p).abs();
        assert!(delta <= 4.0 * sigma, "edge count {} off expectation {}", o.edge_count(), pairs * p);
    }

    #[test]
    fn resample_budget_error() {
        // p so low that 5 nodes essentially never connect.
        let err = generate_random_overlay(5, 1e-9, 1.0, 0).unwrap_err();
        assert!(matches!(err, Error::ResampleBudgetExhausted { .. }));
    }

    #[test]
    fn remove_leaf_keeps_star_connected_remove_hub_isolates() {
        let mut star = Overlay::empty(5);
        for v in 1..5 {
            star.add_edge(0, v, 1.0);
        }
        let mut leaf_removed = star.clone();
        leaf_removed.remove_node(4).unwrap();
        assert!(leaf_removed.is_connected());

        let mut hub_removed = star;
        hub_removed.remove_node(0).unwrap();
        assert!(!hub_removed.is_connected());
        for v in 1..5 {
            assert_eq!(hub_removed.alive_neighbors(v).count(), 0);
        }
    }

    #[test]
    fn remove_node_twice_is_error() {
        let mut o = path3();
        o.remove_node(0).unwrap();
        assert!(matches!(o.remove_node(0), Err(Error::DeadNode(0))));
    }

    #[test]
    fn removals_match_set_difference_oracle() {
        let mut o = generate_random_overlay(50, 0.12, 1.0, 9).unwrap();
        let before: std::collections::BTreeSet<(usize, usize)> =
            o.alive_edges().map(|(u, v, _)| (u, v)).collect();
        let victims = [3usize, 17, 29, 30, 44];
        for &v in &victims {
            o.remove_node(v).unwrap();
        }
        assert_eq!(o.alive_count(), 45);
        let expected: std::collections::BTreeSet<(usize, usize)> = before
            .iter()
            .copied()
            .filter(|&(u, v)| !victims.contains(&u) && !victims.contains(&v))
            .collect();
        let after: std::collections::BTreeSet<(usize, usize)> =
            o.alive_edges().map(|(u, v, _)| (u, v)).collect();
        assert_eq!(after, expected);
    }

    #[test]
    fn power_law_zero_rewires_is_identity_on_edge_count() {
        let o = generate_power_law_overlay(3, 3, 0, 1.0, 0).unwrap();
        assert_eq!(o.edge_count(), 3);
        assert!(o.has_edge(0, 1) && o.has_edge(0, 2) && o.has_edge(1, 2));
    }

    #[test]
    fn power_law_grows_hubs() {
        let n = 200;
        let o = generate_power_law_overlay(n, 400, 50_000, 1.0, 3).unwrap();
        assert!(o.is_connected());
        assert_eq!(o.edge_count(), 400);
        // Recompute the degree histogram from the emitted edge list.
        let mut deg = vec![0usize; n];
        for (u, v, _) in o.edges() {
            deg[u] += 1;
            deg[v] += 1;
        }
        for v in 0..n {
            assert_eq!(deg[v], o.degree(v));
        }
        let mean = deg.iter().sum::<usize>() as f64 / n as f64;
        let max = *deg.iter().max().unwrap() as f64;
        assert!(max >= 3.0 * mean, "max degree {max} < 3x mean {mean}");
    }

    #[test]
    fn power_law_rewires_preserve_connectivity_and_determinism() {
        let a = generate_power_law_overlay(80, 160, 2_000, 1.0, 4).unwrap();
        assert!(a.is_connected());
        let b = generate_power_law_overlay(80, 160, 2_000, 1.0, 4).unwrap();
        let ea: Vec<_> = a.edges().collect();
        let eb: Vec<_> = b.edges().collect();
        assert_eq!(ea, eb);
    }

    #[test]
    fn edge_list_round_trip() {
        let o = generate_random_overlay(12, 0.3, 1.25e7, 2).unwrap();
        let mut buf = Vec::new();
        o.write_edge_list(&mut buf).unwrap();
        let back = Overlay::read_edge_list(std::io::BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(back.node_count(), o.node_count());
        let ea: Vec<_> = o.edges().collect();
        let eb: Vec<_> = back.edges().collect();
        assert_eq!(ea, eb);
    }

    /// Calibration probe behind `--ignored`: prints the edge probability
    /// that hits a median diameter of 6 on 50 nodes, and scans power-law
    /// edge budgets for a 1,000-node diameter near 13. Its output pins the
    /// scenario defaults.
    #[test]
    #[ignore]
    fn calibration_probe() {
        let seeds: Vec<u64> = (1..=20).collect();
        for p in [0.070, 0.075, 0.080, 0.085, 0.090] {
            let mut all = Vec::new();
            for &s in &seeds {
                all.push(generate_random_overlay(50, p, 1e8, s).unwrap().diameter().unwrap());
            }
            all.sort_unstable();
            println!("50-node p {p:.3} -> median {} diameters {all:?}", all[all.len() / 2]);
        }
        for edges in [1_550usize, 1_600, 1_650, 1_700] {
            let mut ds = Vec::new();
            for seed in 1..=8u64 {
                let o = generate_power_law_overlay(1_000, edges, 10 * edges, 1e8, seed).unwrap();
                ds.push(o.diameter().unwrap());
            }
            println!("1000-node edges {edges} rewires {} -> diameters {ds:?}", 10 * edges);
        }
    }

    #[test]
    fn bandwidth_jitter_default_is_uniform() {
        let mut o = path3();
        o.apply_bandwidth_jitter(0.0, 1);
        assert_eq!(o.bandwidth(0, 1), Some(1.0));
        let mut o2 = path3();
        o2.apply_bandwidth_jitter(0.25, 1);
        let bw = o2.bandwidth(0, 1).unwrap();
        assert!(bw >= 0.75 && bw <= 1.25 && bw != 1.0);
    }
}
