//! Unit catalog, keyword tagging, initial placement, and the replica store.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result};
use crate::rng;
use crate::topology::Overlay;
use crate::{KeywordId, NodeId, Step, UnitId};

/// An immutable multimedia unit. Content never changes after creation; only
/// its replicas move around.
#[derive(Debug, Clone)]
pub struct Unit {
    pub unit_id: UnitId,
    pub size_bytes: u64,
    /// Non-empty, sorted, deduplicated.
    pub keywords: Vec<KeywordId>,
    /// Set once by initial placement.
    pub origin_node: Option<NodeId>,
}

/// One stored instance of a unit on one node, with the bookkeeping the
/// eviction policies and the transport layer need.
#[derive(Debug, Clone)]
pub struct Replica {
    pub unit_id: UnitId,
    pub node: NodeId,
    pub created_at: Step,
    pub last_used_at: Step,
    pub use_count: u64,
    pub in_delivery: bool,
    /// Hops consumed on the current journey; reset on fulfilling arrival.
    pub hop_index: u32,
    pub journey_id: u64,
}

/// Generated unit catalog plus keyword indexes.
#[derive(Debug, Clone)]
pub struct Catalog {
    pub units: Vec<Unit>,
    pub keyword_count: usize,
    pub units_per_keyword: Vec<Vec<UnitId>>,
    /// Mean unit size (bytes) per keyword, for deadline computation.
    pub mean_size_per_keyword: Vec<f64>,
    pub zipf_exponent: f64,
}

/// Catalog size parameters in bytes: (mean, min, max).
#[derive(Debug, Clone, Copy)]
pub struct SizeParams {
    pub mean: f64,
    pub min: u64,
    pub max: u64,
}

/// Shape of the log-normal size distribution. Only mean/min/max are
/// configured; this spread puts under 1 % of draws outside the bounds.
const SIZE_SIGMA: f64 = 0.9;

impl Catalog {
    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    pub fn unit(&self, id: UnitId) -> &Unit {
        &self.units[id]
    }

    pub fn total_bytes(&self) -> u64 {
        self.units.iter().map(|u| u.size_bytes).sum()
    }

    /// Fixture format: `unit_id size_bytes keyword,keyword,...` per line.
    pub fn write_catalog(&self, w: &mut impl Write) -> Result<()> {
        for u in &self.units {
            let kws: Vec<String> = u.keywords.iter().map(|k| k.to_string()).collect();
            writeln!(w, "{} {} {}", u.unit_id, u.size_bytes, kws.join(","))?;
        }
        Ok(())
    }
}

/// Proportional keyword quotas: every keyword gets at least one unit, the
/// rest are split by largest remainder over the Zipf weights 1/(k+1)^s.
fn zipf_quotas(num_units: usize, num_keywords: usize, s: f64) -> Vec<usize> {
    let weights: Vec<f64> = (0..num_keywords).map(|k| 1.0 / ((k + 1) as f64).powf(s)).collect();
    let total: f64 = weights.iter().sum();
    let spare = num_units - num_keywords;
    let mut counts = vec![1usize; num_keywords];
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(num_keywords);
    let mut assigned = 0usize;
    for (k, w) in weights.iter().enumerate() {
        let exact = spare as f64 * w / total;
        let base = exact.floor() as usize;
        counts[k] += base;
        assigned += base;
        remainders.push((exact - base as f64, k));
    }
    // Largest remainder first; ties to the more popular keyword.
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for i in 0..(spare - assigned) {
        counts[remainders[i % num_keywords].1] += 1;
    }
    counts
}

/// Draws one keyword from the Zipf popularity distribution (rank == id).
pub fn sample_zipf_keyword(num_keywords: usize, s: f64, rng: &mut rng::Rng) -> KeywordId {
    let z = rand_distr::Zipf::new(num_keywords as f64, s).expect("valid zipf");
    (z.sample(rng) as usize).clamp(1, num_keywords) - 1
}

/// Generates the unit catalog: truncated log-normal sizes, one Zipf-quota
/// primary keyword plus 0–2 secondary keywords per unit.
pub fn generate_catalog(
    num_units: usize,
    num_keywords: usize,
    zipf_exponent: f64,
    sizes: SizeParams,
    seed: u64,
) -> Result<Catalog> {
    if num_keywords == 0 || num_units < num_keywords {
        return Err(Error::config("need num_units >= num_keywords >= 1"));
    }
    if zipf_exponent <= 0.0 {
        return Err(Error::config("zipf_exponent must be > 0"));
    }
    if !(sizes.min as f64 <= sizes.mean && sizes.mean <= sizes.max as f64) {
        return Err(Error::config("size mean must lie within [min, max]"));
    }
    let mut rng = rng::stream(seed, "catalog");

    let mu = sizes.mean.ln() - SIZE_SIGMA * SIZE_SIGMA / 2.0;
    let dist = LogNormal::new(mu, SIZE_SIGMA).expect("valid log-normal");
    let draw_size = |rng: &mut rng::Rng| -> u64 {
        for _ in 0..64 {
            let s = dist.sample(rng);
            if s >= sizes.min as f64 && s <= sizes.max as f64 {
                return s.round() as u64;
            }
        }
        sizes.mean.round() as u64
    };

    // Primary keywords by quota, shuffled across unit ids.
    let quotas = zipf_quotas(num_units, num_keywords, zipf_exponent);
    let mut primary: Vec<KeywordId> = Vec::with_capacity(num_units);
    for (k, &c) in quotas.iter().enumerate() {
        primary.extend(std::iter::repeat(k).take(c));
    }
    primary.shuffle(&mut rng);

    let mut units = Vec::with_capacity(num_units);
    for unit_id in 0..num_units {
        let size_bytes = draw_size(&mut rng);
        let mut keywords: BTreeSet<KeywordId> = BTreeSet::new();
        keywords.insert(primary[unit_id]);
        let extra = rng.random_range(0..=2usize);
        for _ in 0..extra {
            for _ in 0..32 {
                let k = sample_zipf_keyword(num_keywords, zipf_exponent, &mut rng);
                if keywords.insert(k) {
                    break;
                }
            }
        }
        units.push(Unit {
            unit_id,
            size_bytes,
            keywords: keywords.into_iter().collect(),
            origin_node: None,
        });
    }

    let mut units_per_keyword = vec![Vec::new(); num_keywords];
    for u in &units {
        for &k in &u.keywords {
            units_per_keyword[k].push(u.unit_id);
        }
    }
    let mean_size_per_keyword = units_per_keyword
        .iter()
        .map(|ids| {
            let total: u64 = ids.iter().map(|&u| units[u].size_bytes).sum();
            total as f64 / ids.len().max(1) as f64
        })
        .collect();

    Ok(Catalog { units, keyword_count: num_keywords, units_per_keyword, mean_size_per_keyword, zipf_exponent })
}

/// How initial contributions are spread over nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contribution {
    /// Everyone contributes with equal probability; fills equalize.
    Uniform,
    /// Few highly motivated contributors: node contribution counts follow a
    /// Zipf distribution over a shuffled node order, capped per node.
    Powerlaw,
}

/// Tracks every replica in the system plus the derived indexes the other
/// modules query each step: per-node fill, per-unit locations, and
/// per-(node, keyword) residence counts.
#[derive(Debug, Clone)]
pub struct ReplicaStore {
    by_node: Vec<BTreeMap<UnitId, Replica>>,
    locations: Vec<BTreeSet<NodeId>>,
    fill: Vec<u64>,
    residence: Vec<u32>,
    keyword_count: usize,
    pub capacity_bytes: u64,
}

impl ReplicaStore {
    pub fn new(node_count: usize, num_units: usize, keyword_count: usize, capacity_bytes: u64) -> Self {
        ReplicaStore {
            by_node: vec![BTreeMap::new(); node_count],
            locations: vec![BTreeSet::new(); num_units],
            fill: vec![0; node_count],
            residence: vec![0; node_count * keyword_count],
            keyword_count,
            capacity_bytes,
        }
    }

    pub fn fill_bytes(&self, node: NodeId) -> u64 {
        self.fill[node]
    }

    pub fn fill_ratio(&self, node: NodeId) -> f64 {
        self.fill[node] as f64 / self.capacity_bytes as f64
    }

    pub fn has(&self, node: NodeId, unit: UnitId) -> bool {
        self.by_node[node].contains_key(&unit)
    }

    pub fn replica(&self, node: NodeId, unit: UnitId) -> Option<&Replica> {
        self.by_node[node].get(&unit)
    }

    pub fn replica_mut(&mut self, node: NodeId, unit: UnitId) -> Option<&mut Replica> {
        self.by_node[node].get_mut(&unit)
    }

    /// Replicas stored at a node, ascending by unit id.
    pub fn replicas_at(&self, node: NodeId) -> impl Iterator<Item = &Replica> {
        self.by_node[node].values()
    }

    pub fn replica_count_at(&self, node: NodeId) -> usize {
        self.by_node[node].len()
    }

    /// Nodes currently holding the unit, ascending.
    pub fn locations(&self, unit: UnitId) -> &BTreeSet<NodeId> {
        &self.locations[unit]
    }

    /// True when some stored unit at `node` carries `keyword`.
    pub fn residence(&self, node: NodeId, keyword: KeywordId) -> bool {
        self.residence[node * self.keyword_count + keyword] > 0
    }

    /// Inserts a replica; fails (returns false) when the node is over
    /// capacity. At most one replica of a unit per node is enforced.
    pub fn insert(&mut self, catalog: &Catalog, replica: Replica) -> bool {
        let node = replica.node;
        let unit = replica.unit_id;
        assert!(!self.has(node, unit), "duplicate replica of unit {unit} at node {node}");
        let size = catalog.unit(unit).size_bytes;
        if self.fill[node] + size > self.capacity_bytes {
            return false;
        }
        self.fill[node] += size;
        for &k in &catalog.unit(unit).keywords {
            self.residence[node * self.keyword_count + k] += 1;
        }
        self.locations[unit].insert(node);
        self.by_node[node].insert(unit, replica);
        true
    }

    pub fn remove(&mut self, catalog: &Catalog, node: NodeId, unit: UnitId) -> Option<Replica> {
        let replica = self.by_node[node].remove(&unit)?;
        self.fill[node] -= catalog.unit(unit).size_bytes;
        for &k in &catalog.unit(unit).keywords {
            self.residence[node * self.keyword_count + k] -= 1;
        }
        self.locations[unit].remove(&node);
        Some(replica)
    }

    /// Drops every replica on a removed node (churn); contents vanish with
    /// the peer.
    pub fn remove_all_at(&mut self, catalog: &Catalog, node: NodeId) -> Vec<UnitId> {
        let units: Vec<UnitId> = self.by_node[node].keys().copied().collect();
        for &u in &units {
            self.remove(catalog, node, u);
        }
        units
    }

    pub fn set_in_delivery(&mut self, node: NodeId, unit: UnitId, flag: bool) {
        if let Some(r) = self.by_node[node].get_mut(&unit) {
            r.in_delivery = flag;
        }
    }

    /// Records a use of the replica: bumps `last_used_at` and, when
    /// `count_use` is set, the LFU counter.
    pub fn mark_used(&mut self, node: NodeId, unit: UnitId, now: Step, count_use: bool) {
        if let Some(r) = self.by_node[node].get_mut(&unit) {
            r.last_used_at = r.last_used_at.max(now);
            if count_use {
                r.use_count += 1;
            }
        }
    }

    /// LFU counter only; serving as a transfer source counts as a use but
    /// does not refresh the LRU timestamp.
    pub fn bump_use_count(&mut self, node: NodeId, unit: UnitId) {
        if let Some(r) = self.by_node[node].get_mut(&unit) {
            r.use_count += 1;
        }
    }

    /// Smallest-id stored unit at `node` carrying `keyword`, if any.
    pub fn local_unit_with_keyword(&self, catalog: &Catalog, node: NodeId, keyword: KeywordId) -> Option<UnitId> {
        if !self.residence(node, keyword) {
            return None;
        }
        self.by_node[node]
            .keys()
            .copied()
            .find(|&u| catalog.unit(u).keywords.contains(&keyword))
    }

    pub fn total_replicas(&self) -> usize {
        self.locations.iter().map(|l| l.len()).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.fill.iter().sum()
    }
}

/// Places each unit on exactly one node (its origin) and records it in the
/// catalog. No node exceeds `fill_fraction * capacity` at t = 0.
pub fn seed_initial_storage(
    overlay: &Overlay,
    catalog: &mut Catalog,
    fill_fraction: f64,
    capacity_bytes: u64,
    contribution: Contribution,
    seed: u64,
    store: &mut ReplicaStore,
) -> Result<()> {
    if !(fill_fraction > 0.0 && fill_fraction <= 1.0) {
        return Err(Error::config("fill_fraction must be in (0, 1]"));
    }
    let cap = (fill_fraction * capacity_bytes as f64).floor() as u64;
    let mut rng = rng::stream(seed, "storage");
    let mut order: Vec<UnitId> = (0..catalog.num_units()).collect();
    order.shuffle(&mut rng);
    // Largest first keeps the greedy placement from stranding a big unit on
    // nodes that are already near the cap; the shuffle still breaks ties.
    order.sort_by_key(|&u| std::cmp::Reverse(catalog.unit(u).size_bytes));
    let alive: Vec<NodeId> = overlay.alive_nodes().collect();
    if alive.is_empty() {
        return Err(Error::config("no alive nodes to seed"));
    }

    let place = |store: &mut ReplicaStore, catalog: &mut Catalog, unit: UnitId, node: NodeId| {
        catalog.units[unit].origin_node = Some(node);
        let ok = store.insert(
            catalog,
            Replica {
                unit_id: unit,
                node,
                created_at: 0,
                last_used_at: 0,
                use_count: 0,
                in_delivery: false,
                hop_index: 0,
                journey_id: unit as u64,
            },
        );
        debug_assert!(ok, "seeding stayed below the hard capacity");
    };

    match contribution {
        Contribution::Uniform => {
            // Least-filled node first keeps every node near the same fill.
            let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<(u64, NodeId)>> =
                alive.iter().map(|&n| std::cmp::Reverse((0u64, n))).collect();
            for unit in order {
                let size = catalog.unit(unit).size_bytes;
                let std::cmp::Reverse((fill, node)) =
                    heap.pop().expect("heap tracks every alive node");
                if fill + size > cap {
                    return Err(Error::PlacementOverflow { unit, size });
                }
                place(store, catalog, unit, node);
                heap.push(std::cmp::Reverse((fill + size, node)));
            }
        }
        Contribution::Powerlaw => {
            let mut ranked = alive.clone();
            ranked.shuffle(&mut rng);
            for unit in order {
                let size = catalog.unit(unit).size_bytes;
                let mut placed = false;
                for _ in 0..64 {
                    let r = sample_zipf_keyword(ranked.len(), 1.0, &mut rng);
                    let node = ranked[r];
                    if store.fill_bytes(node) + size <= cap {
                        place(store, catalog, unit, node);
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    // Highly motivated nodes are full; fall back to the
                    // least-filled node that still fits.
                    let node = alive
                        .iter()
                        .copied()
                        .filter(|&n| store.fill_bytes(n) + size <= cap)
                        .min_by_key(|&n| (store.fill_bytes(n), n));
                    match node {
                        Some(n) => place(store, catalog, unit, n),
                        None => return Err(Error::PlacementOverflow { unit, size }),
                    }
                }
            }
        }
    }
    Ok(())
}
