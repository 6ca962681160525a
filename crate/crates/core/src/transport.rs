//! Gradient-driven unit migration: move planning, bandwidth-limited transfer
//! scheduling over FIFO links, hop budgeting, and the replication strategies
//! that decide which copies persist.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::content::{Catalog, Replica, ReplicaStore};
use crate::error::{Error, Result};
use crate::hormone::{HormoneField, ParameterSet};
use crate::metrics::MetricsLog;
use crate::requests::{self, RequestBook};
use crate::rng;
use crate::topology::Overlay;
use crate::{KeywordId, NodeId, Step, UnitId};

/// A unit in flight on one directed link.
#[derive(Debug, Clone)]
pub struct Transfer {
    pub unit_id: UnitId,
    pub from: NodeId,
    pub to: NodeId,
    pub bytes_remaining: f64,
    /// Hops already consumed on this journey when the transfer started.
    pub hop_index: u32,
    pub journey_id: u64,
    /// Step the transfer was planned; fills the optional trace.
    pub start_step: Step,
}

/// Which copies persist when a unit travels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplicationStrategy {
    /// Keep a copy at the journey origin; the requester ends up with one too.
    Owner,
    /// Every intermediate node keeps a copy.
    Path,
    /// Intermediate nodes keep a copy with probability `1 - fill_ratio`.
    PathAdaptive,
    /// Keep a copy where at least two neighbors hold hormones for the unit.
    SimpleHormone,
    /// Keep a copy where a unit keyword ranks in the local top share.
    LocalPopularity,
    /// Keep a copy where the neighborhood's aggregated popularity region
    /// rank beats the threshold.
    NeighborPopularityRank,
    /// Same aggregation over neighbor hormone rankings.
    NeighborHormoneRank,
}

impl ReplicationStrategy {
    pub const ALL: [ReplicationStrategy; 7] = [
        ReplicationStrategy::Owner,
        ReplicationStrategy::Path,
        ReplicationStrategy::PathAdaptive,
        ReplicationStrategy::SimpleHormone,
        ReplicationStrategy::LocalPopularity,
        ReplicationStrategy::NeighborPopularityRank,
        ReplicationStrategy::NeighborHormoneRank,
    ];
}

impl fmt::Display for ReplicationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ReplicationStrategy::Owner => "owner",
            ReplicationStrategy::Path => "path",
            ReplicationStrategy::PathAdaptive => "path_adaptive",
            ReplicationStrategy::SimpleHormone => "simple_hormone",
            ReplicationStrategy::LocalPopularity => "local_popularity",
            ReplicationStrategy::NeighborPopularityRank => "neighbor_popularity_rank",
            ReplicationStrategy::NeighborHormoneRank => "neighbor_hormone_rank",
        };
        f.write_str(s)
    }
}

impl FromStr for ReplicationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "owner" => Ok(ReplicationStrategy::Owner),
            "path" => Ok(ReplicationStrategy::Path),
            "path_adaptive" => Ok(ReplicationStrategy::PathAdaptive),
            "simple_hormone" => Ok(ReplicationStrategy::SimpleHormone),
            "local_popularity" => Ok(ReplicationStrategy::LocalPopularity),
            "neighbor_popularity_rank" => Ok(ReplicationStrategy::NeighborPopularityRank),
            "neighbor_hormone_rank" => Ok(ReplicationStrategy::NeighborHormoneRank),
            other => Err(Error::config(format!("unknown replication strategy `{other}`"))),
        }
    }
}

/// Replication configuration: the strategy plus the shared rank threshold
/// ("best 30 %") and the per-node transit buffer bound for arrivals that hit
/// a full store.
#[derive(Debug, Clone, Copy)]
pub struct TransportConfig {
    pub strategy: ReplicationStrategy,
    pub rank_threshold: f64,
    pub transit_buffer_slots: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            strategy: ReplicationStrategy::NeighborHormoneRank,
            rank_threshold: 0.30,
            transit_buffer_slots: 8,
        }
    }
}

#[derive(Debug, Default, Clone)]
struct LinkState {
    active: Option<Transfer>,
    queue: VecDeque<Transfer>,
}

/// All in-flight state: one active transfer plus a FIFO queue per directed
/// link, and per-node transit buffers for arrivals waiting on storage.
#[derive(Debug, Default, Clone)]
pub struct TransferBoard {
    links: BTreeMap<(NodeId, NodeId), LinkState>,
    parked: BTreeMap<NodeId, VecDeque<Transfer>>,
    next_journey_id: u64,
}

impl TransferBoard {
    pub fn new(first_journey_id: u64) -> Self {
        TransferBoard { next_journey_id: first_journey_id, ..Default::default() }
    }

    pub fn fresh_journey_id(&mut self) -> u64 {
        let id = self.next_journey_id;
        self.next_journey_id += 1;
        id
    }

    pub fn enqueue(&mut self, t: Transfer) {
        let link = self.links.entry((t.from, t.to)).or_default();
        if link.active.is_none() {
            link.active = Some(t);
        } else {
            link.queue.push_back(t);
        }
    }

    pub fn in_flight(&self) -> usize {
        self.links.values().map(|l| l.queue.len() + usize::from(l.active.is_some())).sum()
    }

    pub fn parked_count(&self, node: NodeId) -> usize {
        self.parked.get(&node).map_or(0, |q| q.len())
    }

    pub fn park(&mut self, t: Transfer) {
        self.parked.entry(t.to).or_default().push_back(t);
    }

    /// Advances every active transfer by one step of link bandwidth and
    /// returns the completed ones, in ascending link order. Freed links are
    /// not refilled here; call [`activate_queued`] after arrivals commit.
    ///
    /// [`activate_queued`]: TransferBoard::activate_queued
    pub fn step_transfers(&mut self, overlay: &Overlay, dt: f64) -> Vec<Transfer> {
        assert!(dt > 0.0);
        let mut done = Vec::new();
        for (&(from, to), link) in self.links.iter_mut() {
            if let Some(t) = link.active.as_mut() {
                let bw = overlay.bandwidth(from, to).unwrap_or(0.0);
                t.bytes_remaining -= bw * dt / 8.0;
                if t.bytes_remaining <= 1e-9 {
                    done.push(link.active.take().unwrap());
                }
            }
        }
        done
    }

    /// Moves queued transfers onto freed links, FIFO per link.
    pub fn activate_queued(&mut self) {
        self.links.retain(|_, link| {
            if link.active.is_none() {
                link.active = link.queue.pop_front();
            }
            link.active.is_some() || !link.queue.is_empty()
        });
    }

    /// Drops every transfer touching a removed node (active, queued, or
    /// parked at it). Returns the dropped transfers so the caller can
    /// release source copies.
    pub fn drop_for_dead_node(&mut self, dead: NodeId) -> Vec<Transfer> {
        let mut dropped = Vec::new();
        let keys: Vec<(NodeId, NodeId)> = self
            .links
            .keys()
            .copied()
            .filter(|&(u, v)| u == dead || v == dead)
            .collect();
        for key in keys {
            let mut link = self.links.remove(&key).unwrap();
            if let Some(t) = link.active.take() {
                dropped.push(t);
            }
            dropped.extend(link.queue.drain(..));
        }
        if let Some(q) = self.parked.remove(&dead) {
            dropped.extend(q);
        }
        dropped
    }

    fn take_parked_nodes(&self) -> Vec<NodeId> {
        self.parked.keys().copied().collect()
    }
}

/// Region rank: the arithmetic mean of the natural logs of the collected
/// ranks. The log damps peak ranks.
pub fn region_rank(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Empty("region_rank needs at least one rank"));
    }
    if ranks.iter().any(|&r| r < 1) {
        return Err(Error::config("ranks are 1-based"));
    }
    Ok(ranks.iter().map(|&r| (r as f64).ln()).sum::<f64>() / ranks.len() as f64)
}

/// Plans this step's migrations: every idle replica with hop budget left
/// moves to the alive neighbor with the steepest positive gradient over the
/// unit's keywords, provided the gradient strictly exceeds `m`. At most one
/// transfer per replica; ties resolve to the smallest (keyword, neighbor).
pub fn plan_moves(
    overlay: &Overlay,
    field: &HormoneField,
    store: &ReplicaStore,
    catalog: &Catalog,
    params: &ParameterSet,
    now: Step,
) -> Vec<Transfer> {
    let mut moves = Vec::new();
    // Replicas on a node share the per-keyword steepest edge, so compute it
    // lazily once per (node, keyword). The field is frozen during planning.
    let mut best_by_kw: Vec<Option<(f64, NodeId)>> = vec![None; field.keyword_count()];
    let mut nbrs: Vec<NodeId> = Vec::new();
    for node in overlay.alive_nodes() {
        if store.replica_count_at(node) == 0 {
            continue;
        }
        best_by_kw.iter_mut().for_each(|e| *e = None);
        nbrs.clear();
        nbrs.extend(overlay.alive_neighbors(node));
        if nbrs.is_empty() {
            continue;
        }
        for replica in store.replicas_at(node) {
            if replica.in_delivery || replica.hop_index >= params.maxhops {
                continue;
            }
            let unit = catalog.unit(replica.unit_id);
            let mut best: Option<(f64, KeywordId, NodeId)> = None;
            for &kw in &unit.keywords {
                let (delta, nbr) = *best_by_kw[kw].get_or_insert_with(|| {
                    let own = field.level(node, kw);
                    let mut top = (f64::NEG_INFINITY, NodeId::MAX);
                    for &n in &nbrs {
                        let delta = field.level(n, kw) - own;
                        if delta > top.0 {
                            top = (delta, n);
                        }
                    }
                    top
                });
                if best.map_or(true, |(b, _, _)| delta > b) {
                    best = Some((delta, kw, nbr));
                }
            }
            if let Some((delta, _, to)) = best {
                if delta > params.m {
                    moves.push(Transfer {
                        unit_id: replica.unit_id,
                        from: node,
                        to,
                        bytes_remaining: unit.size_bytes as f64,
                        hop_index: replica.hop_index,
                        journey_id: replica.journey_id,
                        start_step: now,
                    });
                }
            }
        }
    }
    moves
}

/// Best (smallest) popularity rank of the unit's keywords in a node's
/// request history, with the history table size.
fn unit_popularity_rank(book: &RequestBook, node: NodeId, unit_kws: &[KeywordId]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for &kw in unit_kws {
        if let Some((rank, len)) = book.popularity_rank(node, kw) {
            if best.map_or(true, |(b, _)| rank < b) {
                best = Some((rank, len));
            }
        }
    }
    best
}

/// Best hormone rank of the unit's keywords at a node: keywords with
/// positive level are ranked by descending level (ties to the smaller id);
/// returns the best rank together with the number of ranked keywords.
fn unit_hormone_rank(field: &HormoneField, node: NodeId, unit_kws: &[KeywordId]) -> Option<(usize, usize)> {
    let k = field.keyword_count();
    let table_len = (0..k).filter(|&kw| field.level(node, kw) > 0.0).count();
    if table_len == 0 {
        return None;
    }
    let mut best: Option<usize> = None;
    for &kw in unit_kws {
        let own = field.level(node, kw);
        if own <= 0.0 {
            continue;
        }
        let rank = 1 + (0..k)
            .filter(|&other| {
                let lv = field.level(node, other);
                lv > own || (lv == own && other < kw)
            })
            .count();
        if best.map_or(true, |b| rank < b) {
            best = Some(rank);
        }
    }
    best.map(|r| (r, table_len))
}

/// Aggregated neighborhood decision shared by the two ranking strategies:
/// replicate iff region_rank(neighbor ranks) < ln(threshold * mean table
/// size). Neighbors without a rank for the unit contribute nothing.
fn region_rank_retains(ranks_and_sizes: &[(usize, usize)], threshold: f64) -> bool {
    if ranks_and_sizes.is_empty() {
        return false;
    }
    let ranks: Vec<usize> = ranks_and_sizes.iter().map(|&(r, _)| r).collect();
    let mean_size = ranks_and_sizes.iter().map(|&(_, m)| m as f64).sum::<f64>()
        / ranks_and_sizes.len() as f64;
    let bound = (threshold * mean_size).ln();
    match region_rank(&ranks) {
        Ok(r) => r < bound,
        Err(_) => false,
    }
}

/// Does the forwarding node keep its copy when the unit moves on?
fn retain_at_source(
    t: &Transfer,
    overlay: &Overlay,
    field: &HormoneField,
    store: &ReplicaStore,
    book: &RequestBook,
    catalog: &Catalog,
    cfg: &TransportConfig,
    rng: &mut rng::Rng,
) -> bool {
    let src = t.from;
    let kws = &catalog.unit(t.unit_id).keywords;
    match cfg.strategy {
        // The original stays with the journey origin; intermediates forward
        // without keeping.
        ReplicationStrategy::Owner => t.hop_index == 0,
        ReplicationStrategy::Path => t.hop_index >= 1,
        ReplicationStrategy::PathAdaptive => {
            t.hop_index >= 1 && rng.random::<f64>() < 1.0 - store.fill_ratio(src)
        }
        ReplicationStrategy::SimpleHormone => {
            let holders = overlay
                .alive_neighbors(src)
                .filter(|&nb| kws.iter().any(|&k| field.level(nb, k) > 0.0))
                .count();
            holders >= 2
        }
        ReplicationStrategy::LocalPopularity => match unit_popularity_rank(book, src, kws) {
            Some((rank, len)) => rank as f64 <= cfg.rank_threshold * len as f64,
            None => false,
        },
        ReplicationStrategy::NeighborPopularityRank => {
            let ranks: Vec<(usize, usize)> = overlay
                .alive_neighbors(src)
                .filter_map(|nb| unit_popularity_rank(book, nb, kws))
                .collect();
            region_rank_retains(&ranks, cfg.rank_threshold)
        }
        ReplicationStrategy::NeighborHormoneRank => {
            let ranks: Vec<(usize, usize)> = overlay
                .alive_neighbors(src)
                .filter_map(|nb| unit_hormone_rank(field, nb, kws))
                .collect();
            region_rank_retains(&ranks, cfg.rank_threshold)
        }
    }
}

/// What happened to an arriving transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalOutcome {
    /// Registered (or merged into an existing replica) at the destination.
    Committed { fulfilled: usize, kept_source: bool },
    /// Destination store full; arrival waits in the transit buffer.
    Parked,
    /// Transit buffer full too; transfer failed, source copy released.
    Failed,
    /// Destination died mid-flight; transfer dropped, source copy released.
    DroppedDeadDestination,
}

fn release_source(store: &mut ReplicaStore, overlay: &Overlay, t: &Transfer) {
    if overlay.is_alive(t.from) && store.has(t.from, t.unit_id) {
        store.set_in_delivery(t.from, t.unit_id, false);
    }
}

enum CommitResult {
    Done { fulfilled: usize, kept_source: bool },
    NoSpace,
    DeadDestination,
}

#[allow(clippy::too_many_arguments)]
fn commit(
    t: &Transfer,
    overlay: &Overlay,
    catalog: &Catalog,
    store: &mut ReplicaStore,
    book: &mut RequestBook,
    field: &HormoneField,
    board: &mut TransferBoard,
    log: &mut MetricsLog,
    cfg: &TransportConfig,
    rng: &mut rng::Rng,
    now: Step,
) -> CommitResult {
    if !overlay.is_alive(t.to) {
        return CommitResult::DeadDestination;
    }
    if !store.has(t.to, t.unit_id) {
        let inserted = store.insert(
            catalog,
            Replica {
                unit_id: t.unit_id,
                node: t.to,
                created_at: now,
                last_used_at: now,
                use_count: 0,
                in_delivery: false,
                hop_index: t.hop_index + 1,
                journey_id: t.journey_id,
            },
        );
        if !inserted {
            return CommitResult::NoSpace;
        }
    }
    let fulfilled = requests::on_unit_stored(book, store, catalog, log, t.to, t.unit_id, now);
    if fulfilled > 0 {
        // The journey ends at a requester; the next attraction starts fresh.
        let id = board.fresh_journey_id();
        if let Some(r) = store.replica_mut(t.to, t.unit_id) {
            r.hop_index = 0;
            r.journey_id = id;
        }
    }
    let mut kept_source = false;
    if overlay.is_alive(t.from) && store.has(t.from, t.unit_id) {
        kept_source = retain_at_source(t, overlay, field, store, book, catalog, cfg, rng);
        store.set_in_delivery(t.from, t.unit_id, false);
        if !kept_source {
            store.remove(catalog, t.from, t.unit_id);
        }
    }
    CommitResult::Done { fulfilled, kept_source }
}

/// Handles one completed transfer: register at the destination (or merge),
/// fire fulfillment, reset the hop budget on a fulfilling arrival, then let
/// the strategy decide whether the forwarding copy persists. A full store
/// parks the arrival in the destination's bounded transit buffer.
#[allow(clippy::too_many_arguments)]
pub fn on_arrival(
    t: Transfer,
    overlay: &Overlay,
    catalog: &Catalog,
    store: &mut ReplicaStore,
    book: &mut RequestBook,
    field: &HormoneField,
    board: &mut TransferBoard,
    log: &mut MetricsLog,
    cfg: &TransportConfig,
    rng: &mut rng::Rng,
    now: Step,
) -> ArrivalOutcome {
    match commit(&t, overlay, catalog, store, book, field, board, log, cfg, rng, now) {
        CommitResult::Done { fulfilled, kept_source } => {
            ArrivalOutcome::Committed { fulfilled, kept_source }
        }
        CommitResult::DeadDestination => {
            release_source(store, overlay, &t);
            log.dropped_transfers += 1;
            ArrivalOutcome::DroppedDeadDestination
        }
        CommitResult::NoSpace => {
            if board.parked_count(t.to) < cfg.transit_buffer_slots {
                board.park(t);
                ArrivalOutcome::Parked
            } else {
                release_source(store, overlay, &t);
                log.failed_transfers += 1;
                ArrivalOutcome::Failed
            }
        }
    }
}

/// Retries parked arrivals (FIFO per node, nodes ascending) before new
/// arrivals are processed; clean-up may have freed space since last step.
#[allow(clippy::too_many_arguments)]
pub fn retry_parked(
    overlay: &Overlay,
    catalog: &Catalog,
    store: &mut ReplicaStore,
    book: &mut RequestBook,
    field: &HormoneField,
    board: &mut TransferBoard,
    log: &mut MetricsLog,
    cfg: &TransportConfig,
    rng: &mut rng::Rng,
    now: Step,
) {
    for node in board.take_parked_nodes() {
        loop {
            let Some(t) = board.parked.get_mut(&node).and_then(|q| q.pop_front()) else {
                break;
            };
            match commit(&t, overlay, catalog, store, book, field, board, log, cfg, rng, now) {
                CommitResult::Done { .. } => continue,
                CommitResult::DeadDestination => {
                    release_source(store, overlay, &t);
                    log.dropped_transfers += 1;
                }
                CommitResult::NoSpace => {
                    // Still no room; keep FIFO order and stop for this node.
                    board.parked.entry(node).or_default().push_front(t);
                    break;
                }
            }
        }
        if board.parked.get(&node).is_some_and(|q| q.is_empty()) {
            board.parked.remove(&node);
        }
    }
}
