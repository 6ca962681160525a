//! Storage balancing: trigger detection, eligibility, and the LRU / LFU /
//! hormone eviction policies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::content::{Catalog, ReplicaStore};
use crate::error::Error;
use crate::hormone::HormoneField;
use crate::topology::Overlay;
use crate::{NodeId, Step, UnitId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CleanupPolicy {
    Lru,
    Lfu,
    Hormone,
}

impl CleanupPolicy {
    pub const ALL: [CleanupPolicy; 3] = [CleanupPolicy::Lru, CleanupPolicy::Lfu, CleanupPolicy::Hormone];
}

impl fmt::Display for CleanupPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CleanupPolicy::Lru => "lru",
            CleanupPolicy::Lfu => "lfu",
            CleanupPolicy::Hormone => "hormone",
        };
        f.write_str(s)
    }
}

impl FromStr for CleanupPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "lru" => Ok(CleanupPolicy::Lru),
            "lfu" => Ok(CleanupPolicy::Lfu),
            "hormone" => Ok(CleanupPolicy::Hormone),
            other => Err(Error::config(format!("unknown cleanup policy `{other}`"))),
        }
    }
}

/// Outcome of one sweep on one node. `failed` means the node is still above
/// the trigger after every candidate was considered.
#[derive(Debug, Clone, Serialize)]
pub struct CleanupReport {
    pub node: NodeId,
    pub step: Step,
    pub policy: CleanupPolicy,
    pub deleted: Vec<UnitId>,
    pub bytes_freed: u64,
    pub failed: bool,
}

/// Some alive neighbor of `node` holds the unit. The unit's location set is
/// usually tiny, so probe it against the adjacency list rather than the
/// other way around.
fn neighbor_has_copy(store: &ReplicaStore, overlay: &Overlay, node: NodeId, unit: UnitId) -> bool {
    let adjacency = overlay.neighbors(node);
    store
        .locations(unit)
        .iter()
        .any(|&nb| nb != node && overlay.is_alive(nb) && adjacency.binary_search(&nb).is_ok())
}

/// A replica may be deleted only if it is idle (not in delivery) and at
/// least one alive neighbor also stores the unit. The check runs immediately
/// before each deletion; deletions elsewhere in the same sweep can
/// invalidate earlier answers.
pub fn eligible(store: &ReplicaStore, overlay: &Overlay, node: NodeId, unit: UnitId) -> bool {
    match store.replica(node, unit) {
        Some(r) if !r.in_delivery => neighbor_has_copy(store, overlay, node, unit),
        _ => false,
    }
}

/// True when no alive neighbor holds any hormone for any of the unit's
/// keywords — the hormone policy's "no demand nearby" condition.
fn no_neighbor_hormones(
    field: &HormoneField,
    overlay: &Overlay,
    catalog: &Catalog,
    node: NodeId,
    unit: UnitId,
) -> bool {
    overlay
        .alive_neighbors(node)
        .all(|nb| catalog.unit(unit).keywords.iter().all(|&k| field.level(nb, k) == 0.0))
}

fn local_hormone_sum(field: &HormoneField, catalog: &Catalog, node: NodeId, unit: UnitId) -> f64 {
    catalog.unit(unit).keywords.iter().map(|&k| field.level(node, k)).sum()
}

/// Runs one clean-up sweep on `node`. A no-op unless fill strictly exceeds
/// `c * capacity`; otherwise deletes eligible replicas one at a time in
/// policy order until fill drops to the trigger or candidates run out.
///
/// The policy ordering is fixed at sweep start (the hormone field is frozen
/// between steps), but eligibility is re-verified immediately before every
/// deletion: concurrent sweeps on other nodes may have removed the last
/// neighbor copy in the meantime.
pub fn run_cleanup(
    store: &mut ReplicaStore,
    overlay: &Overlay,
    field: &HormoneField,
    catalog: &Catalog,
    node: NodeId,
    policy: CleanupPolicy,
    c: f64,
    step: Step,
) -> CleanupReport {
    let trigger = c * store.capacity_bytes as f64;
    let mut report =
        CleanupReport { node, step, policy, deleted: Vec::new(), bytes_freed: 0, failed: false };
    if store.fill_bytes(node) as f64 <= trigger {
        return report;
    }
    for unit in ordered_candidates(store, field, catalog, node, policy) {
        if store.fill_bytes(node) as f64 <= trigger {
            break;
        }
        // Deferred checks: only candidates actually reached pay for them.
        if !eligible(store, overlay, node, unit) {
            continue;
        }
        if policy == CleanupPolicy::Hormone
            && !no_neighbor_hormones(field, overlay, catalog, node, unit)
        {
            continue;
        }
        store.remove(catalog, node, unit);
        report.deleted.push(unit);
        report.bytes_freed += catalog.unit(unit).size_bytes;
    }
    report.failed = store.fill_bytes(node) as f64 > trigger;
    report
}

/// Every replica at the node in policy order; eligibility is checked later,
/// during the deletion walk.
fn ordered_candidates(
    store: &ReplicaStore,
    field: &HormoneField,
    catalog: &Catalog,
    node: NodeId,
    policy: CleanupPolicy,
) -> Vec<UnitId> {
    let candidates = store.replicas_at(node);
    match policy {
        CleanupPolicy::Lru => {
            let mut v: Vec<(Step, UnitId)> =
                candidates.map(|r| (r.last_used_at, r.unit_id)).collect();
            v.sort_unstable();
            v.into_iter().map(|(_, u)| u).collect()
        }
        CleanupPolicy::Lfu => {
            let mut v: Vec<(u64, Step, UnitId)> =
                candidates.map(|r| (r.use_count, r.last_used_at, r.unit_id)).collect();
            v.sort_unstable();
            v.into_iter().map(|(.., u)| u).collect()
        }
        CleanupPolicy::Hormone => {
            let mut v: Vec<(f64, UnitId)> = candidates
                .map(|r| (local_hormone_sum(field, catalog, node, r.unit_id), r.unit_id))
                .collect();
            v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            v.into_iter().map(|(_, u)| u).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::{generate_catalog, Replica, SizeParams};
    use crate::topology::Overlay;

    fn sizes() -> SizeParams {
        SizeParams { mean: 2.6e6, min: 190_000, max: 16_000_000 }
    }

    /// Two-node line; unit sizes forced to 100 bytes each, capacity 1000.
    fn fixture(n_units: usize) -> (Overlay, Catalog, ReplicaStore, HormoneField) {
        let mut o = Overlay::empty(2);
        o.add_edge(0, 1, 1e8);
        let mut catalog = generate_catalog(n_units, 1, 1.0, sizes(), 7).unwrap();
        for u in &mut catalog.units {
            u.size_bytes = 100;
            u.keywords = vec![0];
        }
        let store = ReplicaStore::new(2, n_units, 1, 1_000);
        let field = HormoneField::new(2, 1);
        (o, catalog, store, field)
    }

    fn replica(unit: UnitId, node: NodeId, last_used: Step, use_count: u64) -> Replica {
        Replica {
            unit_id: unit,
            node,
            created_at: 0,
            last_used_at: last_used,
            use_count,
            in_delivery: false,
            hop_index: 0,
            journey_id: 0,
        }
    }

    #[test]
    fn eligibility_rules() {
        let (o, catalog, mut store, _) = fixture(2);
        store.insert(&catalog, replica(0, 0, 0, 0));
        // Sole system-wide instance: not eligible.
        assert!(!eligible(&store, &o, 0, 0));
        // Neighbor copy appears: eligible.
        store.insert(&catalog, replica(0, 1, 0, 0));
        assert!(eligible(&store, &o, 0, 0));
        // In delivery: not eligible.
        store.set_in_delivery(0, 0, true);
        assert!(!eligible(&store, &o, 0, 0));
    }

    #[test]
    fn below_trigger_is_noop() {
        let (o, catalog, mut store, field) = fixture(6);
        for u in 0..5 {
            store.insert(&catalog, replica(u, 0, 0, 0));
            store.insert(&catalog, replica(u, 1, 0, 0));
        }
        // fill = 500 of 1000 = 50% <= 60%: nothing happens.
        let r = run_cleanup(&mut store, &o, &field, &catalog, 0, CleanupPolicy::Lru, 0.60, 1);
        assert!(r.deleted.is_empty() && !r.failed);
        assert_eq!(store.replica_count_at(0), 5);
    }

    #[test]
    fn lru_deletes_oldest_first_until_trigger() {
        let (o, catalog, mut store, field) = fixture(8);
        // Node 0 at 70%: 7 units, last_used 5, 9, 2, 11, 12, 13, 14.
        let stamps = [5u64, 9, 2, 11, 12, 13, 14];
        for (u, &ts) in stamps.iter().enumerate() {
            store.insert(&catalog, replica(u, 0, ts, 0));
            store.insert(&catalog, replica(u, 1, 0, 0));
        }
        let r = run_cleanup(&mut store, &o, &field, &catalog, 0, CleanupPolicy::Lru, 0.60, 1);
        // 700 -> 600 needs one deletion; oldest stamp 2 is unit 2.
        assert_eq!(r.deleted, vec![2]);
        assert_eq!(r.bytes_freed, 100);
        assert!(!r.failed);
        assert_eq!(store.fill_bytes(0), 600);
    }

    #[test]
    fn lru_order_two_deletions() {
        let (o, catalog, mut store, field) = fixture(8);
        let stamps = [5u64, 9, 2, 11, 12, 13, 14, 15];
        for (u, &ts) in stamps.iter().enumerate() {
            store.insert(&catalog, replica(u, 0, ts, 0));
            store.insert(&catalog, replica(u, 1, 0, 0));
        }
        // 800 -> 600 needs two deletions: stamp 2 (unit 2) then stamp 5 (unit 0).
        let r = run_cleanup(&mut store, &o, &field, &catalog, 0, CleanupPolicy::Lru, 0.60, 1);
        assert_eq!(r.deleted, vec![2, 0]);
    }

    #[test]
    fn hormone_policy_blocks_on_neighbor_demand() {
        let (o, catalog, mut store, mut field) = fixture(8);
        for u in 0..7 {
            store.insert(&catalog, replica(u, 0, 0, 0));
            store.insert(&catalog, replica(u, 1, 0, 0));
        }
        // Neighbor holds hormone for keyword 0 (all units share it).
        field.deposit(&o, 1, 0, 1.0).unwrap();
        let r = run_cleanup(&mut store, &o, &field, &catalog, 0, CleanupPolicy::Hormone, 0.60, 3);
        assert!(r.failed);
        assert!(r.deleted.is_empty());
        assert_eq!(store.replica_count_at(0), 7);
    }

    #[test]
    fn hormone_policy_deletes_lowest_local_sum() {
        let mut o = Overlay::empty(2);
        o.add_edge(0, 1, 1e8);
        let mut catalog = generate_catalog(7, 2, 1.0, sizes(), 7).unwrap();
        for (i, u) in catalog.units.iter_mut().enumerate() {
            u.size_bytes = 100;
            u.keywords = vec![i % 2];
        }
        let mut store = ReplicaStore::new(2, 7, 2, 1_000);
        let mut field = HormoneField::new(2, 2);
        for u in 0..7 {
            store.insert(&catalog, replica(u, 0, 0, 0));
            store.insert(&catalog, replica(u, 1, 0, 0));
        }
        // No neighbor hormones at all; local levels favor keyword 1 units.
        field.deposit(&o, 0, 1, 2.0).unwrap();
        let r = run_cleanup(&mut store, &o, &field, &catalog, 0, CleanupPolicy::Hormone, 0.60, 3);
        // Lowest local sum = keyword-0 units {0, 2, 4, 6}; tie by unit id.
        assert_eq!(r.deleted, vec![0]);
    }

    #[test]
    fn in_delivery_survives_and_safety_holds() {
        let (o, catalog, mut store, field) = fixture(8);
        for u in 0..7 {
            store.insert(&catalog, replica(u, 0, u as u64, 0));
        }
        // Only unit 0 has a neighbor copy; unit 0 is in delivery.
        store.insert(&catalog, replica(0, 1, 0, 0));
        store.set_in_delivery(0, 0, true);
        let r = run_cleanup(&mut store, &o, &field, &catalog, 0, CleanupPolicy::Lru, 0.60, 1);
        assert!(r.failed, "no other unit is deletable");
        assert!(store.has(0, 0));
    }

    #[test]
    fn lfu_matches_full_sort_oracle() {
        use rand::Rng as _;
        let mut rng = crate::rng::stream(11, "lfu-oracle");
        for _ in 0..50 {
            let n_units = 10;
            let (o, catalog, mut store, field) = fixture(n_units);
            let mut rows: Vec<(u64, u64, UnitId)> = Vec::new();
            for u in 0..n_units {
                let use_count = rng.random_range(0..4u64);
                let last_used = rng.random_range(0..4u64);
                store.insert(&catalog, replica(u, 0, last_used, use_count));
                store.insert(&catalog, replica(u, 1, 0, 0));
                rows.push((use_count, last_used, u));
            }
            // fill 1000 > 600; deleting down to 600 removes 4 units.
            let r = run_cleanup(&mut store, &o, &field, &catalog, 0, CleanupPolicy::Lfu, 0.60, 1);
            rows.sort();
            let expected: Vec<UnitId> = rows.iter().take(4).map(|&(_, _, u)| u).collect();
            assert_eq!(r.deleted, expected);
        }
    }
}
