//! Request generation, per-keyword deadlines, taste drift, fulfillment and
//! failure accounting.

use std::collections::BTreeMap;

use rand::Rng as _;

use crate::content::{sample_zipf_keyword, Catalog, ReplicaStore};
use crate::metrics::{DelaySample, MetricsLog, SlotEvent};
use crate::rng;
use crate::{KeywordId, NodeId, Step, UnitId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotStatus {
    Open,
    Fulfilled,
    Missed,
}

#[derive(Debug, Clone)]
pub struct Slot {
    pub keyword: KeywordId,
    pub deadline: Step,
    pub status: SlotStatus,
}

/// One user's active request. A user holds at most one non-terminal request
/// at a time; a new one is generated only after the previous one ends.
#[derive(Debug, Clone)]
pub struct Request {
    pub user: NodeId,
    pub issued_at: Step,
    pub slots: Vec<Slot>,
}

impl Request {
    pub fn is_terminal(&self) -> bool {
        self.slots.iter().all(|s| s.status != SlotStatus::Open)
    }

    pub fn fulfilled_keywords(&self) -> Vec<KeywordId> {
        self.slots
            .iter()
            .filter(|s| s.status == SlotStatus::Fulfilled)
            .map(|s| s.keyword)
            .collect()
    }
}

/// Per-user request state plus the per-node keyword request history the
/// popularity-based replication strategies consult.
#[derive(Debug, Clone)]
pub struct RequestBook {
    active: Vec<Option<Request>>,
    last_terminal: Vec<Option<Request>>,
    history: Vec<BTreeMap<KeywordId, u64>>,
}

impl RequestBook {
    pub fn new(node_count: usize) -> Self {
        RequestBook {
            active: vec![None; node_count],
            last_terminal: vec![None; node_count],
            history: vec![BTreeMap::new(); node_count],
        }
    }

    pub fn active(&self, user: NodeId) -> Option<&Request> {
        self.active[user].as_ref()
    }

    pub fn is_idle(&self, user: NodeId) -> bool {
        self.active[user].is_none()
    }

    pub fn last_terminal(&self, user: NodeId) -> Option<&Request> {
        self.last_terminal[user].as_ref()
    }

    /// Open (node, keyword) slots with their issue step, ascending by user.
    pub fn for_each_open_slot(&self, mut f: impl FnMut(NodeId, KeywordId, Step)) {
        for req in self.active.iter().flatten() {
            for slot in &req.slots {
                if slot.status == SlotStatus::Open {
                    f(req.user, slot.keyword, req.issued_at);
                }
            }
        }
    }

    /// 1-based popularity rank of `keyword` in the node's request history
    /// (most requested = rank 1, ties to the smaller keyword id), together
    /// with the table size. `None` if the keyword was never requested there.
    pub fn popularity_rank(&self, node: NodeId, keyword: KeywordId) -> Option<(usize, usize)> {
        let table = &self.history[node];
        let &count = table.get(&keyword)?;
        let rank = 1 + table
            .iter()
            .filter(|(&k, &c)| c > count || (c == count && k < keyword))
            .count();
        Some((rank, table.len()))
    }

    pub fn history_len(&self, node: NodeId) -> usize {
        self.history[node].len()
    }

    fn record_history(&mut self, node: NodeId, keyword: KeywordId) {
        *self.history[node].entry(keyword).or_insert(0) += 1;
    }

    /// Registers a freshly generated request and logs its keywords in the
    /// node's request history.
    pub fn issue(&mut self, user: NodeId, now: Step, slots: Vec<Slot>) {
        debug_assert!(self.active[user].is_none(), "one request at a time");
        for s in &slots {
            self.record_history(user, s.keyword);
        }
        self.active[user] = Some(Request { user, issued_at: now, slots });
    }

    fn finalize_if_terminal(&mut self, user: NodeId, log: &mut MetricsLog) {
        let Some(req) = self.active[user].as_ref() else { return };
        if !req.is_terminal() {
            return;
        }
        let req = self.active[user].take().unwrap();
        log.terminal_requests[user] += 1;
        if req.slots.iter().all(|s| s.status == SlotStatus::Fulfilled) {
            log.fulfilled_requests[user] += 1;
        } else if req.slots.iter().all(|s| s.status == SlotStatus::Missed) {
            log.failed_requests[user] += 1;
        }
        self.last_terminal[user] = Some(req);
    }
}

/// Keyword set for a user's next request: count uniform in
/// `1..=max_keywords`, keywords Zipf-distributed over popularity ranks, all
/// distinct. With probability `taste_prob`, one keyword of the previous
/// request's fulfilled slots is reused (taste drift).
pub fn next_request_keywords(
    prev: Option<&Request>,
    taste_prob: f64,
    max_keywords: usize,
    catalog: &Catalog,
    rng: &mut rng::Rng,
) -> Vec<KeywordId> {
    let count = rng.random_range(1..=max_keywords.max(1)).min(catalog.keyword_count);
    let mut keywords: Vec<KeywordId> = Vec::with_capacity(count);
    if let Some(prev) = prev {
        let liked = prev.fulfilled_keywords();
        if !liked.is_empty() && rng.random::<f64>() < taste_prob {
            keywords.push(liked[rng.random_range(0..liked.len())]);
        }
    }
    while keywords.len() < count {
        let mut k = sample_zipf_keyword(catalog.keyword_count, catalog.zipf_exponent, rng);
        if keywords.contains(&k) {
            // Collisions are rare; fall back to a linear probe so the
            // request always reaches its keyword count.
            let mut tries = 0;
            while keywords.contains(&k) && tries < 100 {
                k = sample_zipf_keyword(catalog.keyword_count, catalog.zipf_exponent, rng);
                tries += 1;
            }
            while keywords.contains(&k) {
                k = (k + 1) % catalog.keyword_count;
            }
        }
        keywords.push(k);
    }
    keywords
}

/// Deadline for a keyword slot: the time `maxhops` full-bandwidth hops of a
/// keyword-average unit would take, in whole steps from `now`.
pub fn compute_deadline(
    keyword: KeywordId,
    catalog: &Catalog,
    bandwidth_bps: f64,
    maxhops: u32,
    dt: f64,
    now: Step,
) -> Step {
    let mean_bits = catalog.mean_size_per_keyword[keyword] * 8.0;
    let seconds = maxhops as f64 * mean_bits / bandwidth_bps;
    now + (seconds / dt).ceil().max(1.0) as Step
}

fn record_terminal_slot(
    log: &mut MetricsLog,
    user: NodeId,
    keyword: KeywordId,
    issued_at: Step,
    now_or_deadline: Step,
    missed: bool,
) {
    let delay_steps = now_or_deadline - issued_at;
    log.delays.push(DelaySample { step: now_or_deadline, delay_steps, missed });
    log.slot_events.push(SlotEvent {
        user,
        keyword,
        issued_at,
        fulfilled: !missed,
        delay_steps,
    });
}

/// A unit became available at `node` (fresh arrival, or already present at
/// request time). Every open slot it matches is fulfilled: the delay is
/// recorded (zero when the unit was local at issue), a presentation starts,
/// and the replica's use bookkeeping is updated. Returns the number of
/// slots fulfilled.
pub fn on_unit_stored(
    book: &mut RequestBook,
    store: &mut ReplicaStore,
    catalog: &Catalog,
    log: &mut MetricsLog,
    node: NodeId,
    unit: UnitId,
    now: Step,
) -> usize {
    let keywords = &catalog.unit(unit).keywords;
    let mut fulfilled = 0;
    if let Some(req) = book.active[node].as_mut() {
        let issued_at = req.issued_at;
        for slot in req.slots.iter_mut() {
            if slot.status == SlotStatus::Open && keywords.contains(&slot.keyword) {
                slot.status = SlotStatus::Fulfilled;
                record_terminal_slot(log, node, slot.keyword, issued_at, now, false);
                log.presentation_starts[unit] += 1;
                store.mark_used(node, unit, now, true);
                fulfilled += 1;
            }
        }
    }
    if fulfilled > 0 {
        book.finalize_if_terminal(node, log);
    }
    fulfilled
}

/// Fulfills slots of a fresh request that are already satisfied by local
/// storage (delay 0). The satisfying unit is the smallest-id local unit
/// carrying the keyword.
pub fn check_local_fulfillment(
    book: &mut RequestBook,
    store: &mut ReplicaStore,
    catalog: &Catalog,
    log: &mut MetricsLog,
    user: NodeId,
    now: Step,
) {
    let Some(req) = book.active[user].as_mut() else { return };
    let issued_at = req.issued_at;
    let mut used: Vec<UnitId> = Vec::new();
    for slot in req.slots.iter_mut() {
        if slot.status != SlotStatus::Open {
            continue;
        }
        if let Some(unit) = store.local_unit_with_keyword(catalog, user, slot.keyword) {
            slot.status = SlotStatus::Fulfilled;
            record_terminal_slot(log, user, slot.keyword, issued_at, now, false);
            log.presentation_starts[unit] += 1;
            used.push(unit);
        }
    }
    for unit in used {
        store.mark_used(user, unit, now, true);
    }
    book.finalize_if_terminal(user, log);
}

/// Marks every open slot whose deadline has passed as missed (its delay is
/// the maximum, deadline minus request time) and finalizes requests whose
/// slots are all terminal.
pub fn expire_slots(book: &mut RequestBook, log: &mut MetricsLog, now: Step) {
    for user in 0..book.active.len() {
        let Some(req) = book.active[user].as_mut() else { continue };
        let issued_at = req.issued_at;
        for slot in req.slots.iter_mut() {
            if slot.status == SlotStatus::Open && slot.deadline < now {
                slot.status = SlotStatus::Missed;
                record_terminal_slot(log, user, slot.keyword, issued_at, slot.deadline, true);
            }
        }
        book.finalize_if_terminal(user, log);
    }
}

/// Churn: the user leaves, so every open slot goes out as missed regardless
/// of its deadline.
pub fn expire_user(book: &mut RequestBook, log: &mut MetricsLog, user: NodeId) {
    let Some(req) = book.active[user].as_mut() else { return };
    let issued_at = req.issued_at;
    for slot in req.slots.iter_mut() {
        if slot.status == SlotStatus::Open {
            slot.status = SlotStatus::Missed;
            record_terminal_slot(log, user, slot.keyword, issued_at, slot.deadline, true);
        }
    }
    book.finalize_if_terminal(user, log);
}
