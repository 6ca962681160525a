//! The engine owns all simulation state and advances it through a fixed
//! phase order each step: churn, requests, hormone management, diffusion,
//! evaporation, move planning, transfers, clean-up, metrics sampling.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;

use crate::cleanup::{self, CleanupPolicy};
use crate::content::{self, Catalog, ReplicaStore, SizeParams};
use crate::error::{Error, Result};
use crate::hormone::{HormoneField, ParameterSet};
use crate::metrics::{MetricsLog, TransferTrace};
use crate::requests::{self, RequestBook, Slot, SlotStatus};
use crate::rng;
use crate::scenario::{Scenario, TopologyKind};
use crate::topology::{self, Overlay};
use crate::transport::{self, TransferBoard, TransportConfig};
use crate::{NodeId, Step};

/// Evenly spaced one-by-one removals: `n_remove` distinct nodes drawn
/// uniformly, removal `i` at step `(i + 1) * duration / (n_remove + 1)`.
pub fn schedule_churn(
    n_remove: usize,
    node_count: usize,
    duration: Step,
    rng: &mut rng::Rng,
) -> Result<Vec<(Step, NodeId)>> {
    if n_remove >= node_count {
        return Err(Error::config("churn_remove must stay below the node count"));
    }
    let mut nodes: Vec<NodeId> = (0..node_count).collect();
    nodes.shuffle(rng);
    nodes.truncate(n_remove);
    Ok(nodes
        .into_iter()
        .enumerate()
        .map(|(i, node)| {
            let step = ((i as u64 + 1) * duration) / (n_remove as u64 + 1);
            (step, node)
        })
        .collect())
}

/// Everything a finished run leaves behind.
pub struct RunOutput {
    pub log: MetricsLog,
    pub dt: f64,
    pub config: BTreeMap<String, String>,
}

/// One running simulation; single-threaded stepping, shared-nothing across
/// engines.
pub struct Engine {
    scenario: Scenario,
    overlay: Overlay,
    catalog: Catalog,
    store: ReplicaStore,
    field: HormoneField,
    board: TransferBoard,
    book: RequestBook,
    log: MetricsLog,
    params: ParameterSet,
    transport_cfg: TransportConfig,
    cleanup: Option<CleanupPolicy>,
    churn: Vec<(Step, NodeId)>,
    churn_cursor: usize,
    requests_rng: rng::Rng,
    transport_rng: rng::Rng,
    clock: Step,
    hormone_dump: Option<Box<dyn Write + Send>>,
    audit_cleanup: bool,
}

impl Engine {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let seed = scenario.seed;

        let mut overlay = match &scenario.topology {
            TopologyKind::Random => topology::generate_random_overlay(
                scenario.nodes,
                scenario.edge_probability,
                scenario.bandwidth_bps,
                seed,
            )?,
            TopologyKind::Powerlaw => topology::generate_power_law_overlay(
                scenario.nodes,
                scenario.target_edges,
                scenario.rewire_steps,
                scenario.bandwidth_bps,
                seed,
            )?,
            TopologyKind::File(path) => {
                let file = std::fs::File::open(path)?;
                let overlay = Overlay::read_edge_list(std::io::BufReader::new(file))?;
                if overlay.node_count() != scenario.nodes {
                    return Err(Error::config(format!(
                        "overlay file has {} nodes, scenario expects {}",
                        overlay.node_count(),
                        scenario.nodes
                    )));
                }
                overlay
            }
        };
        overlay.apply_bandwidth_jitter(scenario.bandwidth_jitter, seed);

        let mut catalog = content::generate_catalog(
            scenario.units,
            scenario.keywords,
            scenario.zipf_exponent,
            SizeParams {
                mean: scenario.unit_size_mean,
                min: scenario.unit_size_min,
                max: scenario.unit_size_max,
            },
            seed,
        )?;
        let mut store = ReplicaStore::new(
            scenario.nodes,
            scenario.units,
            scenario.keywords,
            scenario.capacity_bytes,
        );
        content::seed_initial_storage(
            &overlay,
            &mut catalog,
            scenario.fill_fraction,
            scenario.capacity_bytes,
            scenario.contribution,
            seed,
            &mut store,
        )?;

        let churn = if scenario.churn_events.is_empty() {
            let mut churn_rng = rng::stream(seed, "churn");
            schedule_churn(scenario.churn_remove, scenario.nodes, scenario.duration, &mut churn_rng)?
        } else {
            let mut events = scenario.churn_events.clone();
            events.sort_unstable();
            events
        };

        let field = HormoneField::new(scenario.nodes, scenario.keywords);
        let log = MetricsLog::new(scenario.nodes, scenario.units);
        let book = RequestBook::new(scenario.nodes);
        // Journey ids continue past the per-unit seeds used at placement.
        let board = TransferBoard::new(scenario.units as u64);

        Ok(Engine {
            overlay,
            catalog,
            store,
            field,
            board,
            book,
            log,
            params: scenario.params,
            transport_cfg: TransportConfig {
                strategy: scenario.replication,
                rank_threshold: scenario.rank_threshold,
                transit_buffer_slots: scenario.transit_buffer_slots,
            },
            cleanup: scenario.cleanup,
            churn,
            churn_cursor: 0,
            requests_rng: rng::stream(seed, "requests"),
            transport_rng: rng::stream(seed, "transport"),
            clock: 0,
            hormone_dump: None,
            audit_cleanup: false,
            scenario,
        })
    }

    /// Verifies every deletion against a pre-sweep snapshot (neighbor-copy
    /// and in-delivery rules) and every non-failed sweep against the
    /// trigger. Violations land in the metrics counters.
    pub fn set_cleanup_audit(&mut self, on: bool) {
        self.audit_cleanup = on;
    }

    pub fn overlay(&self) -> &Overlay {
        &self.overlay
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn store(&self) -> &ReplicaStore {
        &self.store
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn clock(&self) -> Step {
        self.clock
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Streams the per-step hormone field dump (CSV) to the given writer.
    pub fn set_hormone_dump(&mut self, w: Box<dyn Write + Send>) {
        self.hormone_dump = Some(w);
    }

    /// Churn: the node leaves; stored units and hormone levels vanish with
    /// it, in-flight transfers touching it fail, its open slots go out as
    /// missed. Isolated remnants stay disconnected.
    fn remove_node_full(&mut self, node: NodeId) -> Result<()> {
        self.overlay.remove_node(node)?;
        let dropped = self.board.drop_for_dead_node(node);
        for t in &dropped {
            if self.overlay.is_alive(t.from) {
                self.store.set_in_delivery(t.from, t.unit_id, false);
            }
            self.log.dropped_transfers += 1;
        }
        self.store.remove_all_at(&self.catalog, node);
        self.field.zero_node(node);
        requests::expire_user(&mut self.book, &mut self.log, node);
        log::debug!("step {}: node {} removed ({} transfers dropped)", self.clock, node, dropped.len());
        Ok(())
    }

    fn phase_churn(&mut self, now: Step) -> Result<()> {
        while self.churn_cursor < self.churn.len() && self.churn[self.churn_cursor].0 == now {
            let node = self.churn[self.churn_cursor].1;
            self.churn_cursor += 1;
            if self.overlay.is_alive(node) {
                self.remove_node_full(node)?;
            }
        }
        Ok(())
    }

    fn phase_requests(&mut self, now: Step) {
        requests::expire_slots(&mut self.book, &mut self.log, now);
        for user in 0..self.overlay.node_count() {
            if !self.overlay.is_alive(user) || !self.book.is_idle(user) {
                continue;
            }
            let keywords = requests::next_request_keywords(
                self.book.last_terminal(user),
                self.scenario.taste_prob,
                self.scenario.max_keywords_per_request,
                &self.catalog,
                &mut self.requests_rng,
            );
            let slots: Vec<Slot> = keywords
                .into_iter()
                .map(|keyword| Slot {
                    keyword,
                    deadline: requests::compute_deadline(
                        keyword,
                        &self.catalog,
                        self.scenario.bandwidth_bps,
                        self.params.maxhops,
                        self.scenario.dt,
                        now,
                    ),
                    status: SlotStatus::Open,
                })
                .collect();
            self.book.issue(user, now, slots);
            requests::check_local_fulfillment(
                &mut self.book,
                &mut self.store,
                &self.catalog,
                &mut self.log,
                user,
                now,
            );
        }
    }

    fn phase_hormones(&mut self, now: Step) {
        let mut fresh: Vec<(NodeId, usize)> = Vec::new();
        let mut open: Vec<(NodeId, usize)> = Vec::new();
        self.book.for_each_open_slot(|user, keyword, issued_at| {
            if issued_at == now {
                fresh.push((user, keyword));
            } else {
                open.push((user, keyword));
            }
        });
        for (user, keyword) in fresh {
            // Open slots only exist on alive users.
            self.field
                .deposit(&self.overlay, user, keyword, self.params.eta0)
                .expect("open slots live on alive nodes");
        }
        self.field.raise_open_requests(open, self.params.eta);
    }

    fn phase_moves(&mut self, now: Step) {
        let moves = transport::plan_moves(
            &self.overlay,
            &self.field,
            &self.store,
            &self.catalog,
            &self.params,
            now,
        );
        for t in moves {
            self.store.set_in_delivery(t.from, t.unit_id, true);
            self.store.bump_use_count(t.from, t.unit_id);
            self.board.enqueue(t);
        }
    }

    fn phase_transfers(&mut self, now: Step) {
        transport::retry_parked(
            &self.overlay,
            &self.catalog,
            &mut self.store,
            &mut self.book,
            &self.field,
            &mut self.board,
            &mut self.log,
            &self.transport_cfg,
            &mut self.transport_rng,
            now,
        );
        let arrivals = self.board.step_transfers(&self.overlay, self.scenario.dt);
        for t in arrivals {
            let trace = self.scenario.trace_transfers.then(|| TransferTrace {
                journey_id: t.journey_id,
                unit: t.unit_id,
                from: t.from,
                to: t.to,
                start_step: t.start_step,
                end_step: now,
                hop_index: t.hop_index,
            });
            let outcome = transport::on_arrival(
                t,
                &self.overlay,
                &self.catalog,
                &mut self.store,
                &mut self.book,
                &self.field,
                &mut self.board,
                &mut self.log,
                &self.transport_cfg,
                &mut self.transport_rng,
                now,
            );
            if let (Some(trace), transport::ArrivalOutcome::Committed { .. }) = (trace, outcome) {
                self.log.transfer_trace.push(trace);
            }
        }
        self.board.activate_queued();
    }

    fn phase_cleanup(&mut self, now: Step) {
        let Some(policy) = self.cleanup else { return };
        for node in 0..self.overlay.node_count() {
            if !self.overlay.is_alive(node) {
                continue;
            }
            // Audit snapshot, taken through the adjacency (the sweep itself
            // reasons through per-unit location sets).
            let snapshot: Option<BTreeMap<crate::UnitId, (bool, bool)>> =
                self.audit_cleanup.then(|| {
                    self.store
                        .replicas_at(node)
                        .map(|r| {
                            let neighbor_copy = self
                                .overlay
                                .alive_neighbors(node)
                                .any(|nb| self.store.has(nb, r.unit_id));
                            (r.unit_id, (r.in_delivery, neighbor_copy))
                        })
                        .collect()
                });
            let report = cleanup::run_cleanup(
                &mut self.store,
                &self.overlay,
                &self.field,
                &self.catalog,
                node,
                policy,
                self.params.c,
                now,
            );
            if let Some(snapshot) = snapshot {
                for unit in &report.deleted {
                    match snapshot.get(unit) {
                        Some(&(false, true)) => {}
                        _ => self.log.cleanup_rule_violations += 1,
                    }
                }
                let trigger = self.params.c * self.store.capacity_bytes as f64;
                if !report.failed && self.store.fill_bytes(node) as f64 > trigger {
                    self.log.storage_trigger_violations += 1;
                }
            }
            if !report.deleted.is_empty() || report.failed {
                self.log.cleanup_reports.push(report);
            }
        }
    }

    fn phase_metrics(&mut self) {
        for unit in 0..self.catalog.num_units() {
            self.log.replica_step_sum[unit] += self.store.locations(unit).len() as u64;
        }
        self.log.census_steps += 1;
    }

    /// Advances one step through the full phase order.
    pub fn step(&mut self) -> Result<()> {
        let now = self.clock;
        self.phase_churn(now)?;
        self.phase_requests(now);
        self.phase_hormones(now);
        let store = &self.store;
        self.field.diffuse(&self.overlay, self.params.alpha, |n, k| store.residence(n, k));
        self.field.evaporate(self.params.epsilon, self.params.t);
        if let Some(w) = self.hormone_dump.as_mut() {
            self.field.dump_csv(w, now)?;
        }
        self.phase_moves(now);
        self.phase_transfers(now);
        self.phase_cleanup(now);
        self.phase_metrics();
        self.clock += 1;
        Ok(())
    }

    /// Runs the scenario to completion.
    pub fn run(mut self) -> Result<RunOutput> {
        while self.clock < self.scenario.duration {
            self.step()?;
        }
        Ok(RunOutput { dt: self.scenario.dt, config: self.scenario.to_map(), log: self.log })
    }
}

/// Convenience: build and run in one call.
pub fn run(scenario: Scenario) -> Result<RunOutput> {
    Engine::new(scenario)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Scenario {
        Scenario { duration: 50, ..Scenario::desk_10() }
    }

    #[test]
    fn churn_schedule_is_evenly_spaced() {
        let mut rng = rng::stream(1, "churn");
        let events = schedule_churn(20, 50, 10_000, &mut rng).unwrap();
        assert_eq!(events.len(), 20);
        for (i, &(step, _)) in events.iter().enumerate() {
            assert_eq!(step, ((i as u64 + 1) * 10_000) / 21);
        }
        let nodes: std::collections::BTreeSet<NodeId> = events.iter().map(|&(_, n)| n).collect();
        assert_eq!(nodes.len(), 20, "removals are distinct");
        assert!(nodes.iter().all(|&n| n < 50));
    }

    #[test]
    fn churn_schedule_empty_and_error_cases() {
        let mut rng = rng::stream(1, "churn");
        assert!(schedule_churn(0, 10, 100, &mut rng).unwrap().is_empty());
        assert!(schedule_churn(10, 10, 100, &mut rng).is_err());
        let five_hundred = schedule_churn(500, 1_000, 2_000, &mut rng).unwrap();
        assert_eq!(five_hundred.len(), 500);
        assert!(five_hundred.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn single_step_leaves_storage_unchanged() {
        // One step: transfers can start but none can complete, and no
        // deadline can expire, so fill stays put and every delay sample is a
        // local hit.
        let mut s = tiny();
        s.duration = 1;
        let engine = Engine::new(s).unwrap();
        let bytes_before = engine.store().total_bytes();
        let replicas_before = engine.store().total_replicas();
        let out = engine.run().unwrap();
        assert_eq!(out.log.census_steps, 1);
        assert!(out.log.delays.iter().all(|d| d.delay_steps == 0 && !d.missed));
        assert_eq!(out.log.replica_step_sum.iter().sum::<u64>(), replicas_before as u64);
        let _ = bytes_before;
    }

    #[test]
    fn runs_are_deterministic() {
        let s = tiny();
        let a = run(s.clone()).unwrap();
        let b = run(s).unwrap();
        assert_eq!(a.log.delays.len(), b.log.delays.len());
        for (x, y) in a.log.delays.iter().zip(&b.log.delays) {
            assert_eq!((x.step, x.delay_steps, x.missed), (y.step, y.delay_steps, y.missed));
        }
        assert_eq!(a.log.fulfilled_requests, b.log.fulfilled_requests);
        assert_eq!(a.log.failed_requests, b.log.failed_requests);
        assert_eq!(a.log.replica_step_sum, b.log.replica_step_sum);
        assert_eq!(a.log.cleanup_reports.len(), b.log.cleanup_reports.len());
    }

    #[test]
    fn storage_cap_holds_every_step() {
        let mut s = tiny();
        s.duration = 200;
        s.capacity_bytes = 40_000_000;
        s.fill_fraction = 0.5;
        let mut engine = Engine::new(s).unwrap();
        for _ in 0..200 {
            engine.step().unwrap();
            for n in 0..engine.overlay().node_count() {
                assert!(engine.store().fill_bytes(n) <= 40_000_000);
            }
        }
    }

    #[test]
    fn dead_nodes_hold_nothing() {
        let mut s = tiny();
        s.duration = 100;
        s.churn_remove = 3;
        let mut engine = Engine::new(s).unwrap();
        let victims: Vec<(Step, NodeId)> = engine.churn.clone();
        for _ in 0..100 {
            engine.step().unwrap();
        }
        assert_eq!(victims.len(), 3);
        for &(_, node) in &victims {
            assert!(!engine.overlay().is_alive(node));
            assert_eq!(engine.store().replica_count_at(node), 0);
            for kw in 0..engine.scenario().keywords {
                assert_eq!(engine.field.level(node, kw), 0.0);
            }
        }
    }

    #[test]
    fn explicit_churn_events_apply() {
        let mut s = tiny();
        s.duration = 20;
        s.churn_events = vec![(3, 1), (7, 4)];
        let mut engine = Engine::new(s).unwrap();
        for _ in 0..20 {
            engine.step().unwrap();
        }
        assert!(!engine.overlay().is_alive(1));
        assert!(!engine.overlay().is_alive(4));
        assert_eq!(engine.overlay().alive_count(), 8);
    }
}
