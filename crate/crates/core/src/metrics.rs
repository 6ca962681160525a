//! Run measurements: delay samples, request outcomes, presentation counts,
//! replica census, clean-up reports — and the derived statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cleanup::CleanupReport;
use crate::error::{Error, Result};
use crate::{NodeId, Step, UnitId};

/// One terminal keyword slot: its delay in steps and whether the deadline
/// was missed (missed slots carry their maximum delay, deadline − issue).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DelaySample {
    pub step: Step,
    pub delay_steps: u64,
    pub missed: bool,
}

/// Append-only measurement log; one per engine run.
#[derive(Debug, Clone, Default)]
pub struct MetricsLog {
    pub delays: Vec<DelaySample>,
    pub fulfilled_requests: Vec<u64>,
    pub failed_requests: Vec<u64>,
    pub terminal_requests: Vec<u64>,
    pub presentation_starts: Vec<u64>,
    /// Per unit: sum over sampled steps of its replica count.
    pub replica_step_sum: Vec<u64>,
    pub census_steps: u64,
    pub cleanup_reports: Vec<CleanupReport>,
    pub slot_events: Vec<SlotEvent>,
    /// Committed transfers; only collected when transfer tracing is on.
    pub transfer_trace: Vec<TransferTrace>,
    pub dropped_transfers: u64,
    pub failed_transfers: u64,
    /// Audit-mode counters (engine-side, snapshot-based): deletions that
    /// violated the neighbor-copy or in-delivery rule, and non-failed
    /// sweeps that left a node above the trigger.
    pub cleanup_rule_violations: u64,
    pub storage_trigger_violations: u64,
}

/// One committed transfer, for the optional transfer trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransferTrace {
    pub journey_id: u64,
    pub unit: UnitId,
    pub from: NodeId,
    pub to: NodeId,
    pub start_step: Step,
    pub end_step: Step,
    pub hop_index: u32,
}

pub fn write_transfer_trace_csv(log: &MetricsLog, w: &mut impl Write) -> Result<()> {
    writeln!(w, "journey_id,unit,from,to,start_step,end_step,hop_index")?;
    for t in &log.transfer_trace {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            t.journey_id, t.unit, t.from, t.to, t.start_step, t.end_step, t.hop_index
        )?;
    }
    Ok(())
}

impl MetricsLog {
    pub fn new(node_count: usize, num_units: usize) -> Self {
        MetricsLog {
            fulfilled_requests: vec![0; node_count],
            failed_requests: vec![0; node_count],
            terminal_requests: vec![0; node_count],
            presentation_starts: vec![0; num_units],
            replica_step_sum: vec![0; num_units],
            ..Default::default()
        }
    }

    pub fn missed_slots(&self) -> usize {
        self.delays.iter().filter(|d| d.missed).count()
    }

    pub fn fulfilled_slots(&self) -> usize {
        self.delays.len() - self.missed_slots()
    }

    pub fn cleanup_failures(&self) -> u64 {
        self.cleanup_reports.iter().filter(|r| r.failed).count() as u64
    }

    /// Time-averaged replica count of a unit over the sampled steps.
    pub fn avg_replicas(&self, unit: UnitId) -> f64 {
        if self.census_steps == 0 {
            0.0
        } else {
            self.replica_step_sum[unit] as f64 / self.census_steps as f64
        }
    }
}

/// Five-number summary with 1.5 IQR whiskers clamped to the data range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
}

/// Quartiles use linear interpolation between closest ranks; box plots are
/// convention-sensitive, so the convention is echoed in the summary output.
pub const QUARTILE_METHOD: &str = "linear interpolation between closest ranks";

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(samples: &[f64]) -> Result<BoxStats> {
    if samples.is_empty() {
        return Err(Error::Empty("box_stats needs at least one sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let q1 = percentile(&sorted, 0.25);
    let median = percentile(&sorted, 0.50);
    let q3 = percentile(&sorted, 0.75);
    let iqr = q3 - q1;
    let whisker_low = (q1 - 1.5 * iqr).max(min);
    let whisker_high = (q3 + 1.5 * iqr).min(max);
    let outliers = sorted.iter().filter(|&&x| x < whisker_low || x > whisker_high).count();
    Ok(BoxStats { min, q1, median, q3, max, whisker_low, whisker_high, outliers })
}

/// Empirical CDF over delay seconds (missed slots included at their maximum
/// delay). Returns one `(delay_s, cumulative_fraction)` point per distinct
/// delay; the last fraction is 1.
pub fn delay_cdf(log: &MetricsLog, dt: f64) -> Result<Vec<(f64, f64)>> {
    if log.delays.is_empty() {
        return Err(Error::Empty("no delay samples"));
    }
    let mut delays: Vec<f64> = log.delays.iter().map(|d| d.delay_steps as f64 * dt).collect();
    delays.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = delays.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, d) in delays.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *d => last.1 = frac,
            _ => out.push((*d, frac)),
        }
    }
    Ok(out)
}

/// Deadline-missed rate over terminal slots, plus the per-node
/// request-failed distribution (nodes with at least one terminal request).
pub fn failure_rates(log: &MetricsLog) -> Result<(f64, BoxStats)> {
    if log.delays.is_empty() {
        return Err(Error::Empty("no terminal slots"));
    }
    let missed_rate = log.missed_slots() as f64 / log.delays.len() as f64;
    let per_node: Vec<f64> = log
        .terminal_requests
        .iter()
        .zip(&log.failed_requests)
        .filter(|(&t, _)| t > 0)
        .map(|(&t, &f)| f as f64 / t as f64)
        .collect();
    if per_node.is_empty() {
        return Err(Error::Empty("no terminal requests"));
    }
    Ok((missed_rate, box_stats(&per_node)?))
}

/// Per-unit utilization (presentation starts over time-averaged replica
/// count) summarized over the catalog. Units never presented contribute 0.
pub fn utilization(log: &MetricsLog) -> Result<BoxStats> {
    if log.presentation_starts.is_empty() {
        return Err(Error::Empty("no units recorded"));
    }
    let per_unit = utilization_per_unit(log);
    box_stats(&per_unit)
}

pub fn utilization_per_unit(log: &MetricsLog) -> Vec<f64> {
    log.presentation_starts
        .iter()
        .enumerate()
        .map(|(u, &starts)| {
            if starts == 0 {
                0.0
            } else {
                let avg = log.avg_replicas(u);
                if avg > 0.0 {
                    starts as f64 / avg
                } else {
                    0.0
                }
            }
        })
        .collect()
}

/// Structured run summary, exported as JSON next to the CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub fulfilled_slots: usize,
    pub missed_slots: usize,
    pub missed_rate: f64,
    pub mean_delay_s: f64,
    pub median_delay_s: f64,
    pub request_failed: BoxStats,
    pub mean_request_failed: f64,
    pub utilization: BoxStats,
    pub mean_utilization: f64,
    pub cleanup_failures: u64,
    pub dropped_transfers: u64,
    pub failed_transfers: u64,
    pub quartile_method: String,
    /// Scenario keys (with CLI overrides applied) that produced this run.
    pub config: std::collections::BTreeMap<String, String>,
}

pub fn summarize(log: &MetricsLog, dt: f64, config: std::collections::BTreeMap<String, String>) -> Result<Summary> {
    let (missed_rate, request_failed) = failure_rates(log)?;
    let utilization_stats = utilization(log)?;
    let per_unit = utilization_per_unit(log);
    let mean_utilization = per_unit.iter().sum::<f64>() / per_unit.len() as f64;
    let delays_s: Vec<f64> = log.delays.iter().map(|d| d.delay_steps as f64 * dt).collect();
    let mean_delay_s = delays_s.iter().sum::<f64>() / delays_s.len() as f64;
    let median_delay_s = {
        let mut s = delays_s.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        percentile(&s, 0.50)
    };
    let per_node: Vec<f64> = log
        .terminal_requests
        .iter()
        .zip(&log.failed_requests)
        .filter(|(&t, _)| t > 0)
        .map(|(&t, &f)| f as f64 / t as f64)
        .collect();
    let mean_request_failed = per_node.iter().sum::<f64>() / per_node.len().max(1) as f64;
    Ok(Summary {
        fulfilled_slots: log.fulfilled_slots(),
        missed_slots: log.missed_slots(),
        missed_rate,
        mean_delay_s,
        median_delay_s,
        request_failed,
        mean_request_failed,
        utilization: utilization_stats,
        mean_utilization,
        cleanup_failures: log.cleanup_failures(),
        dropped_transfers: log.dropped_transfers,
        failed_transfers: log.failed_transfers,
        quartile_method: QUARTILE_METHOD.to_string(),
        config,
    })
}

pub fn write_delays_csv(log: &MetricsLog, dt: f64, w: &mut impl Write) -> Result<()> {
    writeln!(w, "step,delay_s,missed")?;
    for d in &log.delays {
        writeln!(w, "{},{},{}", d.step, d.delay_steps as f64 * dt, d.missed)?;
    }
    Ok(())
}

pub fn write_cdf_csv(log: &MetricsLog, dt: f64, w: &mut impl Write) -> Result<()> {
    writeln!(w, "delay_s,fraction")?;
    for (d, f) in delay_cdf(log, dt)? {
        writeln!(w, "{},{}", d, f)?;
    }
    Ok(())
}

pub fn write_cleanup_csv(log: &MetricsLog, w: &mut impl Write) -> Result<()> {
    writeln!(w, "step,node,policy,deleted_count,bytes_freed,failed")?;
    for r in &log.cleanup_reports {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.step,
            r.node,
            r.policy,
            r.deleted.len(),
            r.bytes_freed,
            r.failed
        )?;
    }
    Ok(())
}

/// Per-slot event log: `user,keyword,issued_at,terminal_status,delay_steps`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlotEvent {
    pub user: NodeId,
    pub keyword: usize,
    pub issued_at: Step,
    pub fulfilled: bool,
    pub delay_steps: u64,
}

pub fn write_slots_csv(log: &MetricsLog, w: &mut impl Write) -> Result<()> {
    writeln!(w, "user,keyword,issued_at,terminal_status,delay_steps")?;
    for e in &log.slot_events {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.user,
            e.keyword,
            e.issued_at,
            if e.fulfilled { "fulfilled" } else { "missed" },
            e.delay_steps
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_with_delays(delays: &[(u64, bool)]) -> MetricsLog {
        let mut log = MetricsLog::new(1, 1);
        for &(d, missed) in delays {
            log.delays.push(DelaySample { step: d, delay_steps: d, missed });
        }
        log.terminal_requests[0] = 1;
        log
    }

    #[test]
    fn cdf_matches_hand_oracle() {
        // samples 0, 0, 1, 2 seconds -> CDF(0)=0.5, CDF(1)=0.75, CDF(2)=1.0
        let log = log_with_delays(&[(0, false), (0, false), (1, false), (2, false)]);
        let cdf = delay_cdf(&log, 1.0).unwrap();
        assert_eq!(cdf, vec![(0.0, 0.5), (1.0, 0.75), (2.0, 1.0)]);
    }

    #[test]
    fn cdf_all_zero() {
        let log = log_with_delays(&[(0, false), (0, false)]);
        let cdf = delay_cdf(&log, 0.1).unwrap();
        assert_eq!(cdf, vec![(0.0, 1.0)]);
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one() {
        let log = log_with_delays(&[(5, true), (2, false), (9, true), (2, false), (0, false)]);
        let cdf = delay_cdf(&log, 0.1).unwrap();
        let mut prev = 0.0;
        for &(_, f) in &cdf {
            assert!(f >= prev);
            prev = f;
        }
        assert_eq!(cdf.last().unwrap().1, 1.0);
    }

    #[test]
    fn cdf_empty_is_error() {
        let log = MetricsLog::new(1, 1);
        assert!(delay_cdf(&log, 0.1).is_err());
    }

    #[test]
    fn missed_rate_is_simple_ratio() {
        let mut log = MetricsLog::new(2, 1);
        for i in 0..10u64 {
            log.delays.push(DelaySample { step: i, delay_steps: i, missed: i < 3 });
        }
        log.terminal_requests = vec![2, 1];
        log.failed_requests = vec![1, 0];
        let (missed, _) = failure_rates(&log).unwrap();
        assert!((missed - 0.3).abs() < 1e-12);
    }

    #[test]
    fn all_fulfilled_collapses_failed_box_at_zero() {
        let mut log = log_with_delays(&[(0, false), (1, false)]);
        log.terminal_requests = vec![4];
        log.failed_requests = vec![0];
        let (_, b) = failure_rates(&log).unwrap();
        assert_eq!((b.min, b.median, b.max), (0.0, 0.0, 0.0));
    }

    #[test]
    fn quartiles_match_hand_oracle() {
        // n = 4 samples, linear interpolation between closest ranks:
        // q1 at rank 0.75 -> 0.175, median at 1.5 -> 0.2, q3 at 2.25 -> 0.375
        let b = box_stats(&[0.1, 0.2, 0.2, 0.9]).unwrap();
        assert!((b.q1 - 0.175).abs() < 1e-12);
        assert!((b.median - 0.2).abs() < 1e-12);
        assert!((b.q3 - 0.375).abs() < 1e-12);
        assert_eq!(b.min, 0.1);
        assert_eq!(b.max, 0.9);
        // whiskers: q1 - 1.5*iqr = -0.125 clamps to min; q3 + 1.5*iqr = 0.675
        assert_eq!(b.whisker_low, 0.1);
        assert!((b.whisker_high - 0.675).abs() < 1e-12);
        assert_eq!(b.outliers, 1);
    }

    #[test]
    fn box_stats_match_sorting_oracle_small_n() {
        let mut rng = crate::rng::stream(1, "boxstats");
        for n in 1..=100 {
            let samples: Vec<f64> =
                (0..n).map(|_| rand::Rng::random_range(&mut rng, 0.0..10.0)).collect();
            let b = box_stats(&samples).unwrap();
            let mut sorted = samples.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(b.min, sorted[0]);
            assert_eq!(b.max, sorted[n - 1]);
            // Reference quartiles recomputed by the same published method
            // on the sorted data.
            let r = |p: f64| -> f64 {
                let h = (n - 1) as f64 * p;
                let lo = h.floor() as usize;
                sorted[lo] + (h - lo as f64) * (sorted[(h.ceil()) as usize] - sorted[lo])
            };
            assert_eq!(b.q1, r(0.25));
            assert_eq!(b.median, r(0.5));
            assert_eq!(b.q3, r(0.75));
        }
    }

    #[test]
    fn utilization_ratio_and_scaling() {
        let mut log = MetricsLog::new(1, 2);
        log.presentation_starts = vec![4, 0];
        log.replica_step_sum = vec![20, 30];
        log.census_steps = 10;
        let per_unit = utilization_per_unit(&log);
        assert_eq!(per_unit[0], 2.0, "4 starts / 2 avg replicas");
        assert_eq!(per_unit[1], 0.0, "never presented");
        // Doubling replica counts halves utilization.
        log.replica_step_sum = vec![40, 60];
        let doubled = utilization_per_unit(&log);
        assert_eq!(doubled[0], 1.0);
    }
}
