//! The hormone field: per-(node, keyword) demand levels and their dynamics —
//! deposit, periodic raise, diffusion, evaporation, gradient queries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Overlay;
use crate::{KeywordId, NodeId, Step};

/// The eight runtime parameters governing hormone dynamics and storage
/// behavior. Defaults are the genetically optimized set the simulator ships
/// with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    /// Hormone strength deposited for a slot at request creation.
    pub eta0: f64,
    /// Per-step raise while a slot stays open.
    pub eta: f64,
    /// Fraction of a node's level forwarded to neighbors each step.
    pub alpha: f64,
    /// Fixed evaporation subtrahend per step.
    pub epsilon: f64,
    /// Minimum gradient for a unit to move.
    pub m: f64,
    /// Clean-up trigger fill fraction.
    pub c: f64,
    /// Minimum hormone strength; levels below it vanish.
    pub t: f64,
    /// Hop budget per journey.
    pub maxhops: u32,
}

impl Default for ParameterSet {
    fn default() -> Self {
        ParameterSet {
            eta0: 3.95,
            eta: 4.39,
            alpha: 0.45,
            epsilon: 0.16,
            m: 0.23,
            c: 0.60,
            t: 0.23,
            maxhops: 10,
        }
    }
}

impl ParameterSet {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha must be in [0, 1]"));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::config("c must be in (0, 1]"));
        }
        if self.maxhops < 1 {
            return Err(Error::config("maxhops must be >= 1"));
        }
        for (name, v) in [
            ("eta0", self.eta0),
            ("eta", self.eta),
            ("epsilon", self.epsilon),
            ("m", self.m),
            ("t", self.t),
        ] {
            if !(v >= 0.0) {
                return Err(Error::config(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Dense per-(node, keyword) hormone levels. All levels stay non-negative;
/// after evaporation nothing survives strictly below the `t` floor.
#[derive(Debug, Clone)]
pub struct HormoneField {
    levels: Vec<f64>,
    scratch: Vec<f64>,
    node_count: usize,
    keyword_count: usize,
}

impl HormoneField {
    pub fn new(node_count: usize, keyword_count: usize) -> Self {
        HormoneField {
            levels: vec![0.0; node_count * keyword_count],
            scratch: vec![0.0; node_count * keyword_count],
            node_count,
            keyword_count,
        }
    }

    #[inline]
    fn idx(&self, node: NodeId, keyword: KeywordId) -> usize {
        node * self.keyword_count + keyword
    }

    #[inline]
    pub fn level(&self, node: NodeId, keyword: KeywordId) -> f64 {
        self.levels[self.idx(node, keyword)]
    }

    pub fn keyword_count(&self) -> usize {
        self.keyword_count
    }

    pub fn total_mass(&self) -> f64 {
        self.levels.iter().sum()
    }

    /// Adds hormone at a slot. The node must be alive.
    pub fn deposit(&mut self, overlay: &Overlay, node: NodeId, keyword: KeywordId, amount: f64) -> Result<()> {
        if !overlay.is_alive(node) {
            return Err(Error::DeadNode(node));
        }
        debug_assert!(amount >= 0.0);
        let i = self.idx(node, keyword);
        self.levels[i] += amount;
        Ok(())
    }

    /// Raises every open slot by `eta`. Fulfilled or missed slots are not in
    /// the iterator by construction, so they gain nothing.
    pub fn raise_open_requests(&mut self, slots: impl IntoIterator<Item = (NodeId, KeywordId)>, eta: f64) {
        for (node, keyword) in slots {
            let i = self.idx(node, keyword);
            self.levels[i] += eta;
        }
    }

    /// One synchronous diffusion sweep: every node forwards `alpha` of each
    /// keyword level to alive neighbors, split proportionally to link
    /// bandwidth, keeping `1 - alpha`. A node holding a unit that matches the
    /// keyword forwards nothing for it. All outflows are computed from the
    /// pre-step field, so iteration order cannot matter.
    pub fn diffuse(&mut self, overlay: &Overlay, alpha: f64, residence: impl Fn(NodeId, KeywordId) -> bool) {
        let k = self.keyword_count;
        self.scratch.iter_mut().for_each(|v| *v = 0.0);
        let mut nbrs: Vec<(usize, f64)> = Vec::new();
        for n in 0..self.node_count {
            if !overlay.is_alive(n) {
                continue;
            }
            nbrs.clear();
            let mut total_bw = 0.0;
            for m in overlay.alive_neighbors(n) {
                let bw = overlay.bandwidth(n, m).unwrap_or(0.0);
                if bw > 0.0 {
                    nbrs.push((m, bw));
                    total_bw += bw;
                }
            }
            let row = n * k;
            for kw in 0..k {
                let lv = self.levels[row + kw];
                if lv == 0.0 {
                    continue;
                }
                if nbrs.is_empty() || residence(n, kw) {
                    self.scratch[row + kw] += lv;
                    continue;
                }
                self.scratch[row + kw] += (1.0 - alpha) * lv;
                let out = alpha * lv;
                for &(m, bw) in &nbrs {
                    self.scratch[m * k + kw] += out * bw / total_bw;
                }
            }
        }
        std::mem::swap(&mut self.levels, &mut self.scratch);
    }

    /// Evaporation: subtract `epsilon` (floored at zero), then clamp any
    /// level strictly below `t` to zero.
    pub fn evaporate(&mut self, epsilon: f64, t: f64) {
        for v in self.levels.iter_mut() {
            let mut x = *v - epsilon;
            if x < 0.0 {
                x = 0.0;
            }
            if x < t {
                x = 0.0;
            }
            *v = x;
        }
    }

    /// Alive neighbors with their level difference for `keyword`, steepest
    /// first, ties by ascending node id.
    pub fn gradient(&self, overlay: &Overlay, node: NodeId, keyword: KeywordId) -> Vec<(NodeId, f64)> {
        let own = self.level(node, keyword);
        let mut out: Vec<(NodeId, f64)> = overlay
            .alive_neighbors(node)
            .map(|m| (m, self.level(m, keyword) - own))
            .collect();
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        out
    }

    /// Clears every level on a removed node.
    pub fn zero_node(&mut self, node: NodeId) {
        let row = node * self.keyword_count;
        self.levels[row..row + self.keyword_count].iter_mut().for_each(|v| *v = 0.0);
    }

    /// Debug dump, one `step,node,keyword,level` row per positive level.
    pub fn dump_csv(&self, w: &mut impl Write, step: Step) -> Result<()> {
        for n in 0..self.node_count {
            for kw in 0..self.keyword_count {
                let lv = self.level(n, kw);
                if lv > 0.0 {
                    writeln!(w, "{step},{n},{kw},{lv}")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Overlay;

    fn line3() -> Overlay {
        // 0 - 1 - 2 with equal bandwidth
        let mut o = Overlay::empty(3);
        o.add_edge(0, 1, 1e8);
        o.add_edge(1, 2, 1e8);
        o
    }

    #[test]
    fn deposit_accumulates() {
        let o = line3();
        let mut f = HormoneField::new(3, 1);
        f.deposit(&o, 0, 0, 3.95).unwrap();
        assert_eq!(f.level(0, 0), 3.95);
        f.deposit(&o, 0, 0, 0.0).unwrap();
        assert_eq!(f.level(0, 0), 3.95);
        let mut g = HormoneField::new(3, 1);
        g.deposit(&o, 1, 0, 1.5).unwrap();
        g.deposit(&o, 1, 0, 2.0).unwrap();
        assert_eq!(g.level(1, 0), 3.5);
    }

    #[test]
    fn deposit_on_dead_node_fails() {
        let mut o = line3();
        o.remove_node(2).unwrap();
        let mut f = HormoneField::new(3, 1);
        assert!(matches!(f.deposit(&o, 2, 0, 1.0), Err(Error::DeadNode(2))));
    }

    #[test]
    fn raise_only_touches_open_slots() {
        let mut f = HormoneField::new(3, 2);
        // Hand-simulated schedule: slot fulfilled after 2 of 5 steps gains 2
        // eta; a slot open the whole time gains 5 eta.
        for step in 0..5 {
            let mut open = vec![(0, 0)];
            if step < 2 {
                open.push((1, 1));
            }
            f.raise_open_requests(open, 4.39);
        }
        assert!((f.level(0, 0) - 5.0 * 4.39).abs() < 1e-12);
        assert!((f.level(1, 1) - 2.0 * 4.39).abs() < 1e-12);
        let mut g = HormoneField::new(3, 2);
        g.raise_open_requests(std::iter::empty(), 4.39);
        assert_eq!(g.total_mass(), 0.0);
    }

    #[test]
    fn three_raises_accumulate_eta() {
        let mut f = HormoneField::new(1, 1);
        for _ in 0..3 {
            f.raise_open_requests([(0, 0)], 4.39);
        }
        assert!((f.level(0, 0) - 13.17).abs() < 1e-12);
    }

    #[test]
    fn diffusion_splits_by_bandwidth_share() {
        // Node 1 has level 10 and two equal-bandwidth neighbors.
        let o = line3();
        let mut f = HormoneField::new(3, 1);
        f.deposit(&o, 1, 0, 10.0).unwrap();
        f.diffuse(&o, 0.45, |_, _| false);
        assert!((f.level(1, 0) - 5.5).abs() < 1e-12);
        assert!((f.level(0, 0) - 2.25).abs() < 1e-12);
        assert!((f.level(2, 0) - 2.25).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_changes_nothing() {
        let o = line3();
        let mut f = HormoneField::new(3, 1);
        f.deposit(&o, 1, 0, 10.0).unwrap();
        f.diffuse(&o, 0.0, |_, _| false);
        assert_eq!(f.level(1, 0), 10.0);
        assert_eq!(f.level(0, 0), 0.0);
    }

    #[test]
    fn residence_stops_diffusion() {
        let o = line3();
        let mut f = HormoneField::new(3, 1);
        f.deposit(&o, 1, 0, 10.0).unwrap();
        f.diffuse(&o, 0.45, |n, _| n == 1);
        assert_eq!(f.level(1, 0), 10.0);
        assert_eq!(f.level(0, 0), 0.0);
        assert_eq!(f.level(2, 0), 0.0);
    }

    #[test]
    fn diffusion_conserves_mass() {
        let o = crate::topology::generate_random_overlay(50, 0.12, 1e8, 1).unwrap();
        let mut f = HormoneField::new(50, 4);
        for n in 0..50 {
            f.deposit(&o, n, n % 4, 1.0 + n as f64).unwrap();
        }
        let before = f.total_mass();
        for _ in 0..100 {
            f.diffuse(&o, 0.45, |_, _| false);
        }
        let after = f.total_mass();
        assert!(((after - before) / before).abs() < 1e-9, "mass {before} -> {after}");
    }

    #[test]
    fn diffusion_matches_dense_reference() {
        // Independent dense Jacobi evaluation of the split rule.
        let mut o = Overlay::empty(4);
        o.add_edge(0, 1, 2.0);
        o.add_edge(0, 2, 1.0);
        o.add_edge(1, 2, 1.0);
        o.add_edge(2, 3, 4.0);
        let alpha = 0.45;
        let mut f = HormoneField::new(4, 1);
        let init = [3.0, 0.5, 0.0, 7.25];
        for (n, &v) in init.iter().enumerate() {
            f.deposit(&o, n, 0, v).unwrap();
        }
        f.diffuse(&o, alpha, |_, _| false);

        let mut expect = [0.0f64; 4];
        for n in 0..4 {
            let total_bw: f64 = o.alive_neighbors(n).map(|m| o.bandwidth(n, m).unwrap()).sum();
            expect[n] += (1.0 - alpha) * init[n];
            for m in o.alive_neighbors(n) {
                expect[m] += alpha * init[n] * o.bandwidth(n, m).unwrap() / total_bw;
            }
        }
        for n in 0..4 {
            assert!((f.level(n, 0) - expect[n]).abs() < 1e-12, "node {n}");
        }
    }

    #[test]
    fn monotone_decay_without_input() {
        let o = line3();
        let mut f = HormoneField::new(3, 2);
        f.deposit(&o, 0, 0, 8.0).unwrap();
        f.deposit(&o, 2, 1, 3.0).unwrap();
        let mut prev = f.total_mass();
        for _ in 0..50 {
            f.diffuse(&o, 0.45, |_, _| false);
            f.evaporate(0.16, 0.23);
            let mass = f.total_mass();
            assert!(mass <= prev + 1e-12);
            prev = mass;
        }
    }

    #[test]
    fn evaporation_floors_and_clamps() {
        let o = line3();
        let mut f = HormoneField::new(3, 1);
        f.deposit(&o, 0, 0, 1.0).unwrap();
        f.evaporate(0.16, 0.0);
        assert!((f.level(0, 0) - 0.84).abs() < 1e-12);

        let mut g = HormoneField::new(3, 1);
        g.deposit(&o, 0, 0, 0.10).unwrap();
        g.evaporate(0.16, 0.0);
        assert_eq!(g.level(0, 0), 0.0);

        let mut h = HormoneField::new(3, 1);
        h.deposit(&o, 0, 0, 0.30).unwrap();
        h.evaporate(0.16, 0.23);
        assert_eq!(h.level(0, 0), 0.0, "0.14 < t clamps to zero");
    }

    #[test]
    fn no_level_survives_in_open_interval_below_t() {
        let o = line3();
        let t = 0.23;
        let mut f = HormoneField::new(3, 3);
        let mut rng = crate::rng::stream(3, "test");
        for n in 0..3 {
            for kw in 0..3 {
                f.deposit(&o, n, kw, rand::Rng::random_range(&mut rng, 0.0..2.0)).unwrap();
            }
        }
        for _ in 0..10 {
            f.diffuse(&o, 0.45, |_, _| false);
            f.evaporate(0.16, t);
            for n in 0..3 {
                for kw in 0..3 {
                    let lv = f.level(n, kw);
                    assert!(lv == 0.0 || lv >= t, "level {lv} inside (0, t)");
                }
            }
        }
    }

    #[test]
    fn gradient_sorts_steepest_first() {
        let o = line3();
        let mut f = HormoneField::new(3, 1);
        f.deposit(&o, 0, 0, 5.0).unwrap();
        f.deposit(&o, 2, 0, 3.0).unwrap();
        f.deposit(&o, 1, 0, 2.0).unwrap();
        let g = f.gradient(&o, 1, 0);
        assert_eq!(g, vec![(0, 3.0), (2, 1.0)]);
    }

    #[test]
    fn gradient_isolated_and_ties() {
        let mut o = Overlay::empty(3);
        o.add_edge(0, 1, 1.0);
        o.add_edge(0, 2, 1.0);
        let f = HormoneField::new(3, 1);
        let g = f.gradient(&o, 0, 0);
        assert_eq!(g, vec![(1, 0.0), (2, 0.0)], "ties order by node id");
        let mut lonely = Overlay::empty(2);
        lonely.add_edge(0, 1, 1.0);
        lonely.remove_node(1).unwrap();
        let g2 = HormoneField::new(2, 1).gradient(&lonely, 0, 0);
        assert!(g2.is_empty());
    }
}
