//! Graph-like states ∏ CZ^{r_ab} |+⟩^{⊗n} carrying per-vertex local frames, and the
//! measurement rules that rewrite them.
//!
//! The physical state is (⊗_v U_v) · G|+⟩ where G is the weighted CZ network and
//! U_v the vertex frame. A rule describes a measurement of the frame-free state
//! G|+⟩; the physical basis that realises it is the frame-adapted one returned by
//! [`GraphLikeState::physical_basis`]. Rule corrections are applied underneath the
//! existing frames, so a new frame is `rule.then(old)`.

mod frame;
pub mod reduce;
pub mod suite;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

pub use frame::LocalFrame;
pub use reduce::{
    clean_junction, reduce_to_cluster, residual_graph, verify_excerpts, Embedding, ExcerptReport, Instance, ReduceOptions,
    Reduction, ScheduleStep, Stage, StepBasis,
};
pub use suite::{rule_suite, RuleSuiteReport};

use crate::error::{Error, Result};
use crate::statevector::{LocalUnitary, MeasBasis, StateVector, DEFAULT_CAP};
use crate::zd::PrimeDim;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphLikeState {
    d: PrimeDim,
    alive: Vec<bool>,
    adj: Vec<BTreeMap<usize, u32>>,
    frames: Vec<LocalFrame>,
}

/// Outcome of [`GraphLikeState::stabilizer_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilizerReport {
    pub passed: bool,
    /// Largest |⟨ψ|S|ψ⟩ − 1| over all checked stabilizers.
    pub worst_deviation: f64,
    pub failing_vertex: Option<usize>,
}

impl GraphLikeState {
    pub fn new(d: PrimeDim, n: usize) -> Self {
        GraphLikeState { d, alive: vec![true; n], adj: vec![BTreeMap::new(); n], frames: vec![LocalFrame::default(); n] }
    }

    pub fn from_edges(d: PrimeDim, n: usize, edges: &[(usize, usize, u32)]) -> Result<Self> {
        let mut g = Self::new(d, n);
        for &(a, b, w) in edges {
            g.add_to_edge(a, b, w as i64)?;
        }
        Ok(g)
    }

    #[inline]
    pub fn dim(&self) -> PrimeDim {
        self.d
    }

    /// Number of vertex ids ever allocated, alive or not.
    pub fn capacity(&self) -> usize {
        self.alive.len()
    }

    pub fn add_vertex(&mut self) -> usize {
        self.alive.push(true);
        self.adj.push(BTreeMap::new());
        self.frames.push(LocalFrame::default());
        self.alive.len() - 1
    }

    pub fn contains(&self, v: usize) -> bool {
        self.alive.get(v).copied().unwrap_or(false)
    }

    fn check(&self, v: usize) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::MissingVertex(v))
        }
    }

    pub fn vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.alive.len()).filter(|&v| self.alive[v])
    }

    pub fn vertex_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.adj[v].iter().map(|(&u, &w)| (u, w))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn weight(&self, a: usize, b: usize) -> u32 {
        self.adj.get(a).and_then(|m| m.get(&b)).copied().unwrap_or(0)
    }

    /// Edges (a, b, r) with a < b.
    pub fn edges(&self) -> Vec<(usize, usize, u32)> {
        let mut out = Vec::new();
        for a in self.vertices() {
            for (&b, &w) in self.adj[a].range(a + 1..) {
                out.push((a, b, w));
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.vertices().map(|v| self.adj[v].len()).sum::<usize>() / 2
    }

    /// Sets r_ab; weight 0 deletes the edge.
    pub fn set_edge(&mut self, a: usize, b: usize, w: i64) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Err(Error::RepeatedSite(a));
        }
        let w = self.d.reduce(w);
        if w == 0 {
            self.adj[a].remove(&b);
            self.adj[b].remove(&a);
        } else {
            self.adj[a].insert(b, w);
            self.adj[b].insert(a, w);
        }
        Ok(())
    }

    /// r_ab += dw.
    pub fn add_to_edge(&mut self, a: usize, b: usize, dw: i64) -> Result<()> {
        let w = self.weight(a, b) as i64 + dw;
        self.set_edge(a, b, w)
    }

    pub fn frame(&self, v: usize) -> &LocalFrame {
        &self.frames[v]
    }

    pub fn set_frame(&mut self, v: usize, f: LocalFrame) -> Result<()> {
        self.check(v)?;
        self.frames[v] = f;
        Ok(())
    }

    /// Puts `rule` underneath the current frame of `v`.
    fn push_frame(&mut self, v: usize, rule: LocalFrame) {
        self.frames[v] = rule.then(&self.frames[v], self.d);
    }

    pub fn is_frame_free(&self) -> bool {
        self.vertices().all(|v| self.frames[v].is_identity())
    }

    pub fn clear_frames(&mut self) {
        for f in &mut self.frames {
            *f = LocalFrame::default();
        }
    }

    pub fn remove_vertex(&mut self, v: usize) -> Result<()> {
        self.check(v)?;
        let nbrs: Vec<usize> = self.adj[v].keys().copied().collect();
        for u in nbrs {
            self.adj[u].remove(&v);
        }
        self.adj[v].clear();
        self.alive[v] = false;
        self.frames[v] = LocalFrame::default();
        Ok(())
    }

    /// Induced sub-state on `keep`, with vertex ids and frames unchanged.
    pub fn restrict(&self, keep: &BTreeSet<usize>) -> GraphLikeState {
        let mut out = GraphLikeState::new(self.d, self.alive.len());
        for v in 0..self.alive.len() {
            if !(self.alive[v] && keep.contains(&v)) {
                out.alive[v] = false;
                continue;
            }
            out.frames[v] = self.frames[v];
            out.adj[v] = self.adj[v].iter().filter(|(u, _)| keep.contains(u)).map(|(&u, &w)| (u, w)).collect();
        }
        out
    }

    /// Site index of every alive vertex in [`Self::to_statevector`] order.
    pub fn site_map(&self) -> BTreeMap<usize, usize> {
        self.vertices().enumerate().map(|(i, v)| (v, i)).collect()
    }

    pub fn to_statevector(&self) -> Result<StateVector> {
        self.to_statevector_capped(DEFAULT_CAP)
    }

    /// Alive vertices become sites in increasing id order.
    pub fn to_statevector_capped(&self, cap: usize) -> Result<StateVector> {
        let map = self.site_map();
        let mut s = StateVector::new_plus_capped(self.d, map.len(), cap)?;
        for (a, b, w) in self.edges() {
            s.apply_cz_pow(w, map[&a], map[&b])?;
        }
        for (&v, &site) in &map {
            if !self.frames[v].is_identity() {
                s.apply_local(site, &self.frames[v].unitary(self.d))?;
            }
        }
        Ok(s)
    }

    /// Basis to use on the physical state so that `v` is measured in `underlying`
    /// on the frame-free state.
    pub fn physical_basis(&self, v: usize, underlying: &MeasBasis) -> Result<MeasBasis> {
        self.check(v)?;
        self.frames[v].adapt(self.d, underlying)
    }

    /// Checks X_a† ⊗_b Z_b^{r_ab} and its conjugate X_a ⊗_b Z_b^{−r_ab} (conjugated
    /// by the frames) have eigenvalue 1 on the physical state, for every vertex a.
    pub fn stabilizer_check(&self) -> Result<StabilizerReport> {
        self.stabilizer_check_against(&self.to_statevector()?)
    }

    /// Same check, against an externally supplied state in [`Self::site_map`] order.
    pub fn stabilizer_check_against(&self, psi: &StateVector) -> Result<StabilizerReport> {
        let map = self.site_map();
        let d = self.d;
        let mut worst = 0.0f64;
        let mut failing = None;
        for a in self.vertices() {
            for sign in [1i64, -1] {
                let mut t = psi.clone();
                let mut touched = vec![a];
                touched.extend(self.adj[a].keys());
                for &v in &touched {
                    if !self.frames[v].is_identity() {
                        t.apply_local(map[&v], &self.frames[v].unitary(d).adjoint())?;
                    }
                }
                t.apply_local(map[&a], &LocalUnitary::x_pow(d, -sign))?;
                for (b, w) in self.neighbors(a) {
                    t.apply_local(map[&b], &LocalUnitary::z_pow(d, sign * w as i64))?;
                }
                for &v in &touched {
                    if !self.frames[v].is_identity() {
                        t.apply_local(map[&v], &self.frames[v].unitary(d))?;
                    }
                }
                let dev = (psi.inner(&t)? - num_complex::Complex64::new(1.0, 0.0)).norm();
                if dev > worst {
                    worst = dev;
                }
                if dev > 1e-10 && failing.is_none() {
                    failing = Some(a);
                }
            }
        }
        Ok(StabilizerReport { passed: failing.is_none(), worst_deviation: worst, failing_vertex: failing })
    }

    /// Rule a: computational-basis measurement of `v` with outcome `m`.
    /// Each neighbour x picks up Z^{m·r_vx}.
    pub fn measure_z(&mut self, v: usize, m: u32) -> Result<()> {
        self.check(v)?;
        let d = self.d;
        let nbrs: Vec<(usize, u32)> = self.neighbors(v).collect();
        self.remove_vertex(v)?;
        for (x, w) in nbrs {
            self.push_frame(x, LocalFrame::z(d, m as i64 * w as i64));
        }
        Ok(())
    }

    /// Rule b: X-basis measurements of `a` (outcome m) and of its degree-2
    /// neighbour `b` (outcome n). With p = r_ab, q = r_bc the constraint
    /// j_a = p⁻¹(n − q·j_c) moves every other edge (a, x, w) onto (x, c) with
    /// weight −w·p⁻¹·q. Returns c.
    pub fn measure_x_pair(&mut self, a: usize, b: usize, m: u32, n: u32) -> Result<usize> {
        self.check(a)?;
        self.check(b)?;
        let d = self.d;
        if self.degree(b) != 2 || self.weight(a, b) == 0 {
            return Err(Error::BadDegree { vertex: b, expected: 2, actual: self.degree(b) });
        }
        let c = self.adj[b].keys().copied().find(|&x| x != a).expect("degree 2");
        let p = self.weight(a, b);
        let q = self.weight(b, c);
        let pinv = d.inv(p)? as i64;
        let (m, n, q) = (m as i64, n as i64, q as i64);
        let others: Vec<(usize, u32)> = self.neighbors(a).filter(|&(x, _)| x != b).collect();
        self.remove_vertex(a)?;
        self.remove_vertex(b)?;
        // ϖ^{−m·h(j_c)}
        let mut fc = LocalFrame { lin: d.reduce(m * pinv * q), phase: d.reduce(-m * pinv * n), ..LocalFrame::default() };
        for (x, w) in others {
            let w = w as i64;
            if x == c {
                // ϖ^{w·h(j_c)·j_c}
                fc.lin = d.reduce(fc.lin as i64 + w * pinv * n);
                fc.quad = d.reduce(fc.quad as i64 - w * pinv * q);
            } else {
                self.add_to_edge(x, c, -w * pinv * q)?;
                self.push_frame(x, LocalFrame::z(d, w * pinv * n));
            }
        }
        self.push_frame(c, fc);
        Ok(c)
    }

    /// Rule c: measurement of `v` in the ZX^k eigenbasis with outcome `m`.
    /// Every neighbour pair (x, y) gets r_xy −= k·w_x·w_y and each neighbour the
    /// diagonal ϖ^{(m + k/2)·w·j − (k/2)·w²·j²}.
    pub fn measure_zxk(&mut self, v: usize, k: u32, m: u32) -> Result<()> {
        self.check(v)?;
        let d = self.d;
        d.require_odd("ZX^k rule")?;
        if k % d.get() == 0 {
            return Err(Error::Invalid("ZX^k rule needs k != 0".into()));
        }
        let half_k = d.half(k)? as i64;
        let (k, m) = (k as i64, m as i64);
        let nbrs: Vec<(usize, u32)> = self.neighbors(v).collect();
        self.remove_vertex(v)?;
        for (i, &(x, wx)) in nbrs.iter().enumerate() {
            for &(y, wy) in &nbrs[i + 1..] {
                self.add_to_edge(x, y, -k * wx as i64 * wy as i64)?;
            }
            let w = wx as i64;
            self.push_frame(x, LocalFrame::quadratic(d, (m + half_k) * w, -half_k * w * w));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevector::fidelity_up_to_phase;
    use num_complex::Complex64;

    fn p(d: u32) -> PrimeDim {
        PrimeDim::new(d).unwrap()
    }

    /// Measure `sites` of `g` (vertex ids, frame-adapted) on the oracle state.
    fn oracle(g: &GraphLikeState, ops: &[(usize, MeasBasis, u32)]) -> StateVector {
        let map = g.site_map();
        let mut s = g.to_statevector().unwrap();
        let mut order: Vec<&(usize, MeasBasis, u32)> = ops.iter().collect();
        order.sort_by_key(|(v, _, _)| std::cmp::Reverse(map[v]));
        for (v, b, m) in order {
            let basis = g.physical_basis(*v, b).unwrap();
            s = s.measure_forced(map[v], &basis, *m).unwrap().state;
        }
        s
    }

    fn same(a: &StateVector, b: &StateVector) -> bool {
        (fidelity_up_to_phase(a, b).unwrap() - 1.0).abs() < 1e-9
    }

    #[test]
    fn small_states() {
        let d = p(3);
        let g = GraphLikeState::new(d, 2);
        assert_eq!(g.to_statevector().unwrap(), StateVector::new_plus(d, 2).unwrap());
        let g = GraphLikeState::from_edges(p(2), 2, &[(0, 1, 1)]).unwrap();
        let s = g.to_statevector().unwrap();
        assert!((s.amplitudes()[3] - Complex64::new(-0.5, 0.0)).norm() < 1e-12);
        let tri = GraphLikeState::from_edges(d, 3, &[(0, 1, 1), (1, 2, 2), (0, 2, 1)]).unwrap();
        assert!(tri.stabilizer_check().unwrap().passed);
    }

    #[test]
    fn stabilizers_of_paths() {
        let d = p(5);
        for a in 1..5 {
            for b in 1..5 {
                let g = GraphLikeState::from_edges(d, 3, &[(0, 1, a), (1, 2, b)]).unwrap();
                assert!(g.stabilizer_check().unwrap().passed, "p={a} q={b}");
            }
        }
    }

    #[test]
    fn corrupted_weight_fails_stabilizer() {
        let d = p(5);
        let g = GraphLikeState::from_edges(d, 3, &[(0, 1, 2), (1, 2, 3)]).unwrap();
        let psi = g.to_statevector().unwrap();
        let mut bad = g.clone();
        bad.set_edge(0, 1, 4).unwrap();
        let report = bad.stabilizer_check_against(&psi).unwrap();
        assert!(!report.passed);
        assert!(report.worst_deviation > 0.1);
        // an unrecorded frame is caught too
        let mut framed = g.clone();
        framed.set_frame(1, LocalFrame::quadratic(d, 0, 1)).unwrap();
        assert!(!g.stabilizer_check_against(&framed.to_statevector().unwrap()).unwrap().passed);
        assert!(framed.stabilizer_check().unwrap().passed);
    }

    #[test]
    fn rule_a_examples() {
        let d = p(3);
        let mut g = GraphLikeState::from_edges(d, 3, &[(0, 1, 1), (1, 2, 1)]).unwrap();
        g.measure_z(1, 0).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert!(g.is_frame_free());
        let mut g = GraphLikeState::from_edges(d, 3, &[(0, 1, 1), (1, 2, 1)]).unwrap();
        let before = g.clone();
        g.measure_z(1, 1).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.frame(0).z_pow, 1);
        assert_eq!(g.frame(2).z_pow, 1);
        for m in 0..3 {
            let mut h = before.clone();
            h.measure_z(1, m).unwrap();
            let o = oracle(&before, &[(1, MeasBasis::Computational, m)]);
            assert!(same(&h.to_statevector().unwrap(), &o));
        }
    }

    #[test]
    fn rule_b_chain() {
        // x – a – b – c with unit weights, d = 3
        let d = p(3);
        let g0 = GraphLikeState::from_edges(d, 4, &[(0, 1, 1), (1, 2, 1), (2, 3, 1)]).unwrap();
        let mut g = g0.clone();
        g.measure_x_pair(1, 2, 0, 0).unwrap();
        assert_eq!(g.weight(0, 3), 2);
        for m in 0..3 {
            for n in 0..3 {
                let mut h = g0.clone();
                h.measure_x_pair(1, 2, m, n).unwrap();
                let o = oracle(&g0, &[(1, MeasBasis::Fourier, m), (2, MeasBasis::Fourier, n)]);
                assert!(same(&h.to_statevector().unwrap(), &o), "m={m} n={n}");
            }
        }
        // a of degree 1: nothing moves, c only gains a frame
        let g1 = GraphLikeState::from_edges(d, 3, &[(0, 1, 1), (1, 2, 2)]).unwrap();
        let mut h = g1.clone();
        h.measure_x_pair(0, 1, 1, 2).unwrap();
        assert_eq!(h.edge_count(), 0);
        assert!(!h.frame(2).is_identity());
        let o = oracle(&g1, &[(0, MeasBasis::Fourier, 1), (1, MeasBasis::Fourier, 2)]);
        assert!(same(&h.to_statevector().unwrap(), &o));
        let mut bad = g0.clone();
        assert!(matches!(bad.measure_x_pair(1, 0, 0, 0), Err(Error::BadDegree { .. })));
    }

    #[test]
    fn rule_c_creates_and_deletes() {
        let d = p(3);
        // k = −p⁻¹q⁻¹ = 2 creates a CZ
        let g0 = GraphLikeState::from_edges(d, 3, &[(0, 1, 1), (1, 2, 1)]).unwrap();
        let mut g = g0.clone();
        g.measure_zxk(1, 2, 0).unwrap();
        assert_eq!(g.weight(0, 2), 1);
        // r = 2, k = r·p⁻¹q⁻¹ = 2 deletes it
        let g1 = GraphLikeState::from_edges(d, 3, &[(0, 1, 1), (1, 2, 1), (0, 2, 2)]).unwrap();
        let mut g = g1.clone();
        g.measure_zxk(1, 2, 1).unwrap();
        assert_eq!(g.weight(0, 2), 0);
        for m in 0..3 {
            for (g0, k) in [(&g0, 2u32), (&g1, 2), (&g1, 1)] {
                let mut h = g0.clone();
                h.measure_zxk(1, k, m).unwrap();
                let o = oracle(g0, &[(1, MeasBasis::ZXk(k), m)]);
                assert!(same(&h.to_statevector().unwrap(), &o), "k={k} m={m}");
            }
        }
        let mut g2 = GraphLikeState::from_edges(p(2), 2, &[(0, 1, 1)]).unwrap();
        assert!(matches!(g2.measure_zxk(0, 1, 0), Err(Error::NeedsOdd { .. })));
    }

    #[test]
    fn junction_rule() {
        // v = 3 joined to a = 0, c = 1, d = 2 with weights p, q, s; r_ac ≠ 0
        let d = p(5);
        let (pw, qw, sw, r) = (2u32, 3u32, 4u32, 1u32);
        let g0 = GraphLikeState::from_edges(d, 4, &[(3, 0, pw), (3, 1, qw), (3, 2, sw), (0, 1, r)]).unwrap();
        let k = d.mul(r, d.mul(d.inv(pw).unwrap(), d.inv(qw).unwrap()));
        let mut g = g0.clone();
        g.measure_zxk(3, k, 0).unwrap();
        assert_eq!(g.weight(0, 1), 0);
        assert_eq!(g.weight(0, 2), d.reduce(-((k * pw * sw) as i64)));
        assert_eq!(g.weight(1, 2), d.reduce(-((k * qw * sw) as i64)));
        for m in 0..5 {
            let mut h = g0.clone();
            h.measure_zxk(3, k, m).unwrap();
            let o = oracle(&g0, &[(3, MeasBasis::ZXk(k), m)]);
            assert!(same(&h.to_statevector().unwrap(), &o));
        }
    }

    #[test]
    fn gauss_ratio_identity() {
        // Σ_l ϖ^{−α_l + lR} / Σ_l ϖ^{−α_l} = ϖ^{−(k/2)R(R−1)}
        for dv in [3u32, 5, 7] {
            let d = p(dv);
            for k in 1..dv {
                let alpha = crate::statevector::zxk_alpha(d, k).unwrap();
                let f = |r: i64| -> Complex64 { (0..dv).map(|l| d.omega(-(alpha[l as usize] as i64) + l as i64 * r)).sum() };
                let f0 = f(0);
                for r in 0..dv as i64 {
                    let want = d.omega(-(d.half(k).unwrap() as i64) * r * (r - 1));
                    assert!((f(r) / f0 - want).norm() < 1e-10, "d={dv} k={k} R={r}");
                }
            }
        }
    }

    #[test]
    fn disjoint_z_measurements_commute() {
        let d = p(5);
        let g0 = GraphLikeState::from_edges(d, 5, &[(0, 1, 2), (1, 2, 3), (2, 3, 1), (3, 4, 4), (0, 4, 2)]).unwrap();
        let mut a = g0.clone();
        a.measure_z(1, 3).unwrap();
        a.measure_z(3, 2).unwrap();
        let mut b = g0;
        b.measure_z(3, 2).unwrap();
        b.measure_z(1, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sequential_rules_use_adapted_bases() {
        // ZX^k on a framed vertex: the frame must be folded into the physical basis
        let d = p(3);
        let g0 = GraphLikeState::from_edges(d, 4, &[(0, 1, 1), (1, 2, 2), (2, 3, 1)]).unwrap();
        let mut g = g0.clone();
        g.measure_z(0, 2).unwrap();
        let s1 = g.to_statevector().unwrap();
        for m in 0..3 {
            let mut h = g.clone();
            h.measure_zxk(1, 1, m).unwrap();
            let basis = g.physical_basis(1, &MeasBasis::ZXk(1)).unwrap();
            let o = s1.measure_forced(0, &basis, m).unwrap().state;
            assert!(same(&h.to_statevector().unwrap(), &o));
        }
    }

    #[test]
    fn serialises_to_json() {
        let g = GraphLikeState::from_edges(p(3), 2, &[(0, 1, 2)]).unwrap();
        let v = serde_json::to_value(&g).unwrap();
        assert_eq!(v["d"], 3);
    }
}
