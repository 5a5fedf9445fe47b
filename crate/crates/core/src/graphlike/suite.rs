//! Exhaustive rule-versus-oracle sweep over random small host graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::reduce::{oracle_fidelity, ScheduleStep, Stage, StepBasis};
use super::GraphLikeState;
use crate::error::Result;
use crate::zd::PrimeDim;

/// Fidelity floor for a rule to count as matching the oracle.
pub const RULE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RuleCounts {
    pub z: usize,
    pub x_pair: usize,
    pub zxk: usize,
    /// ZX^k applications whose k cancels an existing neighbour edge.
    pub junction: usize,
}

impl RuleCounts {
    fn add(&mut self, o: &RuleCounts) {
        self.z += o.z;
        self.x_pair += o.x_pair;
        self.zxk += o.zxk;
        self.junction += o.junction;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RuleSuiteReport {
    pub schema: &'static str,
    pub d: u32,
    pub graphs: usize,
    pub seed: u64,
    pub checked: RuleCounts,
    pub min_fidelity: f64,
    /// First few mismatches, human readable.
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Random host graph on 2..=`max_vertices` vertices with edge density ½.
pub fn random_host<R: Rng>(d: PrimeDim, max_vertices: usize, rng: &mut R) -> Result<GraphLikeState> {
    let n = rng.gen_range(2..=max_vertices.max(2));
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.5) {
                edges.push((a, b, rng.gen_range(1..d.get())));
            }
        }
    }
    GraphLikeState::from_edges(d, n, &edges)
}

fn step(vertex: usize, basis: StepBasis, outcome: u32, partner: Option<(usize, u32)>) -> ScheduleStep {
    let stage = match basis {
        StepBasis::Z => Stage::Clean,
        StepBasis::X => Stage::Merge,
        StepBasis::ZXk(_) => Stage::Shorten,
    };
    ScheduleStep { stage, vertex, basis, outcome, partner }
}

/// Every applicable rule on `g`, every outcome.
fn sweep(g: &GraphLikeState, label: &str, counts: &mut RuleCounts, min_f: &mut f64, failures: &mut Vec<String>) -> Result<()> {
    let d = g.dim();
    let mut record = |s: ScheduleStep, junction: bool| -> Result<()> {
        let f = oracle_fidelity(g, &s)?;
        match s.basis {
            StepBasis::Z => counts.z += 1,
            StepBasis::X => counts.x_pair += 1,
            StepBasis::ZXk(_) => counts.zxk += 1,
        }
        counts.junction += usize::from(junction);
        *min_f = min_f.min(f);
        if f < 1.0 - RULE_TOL && failures.len() < 8 {
            failures.push(format!("{label}: {s:?} on {:?} has fidelity {f:.12}", g.edges()));
        }
        Ok(())
    };
    let verts: Vec<usize> = g.vertices().collect();
    for &v in &verts {
        for m in 0..d.get() {
            record(step(v, StepBasis::Z, m, None), false)?;
        }
        let nbrs: Vec<(usize, u32)> = g.neighbors(v).collect();
        for k in 1..d.get() {
            // k = r·p⁻¹q⁻¹ removes the edge between two neighbours
            let junction = nbrs.iter().enumerate().any(|(i, &(a, p))| {
                nbrs[i + 1..].iter().any(|&(c, q)| {
                    let r = g.weight(a, c);
                    r != 0 && d.mul(r, d.mul(d.inv(p).unwrap_or(0), d.inv(q).unwrap_or(0))) == k
                })
            });
            for m in 0..d.get() {
                record(step(v, StepBasis::ZXk(k), m, None), junction)?;
            }
        }
        for &(b, _) in &nbrs {
            if g.degree(b) == 2 {
                for m in 0..d.get() {
                    for n in 0..d.get() {
                        record(step(v, StepBasis::X, m, Some((b, n))), false)?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Checks rules a, b, c and the junction case on `graphs` random hosts of at most
/// `max_vertices` vertices, exhaustively over outcomes. Each host is checked frame-free
/// and again after one random Z measurement, so the frame-adapted bases are exercised.
pub fn rule_suite(d: PrimeDim, graphs: usize, max_vertices: usize, seed: u64) -> Result<RuleSuiteReport> {
    d.require_odd("graph rules")?;
    let parts: Vec<Result<(RuleCounts, f64, Vec<String>)>> = (0..graphs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let g = random_host(d, max_vertices, &mut rng)?;
            let (mut counts, mut min_f, mut failures) = (RuleCounts::default(), 1.0f64, Vec::new());
            sweep(&g, &format!("host {i}"), &mut counts, &mut min_f, &mut failures)?;
            // a Z measurement on a vertex with a neighbour leaves a frame behind
            if let Some(v) = g.vertices().find(|&v| g.degree(v) > 0) {
                let mut h = g.clone();
                let extra = h.add_vertex();
                h.add_to_edge(v, extra, rng.gen_range(1..d.get()) as i64)?;
                h.measure_z(extra, rng.gen_range(1..d.get()))?;
                sweep(&h, &format!("host {i} framed"), &mut counts, &mut min_f, &mut failures)?;
            }
            Ok((counts, min_f, failures))
        })
        .collect();
    let mut checked = RuleCounts::default();
    let mut min_fidelity = 1.0f64;
    let mut failures = Vec::new();
    for p in parts {
        let (c, f, fl) = p?;
        checked.add(&c);
        min_fidelity = min_fidelity.min(f);
        for f in fl {
            if failures.len() < 8 {
                failures.push(f);
            }
        }
    }
    let covered = checked.z > 0 && checked.x_pair > 0 && checked.zxk > 0 && checked.junction > 0;
    if !covered {
        failures.push(format!("rule coverage incomplete: {checked:?}"));
    }
    Ok(RuleSuiteReport {
        schema: "qudit-mbqc/rule-suite/1",
        d: d.get(),
        graphs,
        seed,
        passed: failures.is_empty() && min_fidelity >= 1.0 - RULE_TOL,
        checked,
        min_fidelity,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_passes() {
        let r = rule_suite(PrimeDim::new(3).unwrap(), 12, 5, 1).unwrap();
        assert!(r.passed, "{:?}", r.failures);
        assert!(r.checked.x_pair > 0 && r.checked.junction > 0);
    }

    #[test]
    fn qubits_rejected() {
        assert!(rule_suite(PrimeDim::new(2).unwrap(), 1, 4, 0).is_err());
    }
}
