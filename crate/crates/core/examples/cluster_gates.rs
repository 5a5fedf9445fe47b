//! Runs each gate construction on a weighted cluster chain over every outcome
//! branch and reports the worst fidelity against the dressed target.
//!
//! `cargo run --release --example cluster_gates -- [d]`

use qudit_mbqc::gates::{
    identity_pattern, operator_schmidt_rank, realize_clifford, realize_imprimitive, realize_xalpha, teleport, CliffordFamily,
    GateReport, GateSpec,
};
use qudit_mbqc::{PrimeDim, Result};

fn show(r: &GateReport) {
    println!(
        "{:<22} weights {:?}: {} branches, uniform {}, min fidelity {:.12} {}",
        r.construction,
        r.weights,
        r.branches.len(),
        r.uniform_branches,
        r.min_fidelity,
        if r.passed { "ok" } else { "FAILED" }
    );
    if let Some(f) = &r.failure {
        println!("    {f}");
    }
}

fn main() -> Result<()> {
    let d = PrimeDim::new(std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3))?;
    let top = d.get() - 1;
    show(&teleport(d, 2.min(top))?);
    show(&identity_pattern(d, 1, top)?);
    let m: Vec<i64> = (0..d.get() as i64).map(|j| j % 2).collect();
    show(&realize_xalpha(d, &[1, top, 1, 1], 0.3, &m)?);
    for fam in [CliffordFamily::U1n(1), CliffordFamily::U1n(2), CliffordFamily::W, CliffordFamily::Un1(1)] {
        let w = vec![1; fam.chain_weights()];
        show(&realize_clifford(d, fam, &w)?);
    }
    let q = [1, top, 1, 1, top];
    show(&realize_imprimitive(d, q)?);
    println!("imprimitive operator-Schmidt rank: {}", operator_schmidt_rank(d, &GateSpec::Imprimitive { q }.matrix(d)?));
    Ok(())
}
