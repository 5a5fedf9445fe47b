//! Applies the three measurement rules symbolically to a small graph-like state
//! and checks each against forced-outcome state-vector measurement.
//!
//! `cargo run --release --example graph_rules -- [d]`

use qudit_mbqc::graphlike::{rule_suite, GraphLikeState};
use qudit_mbqc::statevector::{fidelity_up_to_phase, MeasBasis};
use qudit_mbqc::{PrimeDim, Result};

fn main() -> Result<()> {
    let d = PrimeDim::new(std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3))?;

    // a 5-cycle with a pendant vertex
    let host = GraphLikeState::from_edges(d, 6, &[(0, 1, 1), (1, 2, 2), (2, 3, 1), (3, 4, 1), (4, 0, 2), (2, 5, 1)])?;
    println!("host edges: {:?}", host.edges());

    let mut g = host.clone();
    g.measure_z(5, 1)?;
    println!("Z on 5, outcome 1:        {:?}  frame on 2: {:?}", g.edges(), g.frame(2));

    let mut g = host.clone();
    g.measure_zxk(0, 1, 2)?;
    println!("ZX^1 on 0, outcome 2:     {:?}", g.edges());

    let mut g = host.clone();
    let kept = g.measure_x_pair(3, 4, 0, 1)?;
    println!("X on 3 and 4, outcomes 0 1: {:?} (vertex {kept} carries the merged edges)", g.edges());

    // the same Z rule against the state vector
    let mut sym = host.clone();
    sym.measure_z(1, 2)?;
    let psi = host.to_statevector()?.measure_forced(1, &MeasBasis::Computational, 2)?.state;
    println!("Z rule vs state vector: fidelity {:.12}", fidelity_up_to_phase(&psi, &sym.to_statevector()?)?);

    let r = rule_suite(d, 40, 6, 1)?;
    println!(
        "random sweep: {} hosts, {:?} applications, min fidelity {:.12}, {}",
        r.graphs,
        r.checked,
        r.min_fidelity,
        if r.passed { "all match" } else { "MISMATCH" }
    );
    Ok(())
}
