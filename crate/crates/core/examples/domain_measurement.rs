//! Measures the domain sublattice of |φ_k⟩ and compares the residual with the
//! predicted graph-like state; prints the junction edge statistics.
//!
//! `cargo run --release --example domain_measurement -- [d] [k] [seed]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qudit_mbqc::lattice::{
    build_lattice, build_spt_state, junction_edge_histogram, measure_domain_sublattice_sampled, Boundary, LatticeKind,
};
use qudit_mbqc::statevector::fidelity_up_to_phase;
use qudit_mbqc::{PrimeDim, Result};

fn main() -> Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let d = PrimeDim::new(args.first().copied().unwrap_or(3) as u32)?;
    let k = args.get(1).copied().unwrap_or(1) as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(args.get(2).copied().unwrap_or(0));

    let lat = build_lattice(LatticeKind::Triangular, 3, 2, Boundary::Open)?;
    let state = build_spt_state(&lat, d, k)?;
    let m = measure_domain_sublattice_sampled(&state, &lat, k, &mut rng)?;
    println!("domain outcomes {:?}, probabilities {:?}", m.outcomes.0, m.probabilities);
    println!("residual graph edges (a, b, weight): {:?}", m.graph.edges());
    println!("fidelity with prediction: {:.12}", fidelity_up_to_phase(&m.residual, &m.graph.to_statevector()?)?);

    let h = junction_edge_histogram(d, k)?;
    let total: u64 = h.iter().sum();
    for (edges, count) in h.iter().enumerate() {
        println!("junctions with {edges} edges: {count}/{total}");
    }
    Ok(())
}
