//! The domain-wall construction of 𝒰^k against the signed CCZ circuit on honeycomb patches.
//!
//! `cargo run --release --example ddw_equivalence`

use qudit_mbqc::lattice::{ddw_equivalence, ddw_patch, Orientation};
use qudit_mbqc::{PrimeDim, Result};

fn main() -> Result<()> {
    for faces in [1, 2] {
        let patch = ddw_patch(faces)?;
        println!("{faces}-face patch: {} qudits, {} triangles", patch.qudits(), patch.triangles.len());
        for d in [2, 3] {
            let d = PrimeDim::new(d)?;
            let mut ks = vec![1, d.get() - 1];
            ks.dedup();
            for k in ks {
                let f = ddw_equivalence(&patch, d, k, &Orientation::Circulating)?;
                println!("  d={d} k={k}: fidelity {f:.12}");
            }
        }
    }
    Ok(())
}
