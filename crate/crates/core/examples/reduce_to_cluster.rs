//! Reduces a random residual honeycomb graph to a w×w cluster-like state and
//! checks the result with stabilizers and local state-vector excerpts.
//!
//! `cargo run --release --example reduce_to_cluster -- [seed] [L] [w]`

use qudit_mbqc::graphlike::{reduce_to_cluster, verify_excerpts, Instance, ReduceOptions, Stage};
use qudit_mbqc::percolation::PercKind;
use qudit_mbqc::{Error, PrimeDim, Result};

fn main() -> Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let seed = args.first().copied().unwrap_or(1);
    let l = args.get(1).copied().unwrap_or(10) as usize;
    let w = args.get(2).copied().unwrap_or(2) as usize;
    let d = PrimeDim::new(3)?;

    let inst = Instance::sample(d, PercKind::Honeycomb, l, 1, seed)?;
    println!("residual graph: {} vertices, {} edges", inst.graph.vertex_count(), inst.graph.edge_count());
    let red = match reduce_to_cluster(&inst.graph, &inst.embedding, &ReduceOptions { w, block: None, seed }) {
        Ok(r) => r,
        Err(Error::Subcritical(why)) => {
            println!("no grid found: {why}");
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    println!(
        "{} steps: clean {}, merge {}, shorten {}",
        red.schedule.len(),
        red.count(Stage::Clean),
        red.count(Stage::Merge),
        red.count(Stage::Shorten)
    );
    println!("grid {:?}, edges {:?}", red.grid, red.graph.edges());
    if red.graph.vertex_count() <= 6 {
        let s = red.graph.stabilizer_check()?;
        println!("stabilizers: {} (worst deviation {:.1e})", if s.passed { "pass" } else { "FAIL" }, s.worst_deviation);
    }
    let ex = verify_excerpts(&inst.graph, &red.schedule, 10)?;
    println!("excerpts: {} checked, {} too large, failures {:?}", ex.checked, ex.skipped, ex.failures);
    Ok(())
}
