//! Spanning probability of the residual random graph versus L for several d.
//!
//! `cargo run --release --example percolation_sweep -- [trials]`

use qudit_mbqc::percolation::{percolation_probability, write_csv, CurveRow, PercKind, TrialPlan};
use qudit_mbqc::{PrimeDim, Result};

fn main() -> Result<()> {
    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2000);
    let mut rows = Vec::new();
    for kind in [PercKind::Honeycomb, PercKind::Square] {
        for d in [2, 3, 5, 7] {
            for l in [10, 20, 30] {
                let plan = TrialPlan { d: PrimeDim::new(d)?, l, kind, trials, seed: 0, delete_p: None };
                let e = percolation_probability(&plan)?;
                rows.push(CurveRow { kind, d, l, trials, seed: 0, delete_p: 0.0, prob: e.prob, stderr: e.stderr });
            }
        }
    }
    write_csv(std::io::stdout().lock(), &rows)?;
    Ok(())
}
