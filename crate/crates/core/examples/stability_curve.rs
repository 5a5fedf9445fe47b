//! Spanning probability after deleting occupied edges with probability p.
//!
//! `cargo run --release --example stability_curve -- [d]`

use qudit_mbqc::percolation::{stability_curve, PercKind};
use qudit_mbqc::{PrimeDim, Result};

fn main() -> Result<()> {
    let d = PrimeDim::new(std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3))?;
    let grid: Vec<f64> = (0..=12).map(|i| i as f64 * 0.04).collect();
    let curves = [10, 20, 30]
        .iter()
        .map(|&l| stability_curve(d, PercKind::Honeycomb, l, 50, 50, 0, &grid))
        .collect::<Result<Vec<_>>>()?;
    println!("   p    L=10   L=20   L=30");
    for (i, p) in grid.iter().enumerate() {
        println!("{p:.2}  {:.3}  {:.3}  {:.3}", curves[0][i].1.prob, curves[1][i].1.prob, curves[2][i].1.prob);
    }
    Ok(())
}
