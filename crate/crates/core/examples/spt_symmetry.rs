//! Builds |φ_k⟩ on the smallest periodic patches and checks the color-class symmetry.
//!
//! `cargo run --release --example spt_symmetry -- [d] [k]`

use qudit_mbqc::lattice::{apply_x_on, build_spt_state_capped, verify_symmetry};
use qudit_mbqc::statevector::fidelity_up_to_phase;
use qudit_mbqc::verify::symmetry_patches;
use qudit_mbqc::{PrimeDim, Result};

fn main() -> Result<()> {
    let args: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let d = PrimeDim::new(args.first().copied().unwrap_or(3))?;
    let k = args.get(1).copied().unwrap_or(1);
    for (name, lat) in symmetry_patches()? {
        let state = build_spt_state_capped(&lat, d, k, d.as_usize().pow(lat.site_count() as u32))?;
        println!("{name}: {} sites, {} triangles", lat.site_count(), lat.triangles.len());
        for color in 0..3u8 {
            let worst = (0..d.get()).map(|m| verify_symmetry(&state, &lat, color, m)).collect::<Result<Vec<f64>>>()?;
            let worst = worst.into_iter().fold(1.0, f64::min);
            println!("  X^m on color {color} ({} sites): min fidelity {worst:.12}", lat.sites_of_color(color).len());
        }
        // a single-site X is not a symmetry
        let mut kicked = state.clone();
        apply_x_on(&mut kicked, &[0], 1)?;
        println!("  X on site 0 alone: fidelity {:.6}", fidelity_up_to_phase(&state, &kicked)?);
    }
    Ok(())
}
