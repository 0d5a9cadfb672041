//! Free-boson mode energies and the charge sectors of the two reference lattices.
use spinphonon::{mode_energy, sector_basis, ModelParams, Result};

fn main() -> Result<()> {
    for params in [ModelParams::n2_reference(), ModelParams::n4_reference(2.0)] {
        println!("N={} Q={}", params.n_sites, params.charge_sector);
        for m in 0..params.n_sites {
            println!("  eps_{m} = {:.4}", mode_energy(&params, m)?);
        }
        let basis: Vec<String> = sector_basis(&params)?.iter().map(|b| b.to_string()).collect();
        println!("  sector basis: {}", basis.join(" "));
    }
    Ok(())
}
