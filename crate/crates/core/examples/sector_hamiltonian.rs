//! Builds the full qubit-boson Hamiltonian, checks charge conservation and
//! prints the sector-reduced operator.
use spinphonon::operator::{build_hamiltonian, charge_commutator_norm, charge_diagonal, project_to_sector, realize_matrix};
use spinphonon::{ModelParams, Result, SectorMap};

fn main() -> Result<()> {
    let params = ModelParams::n4_reference(2.0);
    let h = build_hamiltonian(&params)?;
    let cuts = vec![2; params.n_sites];
    let m = realize_matrix(&h, &cuts)?;
    let q = charge_diagonal(params.n_sites, &cuts)?;
    println!("full: {} terms, dim {}, |[H,Q]| = {:.1e}", h.len(), m.dim(), charge_commutator_norm(&m, &q));

    let map = SectorMap::descending(&params)?;
    for (physical, reduced) in map.pairs() {
        println!("{reduced} <- {physical}");
    }
    let reduced = project_to_sector(&h, &map)?;
    println!("{reduced}");
    Ok(())
}
