mod common;

use common::*;
use spinphonon::model::ModelParams;
use spinphonon::operator::{
    build_hamiltonian, charge_commutator_norm, charge_diagonal, project_to_sector, realize_matrix, SectorMap,
};

#[test]
fn n2_projection_matches_closed_form() {
    let p = ModelParams::n2_reference();
    let full = build_hamiltonian(&p).unwrap();
    let reduced = project_to_sector(&full, &SectorMap::descending(&p).unwrap()).unwrap();
    let dev = reduced.max_coefficient_deviation(&closed_form_n2(&p));
    assert!(dev < 1e-10, "deviation {dev}\n{reduced}");
}

#[test]
fn n4_projection_matches_closed_form() {
    for g in [0.0, 2.0, 3.7] {
        let p = ModelParams::n4_reference(g);
        let full = build_hamiltonian(&p).unwrap();
        let reduced = project_to_sector(&full, &SectorMap::descending(&p).unwrap()).unwrap();
        let dev = reduced.max_coefficient_deviation(&closed_form_n4(&p));
        assert!(dev < 1e-10, "g={g}: deviation {dev}\n{reduced}");
    }
}

#[test]
fn reduced_n2_matches_kronecker_oracle() {
    let p = ModelParams::n2_reference();
    let reduced = project_to_sector(&build_hamiltonian(&p).unwrap(), &SectorMap::descending(&p).unwrap()).unwrap();
    let m = realize_matrix(&reduced, &[3, 3]).unwrap().to_dense();
    assert!(max_abs(&(m - kron_n2(&p, 3))) < 1e-12);
}

#[test]
fn full_hamiltonians_conserve_charge() {
    for p in [ModelParams::n2_reference(), ModelParams::n4_reference(2.0)] {
        let cut = vec![2; p.n_sites];
        let h = realize_matrix(&build_hamiltonian(&p).unwrap(), &cut).unwrap();
        assert!(h.hermiticity_defect() < 1e-12);
        let q = charge_diagonal(p.n_sites, &cut).unwrap();
        assert!(charge_commutator_norm(&h, &q) < 1e-12);
    }
}
