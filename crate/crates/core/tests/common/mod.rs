//! Shared test-only constructions: closed-form reduced Hamiltonians written
//! out term by term, and an independent Kronecker-product matrix builder.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use spinphonon::model::{mode_energy, ModelParams};
use spinphonon::operator::{Ladder, OperatorSum, OperatorTerm, Pauli};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn term(coeff: Complex64, paulis: &[(usize, Pauli)], ladders: &[(usize, Ladder)]) -> OperatorTerm {
    OperatorTerm::new(coeff, paulis, ladders).unwrap()
}

/// Pushes `coeff·a†_m·P + h.c.`
fn kick(out: &mut Vec<OperatorTerm>, coeff: Complex64, paulis: &[(usize, Pauli)], m: usize) {
    out.push(term(coeff, paulis, &[(m, Ladder::Create)]));
    out.push(term(coeff.conj(), paulis, &[(m, Ladder::Annihilate)]));
}

/// Two-site neutral sector, one reduced qubit.
pub fn closed_form_n2(p: &ModelParams) -> OperatorSum {
    let e: Vec<f64> = (0..2).map(|m| mode_energy(p, m).unwrap()).collect();
    let g = (p.coupling * p.coupling * p.lattice_spacing / 4.0).sqrt();
    let mut t = vec![term(c(p.fermion_mass, 0.0), &[(0, Pauli::Z)], &[])];
    for m in 0..2 {
        t.push(term(c(e[m], 0.0), &[], &[(m, Ladder::Number)]));
    }
    kick(&mut t, c(g / e[0].sqrt(), 0.0), &[(0, Pauli::Z)], 0);
    kick(&mut t, c(g / e[1].sqrt(), 0.0), &[], 1);
    OperatorSum::from_terms(1, 2, t).unwrap()
}

/// Four-site Q=-1 sector, two reduced qubits.
pub fn closed_form_n4(p: &ModelParams) -> OperatorSum {
    let e: Vec<f64> = (0..4).map(|m| mode_energy(p, m).unwrap()).collect();
    let b = p.lattice_spacing;
    let g = (p.coupling * p.coupling * b / 32.0).sqrt();
    let z0 = (0, Pauli::Z);
    let z1 = (1, Pauli::Z);
    let mut t = vec![
        term(c(1.0 / (2.0 * b), 0.0), &[(1, Pauli::X)], &[]),
        term(c(1.0 / (2.0 * b), 0.0), &[(0, Pauli::X), (1, Pauli::X)], &[]),
        term(c(p.fermion_mass, 0.0), &[z1], &[]),
    ];
    let s = |m: usize| g / e[m].sqrt();
    kick(&mut t, c(2.0 * s(0), 0.0), &[z1], 0);
    kick(&mut t, c(s(1), -s(1)), &[z0], 1);
    kick(&mut t, c(s(1), s(1)), &[z0, z1], 1);
    kick(&mut t, c(2.0 * s(2), 0.0), &[], 2);
    kick(&mut t, c(s(3), s(3)), &[z0], 3);
    kick(&mut t, c(s(3), -s(3)), &[z0, z1], 3);
    for m in 0..4 {
        t.push(term(c(e[m], 0.0), &[], &[(m, Ladder::Number)]));
    }
    OperatorSum::from_terms(2, 4, t).unwrap()
}

pub fn eye(n: usize) -> DMatrix<Complex64> {
    DMatrix::identity(n, n)
}

pub fn pauli_x() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_y() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

/// Truncated creation operator on occupations 0..=cutoff.
pub fn create(cutoff: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(cutoff + 1, cutoff + 1);
    for n in 0..cutoff {
        m[(n + 1, n)] = c(((n + 1) as f64).sqrt(), 0.0);
    }
    m
}

/// Kronecker product of a list of factors, first factor most significant.
pub fn kron_all(factors: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    factors.iter().skip(1).fold(factors[0].clone(), |acc, f| acc.kronecker(f))
}

pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Reduced two-site Hamiltonian assembled from explicit Kronecker products,
/// independent of the operator-term realization path.
pub fn kron_n2(p: &ModelParams, cutoff: usize) -> DMatrix<Complex64> {
    let e: Vec<f64> = (0..2).map(|m| mode_energy(p, m).unwrap()).collect();
    let g = (p.coupling * p.coupling * p.lattice_spacing / 4.0).sqrt();
    let d = cutoff + 1;
    let ad = create(cutoff);
    let x = &ad + ad.adjoint();
    let n = &ad * ad.adjoint();
    let mut h = kron_all(&[pauli_z(), eye(d), eye(d)]) * c(p.fermion_mass, 0.0);
    h += kron_all(&[eye(2), n.clone(), eye(d)]) * c(e[0], 0.0);
    h += kron_all(&[eye(2), eye(d), n]) * c(e[1], 0.0);
    h += kron_all(&[pauli_z(), x.clone(), eye(d)]) * c(g / e[0].sqrt(), 0.0);
    h += kron_all(&[eye(2), eye(d), x]) * c(g / e[1].sqrt(), 0.0);
    h
}

/// Dense exp(-iHt)·ψ by Taylor series with scaling, for small oracle problems.
pub fn taylor_propagate(h: &DMatrix<Complex64>, psi: &[Complex64], t: f64) -> Vec<Complex64> {
    let norm: f64 = (0..h.nrows()).map(|r| h.row(r).iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max);
    let steps = ((norm * t.abs()) / 0.5).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut v = nalgebra::DVector::from_column_slice(psi);
    for _ in 0..steps {
        let mut term = v.clone();
        let mut acc = v.clone();
        for k in 1..40 {
            term = (h * &term) * c(0.0, -dt / k as f64);
            acc += &term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        v = acc;
    }
    v.iter().copied().collect()
}
