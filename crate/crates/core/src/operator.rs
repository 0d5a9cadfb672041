//! Sums of `coefficient × Pauli string × boson ladder monomial`.
//!
//! The full Jordan–Wigner-mapped Yukawa Hamiltonian is assembled here, realized
//! as a sparse matrix on the hybrid layout, and projected into a fixed-charge
//! sector. Projection is numerical: the spin factor attached to each ladder
//! monomial is restricted to the sector basis and re-expanded in Pauli strings
//! on the reduced register.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{mode_energy, sector_states, staggered_charge, BasisState, ModelParams};
use crate::sparse::CsrMatrix;
use crate::state::{HybridState, Layout, DEFAULT_CAPACITY};

/// Coefficients smaller than this are treated as numerical noise after projection.
pub const PROJECTION_TOLERANCE: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    /// Action on a single bit: returns (phase, flipped?).
    fn act(self, bit: usize) -> (Complex64, bool) {
        match (self, bit) {
            (Pauli::X, _) => (ONE, true),
            (Pauli::Y, 0) => (I, true),
            (Pauli::Y, _) => (-I, true),
            (Pauli::Z, 0) => (ONE, false),
            (Pauli::Z, _) => (-ONE, false),
        }
    }

    fn symbol(self) -> char {
        match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ladder {
    Create,
    Annihilate,
    Number,
}

impl Ladder {
    fn dagger(self) -> Ladder {
        match self {
            Ladder::Create => Ladder::Annihilate,
            Ladder::Annihilate => Ladder::Create,
            Ladder::Number => Ladder::Number,
        }
    }

    /// Action on an occupation with cutoff `cutoff`; `None` when annihilated.
    fn act(self, n: usize, cutoff: usize) -> Option<(f64, usize)> {
        match self {
            Ladder::Create if n < cutoff => Some((((n + 1) as f64).sqrt(), n + 1)),
            Ladder::Create => None,
            Ladder::Annihilate if n > 0 => Some(((n as f64).sqrt(), n - 1)),
            Ladder::Annihilate => None,
            Ladder::Number if n > 0 => Some((n as f64, n)),
            Ladder::Number => None,
        }
    }
}

/// Hashable structural part of a term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermKey {
    pub paulis: Vec<(usize, Pauli)>,
    pub ladders: Vec<(usize, Ladder)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorTerm {
    pub coeff: Complex64,
    pub paulis: BTreeMap<usize, Pauli>,
    /// Operator product in written order: the last entry acts first on a ket.
    pub ladders: Vec<(usize, Ladder)>,
}

impl OperatorTerm {
    pub fn new(coeff: Complex64, paulis: &[(usize, Pauli)], ladders: &[(usize, Ladder)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &(q, p) in paulis {
            if map.insert(q, p).is_some() {
                return Err(Error::InvalidParams(format!("qubit {q} appears twice in a Pauli string")));
            }
        }
        let mut ladders = ladders.to_vec();
        // Different modes commute; keep the within-mode order.
        ladders.sort_by_key(|&(m, _)| m);
        Ok(OperatorTerm { coeff, paulis: map, ladders })
    }

    pub fn key(&self) -> TermKey {
        TermKey {
            paulis: self.paulis.iter().map(|(&q, &p)| (q, p)).collect(),
            ladders: self.ladders.clone(),
        }
    }

    pub fn adjoint(&self) -> OperatorTerm {
        let mut ladders: Vec<(usize, Ladder)> = self.ladders.iter().rev().map(|&(m, l)| (m, l.dagger())).collect();
        ladders.sort_by_key(|&(m, _)| m);
        OperatorTerm { coeff: self.coeff.conj(), paulis: self.paulis.clone(), ladders }
    }

    /// Applies the term to basis index `col`; returns the (amplitude, row) image.
    fn act_on(&self, layout: &Layout, col: usize) -> Option<(Complex64, usize)> {
        let (mut spin, mut occ) = layout.decode(col);
        let mut amp = self.coeff;
        for &(m, l) in self.ladders.iter().rev() {
            let (f, n) = l.act(occ[m], layout.cutoffs()[m])?;
            amp *= f;
            occ[m] = n;
        }
        let nq = layout.n_qubits();
        for (&q, &p) in &self.paulis {
            let shift = nq - 1 - q;
            let (ph, flip) = p.act((spin >> shift) & 1);
            amp *= ph;
            if flip {
                spin ^= 1 << shift;
            }
        }
        Some((amp, layout.encode(spin, &occ)))
    }
}

/// Canonical (merged, zero-free) sum of operator terms.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSum {
    terms: Vec<OperatorTerm>,
    n_qubits: usize,
    n_modes: usize,
}

impl OperatorSum {
    pub fn zero(n_qubits: usize, n_modes: usize) -> Self {
        OperatorSum { terms: Vec::new(), n_qubits, n_modes }
    }

    pub fn from_terms(n_qubits: usize, n_modes: usize, terms: Vec<OperatorTerm>) -> Result<Self> {
        let mut s = OperatorSum::zero(n_qubits, n_modes);
        for t in terms {
            s.push(t)?;
        }
        Ok(s.canonicalize())
    }

    pub fn push(&mut self, term: OperatorTerm) -> Result<()> {
        if let Some((&q, _)) = term.paulis.iter().next_back() {
            if q >= self.n_qubits {
                return Err(Error::IndexOutOfRange { index: q, limit: self.n_qubits });
            }
        }
        if let Some(&(m, _)) = term.ladders.iter().max_by_key(|(m, _)| *m) {
            if m >= self.n_modes {
                return Err(Error::IndexOutOfRange { index: m, limit: self.n_modes });
            }
        }
        self.terms.push(term);
        Ok(())
    }

    pub fn terms(&self) -> &[OperatorTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Merges identical keys, drops exact zeros and sorts by key.
    pub fn canonicalize(&self) -> OperatorSum {
        let mut merged: BTreeMap<TermKey, Complex64> = BTreeMap::new();
        for t in &self.terms {
            *merged.entry(t.key()).or_insert(ZERO) += t.coeff;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| *c != ZERO)
            .map(|(k, coeff)| OperatorTerm {
                coeff,
                paulis: k.paulis.into_iter().collect(),
                ladders: k.ladders,
            })
            .collect();
        OperatorSum { terms, n_qubits: self.n_qubits, n_modes: self.n_modes }
    }

    /// Drops terms with |coeff| <= `tol`.
    pub fn pruned(&self, tol: f64) -> OperatorSum {
        OperatorSum {
            terms: self.terms.iter().filter(|t| t.coeff.norm() > tol).cloned().collect(),
            n_qubits: self.n_qubits,
            n_modes: self.n_modes,
        }
    }

    pub fn add(&self, other: &OperatorSum) -> OperatorSum {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        OperatorSum {
            terms,
            n_qubits: self.n_qubits.max(other.n_qubits),
            n_modes: self.n_modes.max(other.n_modes),
        }
        .canonicalize()
    }

    pub fn scale(&self, factor: Complex64) -> OperatorSum {
        OperatorSum {
            terms: self.terms.iter().map(|t| OperatorTerm { coeff: t.coeff * factor, ..t.clone() }).collect(),
            n_qubits: self.n_qubits,
            n_modes: self.n_modes,
        }
        .canonicalize()
    }

    pub fn adjoint(&self) -> OperatorSum {
        OperatorSum {
            terms: self.terms.iter().map(OperatorTerm::adjoint).collect(),
            n_qubits: self.n_qubits,
            n_modes: self.n_modes,
        }
        .canonicalize()
    }

    /// Coefficient of the term with the given structure (zero when absent).
    pub fn coefficient(&self, paulis: &[(usize, Pauli)], ladders: &[(usize, Ladder)]) -> Complex64 {
        let probe = OperatorTerm::new(ONE, paulis, ladders).expect("valid probe term").key();
        self.terms.iter().filter(|t| t.key() == probe).map(|t| t.coeff).sum()
    }

    /// Largest coefficient difference between two sums, matched by key.
    pub fn max_coefficient_deviation(&self, other: &OperatorSum) -> f64 {
        let mut diff: HashMap<TermKey, Complex64> = HashMap::new();
        for t in &self.terms {
            *diff.entry(t.key()).or_insert(ZERO) += t.coeff;
        }
        for t in &other.terms {
            *diff.entry(t.key()).or_insert(ZERO) -= t.coeff;
        }
        diff.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn check_ladder_degree(&self) -> Result<()> {
        for t in &self.terms {
            for w in t.ladders.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Unsupported(format!(
                        "ladder monomial with more than one factor on mode {} in term `{}`",
                        w[0].0,
                        format_term(t)
                    )));
                }
            }
        }
        Ok(())
    }
}

fn root_of_unity(k: i64, n: i64) -> Complex64 {
    // e^{-2πik/n}, exact on quarter turns.
    let k = k.rem_euclid(n);
    if (4 * k) % n == 0 {
        return match 4 * k / n {
            0 => ONE,
            1 => -I,
            2 => -ONE,
            _ => I,
        };
    }
    Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64)
}

/// Hopping and staggered-mass terms on N qubits, boundary sign from the configured sector.
pub fn build_fermion_hamiltonian(params: &ModelParams) -> Result<OperatorSum> {
    params.validate()?;
    let n = params.n_sites;
    let hop = 1.0 / (4.0 * params.lattice_spacing);
    let chi = params.boundary_sign();
    let mut terms = Vec::new();
    let mut pair = |a: usize, b: usize, c: f64| -> Result<()> {
        for p in [Pauli::X, Pauli::Y] {
            terms.push(OperatorTerm::new(Complex64::new(c, 0.0), &[(a, p), (b, p)], &[])?);
        }
        Ok(())
    };
    for j in 0..n - 1 {
        pair(j, j + 1, hop)?;
    }
    pair(n - 1, 0, chi * hop)?;
    for j in 0..n {
        let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
        terms.push(OperatorTerm::new(Complex64::new(sign * params.fermion_mass / 2.0, 0.0), &[(j, Pauli::Z)], &[])?);
    }
    OperatorSum::from_terms(n, n, terms)
}

/// Σ ε_m a†_m a_m with the zero-point energy dropped.
pub fn build_boson_hamiltonian(params: &ModelParams) -> Result<OperatorSum> {
    params.validate()?;
    let mut terms = Vec::new();
    for m in 0..params.n_sites {
        let e = mode_energy(params, m)?;
        terms.push(OperatorTerm::new(Complex64::new(e, 0.0), &[], &[(m, Ladder::Number)])?);
    }
    OperatorSum::from_terms(params.n_sites, params.n_sites, terms)
}

/// Yukawa coupling √(g²b/8N) Σ_j (1+Z_j) Σ_m ε_m^{-1/2} (a†_m e^{-iθ_jm} + h.c.).
pub fn build_interaction_hamiltonian(params: &ModelParams) -> Result<OperatorSum> {
    params.validate()?;
    let n = params.n_sites;
    if params.coupling == 0.0 {
        return Ok(OperatorSum::zero(n, n));
    }
    let pref = (params.coupling * params.coupling * params.lattice_spacing / (8.0 * n as f64)).sqrt();
    let mut terms = Vec::new();
    for j in 0..n {
        for m in 0..n {
            let k = (j as i64 + 1) * (m as i64 - n as i64 / 2);
            let c = root_of_unity(k, n as i64) * (pref / mode_energy(params, m)?.sqrt());
            for paulis in [vec![], vec![(j, Pauli::Z)]] {
                terms.push(OperatorTerm::new(c, &paulis, &[(m, Ladder::Create)])?);
                terms.push(OperatorTerm::new(c.conj(), &paulis, &[(m, Ladder::Annihilate)])?);
            }
        }
    }
    OperatorSum::from_terms(n, n, terms)
}

/// Full Hamiltonian H_f + H_b + H_fb on N qubits and N modes.
pub fn build_hamiltonian(params: &ModelParams) -> Result<OperatorSum> {
    Ok(build_fermion_hamiltonian(params)?
        .add(&build_boson_hamiltonian(params)?)
        .add(&build_interaction_hamiltonian(params)?))
}

/// Realizes `h` as a sparse matrix on the hybrid layout with the given cutoffs.
pub fn realize_matrix(h: &OperatorSum, cutoffs: &[usize]) -> Result<CsrMatrix> {
    realize_matrix_with_capacity(h, cutoffs, DEFAULT_CAPACITY)
}

pub fn realize_matrix_with_capacity(h: &OperatorSum, cutoffs: &[usize], limit: usize) -> Result<CsrMatrix> {
    if cutoffs.len() < h.n_modes {
        return Err(Error::DimensionMismatch(format!(
            "operator acts on {} modes but only {} cutoffs were given",
            h.n_modes,
            cutoffs.len()
        )));
    }
    let layout = Layout::with_capacity(h.n_qubits, cutoffs, limit)?;
    let dim = layout.dim();
    let mut triplets = Vec::with_capacity(dim * h.terms.len().min(64));
    for t in &h.terms {
        for col in 0..dim {
            if let Some((amp, row)) = t.act_on(&layout, col) {
                triplets.push((row, col, amp));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(dim, triplets))
}

/// Diagonal of the staggered charge over the hybrid layout.
pub fn charge_diagonal(n_sites: usize, cutoffs: &[usize]) -> Result<Vec<f64>> {
    let layout = Layout::new(n_sites, cutoffs)?;
    let m = layout.mode_dim();
    let mut out = Vec::with_capacity(layout.dim());
    for s in 0..layout.spin_dim() {
        let q = staggered_charge(BasisState::new(s, n_sites)?) as f64;
        out.extend(std::iter::repeat_n(q, m));
    }
    Ok(out)
}

/// max |[H, Q]| elementwise, with Q diagonal.
pub fn charge_commutator_norm(h: &CsrMatrix, charge: &[f64]) -> f64 {
    h.iter().map(|(r, c, v)| (v * (charge[c] - charge[r])).norm()).fold(0.0, f64::max)
}

/// Ordered bijection between the sector's N-qubit states and the basis of a
/// reduced register of n = ⌈log₂ d⌉ qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorMap {
    sources: Vec<BasisState>,
    targets: Vec<BasisState>,
    n_reduced: usize,
    n_sites: usize,
}

impl SectorMap {
    pub fn new(pairs: &[(BasisState, BasisState)]) -> Result<Self> {
        let first = pairs.first().ok_or_else(|| Error::InvalidParams("empty sector map".into()))?;
        let (n_sites, n_reduced) = (first.0.n_qubits(), first.1.n_qubits());
        let mut seen_src = std::collections::HashSet::new();
        let mut seen_dst = std::collections::HashSet::new();
        for (s, t) in pairs {
            if s.n_qubits() != n_sites || t.n_qubits() != n_reduced {
                return Err(Error::InvalidParams("inconsistent register sizes in sector map".into()));
            }
            if !seen_src.insert(*s) || !seen_dst.insert(*t) {
                return Err(Error::InvalidParams("sector map is not a bijection".into()));
            }
        }
        let charge = staggered_charge(first.0);
        if pairs.iter().any(|(s, _)| staggered_charge(*s) != charge) {
            return Err(Error::InvalidParams("sector map mixes charge sectors".into()));
        }
        Ok(SectorMap {
            sources: pairs.iter().map(|p| p.0).collect(),
            targets: pairs.iter().map(|p| p.1).collect(),
            n_reduced,
            n_sites,
        })
    }

    /// Sector states in descending binary order mapped onto |0…0⟩, |0…01⟩, ….
    /// For (N=2, Q=0) this is |10⟩→|0⟩, |01⟩→|1⟩; for (N=4, Q=-1) it is
    /// |1110⟩→|00⟩, |1101⟩→|01⟩, |1011⟩→|10⟩, |0111⟩→|11⟩.
    pub fn descending(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let mut states = sector_states(params.n_sites, params.charge_sector)?;
        states.reverse();
        let n_reduced = usize::BITS as usize - (states.len() - 1).leading_zeros() as usize;
        let n_reduced = if states.len() == 1 { 0 } else { n_reduced };
        let pairs = states
            .into_iter()
            .enumerate()
            .map(|(i, s)| Ok((s, BasisState::new(i, n_reduced)?)))
            .collect::<Result<Vec<_>>>()?;
        SectorMap::new(&pairs)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (BasisState, BasisState)> + '_ {
        self.sources.iter().copied().zip(self.targets.iter().copied())
    }

    pub fn n_reduced(&self) -> usize {
        self.n_reduced
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn charge(&self) -> i64 {
        staggered_charge(self.sources[0])
    }

    /// Maps a full-register state supported on the sector onto the reduced register.
    pub fn reduce_state(&self, state: &HybridState) -> Result<HybridState> {
        if state.n_qubits() != self.n_sites {
            return Err(Error::DimensionMismatch("state register does not match sector map".into()));
        }
        let reduced = Layout::new(self.n_reduced, state.cutoffs())?;
        let m = reduced.mode_dim();
        let mut amps = vec![ZERO; reduced.dim()];
        for (src, dst) in self.pairs() {
            amps[dst.index() * m..(dst.index() + 1) * m]
                .copy_from_slice(&state.amplitudes()[src.index() * m..(src.index() + 1) * m]);
        }
        HybridState::from_amplitudes(reduced, amps)
    }

    /// Inverse of [`SectorMap::reduce_state`].
    pub fn embed_state(&self, state: &HybridState) -> Result<HybridState> {
        if state.n_qubits() != self.n_reduced {
            return Err(Error::DimensionMismatch("state register does not match sector map".into()));
        }
        let full = Layout::new(self.n_sites, state.cutoffs())?;
        let m = full.mode_dim();
        let mut amps = vec![ZERO; full.dim()];
        for (src, dst) in self.pairs() {
            amps[src.index() * m..(src.index() + 1) * m]
                .copy_from_slice(&state.amplitudes()[dst.index() * m..(dst.index() + 1) * m]);
        }
        HybridState::from_amplitudes(full, amps)
    }
}

/// Spin-only action of a list of (coeff, Pauli string) on basis index `s`.
fn pauli_image(paulis: &BTreeMap<usize, Pauli>, n: usize, mut s: usize) -> (Complex64, usize) {
    let mut amp = ONE;
    for (&q, &p) in paulis {
        let shift = n - 1 - q;
        let (ph, flip) = p.act((s >> shift) & 1);
        amp *= ph;
        if flip {
            s ^= 1 << shift;
        }
    }
    (amp, s)
}

fn pauli_from_index(code: usize, n: usize) -> BTreeMap<usize, Pauli> {
    // Two bits per qubit: 0 = I, 1 = X, 2 = Y, 3 = Z.
    let mut out = BTreeMap::new();
    for q in 0..n {
        match (code >> (2 * q)) & 3 {
            1 => out.insert(q, Pauli::X),
            2 => out.insert(q, Pauli::Y),
            3 => out.insert(q, Pauli::Z),
            _ => None,
        };
    }
    out
}

/// Projects `h` into the sector described by `map`, returning an operator on
/// the reduced register whose matrix is the sector sub-block of `h`.
pub fn project_to_sector(h: &OperatorSum, map: &SectorMap) -> Result<OperatorSum> {
    if h.n_qubits != map.n_sites {
        return Err(Error::DimensionMismatch(format!(
            "operator acts on {} qubits, sector map on {}",
            h.n_qubits, map.n_sites
        )));
    }
    h.check_ladder_degree()?;
    let n = map.n_sites;
    let nr = map.n_reduced;
    let d = 1usize << nr;

    let mut groups: BTreeMap<Vec<(usize, Ladder)>, Vec<&OperatorTerm>> = BTreeMap::new();
    for t in &h.terms {
        groups.entry(t.ladders.clone()).or_default().push(t);
    }

    let mut in_sector = vec![None; 1 << n];
    for (src, dst) in map.pairs() {
        in_sector[src.index()] = Some(dst.index());
    }

    let mut out = OperatorSum::zero(nr, h.n_modes);
    let mut max_coupling: f64 = 0.0;
    for (ladders, terms) in groups {
        let mut images: HashMap<(usize, usize), Complex64> = HashMap::new();
        for s in 0..1usize << n {
            for t in &terms {
                let (ph, out_s) = pauli_image(&t.paulis, n, s);
                *images.entry((out_s, s)).or_insert(ZERO) += t.coeff * ph;
            }
        }
        let mut block = DMatrix::<Complex64>::zeros(d, d);
        for ((row, col), v) in images {
            match (in_sector[row], in_sector[col]) {
                (Some(r), Some(c)) => block[(r, c)] += v,
                (None, None) => {}
                _ => max_coupling = max_coupling.max(v.norm()),
            }
        }
        for code in 0..1usize << (2 * nr) {
            let paulis = pauli_from_index(code, nr);
            // Tr(P B) / d
            let mut tr = ZERO;
            for k in 0..d {
                let (ph, pk) = pauli_image(&paulis, nr, k);
                tr += ph * block[(k, pk)];
            }
            let coeff = tr / d as f64;
            if coeff.norm() > PROJECTION_TOLERANCE {
                out.terms.push(OperatorTerm { coeff, paulis, ladders: ladders.clone() });
            }
        }
    }
    if max_coupling > 1e-10 {
        return Err(Error::ChargeViolation { max_coupling });
    }
    Ok(out.canonicalize())
}

/// Outcome of the Jordan–Wigner consistency check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct JordanWignerReport {
    pub n_sites: usize,
    pub max_anticommutator_deviation: f64,
    pub max_hamiltonian_deviation: f64,
    /// (charge, boundary sign) for every non-empty sector.
    pub boundary_signs: Vec<(i64, f64)>,
}

pub fn jordan_wigner_check(n_sites: usize) -> Result<JordanWignerReport> {
    jordan_wigner_check_with(n_sites, 1.0, 1.0)
}

/// Builds ψ_j = Π_{l<j}(iZ_l) σ⁻_j densely, verifies the canonical
/// anticommutation relations and compares the mapped fermionic hopping and mass
/// Hamiltonian against the spin form, sector by sector.
pub fn jordan_wigner_check_with(n_sites: usize, spacing: f64, mass: f64) -> Result<JordanWignerReport> {
    if n_sites == 0 || n_sites % 2 != 0 || n_sites > 8 {
        return Err(Error::InvalidParams(format!("Jordan-Wigner check needs even N <= 8, got {n_sites}")));
    }
    let dim = 1usize << n_sites;
    let single = |q: usize, m: [[Complex64; 2]; 2]| -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(dim, dim);
        let shift = n_sites - 1 - q;
        for col in 0..dim {
            let b = (col >> shift) & 1;
            for (nb, row_vals) in m.iter().enumerate() {
                let v = row_vals[b];
                if v != ZERO {
                    out[((col & !(1 << shift)) | (nb << shift), col)] += v;
                }
            }
        }
        out
    };
    let z = [[ONE, ZERO], [ZERO, -ONE]];
    // σ⁻ = (X - iY)/2 = |1⟩⟨0|
    let lower = [[ZERO, ZERO], [ONE, ZERO]];
    let ident = DMatrix::<Complex64>::identity(dim, dim);

    let psi: Vec<DMatrix<Complex64>> = (0..n_sites)
        .map(|j| {
            let mut op = ident.clone();
            for l in 0..j {
                op = op * single(l, z) * I;
            }
            op * single(j, lower)
        })
        .collect();

    let mut anti: f64 = 0.0;
    for i in 0..n_sites {
        for j in 0..n_sites {
            let pd = psi[j].adjoint();
            let ac = &psi[i] * &pd + &pd * &psi[i];
            let target = if i == j { ident.clone() } else { DMatrix::zeros(dim, dim) };
            anti = anti.max(crate::linalg::max_abs(&(ac - target)));
            let aa = &psi[i] * &psi[j] + &psi[j] * &psi[i];
            anti = anti.max(crate::linalg::max_abs(&aa));
        }
    }

    let mut hf = DMatrix::<Complex64>::zeros(dim, dim);
    for j in 0..n_sites {
        let k = (j + 1) % n_sites;
        let hop = (psi[j].adjoint() * &psi[k] - psi[k].adjoint() * &psi[j]) * (I / (2.0 * spacing));
        hf += hop;
        let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
        hf += psi[j].adjoint() * &psi[j] * Complex64::new(sign * mass, 0.0);
    }

    let mut ham_dev: f64 = 0.0;
    let mut signs = Vec::new();
    let half = (n_sites / 2) as i64;
    for q in -half..=half {
        let params = ModelParams {
            n_sites,
            lattice_spacing: spacing,
            fermion_mass: mass,
            boson_mass: 1.0,
            coupling: 0.0,
            charge_sector: q,
            cutoffs: vec![0; n_sites],
            trotter_dt: 1.0,
            trotter_steps: 1,
        };
        let spin = realize_matrix(&build_fermion_hamiltonian(&params)?, &vec![0; n_sites])?.to_dense();
        let states = sector_states(n_sites, q)?;
        for a in &states {
            for b in &states {
                ham_dev = ham_dev.max((hf[(a.index(), b.index())] - spin[(a.index(), b.index())]).norm());
            }
        }
        signs.push((q, params.boundary_sign()));
    }
    Ok(JordanWignerReport {
        n_sites,
        max_anticommutator_deviation: anti,
        max_hamiltonian_deviation: ham_dev,
        boundary_signs: signs,
    })
}

fn format_term(t: &OperatorTerm) -> String {
    let paulis: Vec<String> = t.paulis.iter().map(|(q, p)| format!("{}{}", p.symbol(), q)).collect();
    let ladders: Vec<String> = t
        .ladders
        .iter()
        .map(|(m, l)| match l {
            Ladder::Create => format!("a{m}^"),
            Ladder::Annihilate => format!("a{m}"),
            Ladder::Number => format!("n{m}"),
        })
        .collect();
    format!("({},{}) | {} | {}", t.coeff.re, t.coeff.im, paulis.join(" "), ladders.join(" "))
        .trim_end()
        .to_string()
}

/// One term per line: `(<re>,<im>) | Z0 X1 | a0^ a1 n3`, after a
/// `# qubits=<n> modes=<m>` header.
impl fmt::Display for OperatorSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# qubits={} modes={}", self.n_qubits, self.n_modes)?;
        for t in &self.terms {
            writeln!(f, "{}", format_term(t))?;
        }
        Ok(())
    }
}

impl FromStr for OperatorSum {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut n_qubits = None;
        let mut n_modes = None;
        let mut terms = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let err = |message: String| Error::Parse { line: line_no, message };
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for tok in header.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("qubits=") {
                        n_qubits = Some(v.parse().map_err(|_| err(format!("bad qubit count `{v}`")))?);
                    } else if let Some(v) = tok.strip_prefix("modes=") {
                        n_modes = Some(v.parse().map_err(|_| err(format!("bad mode count `{v}`")))?);
                    }
                }
                continue;
            }
            let mut sections = line.split('|');
            let coeff_txt = sections.next().unwrap_or("").trim();
            let inner = coeff_txt
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| err(format!("coefficient `{coeff_txt}` is not `(re,im)`")))?;
            let (re, im) = inner.split_once(',').ok_or_else(|| err("coefficient needs two parts".into()))?;
            let re: f64 = re.trim().parse().map_err(|_| err(format!("bad real part `{re}`")))?;
            let im: f64 = im.trim().parse().map_err(|_| err(format!("bad imaginary part `{im}`")))?;
            let mut paulis = Vec::new();
            let mut ladders = Vec::new();
            for tok in sections.flat_map(|s| s.split_whitespace()) {
                let index = |s: &str| -> Result<usize> { s.parse().map_err(|_| err(format!("bad index in `{tok}`"))) };
                let (head, rest) = tok.split_at(1);
                match head {
                    "X" => paulis.push((index(rest)?, Pauli::X)),
                    "Y" => paulis.push((index(rest)?, Pauli::Y)),
                    "Z" => paulis.push((index(rest)?, Pauli::Z)),
                    "n" => ladders.push((index(rest)?, Ladder::Number)),
                    "a" => match rest.strip_suffix('^') {
                        Some(m) => ladders.push((index(m)?, Ladder::Create)),
                        None => ladders.push((index(rest)?, Ladder::Annihilate)),
                    },
                    _ => return Err(err(format!("unknown token `{tok}`"))),
                }
            }
            let term = OperatorTerm::new(Complex64::new(re, im), &paulis, &ladders)
                .map_err(|e| err(e.to_string()))?;
            terms.push(term);
        }
        let nq = n_qubits.unwrap_or_else(|| {
            terms.iter().filter_map(|t| t.paulis.keys().next_back().map(|q| q + 1)).max().unwrap_or(0)
        });
        let nm = n_modes.unwrap_or_else(|| {
            terms.iter().flat_map(|t| t.ladders.iter().map(|(m, _)| m + 1)).max().unwrap_or(0)
        });
        OperatorSum::from_terms(nq, nm, terms)
    }
}
