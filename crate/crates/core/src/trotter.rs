//! First-order Trotter circuits for reduced Hamiltonians.
//!
//! A reduced Hamiltonian is split into Hermitian groups (Pauli strings, number
//! operators, kick pairs `c a†P + c* a P`). A plan lists the groups in execution
//! order; each step applies `exp(-i·group·δt)` for every group in that order.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gates::{
    compile_mode_phases, compress, identity_kick, lower_to_native, Circuit, CompressOptions, GateOp, KickMechanism,
    PhaseFrame,
};
use crate::model::ModelParams;
use crate::operator::{build_hamiltonian, project_to_sector, Ladder, OperatorSum, OperatorTerm, Pauli, SectorMap};
use crate::state::HybridState;

const PAIR_TOLERANCE: f64 = 1e-12;

/// Structural identity of a Hermitian group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum GroupKey {
    Constant,
    Pauli(Vec<(usize, Pauli)>),
    Number(usize),
    Kick { mode: usize, paulis: Vec<(usize, Pauli)> },
}

impl GroupKey {
    pub fn pauli(paulis: &[(usize, Pauli)]) -> Self {
        GroupKey::Pauli(paulis.to_vec())
    }

    pub fn kick(mode: usize, paulis: &[(usize, Pauli)]) -> Self {
        GroupKey::Kick { mode, paulis: paulis.to_vec() }
    }
}

fn pauli_label(paulis: &[(usize, Pauli)]) -> String {
    paulis.iter().map(|(q, p)| format!("{p:?}{q}")).collect::<Vec<_>>().join(" ")
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::Constant => write!(f, "const"),
            GroupKey::Pauli(p) => write!(f, "{}", pauli_label(p)),
            GroupKey::Number(m) => write!(f, "n{m}"),
            GroupKey::Kick { mode, paulis } if paulis.is_empty() => write!(f, "kick m{mode}"),
            GroupKey::Kick { mode, paulis } => write!(f, "{} kick m{mode}", pauli_label(paulis)),
        }
    }
}

/// One Hermitian piece of the Hamiltonian. `coeff` is the real prefactor for
/// constants, Pauli strings and number operators, and the a† coefficient for kicks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermGroup {
    pub key: GroupKey,
    #[serde(serialize_with = "ser_complex")]
    pub coeff: Complex64,
}

fn ser_complex<S: serde::Serializer>(c: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&c.re)?;
    t.serialize_element(&c.im)?;
    t.end()
}

impl TermGroup {
    pub fn terms(&self) -> Vec<OperatorTerm> {
        let mk = |c: Complex64, p: &[(usize, Pauli)], l: &[(usize, Ladder)]| OperatorTerm::new(c, p, l).unwrap();
        match &self.key {
            GroupKey::Constant => vec![mk(self.coeff, &[], &[])],
            GroupKey::Pauli(p) => vec![mk(self.coeff, p, &[])],
            GroupKey::Number(m) => vec![mk(self.coeff, &[], &[(*m, Ladder::Number)])],
            GroupKey::Kick { mode, paulis } => vec![
                mk(self.coeff, paulis, &[(*mode, Ladder::Create)]),
                mk(self.coeff.conj(), paulis, &[(*mode, Ladder::Annihilate)]),
            ],
        }
    }

    fn qubits(&self) -> Vec<usize> {
        match &self.key {
            GroupKey::Pauli(p) | GroupKey::Kick { paulis: p, .. } => p.iter().map(|x| x.0).collect(),
            _ => vec![],
        }
    }

    fn mode(&self) -> Option<usize> {
        match self.key {
            GroupKey::Number(m) | GroupKey::Kick { mode: m, .. } => Some(m),
            _ => None,
        }
    }
}

/// Splits a Hermitian operator into groups.
pub fn group_terms(h: &OperatorSum) -> Result<Vec<TermGroup>> {
    let h = h.canonicalize().pruned(PAIR_TOLERANCE);
    let mut groups: Vec<TermGroup> = Vec::new();
    let mut partners: Vec<(Vec<(usize, Pauli)>, usize, Complex64)> = Vec::new();
    for t in h.terms() {
        let key = t.key();
        let real = || {
            if t.coeff.im.abs() > PAIR_TOLERANCE {
                Err(Error::Unsupported(format!("non-Hermitian coefficient {} on {}", t.coeff, pauli_label(&key.paulis))))
            } else {
                Ok(Complex64::new(t.coeff.re, 0.0))
            }
        };
        match key.ladders.as_slice() {
            [] if key.paulis.is_empty() => groups.push(TermGroup { key: GroupKey::Constant, coeff: real()? }),
            [] => groups.push(TermGroup { key: GroupKey::Pauli(key.paulis.clone()), coeff: real()? }),
            [(m, Ladder::Number)] if key.paulis.is_empty() => {
                groups.push(TermGroup { key: GroupKey::Number(*m), coeff: real()? })
            }
            [(m, Ladder::Create)] => {
                groups.push(TermGroup { key: GroupKey::Kick { mode: *m, paulis: key.paulis.clone() }, coeff: t.coeff })
            }
            [(m, Ladder::Annihilate)] => partners.push((key.paulis.clone(), *m, t.coeff)),
            _ => return Err(Error::Unsupported(format!("no Trotter rule for term {t:?}"))),
        }
    }
    for (paulis, mode, c) in partners.iter() {
        let found = groups.iter().find(|g| matches!(&g.key, GroupKey::Kick { mode: m, paulis: p } if m == mode && p == paulis));
        match found {
            Some(g) if (g.coeff.conj() - c).norm() <= PAIR_TOLERANCE => {}
            _ => return Err(Error::Unsupported(format!("kick on mode {mode} lacks a Hermitian partner"))),
        }
    }
    for g in &groups {
        if let GroupKey::Kick { mode, paulis } = &g.key {
            if !partners.iter().any(|(p, m, _)| m == mode && p == paulis) {
                return Err(Error::Unsupported(format!("kick on mode {mode} lacks a Hermitian partner")));
            }
        }
    }
    Ok(groups)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IdentityKick {
    Direct,
    Ancilla,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanOptions {
    pub identity_kick: IdentityKick,
    /// Absorb mode phases into later kick phases.
    pub compile_phases: bool,
    /// Lower ZKick and CNOT to SNP/MS/rotations.
    pub native: bool,
    #[serde(skip)]
    pub compression: Option<CompressOptions>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { identity_kick: IdentityKick::Direct, compile_phases: false, native: false, compression: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrotterPlan {
    pub name: String,
    pub groups: Vec<TermGroup>,
    pub dt: f64,
    pub steps: usize,
    pub n_system_qubits: usize,
    pub n_modes: usize,
    pub options: PlanOptions,
}

impl TrotterPlan {
    /// Builds a plan for `h`. With an explicit `order` every group of `h` must
    /// appear in it; keys absent from `h` (zero coefficients) are skipped.
    pub fn from_hamiltonian(
        name: &str,
        h: &OperatorSum,
        order: Option<&[GroupKey]>,
        dt: f64,
        steps: usize,
        options: PlanOptions,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(Error::InvalidParams(format!("Trotter step must be finite and non-negative, got {dt}")));
        }
        let mut groups = group_terms(h)?;
        if let Some(order) = order {
            let mut ordered = Vec::with_capacity(groups.len());
            for key in order {
                if let Some(k) = groups.iter().position(|g| &g.key == key) {
                    ordered.push(groups.remove(k));
                }
            }
            if let Some(g) = groups.first() {
                return Err(Error::Unsupported(format!("group `{}` missing from the term ordering", g.key)));
            }
            groups = ordered;
        }
        Ok(TrotterPlan {
            name: name.to_string(),
            groups,
            dt,
            steps,
            n_system_qubits: h.n_qubits(),
            n_modes: h.n_modes(),
            options,
        })
    }

    pub fn with_steps(mut self, dt: f64, steps: usize) -> Self {
        self.dt = dt;
        self.steps = steps;
        self
    }

    pub fn with_options(mut self, options: PlanOptions) -> Self {
        self.options = options;
        self
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.steps as f64
    }

    fn needs_ancilla(&self) -> bool {
        self.options.identity_kick == IdentityKick::Ancilla
            && self.groups.iter().any(|g| matches!(&g.key, GroupKey::Kick { paulis, .. } if paulis.is_empty()))
    }

    /// Index of the ancilla qubit, if the plan uses one.
    pub fn ancilla(&self) -> Option<usize> {
        self.needs_ancilla().then_some(self.n_system_qubits)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_system_qubits + usize::from(self.needs_ancilla())
    }

    /// Modes touched by at least one group.
    pub fn active_modes(&self) -> BTreeSet<usize> {
        self.groups.iter().filter_map(|g| g.mode()).collect()
    }

    /// Cutoffs with every mode outside the plan truncated to the vacuum.
    pub fn register_cutoffs(&self, cutoffs: &[usize]) -> Result<Vec<usize>> {
        if cutoffs.len() != self.n_modes {
            return Err(Error::DimensionMismatch(format!("{} cutoffs for {} modes", cutoffs.len(), self.n_modes)));
        }
        let active = self.active_modes();
        Ok(cutoffs.iter().enumerate().map(|(m, &c)| if active.contains(&m) { c } else { 0 }).collect())
    }

    /// |0…0⟩ ⊗ vacuum on the plan register.
    pub fn vacuum(&self, cutoffs: &[usize]) -> Result<HybridState> {
        HybridState::vacuum(self.n_qubits(), &self.register_cutoffs(cutoffs)?)
    }

    /// Sum of all groups; equals the source Hamiltonian.
    pub fn hamiltonian(&self) -> OperatorSum {
        let terms = self.groups.iter().flat_map(|g| g.terms()).collect();
        OperatorSum::from_terms(self.n_system_qubits, self.n_modes, terms).expect("groups are valid terms")
    }

    /// Groups in consecutive runs with pairwise disjoint (qubit, mode) supports.
    pub fn parallel_layers(&self) -> Vec<Vec<usize>> {
        let mut layers: Vec<Vec<usize>> = Vec::new();
        let mut used_q: BTreeSet<usize> = BTreeSet::new();
        let mut used_m: BTreeSet<usize> = BTreeSet::new();
        let anc = self.ancilla();
        for (k, g) in self.groups.iter().enumerate() {
            let mut qs = g.qubits();
            if let (Some(a), GroupKey::Kick { paulis, .. }) = (anc, &g.key) {
                if paulis.is_empty() {
                    qs.push(a);
                }
            }
            let clash = qs.iter().any(|q| used_q.contains(q)) || g.mode().is_some_and(|m| used_m.contains(&m));
            if clash || layers.is_empty() {
                layers.push(Vec::new());
                used_q.clear();
                used_m.clear();
            }
            layers.last_mut().unwrap().push(k);
            used_q.extend(qs);
            used_m.extend(g.mode());
        }
        layers
    }

    fn emit_group(&self, g: &TermGroup, circuit: &mut Circuit, step: usize) -> Result<()> {
        let dt = self.dt;
        let label = g.key.to_string();
        let (nq, nm) = (circuit.n_qubits(), circuit.n_modes());
        let push = |c: &mut Circuit, gate: GateOp| c.push_tagged(gate, Some(step), &label);
        match &g.key {
            GroupKey::Constant => {}
            GroupKey::Number(mode) => push(circuit, GateOp::ModePhase { mode: *mode, theta: g.coeff.re * dt })?,
            GroupKey::Pauli(paulis) => {
                let theta = 2.0 * g.coeff.re * dt;
                match paulis.as_slice() {
                    [(q, Pauli::X)] => push(circuit, GateOp::Rx { qubit: *q, theta })?,
                    [(q, Pauli::Y)] => push(circuit, GateOp::Ry { qubit: *q, theta })?,
                    [(q, Pauli::Z)] => push(circuit, GateOp::Rz { qubit: *q, theta })?,
                    [(i, Pauli::X), (j, Pauli::X)] => {
                        let cx = GateOp::Cnot { control: *i, target: *j };
                        push(circuit, cx)?;
                        push(circuit, GateOp::Rx { qubit: *i, theta })?;
                        push(circuit, cx)?;
                    }
                    _ => {
                        let (pre, target, post) = parity_frame(paulis);
                        for gate in pre {
                            push(circuit, gate)?;
                        }
                        push(circuit, GateOp::Rz { qubit: target, theta })?;
                        for gate in post {
                            push(circuit, gate)?;
                        }
                    }
                }
            }
            GroupKey::Kick { mode, paulis } => {
                let theta = 2.0 * g.coeff.norm() * dt;
                let phi = if g.coeff.norm() == 0.0 { 0.0 } else { -g.coeff.arg() };
                if paulis.is_empty() {
                    let mech = match self.options.identity_kick {
                        IdentityKick::Direct => KickMechanism::Direct,
                        IdentityKick::Ancilla => KickMechanism::Ancilla { qubit: self.n_system_qubits },
                    };
                    let sub = identity_kick(*mode, theta, phi, mech, nq, nm)?;
                    circuit.append(&sub, Some(step), Some(&label))?;
                } else {
                    let (pre, target, post) = parity_frame(paulis);
                    for gate in pre {
                        push(circuit, gate)?;
                    }
                    push(circuit, GateOp::ZKick { qubit: target, mode: *mode, theta, phi })?;
                    for gate in post {
                        push(circuit, gate)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Logical circuit for one Trotter step.
    pub fn step_circuit(&self, step: usize) -> Result<Circuit> {
        let mut c = Circuit::new(self.n_qubits(), self.n_modes);
        for g in &self.groups {
            self.emit_group(g, &mut c, step)?;
        }
        Ok(c)
    }

    /// Logical circuit for the first `steps` Trotter steps.
    pub fn circuit(&self, steps: usize) -> Result<Circuit> {
        let mut c = Circuit::new(self.n_qubits(), self.n_modes);
        for s in 0..steps {
            c.append(&self.step_circuit(s)?, None, None)?;
        }
        Ok(c)
    }

    /// The circuit as it would run on hardware: compressed (if requested),
    /// lowered to native gates (if requested), and with mode phases moved into
    /// the classical frame (if requested).
    pub fn executable_circuit(&self, steps: usize) -> Result<(Circuit, PhaseFrame)> {
        let mut c = self.circuit(steps)?;
        if let Some(opts) = self.options.compression {
            c = compress(&c, opts);
        }
        if self.options.native {
            c = lower_to_native(&c)?;
        }
        if self.options.compile_phases {
            Ok(compile_mode_phases(&c))
        } else {
            Ok((c, PhaseFrame { residual: vec![0.0; self.n_modes] }))
        }
    }
}

/// Basis changes and a CNOT parity ladder mapping the Pauli string onto σᶻ of
/// its last qubit: `P = post · Z_target · pre` as operators.
fn parity_frame(paulis: &[(usize, Pauli)]) -> (Vec<GateOp>, usize, Vec<GateOp>) {
    let target = paulis.last().map(|p| p.0).expect("non-empty Pauli string");
    let mut pre = Vec::new();
    let mut undo = Vec::new();
    for &(q, p) in paulis {
        match p {
            Pauli::X => {
                pre.push(GateOp::Ry { qubit: q, theta: -FRAC_PI_2 });
                undo.push(GateOp::Ry { qubit: q, theta: FRAC_PI_2 });
            }
            Pauli::Y => {
                pre.push(GateOp::Rx { qubit: q, theta: FRAC_PI_2 });
                undo.push(GateOp::Rx { qubit: q, theta: -FRAC_PI_2 });
            }
            Pauli::Z => {}
        }
    }
    for &(q, _) in &paulis[..paulis.len() - 1] {
        pre.push(GateOp::Cnot { control: q, target });
    }
    let mut post: Vec<GateOp> = pre[undo.len()..].iter().rev().copied().collect();
    post.extend(undo);
    (pre, target, post)
}

fn reduced_hamiltonian(params: &ModelParams) -> Result<OperatorSum> {
    let map = SectorMap::descending(params)?;
    project_to_sector(&build_hamiltonian(params)?, &map)
}

fn check_sector(params: &ModelParams, n: usize, q: i64) -> Result<()> {
    params.validate()?;
    if params.n_sites != n || params.charge_sector != q {
        return Err(Error::WrongSector {
            expected_sites: n,
            expected_charge: q,
            n_sites: params.n_sites,
            charge: params.charge_sector,
        });
    }
    Ok(())
}

/// Term order for the two-site neutral sector.
pub fn n2_order() -> Vec<GroupKey> {
    let z0 = (0, Pauli::Z);
    vec![
        GroupKey::pauli(&[z0]),
        GroupKey::kick(0, &[z0]),
        GroupKey::kick(1, &[]),
        GroupKey::Number(0),
        GroupKey::Number(1),
    ]
}

/// Term order for the four-site Q=-1 sector, modes 0, 1 and 3.
pub fn n4_order() -> Vec<GroupKey> {
    let (x0, x1, z0, z1) = ((0, Pauli::X), (1, Pauli::X), (0, Pauli::Z), (1, Pauli::Z));
    vec![
        GroupKey::pauli(&[x1]),
        GroupKey::pauli(&[x0, x1]),
        GroupKey::kick(1, &[z0]),
        GroupKey::kick(1, &[z0, z1]),
        GroupKey::kick(3, &[z0]),
        GroupKey::kick(3, &[z0, z1]),
        GroupKey::pauli(&[z1]),
        GroupKey::kick(0, &[z1]),
        GroupKey::Number(0),
        GroupKey::Number(1),
        GroupKey::Number(3),
    ]
}

/// Term order for the decoupled mode 2 of the four-site sector.
pub fn n4_mode2_order() -> Vec<GroupKey> {
    vec![GroupKey::kick(2, &[]), GroupKey::Number(2)]
}

pub fn plan_n2(params: &ModelParams, options: PlanOptions) -> Result<TrotterPlan> {
    check_sector(params, 2, 0)?;
    let h = reduced_hamiltonian(params)?;
    TrotterPlan::from_hamiltonian("n2", &h, Some(&n2_order()), params.trotter_dt, params.trotter_steps, options)
}

/// Main circuit (qubits 0 and 1, modes 0, 1, 3) and the independent mode-2 circuit.
pub fn plan_n4(params: &ModelParams, options: PlanOptions) -> Result<(TrotterPlan, TrotterPlan)> {
    check_sector(params, 4, -1)?;
    let h = reduced_hamiltonian(params)?;
    let (mode2, main): (Vec<OperatorTerm>, Vec<OperatorTerm>) = h.terms().iter().cloned().partition(|t| {
        t.paulis.is_empty() && t.ladders.iter().all(|(m, _)| *m == 2) && !t.ladders.is_empty()
    });
    if mode2.iter().any(|t| !t.paulis.is_empty()) {
        return Err(Error::Unsupported("mode 2 couples to the spins".into()));
    }
    let main_h = OperatorSum::from_terms(2, 4, main)?;
    let mode2_h = OperatorSum::from_terms(0, 4, mode2)?;
    let (dt, steps) = (params.trotter_dt, params.trotter_steps);
    let main = TrotterPlan::from_hamiltonian("n4_main", &main_h, Some(&n4_order()), dt, steps, options)?;
    let m2 = TrotterPlan::from_hamiltonian("n4_mode2", &mode2_h, Some(&n4_mode2_order()), dt, steps, options)?;
    Ok((main, m2))
}

/// Plan for any sector using the canonical group order.
pub fn plan_generic(params: &ModelParams, options: PlanOptions) -> Result<TrotterPlan> {
    params.validate()?;
    let h = reduced_hamiltonian(params)?;
    let name = format!("n{}_q{}", params.n_sites, params.charge_sector);
    TrotterPlan::from_hamiltonian(&name, &h, None, params.trotter_dt, params.trotter_steps, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_frame_shapes() {
        let (pre, t, post) = parity_frame(&[(0, Pauli::X), (2, Pauli::Y), (3, Pauli::Z)]);
        assert_eq!(t, 3);
        assert_eq!(pre.len(), 4);
        assert_eq!(post.len(), 4);
        assert_eq!(post[0], GateOp::Cnot { control: 2, target: 3 });
        assert_eq!(post[3], GateOp::Rx { qubit: 2, theta: -FRAC_PI_2 });
    }

    #[test]
    fn group_keys_display() {
        assert_eq!(GroupKey::kick(1, &[(0, Pauli::Z), (1, Pauli::Z)]).to_string(), "Z0 Z1 kick m1");
        assert_eq!(GroupKey::pauli(&[(0, Pauli::X), (1, Pauli::X)]).to_string(), "X0 X1");
        assert_eq!(GroupKey::Number(3).to_string(), "n3");
    }

    #[test]
    fn wrong_sector_rejected() {
        let p = ModelParams::n4_reference(2.0);
        assert!(matches!(plan_n2(&p, PlanOptions::default()), Err(Error::WrongSector { .. })));
        let p = ModelParams::n2_reference();
        assert!(matches!(plan_n4(&p, PlanOptions::default()), Err(Error::WrongSector { .. })));
    }
}
