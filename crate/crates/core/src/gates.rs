//! Hardware gate set on the truncated hybrid space.
//!
//! Conventions (θ, φ in radians):
//!
//! * `RX/RY/RZ(θ) = exp(-iθσ/2)`
//! * `MS(θ) = exp(-iθ σˣσˣ/2)`
//! * `SNP(θ, φ) = exp(-iθ σʸ (e^{iφ}a + e^{-iφ}a†)/2)`
//! * `ZKick(θ, φ) = exp(-iθ σᶻ (e^{iφ}a + e^{-iφ}a†)/2)`, a logical gate lowered
//!   to `RX(-π/2) · SNP · RX(π/2)`
//! * `ModePhase(θ) = exp(-iθ a†a)`
//! * `Displace(α) = exp(αa† - α*a)`
//!
//! Every bosonic factor is the exponential of the generator truncated at the
//! mode cutoff, so all gates are exactly unitary on the simulated space.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::state::{HybridState, Layout};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
#[cfg(test)]
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateOp {
    Rx { qubit: usize, theta: f64 },
    Ry { qubit: usize, theta: f64 },
    Rz { qubit: usize, theta: f64 },
    Ms { q0: usize, q1: usize, theta: f64 },
    Cnot { control: usize, target: usize },
    Snp { qubit: usize, mode: usize, theta: f64, phi: f64 },
    ZKick { qubit: usize, mode: usize, theta: f64, phi: f64 },
    ModePhase { mode: usize, theta: f64 },
    Displace { mode: usize, alpha: Complex64 },
}

impl GateOp {
    pub fn qubits(&self) -> Vec<usize> {
        use GateOp::*;
        match *self {
            Rx { qubit, .. } | Ry { qubit, .. } | Rz { qubit, .. } => vec![qubit],
            Snp { qubit, .. } | ZKick { qubit, .. } => vec![qubit],
            Ms { q0, q1, .. } => vec![q0, q1],
            Cnot { control, target } => vec![control, target],
            ModePhase { .. } | Displace { .. } => vec![],
        }
    }

    pub fn mode(&self) -> Option<usize> {
        use GateOp::*;
        match *self {
            Snp { mode, .. } | ZKick { mode, .. } | ModePhase { mode, .. } | Displace { mode, .. } => Some(mode),
            _ => None,
        }
    }

    pub fn is_entangling_spin_spin(&self) -> bool {
        matches!(self, GateOp::Ms { .. } | GateOp::Cnot { .. })
    }

    /// True when the gate is block-diagonal in the σᶻ basis of `q`
    /// and leaves the computational state of `q` unchanged.
    fn preserves_z_of(&self, q: usize) -> bool {
        match *self {
            GateOp::Rz { qubit, .. } | GateOp::ZKick { qubit, .. } => qubit == q || !self.qubits().contains(&q),
            GateOp::Cnot { control, target } => control == q && target != q || !self.qubits().contains(&q),
            _ => !self.qubits().contains(&q),
        }
    }

    fn validate(&self, n_qubits: usize, n_modes: usize) -> Result<()> {
        for q in self.qubits() {
            if q >= n_qubits {
                return Err(Error::IndexOutOfRange { index: q, limit: n_qubits });
            }
        }
        if let Some(m) = self.mode() {
            if m >= n_modes {
                return Err(Error::IndexOutOfRange { index: m, limit: n_modes });
            }
        }
        let qs = self.qubits();
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(Error::InvalidParams(format!("two-qubit gate on a single qubit: {self}")));
        }
        let finite = match *self {
            GateOp::Rx { theta, .. }
            | GateOp::Ry { theta, .. }
            | GateOp::Rz { theta, .. }
            | GateOp::Ms { theta, .. }
            | GateOp::ModePhase { theta, .. } => theta.is_finite(),
            GateOp::Snp { theta, phi, .. } | GateOp::ZKick { theta, phi, .. } => theta.is_finite() && phi.is_finite(),
            GateOp::Displace { alpha, .. } => alpha.re.is_finite() && alpha.im.is_finite(),
            GateOp::Cnot { .. } => true,
        };
        if !finite {
            return Err(Error::InvalidParams(format!("non-finite gate angle in {self}")));
        }
        Ok(())
    }

    /// Applies the gate in place.
    pub fn apply(&self, state: &mut HybridState) -> Result<()> {
        self.validate(state.n_qubits(), state.layout().n_modes())?;
        let layout = state.layout().clone();
        let amps = state.amplitudes_mut();
        match *self {
            GateOp::Rx { qubit, theta } => {
                let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
                apply_1q(&layout, amps, qubit, [[c.into(), -I * s], [-I * s, c.into()]]);
            }
            GateOp::Ry { qubit, theta } => {
                let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
                apply_1q(&layout, amps, qubit, [[c.into(), (-s).into()], [s.into(), c.into()]]);
            }
            GateOp::Rz { qubit, theta } => {
                let p = Complex64::from_polar(1.0, -theta / 2.0);
                apply_1q(&layout, amps, qubit, [[p, ZERO], [ZERO, p.conj()]]);
            }
            GateOp::Ms { q0, q1, theta } => {
                let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
                let (s0, s1) = (layout.qubit_stride(q0), layout.qubit_stride(q1));
                for i in 0..amps.len() {
                    if layout.bit_of(i, q0) == 0 {
                        let j = if layout.bit_of(i, q1) == 0 { i + s0 + s1 } else { i + s0 - s1 };
                        let (a, b) = (amps[i], amps[j]);
                        amps[i] = a * c - I * s * b;
                        amps[j] = b * c - I * s * a;
                    }
                }
            }
            GateOp::Cnot { control, target } => {
                let ts = layout.qubit_stride(target);
                for i in 0..amps.len() {
                    if layout.bit_of(i, control) == 1 && layout.bit_of(i, target) == 0 {
                        amps.swap(i, i + ts);
                    }
                }
            }
            GateOp::ModePhase { mode, theta } => {
                for (i, a) in amps.iter_mut().enumerate() {
                    let n = layout.occupation_of(i, mode) as f64;
                    *a *= Complex64::from_polar(1.0, -theta * n);
                }
            }
            GateOp::Displace { mode, alpha } => {
                let (theta, phi) = kick_angles(alpha);
                let e = kick_matrix(layout.cutoffs()[mode], theta, phi);
                for_each_fiber(&layout, mode, |fiber| {
                    let v = gather(amps, &fiber);
                    scatter(amps, &fiber, &(&*e * v));
                });
            }
            GateOp::ZKick { qubit, mode, theta, phi } => {
                let e = kick_matrix(layout.cutoffs()[mode], theta, phi);
                let ed = e.adjoint();
                for_each_fiber(&layout, mode, |fiber| {
                    let m = if layout.bit_of(fiber[0], qubit) == 0 { &*e } else { &ed };
                    let v = gather(amps, &fiber);
                    scatter(amps, &fiber, &(m * v));
                });
            }
            GateOp::Snp { qubit, mode, theta, phi } => {
                let e = kick_matrix(layout.cutoffs()[mode], theta, phi);
                let ed = e.adjoint();
                let qs = layout.qubit_stride(qubit);
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                for_each_fiber(&layout, mode, |fiber| {
                    if layout.bit_of(fiber[0], qubit) == 1 {
                        return;
                    }
                    let partner: Vec<usize> = fiber.iter().map(|&i| i + qs).collect();
                    let f0 = gather(amps, &fiber);
                    let f1 = gather(amps, &partner);
                    // Components along |±y⟩ = (|0⟩ ± i|1⟩)/√2.
                    let plus = (&f0 - &f1 * I) * h;
                    let minus = (&f0 + &f1 * I) * h;
                    let plus = &*e * plus;
                    let minus = &ed * minus;
                    scatter(amps, &fiber, &((&plus + &minus) * h));
                    scatter(amps, &partner, &((&plus - &minus) * (I * h)));
                });
            }
        }
        Ok(())
    }
}

fn apply_1q(layout: &Layout, amps: &mut [Complex64], q: usize, u: [[Complex64; 2]; 2]) {
    let stride = layout.qubit_stride(q);
    for base in (0..amps.len()).step_by(2 * stride) {
        for i in base..base + stride {
            let (a, b) = (amps[i], amps[i + stride]);
            amps[i] = u[0][0] * a + u[0][1] * b;
            amps[i + stride] = u[1][0] * a + u[1][1] * b;
        }
    }
}

/// Calls `f` with the index list of every fiber along `mode` (all indices
/// sharing the spin and other-mode occupations), ordered by occupation.
fn for_each_fiber(layout: &Layout, mode: usize, mut f: impl FnMut(Vec<usize>)) {
    let stride = layout.mode_stride(mode);
    let len = layout.cutoffs()[mode] + 1;
    let block = stride * len;
    for base in (0..layout.dim()).step_by(block) {
        for off in 0..stride {
            f((0..len).map(|n| base + off + n * stride).collect());
        }
    }
}

fn gather(amps: &[Complex64], idx: &[usize]) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_iterator(idx.len(), idx.iter().map(|&i| amps[i]))
}

fn scatter(amps: &mut [Complex64], idx: &[usize], v: &nalgebra::DVector<Complex64>) {
    for (k, &i) in idx.iter().enumerate() {
        amps[i] = v[k];
    }
}

/// (θ, φ) with `exp(αa† - α*a) = exp(-iθ(e^{iφ}a + e^{-iφ}a†)/2)`.
pub fn kick_angles(alpha: Complex64) -> (f64, f64) {
    if alpha == ZERO {
        return (0.0, 0.0);
    }
    (2.0 * alpha.norm(), -alpha.arg() - FRAC_PI_2)
}

/// Displacement amplitude equivalent to a kick with angles (θ, φ).
pub fn kick_alpha(theta: f64, phi: f64) -> Complex64 {
    -I * Complex64::from_polar(theta / 2.0, -phi)
}

struct KickCache {
    quadrature: RwLock<HashMap<usize, Arc<SymmetricEigen<f64, nalgebra::Dyn>>>>,
    kicks: RwLock<HashMap<(usize, i64, i64), Arc<DMatrix<Complex64>>>>,
}

fn cache() -> &'static KickCache {
    static CACHE: OnceLock<KickCache> = OnceLock::new();
    CACHE.get_or_init(|| KickCache { quadrature: RwLock::new(HashMap::new()), kicks: RwLock::new(HashMap::new()) })
}

const KICK_CACHE_LIMIT: usize = 8192;

/// Eigendecomposition of the truncated quadrature a + a† at `cutoff`.
fn quadrature_eigen(cutoff: usize) -> Arc<SymmetricEigen<f64, nalgebra::Dyn>> {
    if let Some(e) = cache().quadrature.read().unwrap().get(&cutoff) {
        return e.clone();
    }
    let d = cutoff + 1;
    let mut x = DMatrix::<f64>::zeros(d, d);
    for n in 0..cutoff {
        let v = ((n + 1) as f64).sqrt();
        x[(n, n + 1)] = v;
        x[(n + 1, n)] = v;
    }
    let e = Arc::new(x.symmetric_eigen());
    cache().quadrature.write().unwrap().insert(cutoff, e.clone());
    e
}

/// exp(-iθ(e^{iφ}a + e^{-iφ}a†)/2) at the given cutoff. Cached by cutoff and the
/// equivalent displacement α quantized to 12 decimal digits.
pub fn kick_matrix(cutoff: usize, theta: f64, phi: f64) -> Arc<DMatrix<Complex64>> {
    let alpha = kick_alpha(theta, phi);
    let key = (cutoff, (alpha.re * 1e12).round() as i64, (alpha.im * 1e12).round() as i64);
    if let Some(m) = cache().kicks.read().unwrap().get(&key) {
        return m.clone();
    }
    let eig = quadrature_eigen(cutoff);
    let d = cutoff + 1;
    // G = R X R† with R = diag(e^{-iφn}).
    let mut m = DMatrix::<Complex64>::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            let mut acc = ZERO;
            for k in 0..d {
                let ph = Complex64::from_polar(1.0, -theta * eig.eigenvalues[k] / 2.0);
                acc += ph * eig.eigenvectors[(r, k)] * eig.eigenvectors[(c, k)];
            }
            m[(r, c)] = acc * Complex64::from_polar(1.0, -phi * (r as f64 - c as f64));
        }
    }
    let m = Arc::new(m);
    let mut w = cache().kicks.write().unwrap();
    if w.len() >= KICK_CACHE_LIMIT {
        w.clear();
    }
    w.insert(key, m.clone());
    m
}

/// Dense matrix of `gate` on the given register, column by column.
pub fn gate_matrix(gate: &GateOp, n_qubits: usize, cutoffs: &[usize]) -> Result<DMatrix<Complex64>> {
    circuit_matrix(&Circuit::from_gates(n_qubits, cutoffs.len(), vec![*gate])?, cutoffs)
}

/// Dense matrix of a whole circuit (small registers only).
pub fn circuit_matrix(circuit: &Circuit, cutoffs: &[usize]) -> Result<DMatrix<Complex64>> {
    let layout = Layout::new(circuit.n_qubits, cutoffs)?;
    let d = layout.dim();
    let mut out = DMatrix::zeros(d, d);
    for col in 0..d {
        let (s, occ) = layout.decode(col);
        let mut st = HybridState::basis(layout.clone(), s, &occ);
        circuit.apply(&mut st)?;
        for (r, a) in st.amplitudes().iter().enumerate() {
            out[(r, col)] = *a;
        }
    }
    Ok(out)
}

/// Per-gate bookkeeping carried through compilation passes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpMeta {
    pub step: Option<usize>,
    pub term: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    n_modes: usize,
    ops: Vec<GateOp>,
    meta: Vec<OpMeta>,
}

impl Circuit {
    pub fn new(n_qubits: usize, n_modes: usize) -> Self {
        Circuit { n_qubits, n_modes, ops: Vec::new(), meta: Vec::new() }
    }

    pub fn from_gates(n_qubits: usize, n_modes: usize, gates: Vec<GateOp>) -> Result<Self> {
        let mut c = Circuit::new(n_qubits, n_modes);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: GateOp) -> Result<()> {
        self.push_tagged(gate, None, "")
    }

    pub fn push_tagged(&mut self, gate: GateOp, step: Option<usize>, term: &str) -> Result<()> {
        gate.validate(self.n_qubits, self.n_modes)?;
        self.ops.push(gate);
        self.meta.push(OpMeta { step, term: term.to_string() });
        Ok(())
    }

    /// Appends `other`, overriding its tags when `step`/`term` are given.
    pub fn append(&mut self, other: &Circuit, step: Option<usize>, term: Option<&str>) -> Result<()> {
        for (g, m) in other.ops.iter().zip(&other.meta) {
            let label = term.unwrap_or(&m.term);
            self.push_tagged(*g, step.or(m.step), label)?;
        }
        Ok(())
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn meta(&self) -> &[OpMeta] {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn count(&self, pred: impl Fn(&GateOp) -> bool) -> usize {
        self.ops.iter().filter(|g| pred(g)).count()
    }

    pub fn apply(&self, state: &mut HybridState) -> Result<()> {
        if state.n_qubits() != self.n_qubits || state.layout().n_modes() != self.n_modes {
            return Err(Error::DimensionMismatch(format!(
                "circuit has {} qubits and {} modes, state has {} and {}",
                self.n_qubits,
                self.n_modes,
                state.n_qubits(),
                state.layout().n_modes()
            )));
        }
        for g in &self.ops {
            g.apply(state)?;
        }
        Ok(())
    }

    fn retain_indices(&self, keep: &[bool]) -> Circuit {
        let mut out = Circuit::new(self.n_qubits, self.n_modes);
        for (k, (g, m)) in self.ops.iter().zip(&self.meta).enumerate() {
            if keep[k] {
                out.ops.push(*g);
                out.meta.push(m.clone());
            }
        }
        out
    }

    /// JSON-lines sidecar: one `{"index", "step", "term"}` object per gate.
    pub fn metadata_jsonl(&self) -> String {
        let mut out = String::new();
        for (k, m) in self.meta.iter().enumerate() {
            let line = serde_json::json!({ "index": k, "step": m.step, "term": m.term, "gate": gate_name(&self.ops[k]) });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

fn gate_name(g: &GateOp) -> &'static str {
    match g {
        GateOp::Rx { .. } => "RX",
        GateOp::Ry { .. } => "RY",
        GateOp::Rz { .. } => "RZ",
        GateOp::Ms { .. } => "MS",
        GateOp::Cnot { .. } => "CNOT",
        GateOp::Snp { .. } => "SNP",
        GateOp::ZKick { .. } => "ZKICK",
        GateOp::ModePhase { .. } => "MODEPHASE",
        GateOp::Displace { .. } => "DISPLACE",
    }
}

impl fmt::Display for GateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = gate_name(self);
        match *self {
            GateOp::Rx { qubit, theta } | GateOp::Ry { qubit, theta } | GateOp::Rz { qubit, theta } => {
                write!(f, "{name} q{qubit} theta={theta}")
            }
            GateOp::Ms { q0, q1, theta } => write!(f, "{name} q{q0} q{q1} theta={theta}"),
            GateOp::Cnot { control, target } => write!(f, "{name} q{control} q{target}"),
            GateOp::Snp { qubit, mode, theta, phi } | GateOp::ZKick { qubit, mode, theta, phi } => {
                write!(f, "{name} q{qubit} m{mode} theta={theta} phi={phi}")
            }
            GateOp::ModePhase { mode, theta } => write!(f, "{name} m{mode} theta={theta}"),
            GateOp::Displace { mode, alpha } => write!(f, "{name} m{mode} re={} im={}", alpha.re, alpha.im),
        }
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# qubits={} modes={}", self.n_qubits, self.n_modes)?;
        for g in &self.ops {
            writeln!(f, "{g}")?;
        }
        Ok(())
    }
}

fn parse_gate(line: &str) -> std::result::Result<GateOp, String> {
    let mut toks = line.split_whitespace();
    let name = toks.next().ok_or("empty line")?.to_ascii_uppercase();
    let mut qubits = Vec::new();
    let mut modes = Vec::new();
    let mut kv: HashMap<String, f64> = HashMap::new();
    for t in toks {
        if let Some((k, v)) = t.split_once('=') {
            let v: f64 = v.parse().map_err(|_| format!("bad number `{v}`"))?;
            kv.insert(k.to_ascii_lowercase(), v);
        } else if let Some(q) = t.strip_prefix('q') {
            qubits.push(q.parse::<usize>().map_err(|_| format!("bad qubit `{t}`"))?);
        } else if let Some(m) = t.strip_prefix('m') {
            modes.push(m.parse::<usize>().map_err(|_| format!("bad mode `{t}`"))?);
        } else {
            return Err(format!("unexpected token `{t}`"));
        }
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| format!("{name} needs `{k}=`"));
    let q = |i: usize| qubits.get(i).copied().ok_or_else(|| format!("{name} needs {} qubit(s)", i + 1));
    let m = || modes.first().copied().ok_or_else(|| format!("{name} needs a mode"));
    Ok(match name.as_str() {
        "RX" => GateOp::Rx { qubit: q(0)?, theta: get("theta")? },
        "RY" => GateOp::Ry { qubit: q(0)?, theta: get("theta")? },
        "RZ" => GateOp::Rz { qubit: q(0)?, theta: get("theta")? },
        "MS" => GateOp::Ms { q0: q(0)?, q1: q(1)?, theta: get("theta")? },
        "CNOT" => GateOp::Cnot { control: q(0)?, target: q(1)? },
        "SNP" => GateOp::Snp { qubit: q(0)?, mode: m()?, theta: get("theta")?, phi: get("phi").unwrap_or(0.0) },
        "ZKICK" => GateOp::ZKick { qubit: q(0)?, mode: m()?, theta: get("theta")?, phi: get("phi").unwrap_or(0.0) },
        "MODEPHASE" => GateOp::ModePhase { mode: m()?, theta: get("theta")? },
        "DISPLACE" => GateOp::Displace { mode: m()?, alpha: Complex64::new(get("re")?, get("im").unwrap_or(0.0)) },
        other => return Err(format!("unknown gate `{other}`")),
    })
}

impl FromStr for Circuit {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize)> = None;
        let mut gates = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                let (mut nq, mut nm) = (None, None);
                for tok in h.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("qubits=") {
                        nq = v.parse().ok();
                    } else if let Some(v) = tok.strip_prefix("modes=") {
                        nm = v.parse().ok();
                    }
                }
                if let (Some(a), Some(b)) = (nq, nm) {
                    header = Some((a, b));
                }
                continue;
            }
            gates.push(parse_gate(line).map_err(|message| Error::Parse { line: k + 1, message })?);
        }
        let (nq, nm) = header.unwrap_or_else(|| {
            let nq = gates.iter().flat_map(|g| g.qubits()).max().map_or(0, |q| q + 1);
            let nm = gates.iter().filter_map(|g| g.mode()).max().map_or(0, |m| m + 1);
            (nq, nm)
        });
        Circuit::from_gates(nq, nm, gates)
    }
}

/// CNOT(control, target) from one MS(π/2) and single-qubit rotations.
/// Equal to CNOT up to a global phase of e^{-iπ/4}.
pub fn cnot_decomposition(control: usize, target: usize, n_qubits: usize, n_modes: usize) -> Result<Circuit> {
    if control == target {
        return Err(Error::InvalidParams("CNOT needs distinct qubits".into()));
    }
    let (lo, hi) = (control.min(target), control.max(target));
    Circuit::from_gates(
        n_qubits,
        n_modes,
        vec![
            GateOp::Ry { qubit: control, theta: -FRAC_PI_2 },
            GateOp::Ms { q0: lo, q1: hi, theta: FRAC_PI_2 },
            GateOp::Ry { qubit: control, theta: FRAC_PI_2 },
            GateOp::Rx { qubit: target, theta: FRAC_PI_2 },
            GateOp::Rz { qubit: control, theta: FRAC_PI_2 },
        ],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KickBasis {
    /// σᶻ on the kicked qubit.
    Z,
    /// σᶻ_control σᶻ_qubit via CNOT conjugation.
    ZZ { control: usize },
}

/// exp(-iθ P (e^{iφ}a + e^{-iφ}a†)/2) for P = σᶻ_q or σᶻ_c σᶻ_q, built from SNP
/// conjugated by RX(∓π/2), plus a CNOT pair for the two-qubit variant.
pub fn conjugated_kick(
    qubit: usize,
    mode: usize,
    theta: f64,
    phi: f64,
    basis: KickBasis,
    n_qubits: usize,
    n_modes: usize,
) -> Result<Circuit> {
    let core = [
        GateOp::Rx { qubit, theta: -FRAC_PI_2 },
        GateOp::Snp { qubit, mode, theta, phi },
        GateOp::Rx { qubit, theta: FRAC_PI_2 },
    ];
    let gates = match basis {
        KickBasis::Z => core.to_vec(),
        KickBasis::ZZ { control } => {
            let cx = GateOp::Cnot { control, target: qubit };
            std::iter::once(cx).chain(core).chain(std::iter::once(cx)).collect()
        }
    };
    Circuit::from_gates(n_qubits, n_modes, gates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KickMechanism {
    /// A plain displacement of the mode.
    Direct,
    /// SNP on an ancilla rotated into the +1 eigenstate of σʸ and back.
    Ancilla { qubit: usize },
}

/// Spin-independent kick exp(-iθ(e^{iφ}a + e^{-iφ}a†)/2) on `mode`.
pub fn identity_kick(
    mode: usize,
    theta: f64,
    phi: f64,
    mechanism: KickMechanism,
    n_qubits: usize,
    n_modes: usize,
) -> Result<Circuit> {
    match mechanism {
        KickMechanism::Direct => {
            Circuit::from_gates(n_qubits, n_modes, vec![GateOp::Displace { mode, alpha: kick_alpha(theta, phi) }])
        }
        KickMechanism::Ancilla { qubit } => {
            if qubit >= n_qubits {
                return Err(Error::MissingAncilla);
            }
            // RX(-π/2)|0⟩ = (|0⟩ + i|1⟩)/√2, the +1 eigenstate of σʸ.
            Circuit::from_gates(
                n_qubits,
                n_modes,
                vec![
                    GateOp::Rx { qubit, theta: -FRAC_PI_2 },
                    GateOp::Snp { qubit, mode, theta, phi },
                    GateOp::Rx { qubit, theta: FRAC_PI_2 },
                ],
            )
        }
    }
}

/// Residual `exp(-iθ_m a†_m a_m)` per mode left over after phase-frame compilation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFrame {
    pub residual: Vec<f64>,
}

impl PhaseFrame {
    /// Applies the residual phases, making the compiled circuit equal to the original.
    pub fn apply(&self, state: &mut HybridState) -> Result<()> {
        for (mode, &theta) in self.residual.iter().enumerate() {
            if theta != 0.0 {
                GateOp::ModePhase { mode, theta }.apply(state)?;
            }
        }
        Ok(())
    }
}

/// Streaming form of [`compile_mode_phases`]: feeds gates one at a time and
/// keeps the accumulated phase per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTracker {
    offset: Vec<f64>,
}

impl PhaseTracker {
    pub fn new(n_modes: usize) -> Self {
        PhaseTracker { offset: vec![0.0; n_modes] }
    }

    /// Absorbs ModePhase gates (returns `None`) and shifts the phase of kicks.
    pub fn rewrite(&mut self, gate: &GateOp) -> Option<GateOp> {
        Some(match *gate {
            GateOp::ModePhase { mode, theta } => {
                self.offset[mode] += theta;
                return None;
            }
            GateOp::Snp { qubit, mode, theta, phi } => GateOp::Snp { qubit, mode, theta, phi: phi - self.offset[mode] },
            GateOp::ZKick { qubit, mode, theta, phi } => {
                GateOp::ZKick { qubit, mode, theta, phi: phi - self.offset[mode] }
            }
            GateOp::Displace { mode, alpha } => {
                GateOp::Displace { mode, alpha: alpha * Complex64::from_polar(1.0, self.offset[mode]) }
            }
            other => other,
        })
    }

    pub fn frame(&self) -> PhaseFrame {
        PhaseFrame { residual: self.offset.clone() }
    }
}

/// Removes every ModePhase gate by shifting the phase of later kicks on the same
/// mode, using SNP(θ, φ) e^{-iϑa†a} = e^{-iϑa†a} SNP(θ, φ - ϑ). The accumulated
/// phase per mode is returned as a classical frame instead of a gate.
pub fn compile_mode_phases(circuit: &Circuit) -> (Circuit, PhaseFrame) {
    let mut tracker = PhaseTracker::new(circuit.n_modes);
    let mut out = Circuit::new(circuit.n_qubits, circuit.n_modes);
    for (g, m) in circuit.ops.iter().zip(&circuit.meta) {
        if let Some(shifted) = tracker.rewrite(g) {
            out.ops.push(shifted);
            out.meta.push(m.clone());
        }
    }
    (out, tracker.frame())
}

/// Rewrites logical gates (ZKick, CNOT) into the native set {R, MS, SNP, Displace, ModePhase}.
pub fn lower_to_native(circuit: &Circuit) -> Result<Circuit> {
    let mut out = Circuit::new(circuit.n_qubits, circuit.n_modes);
    for (g, m) in circuit.ops.iter().zip(&circuit.meta) {
        let sub = match *g {
            GateOp::ZKick { qubit, mode, theta, phi } => {
                conjugated_kick(qubit, mode, theta, phi, KickBasis::Z, circuit.n_qubits, circuit.n_modes)?
            }
            GateOp::Cnot { control, target } => cnot_decomposition(control, target, circuit.n_qubits, circuit.n_modes)?,
            other => Circuit::from_gates(circuit.n_qubits, circuit.n_modes, vec![other])?,
        };
        out.append(&sub, m.step, Some(&m.term))?;
    }
    Ok(out)
}

/// Conservative commutation test used by the compression passes.
pub fn commutes(a: &GateOp, b: &GateOp) -> bool {
    let qa = a.qubits();
    let qb = b.qubits();
    let shared_qubits: Vec<usize> = qa.iter().copied().filter(|q| qb.contains(q)).collect();
    let shared_mode = matches!((a.mode(), b.mode()), (Some(x), Some(y)) if x == y);
    if shared_qubits.is_empty() && !shared_mode {
        return true;
    }
    if shared_mode {
        // Diagonal mode phases commute with each other only.
        return matches!((a, b), (GateOp::ModePhase { .. }, GateOp::ModePhase { .. })) && shared_qubits.is_empty();
    }
    let z_like = |g: &GateOp| matches!(g, GateOp::Rz { .. } | GateOp::ZKick { .. });
    let x_like = |g: &GateOp| matches!(g, GateOp::Rx { .. });
    match (a, b) {
        (GateOp::Cnot { control: c1, target: t1 }, GateOp::Cnot { control: c2, target: t2 }) => {
            (c1 == c2 && t1 != t2) || (t1 == t2 && c1 != c2) || (c1 == c2 && t1 == t2)
        }
        (GateOp::Cnot { control, target }, other) | (other, GateOp::Cnot { control, target }) => {
            shared_qubits.iter().all(|q| (q == control && z_like(other)) || (q == target && x_like(other)))
        }
        _ => {
            let same_axis = |x: &GateOp, y: &GateOp| {
                std::mem::discriminant(x) == std::mem::discriminant(y)
                    && matches!(x, GateOp::Rx { .. } | GateOp::Ry { .. } | GateOp::Rz { .. })
            };
            same_axis(a, b) || (z_like(a) && z_like(b))
        }
    }
}

/// What the circuit output is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Measurement {
    /// Nothing is known about the measurement; keep everything.
    Full,
    /// Computational-basis measurement of all qubits.
    Spin,
    /// Fock-basis measurement of one mode.
    Mode(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressOptions {
    /// The circuit starts from |0…0⟩ on all qubits.
    pub initial_zero: bool,
    pub measurement: Measurement,
}

impl Default for CompressOptions {
    fn default() -> Self {
        CompressOptions { initial_zero: false, measurement: Measurement::Full }
    }
}

fn cancel_cnot_pairs(c: &Circuit) -> Option<Circuit> {
    for i in 0..c.ops.len() {
        if let GateOp::Cnot { .. } = c.ops[i] {
            for j in i + 1..c.ops.len() {
                if c.ops[j] == c.ops[i] {
                    let mut keep = vec![true; c.ops.len()];
                    keep[i] = false;
                    keep[j] = false;
                    return Some(c.retain_indices(&keep));
                }
                if !commutes(&c.ops[i], &c.ops[j]) {
                    break;
                }
            }
        }
    }
    None
}

fn merge_rotations(c: &Circuit) -> Option<Circuit> {
    for i in 0..c.ops.len() {
        let axis = std::mem::discriminant(&c.ops[i]);
        let (qi, ti) = match c.ops[i] {
            GateOp::Rx { qubit, theta } | GateOp::Ry { qubit, theta } | GateOp::Rz { qubit, theta } => (qubit, theta),
            _ => continue,
        };
        if ti == 0.0 {
            let mut keep = vec![true; c.ops.len()];
            keep[i] = false;
            return Some(c.retain_indices(&keep));
        }
        for j in i + 1..c.ops.len() {
            let g = c.ops[j];
            if std::mem::discriminant(&g) == axis && g.qubits() == [qi] {
                let tj = match g {
                    GateOp::Rx { theta, .. } | GateOp::Ry { theta, .. } | GateOp::Rz { theta, .. } => theta,
                    _ => unreachable!(),
                };
                let mut out = c.clone();
                let sum = ti + tj;
                let merged = match c.ops[i] {
                    GateOp::Rx { .. } => GateOp::Rx { qubit: qi, theta: sum },
                    GateOp::Ry { .. } => GateOp::Ry { qubit: qi, theta: sum },
                    _ => GateOp::Rz { qubit: qi, theta: sum },
                };
                out.ops[i] = merged;
                let mut keep = vec![true; c.ops.len()];
                keep[j] = false;
                return Some(out.retain_indices(&keep));
            }
            if !commutes(&c.ops[i], &g) {
                break;
            }
        }
    }
    None
}

fn drop_leading_cnots(c: &Circuit) -> Circuit {
    let mut keep = vec![true; c.ops.len()];
    for i in 0..c.ops.len() {
        if let GateOp::Cnot { control, .. } = c.ops[i] {
            // The control is still |0⟩ if every earlier gate preserved its σᶻ value.
            if c.ops[..i].iter().zip(&keep).filter(|(_, k)| **k).all(|(g, _)| g.preserves_z_of(control)) {
                keep[i] = false;
            }
        }
    }
    c.retain_indices(&keep)
}

fn invisible_to(g: &GateOp, m: Measurement) -> bool {
    match m {
        Measurement::Full => false,
        Measurement::Spin => matches!(
            g,
            GateOp::Rz { .. } | GateOp::ZKick { .. } | GateOp::ModePhase { .. } | GateOp::Displace { .. }
        ),
        Measurement::Mode(mode) => g.mode() != Some(mode) || matches!(g, GateOp::ModePhase { .. }),
    }
}

fn drop_trailing_invisible(c: &Circuit, m: Measurement) -> Circuit {
    let mut keep = vec![true; c.ops.len()];
    let mut kept_after: Vec<GateOp> = Vec::new();
    for i in (0..c.ops.len()).rev() {
        let g = c.ops[i];
        if invisible_to(&g, m) && kept_after.iter().all(|k| commutes(&g, k)) {
            keep[i] = false;
        } else {
            kept_after.push(g);
        }
    }
    c.retain_indices(&keep)
}

/// Gate-elision passes: CNOT pair cancellation through commuting gates,
/// rotation merging, removal of CNOTs acting on a known |0⟩ control, and
/// removal of trailing gates that cannot change the declared measurement.
pub fn compress(circuit: &Circuit, options: CompressOptions) -> Circuit {
    let mut c = circuit.clone();
    loop {
        if let Some(next) = cancel_cnot_pairs(&c) {
            c = next;
            continue;
        }
        if let Some(next) = merge_rotations(&c) {
            c = next;
            continue;
        }
        break;
    }
    if options.initial_zero {
        c = drop_leading_cnots(&c);
    }
    drop_trailing_invisible(&c, options.measurement)
}
