//! Time evolution: gate-by-gate Trotter execution and exact propagation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gates::{lower_to_native, GateOp, PhaseTracker};
use crate::model::ModelParams;
use crate::operator::{build_hamiltonian, project_to_sector, realize_matrix, SectorMap};
use crate::sparse::CsrMatrix;
use crate::state::HybridState;
use crate::trotter::TrotterPlan;

/// Largest dimension propagated by full diagonalization under `Method::Auto`.
pub const DENSE_LIMIT: usize = 300;
pub const PROPAGATION_TOLERANCE: f64 = 1e-10;
pub const NORM_TOLERANCE: f64 = 1e-9;
pub const LEAKAGE_WARNING: f64 = 1e-3;
const KRYLOV_MAX_DIM: usize = 60;
const MAX_HALVINGS: usize = 40;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub state: HybridState,
}

impl Snapshot {
    pub fn leakage(&self) -> Vec<f64> {
        self.state.leakage()
    }

    /// Modes whose top Fock level holds more than `threshold`.
    pub fn leakage_warnings(&self, threshold: f64) -> Vec<(usize, f64)> {
        self.state.leakage_warnings(threshold)
    }
}

fn check_norm(state: &HybridState) -> Result<()> {
    let dev = (state.norm() - 1.0).abs();
    if dev > NORM_TOLERANCE {
        return Err(Error::NonConvergence { residual: dev });
    }
    Ok(())
}

/// Runs the plan gate by gate, recording the state after the listed steps
/// (all steps `0..=plan.steps` when `record` is `None`). With phase
/// compilation on, recorded states have the classical frame applied so they
/// equal the uncompiled evolution.
pub fn run_trotter(plan: &TrotterPlan, initial: &HybridState, record: Option<&[usize]>) -> Result<Vec<Snapshot>> {
    if initial.n_qubits() != plan.n_qubits() || initial.layout().n_modes() != plan.n_modes {
        return Err(Error::DimensionMismatch(format!(
            "plan register is {} qubits and {} modes, state has {} and {}",
            plan.n_qubits(),
            plan.n_modes,
            initial.n_qubits(),
            initial.layout().n_modes()
        )));
    }
    let wanted: Vec<usize> = match record {
        Some(r) => r.to_vec(),
        None => (0..=plan.steps).collect(),
    };
    if let Some(&bad) = wanted.iter().find(|&&s| s > plan.steps) {
        return Err(Error::IndexOutOfRange { index: bad, limit: plan.steps + 1 });
    }
    let mut tracker = PhaseTracker::new(plan.n_modes);
    let mut state = initial.clone();
    let mut out = Vec::new();
    let snap = |state: &HybridState, tracker: &PhaseTracker, step: usize| -> Result<Snapshot> {
        let mut s = state.clone();
        tracker.frame().apply(&mut s)?;
        check_norm(&s)?;
        Ok(Snapshot { step, time: step as f64 * plan.dt, state: s })
    };
    if wanted.contains(&0) {
        out.push(snap(&state, &tracker, 0)?);
    }
    let mut step_gates = plan.step_circuit(0)?;
    if plan.options.native {
        step_gates = lower_to_native(&step_gates)?;
    }
    for step in 1..=plan.steps {
        for g in step_gates.ops() {
            let gate: Option<GateOp> = if plan.options.compile_phases { tracker.rewrite(g) } else { Some(*g) };
            if let Some(gate) = gate {
                gate.apply(&mut state)?;
            }
        }
        if wanted.contains(&step) {
            out.push(snap(&state, &tracker, step)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    /// Dense below [`DENSE_LIMIT`], Krylov above.
    Auto,
    Dense,
    Krylov,
}

enum Engine {
    Dense { values: DVector<f64>, vectors: DMatrix<Complex64> },
    Krylov,
}

/// Exact propagator `exp(-iHt)` for a fixed Hermitian matrix.
pub struct ExactEvolver {
    h: CsrMatrix,
    engine: Engine,
    tolerance: f64,
}

impl ExactEvolver {
    pub fn new(h: CsrMatrix) -> Result<Self> {
        Self::with_method(h, Method::Auto)
    }

    pub fn with_method(h: CsrMatrix, method: Method) -> Result<Self> {
        let defect = h.hermiticity_defect();
        if defect > 1e-10 {
            return Err(Error::InvalidParams(format!("Hamiltonian is not Hermitian (defect {defect:.3e})")));
        }
        let dense = match method {
            Method::Auto => h.dim() <= DENSE_LIMIT,
            Method::Dense => true,
            Method::Krylov => false,
        };
        let engine = if dense {
            let eig = h.to_dense().symmetric_eigen();
            Engine::Dense { values: eig.eigenvalues, vectors: eig.eigenvectors }
        } else {
            Engine::Krylov
        };
        Ok(ExactEvolver { h, engine, tolerance: PROPAGATION_TOLERANCE })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn hamiltonian(&self) -> &CsrMatrix {
        &self.h
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.engine, Engine::Dense { .. })
    }

    /// exp(-iHt)|ψ⟩
    pub fn evolve(&self, state: &HybridState, t: f64) -> Result<HybridState> {
        if state.dim() != self.h.dim() {
            return Err(Error::DimensionMismatch(format!("state dim {} vs Hamiltonian dim {}", state.dim(), self.h.dim())));
        }
        if t == 0.0 {
            return Ok(state.clone());
        }
        let amps = match &self.engine {
            Engine::Dense { values, vectors } => {
                let psi = DVector::from_column_slice(state.amplitudes());
                let mut c = vectors.ad_mul(&psi);
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck *= Complex64::from_polar(1.0, -values[k] * t);
                }
                (vectors * c).as_slice().to_vec()
            }
            Engine::Krylov => krylov_propagate(&self.h, state.amplitudes(), t, self.tolerance)?,
        };
        let mut out = state.clone();
        out.replace_amplitudes(amps);
        let dev = (out.norm() - state.norm()).abs();
        if dev > NORM_TOLERANCE {
            return Err(Error::NonConvergence { residual: dev });
        }
        Ok(out)
    }

    /// States at each of the ascending `times`, propagating from the previous time.
    pub fn series(&self, initial: &HybridState, times: &[f64]) -> Result<Vec<HybridState>> {
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParams("evolution times must be ascending".into()));
        }
        if self.is_dense() {
            return times.par_iter().map(|&t| self.evolve(initial, t)).collect();
        }
        let mut out = Vec::with_capacity(times.len());
        let (mut cur, mut t0) = (initial.clone(), 0.0);
        for &t in times {
            cur = self.evolve(&cur, t - t0)?;
            t0 = t;
            out.push(cur.clone());
        }
        Ok(out)
    }
}

/// One-shot exact propagation.
pub fn evolve_exact(h: &CsrMatrix, initial: &HybridState, t: f64) -> Result<HybridState> {
    ExactEvolver::new(h.clone())?.evolve(initial, t)
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// One Lanczos step of length `tau`; returns the propagated vector and the
/// a-posteriori error estimate.
fn lanczos_step(h: &CsrMatrix, v: &[Complex64], tau: f64) -> (Vec<Complex64>, f64) {
    let beta0 = norm(v);
    let n = v.len();
    let mut basis: Vec<Vec<Complex64>> = vec![v.iter().map(|x| x / beta0).collect()];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![ZERO; n];
    let m_cap = KRYLOV_MAX_DIM.min(n);
    let mut tail = 0.0;
    for j in 0..m_cap {
        h.matvec_into(&basis[j], &mut w);
        let a = dot(&basis[j], &w).re;
        alpha.push(a);
        // Full reorthogonalization (twice for stability).
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let b = norm(&w);
        if b < 1e-13 * (1.0 + a.abs()) || j + 1 == m_cap {
            tail = if j + 1 == m_cap { b } else { 0.0 };
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        t[(k, k)] = alpha[k];
        if k + 1 < m {
            t[(k, k + 1)] = beta[k];
            t[(k + 1, k)] = beta[k];
        }
    }
    let eig = t.symmetric_eigen();
    // y = exp(-iTτ) e₁
    let mut y = vec![ZERO; m];
    for k in 0..m {
        let w0 = eig.eigenvectors[(0, k)];
        let ph = Complex64::from_polar(w0, -eig.eigenvalues[k] * tau);
        for (r, yr) in y.iter_mut().enumerate() {
            *yr += ph * eig.eigenvectors[(r, k)];
        }
    }
    let err = beta0 * tail * y[m - 1].norm();
    let mut out = vec![ZERO; n];
    for (q, yk) in basis.iter().zip(&y) {
        let c = yk * beta0;
        for (o, qi) in out.iter_mut().zip(q) {
            *o += c * qi;
        }
    }
    (out, err)
}

/// exp(-iHt)v by adaptive Lanczos steps with a total error budget `tol`.
pub fn krylov_propagate(h: &CsrMatrix, v: &[Complex64], t: f64, tol: f64) -> Result<Vec<Complex64>> {
    if norm(v) == 0.0 || t == 0.0 {
        return Ok(v.to_vec());
    }
    let total = t.abs();
    let sign = t.signum();
    let mut cur = v.to_vec();
    let mut done = 0.0;
    let bound = h.norm_bound().max(1e-12);
    // Start from a step the subspace can plausibly resolve.
    let mut tau = total.min(KRYLOV_MAX_DIM as f64 / (2.0 * bound));
    let mut halvings = 0;
    while done < total {
        let step = tau.min(total - done);
        let budget = tol * step / total;
        let (next, err) = lanczos_step(h, &cur, sign * step);
        if err <= budget {
            cur = next;
            done += step;
            halvings = 0;
            if err < budget * 1e-3 {
                tau *= 2.0;
            }
        } else {
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::NonConvergence { residual: err });
            }
            tau = step / 2.0;
        }
    }
    Ok(cur)
}

/// ⟨ψ|H|ψ⟩, required to be real.
pub fn energy_expectation(h: &CsrMatrix, state: &HybridState) -> Result<f64> {
    if state.dim() != h.dim() {
        return Err(Error::DimensionMismatch(format!("state dim {} vs Hamiltonian dim {}", state.dim(), h.dim())));
    }
    let e = h.expectation(state.amplitudes());
    if e.im.abs() > 1e-10 * (1.0 + e.re.abs()) {
        return Err(Error::NonConvergence { residual: e.im.abs() });
    }
    Ok(e.re)
}

/// Reduced Hamiltonian of the configured sector as a sparse matrix.
pub fn reduced_matrix(params: &ModelParams, cutoffs: &[usize]) -> Result<CsrMatrix> {
    let map = SectorMap::descending(params)?;
    let h = project_to_sector(&build_hamiltonian(params)?, &map)?;
    realize_matrix(&h, cutoffs)
}

#[derive(Debug, Clone, Serialize)]
pub struct CutoffRow {
    pub cutoff: usize,
    pub mean_occupation: Vec<f64>,
    pub leakage: Vec<f64>,
    /// Max over modes of |n̄(Λ) - n̄(Λ_prev)| / n̄(Λ); absent for the first row.
    pub max_relative_deviation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CutoffSweep {
    pub time: f64,
    pub rows: Vec<CutoffRow>,
}

impl CutoffSweep {
    pub fn max_relative_deviation(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.max_relative_deviation).reduce(f64::max)
    }
}

fn relative_deviation(new: &[f64], old: &[f64]) -> f64 {
    new.iter()
        .zip(old)
        .map(|(a, b)| {
            let d = (a - b).abs();
            if d == 0.0 {
                0.0
            } else {
                d / a.abs().max(b.abs())
            }
        })
        .fold(0.0, f64::max)
}

/// Mean occupations at time `t` after exact evolution from the sector vacuum,
/// for each uniform cutoff in `cutoffs`.
pub fn cutoff_sweep(params: &ModelParams, cutoffs: &[usize], t: f64) -> Result<CutoffSweep> {
    if cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("cutoff list must be strictly ascending".into()));
    }
    let map = SectorMap::descending(params)?;
    let rows: Vec<(usize, Vec<f64>, Vec<f64>)> = cutoffs
        .par_iter()
        .map(|&cutoff| {
            let cuts = vec![cutoff; params.n_sites];
            let h = reduced_matrix(params, &cuts)?;
            let vac = HybridState::vacuum(map.n_reduced(), &cuts)?;
            let st = ExactEvolver::new(h)?.evolve(&vac, t)?;
            let occ = (0..params.n_sites).map(|m| st.mean_occupation(m)).collect::<Result<Vec<_>>>()?;
            Ok((cutoff, occ, st.leakage()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<CutoffRow> = Vec::new();
    for (cutoff, occ, leak) in rows {
        let dev = out.last().map(|prev| relative_deviation(&occ, &prev.mean_occupation));
        out.push(CutoffRow { cutoff, mean_occupation: occ, leakage: leak, max_relative_deviation: dev });
    }
    Ok(CutoffSweep { time: t, rows: out })
}

/// Formats with 12 significant digits.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{:.11e}", x);
    // Plain notation when it is not longer.
    let plain: f64 = s.parse().unwrap_or(x);
    let mag = x.abs().log10().floor() as i32;
    if (-4..12).contains(&mag) {
        let decimals = (11 - mag).max(0) as usize;
        let p = format!("{:.*}", decimals, plain);
        let p = if p.contains('.') { p.trim_end_matches('0').trim_end_matches('.').to_string() } else { p };
        return p;
    }
    s
}

/// Writes `t,<columns>` followed by one row per entry.
pub fn write_csv<W: Write>(mut w: W, columns: &[String], rows: &[(f64, Vec<f64>)]) -> Result<()> {
    write!(w, "t")?;
    for c in columns {
        write!(w, ",{c}")?;
    }
    writeln!(w)?;
    for (t, vals) in rows {
        if vals.len() != columns.len() {
            return Err(Error::DimensionMismatch(format!("{} values for {} columns", vals.len(), columns.len())));
        }
        write!(w, "{}", format_sig(*t))?;
        for v in vals {
            write!(w, ",{}", format_sig(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}
