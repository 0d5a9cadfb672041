//! Dense statevectors over qubits ⊗ truncated Fock modes.
//!
//! Index layout: `index = s·M + (((n₀·(Λ₁+1) + n₁)·(Λ₂+1) + n₂)…)` where `s` is
//! the spin index (qubit 0 most significant) and `M = Π(Λ_m+1)`. Modes are
//! ascending, so the last mode is the contiguous innermost axis.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default cap on the number of amplitudes in a state or operator realization.
pub const DEFAULT_CAPACITY: usize = 4_000_000;

const DUMP_MAGIC: u32 = 0x5342_5948; // "HYBS" little-endian
const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    n_qubits: usize,
    cutoffs: Vec<usize>,
    mode_strides: Vec<usize>,
    mode_dim: usize,
}

impl Layout {
    pub fn new(n_qubits: usize, cutoffs: &[usize]) -> Result<Self> {
        Self::with_capacity(n_qubits, cutoffs, DEFAULT_CAPACITY)
    }

    pub fn with_capacity(n_qubits: usize, cutoffs: &[usize], limit: usize) -> Result<Self> {
        let mut requested: u128 = 1u128.checked_shl(n_qubits as u32).unwrap_or(u128::MAX);
        for &c in cutoffs {
            requested = requested.saturating_mul(c as u128 + 1);
        }
        if n_qubits >= 64 || requested > limit as u128 {
            return Err(Error::Capacity { requested, limit });
        }
        let mut mode_strides = vec![1usize; cutoffs.len()];
        for m in (0..cutoffs.len().saturating_sub(1)).rev() {
            mode_strides[m] = mode_strides[m + 1] * (cutoffs[m + 1] + 1);
        }
        let mode_dim = cutoffs.iter().map(|c| c + 1).product();
        Ok(Layout { n_qubits, cutoffs: cutoffs.to_vec(), mode_strides, mode_dim })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn spin_dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Π(Λ_m + 1)
    pub fn mode_dim(&self) -> usize {
        self.mode_dim
    }

    pub fn dim(&self) -> usize {
        self.spin_dim() * self.mode_dim
    }

    pub fn qubit_stride(&self, q: usize) -> usize {
        self.mode_dim << (self.n_qubits - 1 - q)
    }

    pub fn mode_stride(&self, m: usize) -> usize {
        self.mode_strides[m]
    }

    pub fn encode(&self, spin: usize, occupations: &[usize]) -> usize {
        debug_assert_eq!(occupations.len(), self.cutoffs.len());
        let mut idx = spin;
        for (n, c) in occupations.iter().zip(&self.cutoffs) {
            debug_assert!(n <= c);
            idx = idx * (c + 1) + n;
        }
        idx
    }

    pub fn decode(&self, index: usize) -> (usize, Vec<usize>) {
        let mut occ = vec![0; self.cutoffs.len()];
        let mut rest = index;
        for m in (0..self.cutoffs.len()).rev() {
            let base = self.cutoffs[m] + 1;
            occ[m] = rest % base;
            rest /= base;
        }
        (rest, occ)
    }

    pub fn spin_of(&self, index: usize) -> usize {
        index / self.mode_dim
    }

    pub fn occupation_of(&self, index: usize, m: usize) -> usize {
        (index / self.mode_strides[m]) % (self.cutoffs[m] + 1)
    }

    pub fn bit_of(&self, index: usize, q: usize) -> usize {
        (index / self.qubit_stride(q)) & 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    layout: Layout,
    amps: Vec<Complex64>,
}

impl HybridState {
    pub fn vacuum(n_qubits: usize, cutoffs: &[usize]) -> Result<Self> {
        let layout = Layout::new(n_qubits, cutoffs)?;
        Ok(Self::basis(layout, 0, &vec![0; cutoffs.len()]))
    }

    pub fn basis(layout: Layout, spin: usize, occupations: &[usize]) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); layout.dim()];
        amps[layout.encode(spin, occupations)] = Complex64::new(1.0, 0.0);
        HybridState { layout, amps }
    }

    /// Wraps an amplitude vector; the vector must be normalized to 1e-9.
    pub fn from_amplitudes(layout: Layout, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(Error::DimensionMismatch(format!(
                "layout has dimension {}, got {} amplitudes",
                layout.dim(),
                amps.len()
            )));
        }
        let state = HybridState { layout, amps };
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("state norm is {norm}, expected 1")));
        }
        Ok(state)
    }

    /// Tensor product of a spin vector (length 2^n) and one vector per mode.
    pub fn product(spin: &[Complex64], modes: &[Vec<Complex64>]) -> Result<Self> {
        let n_qubits = spin.len().trailing_zeros() as usize;
        if 1usize << n_qubits != spin.len() {
            return Err(Error::DimensionMismatch("spin vector length is not a power of two".into()));
        }
        let cutoffs: Vec<usize> = modes.iter().map(|m| m.len().saturating_sub(1)).collect();
        let layout = Layout::new(n_qubits, &cutoffs)?;
        let mut amps = Vec::with_capacity(layout.dim());
        for i in 0..layout.dim() {
            let (s, occ) = layout.decode(i);
            let mut a = spin[s];
            for (m, &n) in occ.iter().enumerate() {
                a *= modes[m][n];
            }
            amps.push(a);
        }
        HybridState::from_amplitudes(layout, amps)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn n_qubits(&self) -> usize {
        self.layout.n_qubits
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.layout.cutoffs
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub(crate) fn replace_amplitudes(&mut self, amps: Vec<Complex64>) {
        debug_assert_eq!(amps.len(), self.amps.len());
        self.amps = amps;
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &HybridState) -> Complex64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// |⟨self|other⟩|²
    pub fn fidelity(&self, other: &HybridState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// P_s summed over all Fock occupations.
    pub fn spin_marginal(&self) -> Vec<f64> {
        let m = self.layout.mode_dim;
        self.amps
            .chunks(m)
            .map(|block| block.iter().map(|a| a.norm_sqr()).sum())
            .collect()
    }

    /// Marginal over a subset of qubits; the first listed qubit is the most
    /// significant bit of the returned index.
    pub fn spin_marginal_of(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        for &q in qubits {
            if q >= self.n_qubits() {
                return Err(Error::IndexOutOfRange { index: q, limit: self.n_qubits() });
            }
        }
        let full = self.spin_marginal();
        let mut out = vec![0.0; 1 << qubits.len()];
        let n = self.n_qubits();
        for (s, p) in full.into_iter().enumerate() {
            let key = qubits.iter().fold(0, |acc, &q| (acc << 1) | ((s >> (n - 1 - q)) & 1));
            out[key] += p;
        }
        Ok(out)
    }

    /// P_{N_m}(n) summed over the spin and all other modes.
    pub fn mode_marginal(&self, m: usize) -> Result<Vec<f64>> {
        if m >= self.layout.n_modes() {
            return Err(Error::IndexOutOfRange { index: m, limit: self.layout.n_modes() });
        }
        let stride = self.layout.mode_strides[m];
        let base = self.layout.cutoffs[m] + 1;
        let mut out = vec![0.0; base];
        for (i, a) in self.amps.iter().enumerate() {
            out[(i / stride) % base] += a.norm_sqr();
        }
        Ok(out)
    }

    /// ⟨a†_m a_m⟩
    pub fn mean_occupation(&self, m: usize) -> Result<f64> {
        Ok(self.mode_marginal(m)?.iter().enumerate().map(|(n, p)| n as f64 * p).sum())
    }

    /// Probability of the top retained Fock level of every mode.
    pub fn leakage(&self) -> Vec<f64> {
        (0..self.layout.n_modes())
            .map(|m| *self.mode_marginal(m).expect("mode in range").last().unwrap())
            .collect()
    }

    /// Modes whose top-level population exceeds `threshold`.
    pub fn leakage_warnings(&self, threshold: f64) -> Vec<(usize, f64)> {
        self.leakage().into_iter().enumerate().filter(|&(_, p)| p > threshold).collect()
    }

    /// Little-endian dump: 16-byte header (magic, version, n_qubits, mode count),
    /// one u32 per cutoff, then interleaved (re, im) f64 pairs.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&DUMP_MAGIC.to_le_bytes())?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_qubits() as u32).to_le_bytes())?;
        w.write_all(&(self.layout.n_modes() as u32).to_le_bytes())?;
        for &c in self.cutoffs() {
            w.write_all(&(c as u32).to_le_bytes())?;
        }
        for a in &self.amps {
            w.write_all(&a.re.to_le_bytes())?;
            w.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word))
        };
        let bad = |m: &str| Error::Parse { line: 0, message: m.to_string() };
        if read_u32(&mut r)? != DUMP_MAGIC {
            return Err(bad("not a state dump (bad magic)"));
        }
        if read_u32(&mut r)? != DUMP_VERSION {
            return Err(bad("unsupported dump version"));
        }
        let n_qubits = read_u32(&mut r)? as usize;
        let n_modes = read_u32(&mut r)? as usize;
        let cutoffs = (0..n_modes).map(|_| read_u32(&mut r).map(|c| c as usize)).collect::<Result<Vec<_>>>()?;
        let layout = Layout::new(n_qubits, &cutoffs)?;
        let mut amps = Vec::with_capacity(layout.dim());
        let mut buf = [0u8; 16];
        for _ in 0..layout.dim() {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
            amps.push(Complex64::new(re, im));
        }
        Ok(HybridState { layout, amps })
    }
}
