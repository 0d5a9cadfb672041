//! Lattice and coupling parameters, free-boson mode energies and the
//! staggered-charge bookkeeping of spin basis states.
//!
//! Spin basis states are written with qubit 0 as the leftmost character,
//! e.g. `|1110⟩` has qubits 0..=2 in `|1⟩` and qubit 3 in `|0⟩`. The integer
//! index of a basis state treats qubit 0 as the most significant bit, so
//! lexicographic order of the strings equals numeric order of the indices.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of one lattice Yukawa instance plus the Trotter schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_sites: usize,
    pub lattice_spacing: f64,
    pub fermion_mass: f64,
    pub boson_mass: f64,
    pub coupling: f64,
    pub charge_sector: i64,
    /// Per-mode Fock cutoffs; mode `m` keeps occupations `0..=cutoffs[m]`.
    pub cutoffs: Vec<usize>,
    pub trotter_dt: f64,
    pub trotter_steps: usize,
}

/// One free-boson momentum mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeSpec {
    pub index: usize,
    pub energy: f64,
    pub momentum: f64,
}

impl ModelParams {
    /// Two sites in the neutral sector: b=1, m_ψ=1, m_φ=1.5, g=4, twelve steps of 0.5.
    pub fn n2_reference() -> Self {
        ModelParams {
            n_sites: 2,
            lattice_spacing: 1.0,
            fermion_mass: 1.0,
            boson_mass: 1.5,
            coupling: 4.0,
            charge_sector: 0,
            cutoffs: vec![15; 2],
            trotter_dt: 0.5,
            trotter_steps: 12,
        }
    }

    /// Four sites in the Q=-1 sector: b=1, m_ψ=1, m_φ=1, five unit steps.
    pub fn n4_reference(coupling: f64) -> Self {
        ModelParams {
            n_sites: 4,
            lattice_spacing: 1.0,
            fermion_mass: 1.0,
            boson_mass: 1.0,
            coupling,
            charge_sector: -1,
            cutoffs: vec![8; 4],
            trotter_dt: 1.0,
            trotter_steps: 5,
        }
    }

    pub fn with_uniform_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoffs = vec![cutoff; self.n_sites];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.n_sites == 0 || self.n_sites % 2 != 0 {
            return bad(format!("n_sites must be a positive even integer, got {}", self.n_sites));
        }
        if self.n_sites > 30 {
            return bad(format!("n_sites = {} is too large for a dense spin register", self.n_sites));
        }
        if !(self.lattice_spacing > 0.0) || !self.lattice_spacing.is_finite() {
            return bad(format!("lattice_spacing must be > 0, got {}", self.lattice_spacing));
        }
        if !self.fermion_mass.is_finite() {
            return bad("fermion_mass must be finite".into());
        }
        if !(self.boson_mass >= 0.0) || !self.boson_mass.is_finite() {
            return bad(format!("boson_mass must be >= 0, got {}", self.boson_mass));
        }
        if !(self.coupling >= 0.0) || !self.coupling.is_finite() {
            return bad(format!("coupling must be >= 0, got {}", self.coupling));
        }
        let half = (self.n_sites / 2) as i64;
        if self.charge_sector.abs() > half {
            return bad(format!("|charge_sector| must be <= {half}, got {}", self.charge_sector));
        }
        if self.cutoffs.len() != self.n_sites {
            return bad(format!(
                "expected {} cutoffs, got {}",
                self.n_sites,
                self.cutoffs.len()
            ));
        }
        if !(self.trotter_dt > 0.0) || !self.trotter_dt.is_finite() {
            return bad(format!("trotter_dt must be > 0, got {}", self.trotter_dt));
        }
        if self.trotter_steps == 0 {
            return bad("trotter_steps must be positive".into());
        }
        // A massless zero-momentum mode has zero energy and an infinite coupling.
        if self.coupling > 0.0 && self.boson_mass == 0.0 {
            return bad("coupling > 0 needs boson_mass > 0 (the zero mode would have zero energy)".into());
        }
        Ok(())
    }

    /// Boundary sign of the periodic hopping term, (-1)^(Q+1).
    pub fn boundary_sign(&self) -> f64 {
        if (self.charge_sector + 1).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn total_time(&self) -> f64 {
        self.trotter_dt * self.trotter_steps as f64
    }

    pub fn modes(&self) -> Result<Vec<ModeSpec>> {
        (0..self.n_sites)
            .map(|m| {
                Ok(ModeSpec {
                    index: m,
                    energy: mode_energy(self, m)?,
                    momentum: mode_momentum(self, m),
                })
            })
            .collect()
    }

    /// Parse the `key=value` configuration format. Unknown keys are rejected.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut p = ModelParams {
            n_sites: 2,
            lattice_spacing: 1.0,
            fermion_mass: 1.0,
            boson_mass: 1.0,
            coupling: 0.0,
            charge_sector: 0,
            cutoffs: Vec::new(),
            trotter_dt: 0.5,
            trotter_steps: 1,
        };
        let mut uniform: Option<usize> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let line_no = lineno + 1;
            let err = |message: String| Error::Parse { line: line_no, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: FromStr>(v: &str, key: &str, line: usize) -> Result<T> {
                v.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid value `{v}` for `{key}`"),
                })
            }
            match key {
                "n_sites" => p.n_sites = num(value, key, line_no)?,
                "lattice_spacing" => p.lattice_spacing = num(value, key, line_no)?,
                "fermion_mass" => p.fermion_mass = num(value, key, line_no)?,
                "boson_mass" => p.boson_mass = num(value, key, line_no)?,
                "coupling" => p.coupling = num(value, key, line_no)?,
                "charge_sector" => p.charge_sector = num(value, key, line_no)?,
                "cutoff" => uniform = Some(num(value, key, line_no)?),
                "cutoffs" => {
                    p.cutoffs = value
                        .split(',')
                        .map(|v| num(v.trim(), key, line_no))
                        .collect::<Result<_>>()?
                }
                "trotter_dt" => p.trotter_dt = num(value, key, line_no)?,
                "trotter_steps" => p.trotter_steps = num(value, key, line_no)?,
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        if let Some(c) = uniform {
            if !p.cutoffs.is_empty() {
                return Err(Error::InvalidParams("give either `cutoff` or `cutoffs`, not both".into()));
            }
            p.cutoffs = vec![c; p.n_sites];
        }
        if p.cutoffs.is_empty() {
            return Err(Error::InvalidParams("missing `cutoff` or `cutoffs`".into()));
        }
        p.validate()?;
        Ok(p)
    }

    pub fn to_config_string(&self) -> String {
        let cutoffs: Vec<String> = self.cutoffs.iter().map(|c| c.to_string()).collect();
        format!(
            "n_sites={}\nlattice_spacing={}\nfermion_mass={}\nboson_mass={}\ncoupling={}\n\
             charge_sector={}\ncutoffs={}\ntrotter_dt={}\ntrotter_steps={}\n",
            self.n_sites,
            self.lattice_spacing,
            self.fermion_mass,
            self.boson_mass,
            self.coupling,
            self.charge_sector,
            cutoffs.join(","),
            self.trotter_dt,
            self.trotter_steps
        )
    }
}

fn mode_momentum(params: &ModelParams, m: usize) -> f64 {
    let n = params.n_sites as f64;
    2.0 * PI / (n * params.lattice_spacing) * (m as f64 - n / 2.0)
}

/// Free-boson energy of mode `m` with the continuum dispersion, momentum
/// measured from the zone centre at `m = N/2`.
pub fn mode_energy(params: &ModelParams, m: usize) -> Result<f64> {
    if m >= params.n_sites {
        return Err(Error::IndexOutOfRange { index: m, limit: params.n_sites });
    }
    let p = mode_momentum(params, m);
    Ok((p * p + params.boson_mass * params.boson_mass).sqrt())
}

/// A computational basis state of `n` qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState {
    index: usize,
    n: usize,
}

impl BasisState {
    pub fn new(index: usize, n: usize) -> Result<Self> {
        if n < usize::BITS as usize && index >= 1 << n {
            return Err(Error::IndexOutOfRange { index, limit: 1 << n });
        }
        Ok(BasisState { index, n })
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut index = 0usize;
        for &b in bits {
            if b > 1 {
                return Err(Error::InvalidParams(format!("bit value {b} is not 0 or 1")));
            }
            index = (index << 1) | b as usize;
        }
        Ok(BasisState { index, n: bits.len() })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    /// Bit of qubit `q` (qubit 0 is the most significant bit).
    pub fn bit(&self, q: usize) -> u8 {
        ((self.index >> (self.n - 1 - q)) & 1) as u8
    }

    /// Eigenvalue of σᶻ on qubit `q`: +1 for `|0⟩`, -1 for `|1⟩`.
    pub fn z(&self, q: usize) -> i64 {
        1 - 2 * self.bit(q) as i64
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n {
            write!(f, "{}", self.bit(q))?;
        }
        Ok(())
    }
}

impl FromStr for BasisState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('|').trim_end_matches('⟩').trim_end_matches('>');
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(Error::InvalidParams(format!("invalid bit `{other}` in basis state"))),
            })
            .collect::<Result<Vec<_>>>()?;
        BasisState::from_bits(&bits)
    }
}

/// Staggered charge of a spin basis state. Each even site holding `|1⟩`
/// carries -1, each odd site holding `|0⟩` carries +1.
pub fn staggered_charge(state: BasisState) -> i64 {
    (0..state.n_qubits())
        .map(|j| {
            let parity = if j % 2 == 0 { -1 } else { 1 };
            (parity + state.z(j)) / 2
        })
        .sum()
}

/// All `N`-qubit basis states with staggered charge `Q`, in lexicographic order.
pub fn sector_basis(params: &ModelParams) -> Result<Vec<BasisState>> {
    params.validate()?;
    sector_states(params.n_sites, params.charge_sector)
}

pub(crate) fn sector_states(n_sites: usize, charge: i64) -> Result<Vec<BasisState>> {
    let states: Vec<BasisState> = (0..1usize << n_sites)
        .map(|i| BasisState { index: i, n: n_sites })
        .filter(|s| staggered_charge(*s) == charge)
        .collect();
    if states.is_empty() {
        return Err(Error::EmptySector { n_sites, charge });
    }
    Ok(states)
}
