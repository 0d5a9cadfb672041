//! Measured quantities: spin and Fock probability tables, occupations, and the
//! charge content of unreduced states.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{write_csv, Snapshot};
use crate::model::{staggered_charge, BasisState};
use crate::operator::SectorMap;
use crate::state::HybridState;

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Target {
    /// All qubits of the register.
    Spin,
    /// A subset of qubits, e.g. the system qubits when an ancilla is present.
    Qubits(Vec<usize>),
    Mode(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityTable {
    pub target: Target,
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

fn spin_labels(n: usize) -> Vec<String> {
    (0..1usize << n)
        .map(|s| BasisState::new(s, n).map(|b| b.to_string().trim_matches(['|', '⟩']).to_string()).unwrap())
        .collect()
}

/// Probability of each basis label at each time; every row sums to one.
pub fn probability_series(times: &[f64], states: &[HybridState], target: Target) -> Result<ProbabilityTable> {
    if times.len() != states.len() {
        return Err(Error::DimensionMismatch(format!("{} times for {} states", times.len(), states.len())));
    }
    let first = match states.first() {
        Some(s) => s,
        None => return Ok(ProbabilityTable { target, labels: vec![], times: vec![], rows: vec![] }),
    };
    if states.iter().any(|s| s.layout() != first.layout()) {
        return Err(Error::DimensionMismatch("snapshots have different registers".into()));
    }
    let labels = match &target {
        Target::Spin => spin_labels(first.n_qubits()),
        Target::Qubits(q) => spin_labels(q.len()),
        Target::Mode(m) => {
            let cutoff = *first.cutoffs().get(*m).ok_or(Error::IndexOutOfRange { index: *m, limit: first.cutoffs().len() })?;
            (0..=cutoff).map(|n| n.to_string()).collect()
        }
    };
    let mut rows = Vec::with_capacity(states.len());
    for s in states {
        let row = match &target {
            Target::Spin => s.spin_marginal(),
            Target::Qubits(q) => s.spin_marginal_of(q)?,
            Target::Mode(m) => s.mode_marginal(*m)?,
        };
        let dev = (row.iter().sum::<f64>() - 1.0).abs();
        if dev > ROW_TOLERANCE {
            return Err(Error::NonConvergence { residual: dev });
        }
        rows.push(row);
    }
    Ok(ProbabilityTable { target, labels, times: times.to_vec(), rows })
}

pub fn table_from_snapshots(snapshots: &[Snapshot], target: Target) -> Result<ProbabilityTable> {
    let times: Vec<f64> = snapshots.iter().map(|s| s.time).collect();
    let states: Vec<HybridState> = snapshots.iter().map(|s| s.state.clone()).collect();
    probability_series(&times, &states, target)
}

impl ProbabilityTable {
    pub fn column(&self, label: &str) -> Option<Vec<f64>> {
        let k = self.labels.iter().position(|l| l == label)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Largest entrywise difference to a table with the same shape.
    pub fn max_deviation(&self, other: &ProbabilityTable) -> Result<f64> {
        if self.labels != other.labels || self.rows.len() != other.rows.len() {
            return Err(Error::DimensionMismatch("probability tables differ in shape".into()));
        }
        Ok(self
            .rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let rows: Vec<(f64, Vec<f64>)> = self.times.iter().copied().zip(self.rows.iter().cloned()).collect();
        let prefix = match self.target {
            Target::Mode(_) => "n",
            _ => "s",
        };
        let cols: Vec<String> = self.labels.iter().map(|l| format!("{prefix}{l}")).collect();
        write_csv(w, &cols, &rows)
    }
}

/// Reduced label → physical occupation string for the sector map.
pub fn spin_legend(map: &SectorMap) -> Vec<(String, String)> {
    map.pairs()
        .map(|(physical, reduced)| {
            let r = reduced.to_string().trim_matches(['|', '⟩']).to_string();
            let p = physical.to_string().trim_matches(['|', '⟩']).to_string();
            (r, p)
        })
        .collect()
}

pub fn mean_occupation_series(states: &[HybridState], mode: usize) -> Result<Vec<f64>> {
    states.iter().map(|s| s.mean_occupation(mode)).collect()
}

/// Probability weight of a full-register state on spin configurations whose
/// staggered charge differs from `charge`.
pub fn weight_outside_sector(state: &HybridState, charge: i64) -> Result<f64> {
    let n = state.n_qubits();
    let p = state.spin_marginal();
    let mut out = 0.0;
    for (s, ps) in p.iter().enumerate() {
        if staggered_charge(BasisState::new(s, n)?) != charge {
            out += ps;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::state::Layout;

    #[test]
    fn vacuum_rows() {
        let st = HybridState::vacuum(2, &[3, 2]).unwrap();
        let t = probability_series(&[0.0], &[st.clone()], Target::Spin).unwrap();
        assert_eq!(t.labels, ["00", "01", "10", "11"]);
        assert_eq!(t.rows[0], [1.0, 0.0, 0.0, 0.0]);
        let m = probability_series(&[0.0], &[st], Target::Mode(1)).unwrap();
        assert_eq!(m.labels, ["0", "1", "2"]);
        assert_eq!(m.column("0").unwrap(), [1.0]);
    }

    #[test]
    fn legend_for_four_sites() {
        let legend = spin_legend(&SectorMap::descending(&ModelParams::n4_reference(2.0)).unwrap());
        assert_eq!(legend[0], ("00".to_string(), "1110".to_string()));
        assert_eq!(legend[3], ("11".to_string(), "0111".to_string()));
    }

    #[test]
    fn sector_weight() {
        let layout = Layout::new(2, &[1]).unwrap();
        // |10⟩ has charge 0, |00⟩ charge +1.
        let neutral = HybridState::basis(layout.clone(), 0b10, &[0]);
        assert_eq!(weight_outside_sector(&neutral, 0).unwrap(), 0.0);
        let charged = HybridState::basis(layout, 0b00, &[0]);
        assert_eq!(weight_outside_sector(&charged, 0).unwrap(), 1.0);
    }
}
