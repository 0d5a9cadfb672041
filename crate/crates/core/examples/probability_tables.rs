//! Spin and Fock probability tables written as CSV.
use spinphonon::evolution::{reduced_matrix, ExactEvolver};
use spinphonon::observables::{probability_series, spin_legend, Target};
use spinphonon::{HybridState, ModelParams, Result, SectorMap};

fn main() -> Result<()> {
    let params = ModelParams::n4_reference(2.0).with_uniform_cutoff(4);
    let map = SectorMap::descending(&params)?;
    let vac = HybridState::vacuum(map.n_reduced(), &params.cutoffs)?;
    let times: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
    let states = ExactEvolver::new(reduced_matrix(&params, &params.cutoffs)?)?.series(&vac, &times)?;
    for (r, p) in spin_legend(&map) {
        println!("# s{r} = |{p}>");
    }
    let mut out = std::io::stdout().lock();
    probability_series(&times, &states, Target::Spin)?.write_csv(&mut out)?;
    probability_series(&times, &states, Target::Mode(2))?.write_csv(&mut out)?;
    Ok(())
}
