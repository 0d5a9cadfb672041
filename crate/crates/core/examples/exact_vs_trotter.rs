//! Two-site quench: Trotter circuit against continuous evolution.
use spinphonon::evolution::{reduced_matrix, run_trotter, ExactEvolver};
use spinphonon::trotter::{plan_n2, PlanOptions};
use spinphonon::{ModelParams, Result};

fn main() -> Result<()> {
    let params = ModelParams::n2_reference().with_uniform_cutoff(12);
    let plan = plan_n2(&params, PlanOptions::default())?;
    let vac = plan.vacuum(&params.cutoffs)?;
    let snaps = run_trotter(&plan, &vac, None)?;
    let exact = ExactEvolver::new(reduced_matrix(&params, &params.cutoffs)?)?;
    println!("   t  <N0> trotter  exact   <N1> trotter  exact");
    for s in &snaps {
        let e = exact.evolve(&vac, s.time)?;
        println!(
            "{:4.1}  {:12.4} {:6.4}  {:12.4} {:6.4}",
            s.time,
            s.state.mean_occupation(0)?,
            e.mean_occupation(0)?,
            s.state.mean_occupation(1)?,
            e.mean_occupation(1)?
        );
    }
    Ok(())
}
