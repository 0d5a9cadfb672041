//! Mean occupations of the four-site g=2 quench at t=5 versus Fock cutoff.
use spinphonon::evolution::cutoff_sweep;
use spinphonon::{ModelParams, Result};

fn main() -> Result<()> {
    let sweep = cutoff_sweep(&ModelParams::n4_reference(2.0), &[4, 5, 6, 7, 8], 5.0)?;
    for r in &sweep.rows {
        let occ: Vec<String> = r.mean_occupation.iter().map(|n| format!("{n:.4}")).collect();
        println!("cutoff {}: {}  rel dev {:?}", r.cutoff, occ.join(" "), r.max_relative_deviation);
    }
    Ok(())
}
