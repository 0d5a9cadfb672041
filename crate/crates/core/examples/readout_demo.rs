//! Phonon measurement of mode 2 after three Trotter steps of the four-site g=2 run.
use spinphonon::experiments::{run_readout_demo, Overrides, ReadoutDemoConfig};
use spinphonon::Result;

fn main() -> Result<()> {
    let rep = run_readout_demo(&ReadoutDemoConfig::reference(), &Overrides::default(), None)?;
    println!(" n   true    fit    p16    p84");
    for n in 0..rep.fit.populations.len() {
        println!(
            "{n:2} {:6.3} {:6.3} {:6.3} {:6.3}",
            rep.truth[n], rep.fit.populations[n], rep.bootstrap.p16[n], rep.bootstrap.p84[n]
        );
    }
    println!("max error {:.4}", rep.max_error);
    Ok(())
}
