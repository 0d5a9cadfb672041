//! Full two-site reproduction run into a content-addressed directory.
use spinphonon::experiments::{run_preset, Overrides, Preset};
use spinphonon::Result;

fn main() -> Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "runs".into());
    let summary = run_preset(Preset::N2Q0, &Overrides::default(), out.as_ref())?;
    println!("{}", summary.dir.display());
    for f in &summary.files {
        println!("  {f}");
    }
    println!("max |trotter - exact| {:.3}", summary.max_trotter_deviation);
    Ok(())
}
