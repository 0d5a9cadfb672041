//! Runs the fast verification suites and prints their verdicts.
use spinphonon::experiments::{verify, Suite};
use spinphonon::Result;

fn main() -> Result<()> {
    for suite in [Suite::Algebra, Suite::Gates, Suite::Readout] {
        let r = verify(suite)?;
        println!("{}: {}", r.suite, if r.passed { "pass" } else { "FAIL" });
        for c in &r.checks {
            println!("  {:32} {:.3e}", c.name, c.value);
        }
    }
    Ok(())
}
