//! Trotter plans for the four-site sector: term order, circuits and compression.
use spinphonon::gates::{compress, CompressOptions, Measurement};
use spinphonon::trotter::{plan_n4, PlanOptions};
use spinphonon::{GateOp, ModelParams, Result};

fn main() -> Result<()> {
    let params = ModelParams::n4_reference(2.0);
    let (main, mode2) = plan_n4(&params, PlanOptions::default())?;
    for g in &main.groups {
        println!("{:>16}  {:.4}", g.key.to_string(), g.coeff);
    }
    println!("parallel layers {:?}", main.parallel_layers());

    let cnots = |c: &spinphonon::Circuit| c.count(|g| matches!(g, GateOp::Cnot { .. }));
    let opts = CompressOptions { initial_zero: true, measurement: Measurement::Spin };
    for steps in [1, 5] {
        let c = main.circuit(steps)?;
        println!("{steps} steps: {} gates, {} CNOTs, compressed {}", c.len(), cnots(&c), cnots(&compress(&c, opts)));
    }
    print!("{}", mode2.circuit(1)?);
    Ok(())
}
