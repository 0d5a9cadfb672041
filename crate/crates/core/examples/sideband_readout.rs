//! Red-sideband readout of a Poisson distribution: synthesize, sample, fit, bootstrap.
use spinphonon::readout::{bootstrap, fit_populations, sample_shots, synthesize_signal, SidebandModel, Weighting};
use spinphonon::Result;

fn main() -> Result<()> {
    let mean: f64 = 1.0;
    let truth: Vec<f64> = (0..=8)
        .scan(1.0, |f, n: i32| {
            if n > 0 {
                *f *= n as f64;
            }
            Some((-mean).exp() * mean.powi(n) / *f)
        })
        .collect();
    let model = SidebandModel::with_defaults(6)?;
    let times = model.default_times();
    let data = sample_shots(&synthesize_signal(&truth, &model, &times)?, &times, 1000, 42)?;
    let fit = fit_populations(&data, &model, Weighting::Unweighted)?;
    let boot = bootstrap(&data, &model, 200, 7, Weighting::Unweighted)?;
    println!(" n   true    fit   sigma");
    for n in 0..=model.n_max {
        println!("{n:2} {:6.3} {:6.3} {:6.3}", truth[n], fit.populations[n], boot.std[n]);
    }
    println!("residual {:.3e}, condition {:.1}", fit.diagnostics.residual_norm, fit.diagnostics.condition);
    Ok(())
}
