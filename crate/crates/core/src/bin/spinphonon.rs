use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spinphonon::evolution::{cutoff_sweep, format_sig};
use spinphonon::experiments::{
    exact_series, plans_for, run_preset, run_readout_demo, run_trotter_plans, verify, Overrides, Preset,
    ReadoutDemoConfig, Suite,
};
use spinphonon::gates::{CompressOptions, Measurement};
use spinphonon::observables::{probability_series, Target};
use spinphonon::operator::{build_hamiltonian, project_to_sector};
use spinphonon::readout::{bootstrap, fit_populations, write_fit_csv, ReadoutDataset, SidebandModel, Weighting};
use spinphonon::trotter::{IdentityKick, PlanOptions};
use spinphonon::{Error, ModelParams, Result, SectorMap};

#[derive(Parser)]
#[command(name = "spinphonon", version, about = "Hybrid qubit-boson emulator for lattice Yukawa quenches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// n2_q0, n4_qm1_g2 or n4_qm1_g0
    #[arg(long, default_value = "n2_q0", conflicts_with = "config")]
    preset: String,
    /// key=value parameter file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    coupling: Option<f64>,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams> {
        let mut p = match &self.config {
            Some(path) => ModelParams::from_config_str(&fs::read_to_string(path)?)?,
            None => self.preset.parse::<Preset>()?.params(),
        };
        if let Some(c) = self.cutoff {
            p = p.with_uniform_cutoff(c);
        }
        if let Some(dt) = self.dt {
            p.trotter_dt = dt;
        }
        if let Some(s) = self.steps {
            p.trotter_steps = s;
        }
        if let Some(g) = self.coupling {
            p.coupling = g;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvolveMethod {
    Exact,
    Trotter,
}

#[derive(Subcommand)]
enum Command {
    /// Print the full or sector-reduced Hamiltonian.
    Hamiltonian {
        #[command(flatten)]
        model: ModelArgs,
        /// Print the unreduced qubit Hamiltonian instead of the sector one.
        #[arg(long)]
        full: bool,
    },
    /// Emit the Trotter circuit(s) in text form.
    Circuit {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        native: bool,
        #[arg(long)]
        compile_phases: bool,
        /// Compress for a measurement: `spin`, `full` or a mode index.
        #[arg(long)]
        compress: Option<String>,
        /// Realize spin-independent kicks with an ancilla qubit.
        #[arg(long)]
        ancilla: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Spin and Fock probability tables from Trotter or exact evolution.
    Evolve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "trotter")]
        method: EvolveMethod,
        /// Exact-evolution samples per Trotter step.
        #[arg(long, default_value_t = 1)]
        substeps: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Mean occupations at time `t` for a list of cutoffs.
    SweepCutoff {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_value = "5,6,7,8")]
        cutoffs: Vec<usize>,
        #[arg(long)]
        time: Option<f64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Fit Fock populations from a red-sideband dataset, or run the simulated demo.
    ReadoutFit {
        /// CSV with `t,excited_fraction,shots`; omit to simulate from a preset.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "n4_qm1_g2")]
        preset: String,
        #[arg(long, default_value_t = 2)]
        mode: usize,
        #[arg(long, default_value_t = 3)]
        step: usize,
        #[arg(long, default_value_t = 1000)]
        shots: u64,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        omega1: f64,
        #[arg(long, default_value_t = 0.01)]
        gamma1: f64,
        #[arg(long, default_value_t = 200)]
        resamples: usize,
        /// Weight residuals by the binomial standard error.
        #[arg(long)]
        weighted: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run verification suites and print JSON verdicts.
    Verify {
        /// algebra, gates, trotter, convergence or readout; all when omitted.
        #[arg(long)]
        suite: Vec<String>,
    },
    /// Full reproduction run into a content-addressed directory.
    Preset {
        name: String,
        #[arg(long)]
        cutoff: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        coupling: Option<f64>,
        #[arg(long)]
        substeps: Option<usize>,
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
    },
}

fn emit(out_dir: Option<&Path>, name: &str, contents: &[u8]) -> Result<()> {
    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), contents)?;
            eprintln!("wrote {}", dir.join(name).display());
        }
        None => {
            let mut out = io::stdout().lock();
            if name.ends_with(".csv") || name.ends_with(".txt") {
                writeln!(out, "# {name}")?;
            }
            out.write_all(contents)?;
        }
    }
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Hamiltonian { model, full } => {
            let p = model.params()?;
            let h = build_hamiltonian(&p)?;
            if full {
                println!("{h}");
            } else {
                let map = SectorMap::descending(&p)?;
                println!("{}", project_to_sector(&h, &map)?);
            }
        }
        Command::Circuit { model, native, compile_phases, compress, ancilla, out_dir } => {
            let p = model.params()?;
            let measurement = match compress.as_deref() {
                None => None,
                Some("spin") => Some(Measurement::Spin),
                Some("full") => Some(Measurement::Full),
                Some(m) => Some(Measurement::Mode(
                    m.parse().map_err(|_| Error::InvalidParams(format!("bad compression target `{m}`")))?,
                )),
            };
            let options = PlanOptions {
                identity_kick: if ancilla { IdentityKick::Ancilla } else { IdentityKick::Direct },
                compile_phases,
                native,
                compression: measurement.map(|measurement| CompressOptions { initial_zero: true, measurement }),
            };
            for plan in plans_for(&p, options)? {
                let (c, frame) = plan.executable_circuit(plan.steps)?;
                let mut text = c.to_string();
                if frame.residual.iter().any(|&r| r != 0.0) {
                    text.push_str(&format!("# residual mode phases {:?}\n", frame.residual));
                }
                emit(out_dir.as_deref(), &format!("{}.txt", plan.name), text.as_bytes())?;
            }
        }
        Command::Evolve { model, method, substeps, out_dir, format } => {
            let p = model.params()?;
            if substeps == 0 {
                return Err(Error::InvalidParams("substeps must be positive".into()));
            }
            let (times, spin, modes) = match method {
                EvolveMethod::Trotter => {
                    let run = run_trotter_plans(&p, PlanOptions::default())?;
                    let modes = (0..p.n_sites).map(|m| run.mode_states(m)).collect::<Result<Vec<_>>>()?;
                    (run.times(), run.spin_states(), modes)
                }
                EvolveMethod::Exact => {
                    let n = p.trotter_steps * substeps;
                    let times: Vec<f64> = (0..=n).map(|j| j as f64 * p.trotter_dt / substeps as f64).collect();
                    let (states, _) = exact_series(&p, &times)?;
                    (times, states.clone(), vec![states; p.n_sites])
                }
            };
            let tag = match method {
                EvolveMethod::Trotter => "trotter",
                EvolveMethod::Exact => "exact",
            };
            let mut tables = vec![("spin".to_string(), probability_series(&times, &spin, Target::Spin)?)];
            for (m, s) in modes.iter().enumerate() {
                tables.push((format!("mode{m}"), probability_series(&times, s, Target::Mode(m))?));
            }
            for (label, t) in &tables {
                let bytes = match format {
                    Format::Json => json(t).into_bytes(),
                    _ => {
                        let mut b = Vec::new();
                        t.write_csv(&mut b)?;
                        b
                    }
                };
                let ext = if matches!(format, Format::Json) { "json" } else { "csv" };
                emit(out_dir.as_deref(), &format!("{tag}_{label}.{ext}"), &bytes)?;
            }
        }
        Command::SweepCutoff { model, cutoffs, time, format } => {
            let p = model.params()?;
            let t = time.unwrap_or(p.total_time());
            let sweep = cutoff_sweep(&p, &cutoffs, t)?;
            match format {
                Format::Json => print!("{}", json(&sweep)),
                _ => {
                    let mut out = io::stdout().lock();
                    let cols: Vec<String> = (0..p.n_sites).map(|m| format!("n{m}")).chain(["max_rel_dev".into()]).collect();
                    write!(out, "cutoff")?;
                    for c in &cols {
                        write!(out, ",{c}")?;
                    }
                    writeln!(out)?;
                    for r in &sweep.rows {
                        write!(out, "{}", r.cutoff)?;
                        for v in &r.mean_occupation {
                            write!(out, ",{}", format_sig(*v))?;
                        }
                        writeln!(out, ",{}", r.max_relative_deviation.map(format_sig).unwrap_or_default())?;
                    }
                    if let Some(d) = sweep.max_relative_deviation() {
                        eprintln!("t={t} max relative deviation {}", format_sig(d));
                    }
                }
            }
        }
        Command::ReadoutFit { data, preset, mode, step, shots, n_max, omega1, gamma1, resamples, weighted, seed, out_dir } => {
            let weighting = if weighted { Weighting::Binomial } else { Weighting::Unweighted };
            match data {
                Some(path) => {
                    let ds = ReadoutDataset::read_csv(io::BufReader::new(fs::File::open(path)?))?;
                    let model = SidebandModel::new(omega1, gamma1, n_max.unwrap_or(6))?;
                    let fit = fit_populations(&ds, &model, weighting)?;
                    let boot = bootstrap(&ds, &model, resamples, seed, weighting)?;
                    let mut b = Vec::new();
                    write_fit_csv(&mut b, &fit, Some(&boot.std))?;
                    emit(out_dir.as_deref(), "fit.csv", &b)?;
                    eprintln!("{}", serde_json::to_string(&fit.diagnostics).expect("serializable"));
                }
                None => {
                    let cfg = ReadoutDemoConfig { preset, mode, step, shots, seed, resamples, n_max, omega1, gamma1, weighting };
                    let rep = run_readout_demo(&cfg, &Overrides::default(), out_dir.as_deref())?;
                    let mut b = String::from("n,true_P_n,fit_P_n,sigma_n\n");
                    for n in 0..rep.fit.populations.len() {
                        b.push_str(&format!(
                            "{n},{:.6},{:.6},{:.6}\n",
                            rep.truth.get(n).copied().unwrap_or(0.0),
                            rep.fit.populations[n],
                            rep.bootstrap.std[n]
                        ));
                    }
                    print!("{b}");
                    eprintln!("max |fit - true| = {:.4}, {} of {} inside 16/84 band", rep.max_error, rep.within_interval, rep.fit.populations.len());
                }
            }
        }
        Command::Verify { suite } => {
            let suites: Vec<Suite> = if suite.is_empty() {
                Suite::ALL.to_vec()
            } else {
                suite.iter().map(|s| s.parse()).collect::<Result<_>>()?
            };
            let reports = suites.into_iter().map(verify).collect::<Result<Vec<_>>>()?;
            print!("{}", json(&reports));
            if let Some(r) = reports.iter().find(|r| !r.passed) {
                return Err(Error::NonConvergence {
                    residual: r.checks.iter().find(|c| !c.passed).map_or(f64::NAN, |c| c.value),
                });
            }
        }
        Command::Preset { name, cutoff, dt, steps, coupling, substeps, out_dir } => {
            let preset: Preset = name.parse()?;
            let o = Overrides { cutoff, dt, steps, coupling, substeps };
            let summary = run_preset(preset, &o, &out_dir)?;
            print!("{}", json(&summary));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
