//! End-to-end runs: presets, the phonon-readout demo and headless verification suites.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::{
    cutoff_sweep, energy_expectation, evolve_exact, reduced_matrix, run_trotter, ExactEvolver, Snapshot,
    LEAKAGE_WARNING,
};
use crate::gates::{
    circuit_matrix, cnot_decomposition, conjugated_kick, gate_matrix, kick_alpha, GateOp, KickBasis,
};
use crate::linalg::{max_abs, unitarity_defect};
use crate::model::{mode_energy, ModelParams};
use crate::observables::{probability_series, spin_legend, weight_outside_sector, ProbabilityTable, Target};
use crate::operator::{
    build_hamiltonian, charge_commutator_norm, charge_diagonal, jordan_wigner_check, realize_matrix, Ladder,
    OperatorSum, OperatorTerm, Pauli, SectorMap,
};
use crate::readout::{
    bootstrap, choose_n_max, fit_populations, sample_shots, synthesize_signal, BootstrapSummary, PopulationFit,
    ReadoutDataset, SidebandModel, Weighting,
};
use crate::state::HybridState;
use crate::trotter::{plan_generic, plan_n2, plan_n4, IdentityKick, PlanOptions, TrotterPlan};

/// Levels above this population are dropped when choosing the readout fit cutoff.
pub const N_MAX_THRESHOLD: f64 = 1e-5;

/// Minimum cutoff of the read-out mode when simulating the true distribution.
pub const READOUT_CUTOFF: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Preset {
    N2Q0,
    N4Qm1G2,
    N4Qm1G0,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::N2Q0, Preset::N4Qm1G2, Preset::N4Qm1G0];

    pub fn name(self) -> &'static str {
        match self {
            Preset::N2Q0 => "n2_q0",
            Preset::N4Qm1G2 => "n4_qm1_g2",
            Preset::N4Qm1G0 => "n4_qm1_g0",
        }
    }

    pub fn params(self) -> ModelParams {
        match self {
            Preset::N2Q0 => ModelParams::n2_reference(),
            Preset::N4Qm1G2 => ModelParams::n4_reference(2.0),
            Preset::N4Qm1G0 => ModelParams::n4_reference(0.0),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown preset `{s}` (expected n2_q0, n4_qm1_g2 or n4_qm1_g0)")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub cutoff: Option<usize>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub coupling: Option<f64>,
    /// Continuous-evolution samples per Trotter step.
    pub substeps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub preset: String,
    pub params: ModelParams,
    pub substeps: usize,
}

impl RunConfig {
    pub fn resolve(preset: Preset, o: &Overrides) -> Result<Self> {
        let mut params = preset.params();
        if let Some(c) = o.cutoff {
            params = params.with_uniform_cutoff(c);
        }
        if let Some(dt) = o.dt {
            params.trotter_dt = dt;
        }
        if let Some(s) = o.steps {
            params.trotter_steps = s;
        }
        if let Some(g) = o.coupling {
            params.coupling = g;
        }
        params.validate()?;
        let substeps = o.substeps.unwrap_or(10);
        if substeps == 0 {
            return Err(Error::InvalidParams("substeps must be positive".into()));
        }
        Ok(RunConfig { preset: preset.name().into(), params, substeps })
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Trotter plans for a parameter set: one for N=2 and generic sectors, main
/// plus mode-2 for the four-site Q=-1 sector.
pub fn plans_for(params: &ModelParams, options: PlanOptions) -> Result<Vec<TrotterPlan>> {
    match (params.n_sites, params.charge_sector) {
        (2, 0) => Ok(vec![plan_n2(params, options)?]),
        (4, -1) => {
            let (main, m2) = plan_n4(params, options)?;
            Ok(vec![main, m2])
        }
        _ => Ok(vec![plan_generic(params, options)?]),
    }
}

/// Snapshots of every plan, with the plan that carries each mode.
#[derive(Debug, Clone)]
pub struct TrotterRun {
    pub plans: Vec<TrotterPlan>,
    pub snapshots: Vec<Vec<Snapshot>>,
    pub mode_owner: Vec<usize>,
}

impl TrotterRun {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots[0].iter().map(|s| s.time).collect()
    }

    pub fn spin_states(&self) -> Vec<HybridState> {
        self.snapshots[0].iter().map(|s| s.state.clone()).collect()
    }

    pub fn mode_states(&self, m: usize) -> Result<Vec<HybridState>> {
        let owner = *self.mode_owner.get(m).ok_or(Error::IndexOutOfRange { index: m, limit: self.mode_owner.len() })?;
        Ok(self.snapshots[owner].iter().map(|s| s.state.clone()).collect())
    }

    pub fn mode_marginal(&self, m: usize, step: usize) -> Result<Vec<f64>> {
        let states = self.mode_states(m)?;
        let st = states.get(step).ok_or(Error::IndexOutOfRange { index: step, limit: states.len() })?;
        st.mode_marginal(m)
    }

    /// ⟨H⟩ per step, summed over the independent registers.
    pub fn energies(&self, cutoffs: &[usize]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.snapshots[0].len()];
        for (plan, snaps) in self.plans.iter().zip(&self.snapshots) {
            let h = realize_matrix(&plan.hamiltonian(), &plan.register_cutoffs(cutoffs)?)?;
            for (e, s) in out.iter_mut().zip(snaps) {
                *e += energy_expectation(&h, &s.state)?;
            }
        }
        Ok(out)
    }
}

pub fn run_trotter_plans(params: &ModelParams, options: PlanOptions) -> Result<TrotterRun> {
    let plans = plans_for(params, options)?;
    let mut snapshots = Vec::with_capacity(plans.len());
    for plan in &plans {
        let initial = plan.vacuum(&params.cutoffs)?;
        snapshots.push(run_trotter(plan, &initial, None)?);
    }
    let mode_owner = (0..params.n_sites)
        .map(|m| plans.iter().rposition(|p| p.active_modes().contains(&m)).unwrap_or(0))
        .collect();
    Ok(TrotterRun { plans, snapshots, mode_owner })
}

/// Exact evolution of the sector vacuum sampled at `times`.
pub fn exact_series(params: &ModelParams, times: &[f64]) -> Result<(Vec<HybridState>, Vec<f64>)> {
    let map = SectorMap::descending(params)?;
    let h = reduced_matrix(params, &params.cutoffs)?;
    let vac = HybridState::vacuum(map.n_reduced(), &params.cutoffs)?;
    let states = ExactEvolver::new(h.clone())?.series(&vac, times)?;
    let energies = states.iter().map(|s| energy_expectation(&h, s)).collect::<Result<Vec<_>>>()?;
    Ok((states, energies))
}

#[derive(Debug, Clone, Serialize)]
pub struct LeakageEntry {
    pub source: String,
    pub time: f64,
    pub mode: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub dir: PathBuf,
    pub files: Vec<String>,
    /// Max |Trotter − exact| over spin and mode tables at the Trotter times.
    pub max_trotter_deviation: f64,
    pub max_leakage: f64,
    pub max_trotter_energy_drift: f64,
    pub max_exact_energy_drift: f64,
    pub leakage_warnings: Vec<LeakageEntry>,
}

fn tables(times: &[f64], spin: &[HybridState], modes: &[Vec<HybridState>]) -> Result<Vec<ProbabilityTable>> {
    let mut out = vec![probability_series(times, spin, Target::Spin)?];
    for (m, states) in modes.iter().enumerate() {
        out.push(probability_series(times, states, Target::Mode(m))?);
    }
    Ok(out)
}

fn occupation_rows(times: &[f64], modes: &[Vec<HybridState>]) -> Result<Vec<(f64, Vec<f64>)>> {
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| Ok((t, modes.iter().enumerate().map(|(m, s)| s[k].mean_occupation(m)).collect::<Result<_>>()?)))
        .collect()
}

fn write_file(dir: &Path, files: &mut Vec<String>, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    files.push(name.to_string());
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Runs a preset and writes its artifacts to `out_dir/<run-id>/`.
pub fn run_preset(preset: Preset, overrides: &Overrides, out_dir: &Path) -> Result<RunSummary> {
    let config = RunConfig::resolve(preset, overrides)?;
    run_config(&config, out_dir)
}

pub fn run_config(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    let params = &config.params;
    let run_id = config.run_id();
    let dir = out_dir.join(&run_id);
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();

    write_file(&dir, &mut files, "config.json", serde_json::to_string_pretty(config).expect("serializable"))?;
    write_file(&dir, &mut files, "params.cfg", params.to_config_string())?;

    // Trotter circuits and execution.
    let trotter = run_trotter_plans(params, PlanOptions::default())?;
    for plan in &trotter.plans {
        let circuit = plan.circuit(plan.steps)?;
        let stem = format!("circuit_{}", plan.name.rsplit('_').next().unwrap_or(&plan.name));
        write_file(&dir, &mut files, &format!("{stem}.txt"), circuit.to_string())?;
        write_file(&dir, &mut files, &format!("{stem}.meta.jsonl"), circuit.metadata_jsonl())?;
    }
    let t_times = trotter.times();
    let t_modes = (0..params.n_sites).map(|m| trotter.mode_states(m)).collect::<Result<Vec<_>>>()?;
    let t_tables = tables(&t_times, &trotter.spin_states(), &t_modes)?;
    let t_energy = trotter.energies(&params.cutoffs)?;

    // Continuous evolution on a finer grid that contains the Trotter times.
    let fine = params.trotter_steps * config.substeps;
    let e_times: Vec<f64> = (0..=fine).map(|j| j as f64 * params.trotter_dt / config.substeps as f64).collect();
    let (e_states, e_energy) = exact_series(params, &e_times)?;
    let e_modes: Vec<Vec<HybridState>> = (0..params.n_sites).map(|_| e_states.clone()).collect();
    let e_tables = tables(&e_times, &e_states, &e_modes)?;

    let labels = ["spin".to_string()].into_iter().chain((0..params.n_sites).map(|m| format!("mode{m}")));
    for ((label, tt), et) in labels.zip(&t_tables).zip(&e_tables) {
        write_file(&dir, &mut files, &format!("{run_id}_trotter_{label}.csv"), csv_bytes(|b| tt.write_csv(b))?)?;
        write_file(&dir, &mut files, &format!("{run_id}_exact_{label}.csv"), csv_bytes(|b| et.write_csv(b))?)?;
    }
    let occ_cols: Vec<String> = (0..params.n_sites).map(|m| format!("n{m}")).collect();
    let t_occ = occupation_rows(&t_times, &t_modes)?;
    let e_occ = occupation_rows(&e_times, &e_modes)?;
    write_file(&dir, &mut files, &format!("{run_id}_trotter_occupation.csv"), csv_bytes(|b| crate::evolution::write_csv(b, &occ_cols, &t_occ))?)?;
    write_file(&dir, &mut files, &format!("{run_id}_exact_occupation.csv"), csv_bytes(|b| crate::evolution::write_csv(b, &occ_cols, &e_occ))?)?;

    // Energy drift relative to t=0.
    let e0 = e_energy[0];
    let energy_rows: Vec<(f64, Vec<f64>)> = t_times
        .iter()
        .zip(&t_energy)
        .map(|(&t, &et)| {
            let k = e_times.iter().position(|&x| (x - t).abs() < 1e-9).unwrap_or(0);
            (t, vec![et, et - e0, e_energy[k], e_energy[k] - e0])
        })
        .collect();
    let energy_cols: Vec<String> =
        ["trotter_energy", "trotter_drift", "exact_energy", "exact_drift"].iter().map(|s| s.to_string()).collect();
    write_file(&dir, &mut files, &format!("{run_id}_energy.csv"), csv_bytes(|b| crate::evolution::write_csv(b, &energy_cols, &energy_rows))?)?;

    // Leakage report.
    let mut leakage = Vec::new();
    let mut max_leakage = 0.0f64;
    for (k, (plan, snaps)) in trotter.plans.iter().zip(&trotter.snapshots).enumerate() {
        let source = plan.name.clone();
        for s in snaps {
            for (mode, w) in s.leakage().into_iter().enumerate().filter(|&(m, _)| trotter.mode_owner[m] == k) {
                max_leakage = max_leakage.max(w);
                if w > LEAKAGE_WARNING {
                    leakage.push(LeakageEntry { source: source.clone(), time: s.time, mode, weight: w });
                }
            }
        }
    }
    for (s, &t) in e_states.iter().zip(&e_times) {
        for (mode, w) in s.leakage().into_iter().enumerate() {
            max_leakage = max_leakage.max(w);
            if w > LEAKAGE_WARNING {
                leakage.push(LeakageEntry { source: "exact".into(), time: t, mode, weight: w });
            }
        }
    }
    write_file(
        &dir,
        &mut files,
        "leakage.json",
        serde_json::to_string_pretty(&serde_json::json!({
            "threshold": LEAKAGE_WARNING,
            "max_weight": max_leakage,
            "warnings": leakage,
        }))
        .expect("serializable"),
    )?;

    let legend = spin_legend(&SectorMap::descending(params)?);
    let mut legend_csv = String::from("reduced,physical\n");
    for (r, p) in &legend {
        legend_csv.push_str(&format!("{r},{p}\n"));
    }
    write_file(&dir, &mut files, "spin_legend.csv", legend_csv)?;
    write_file(&dir, &mut files, "plot.py", plot_script(&run_id, params.n_sites, &legend))?;

    // Trotter vs continuous at the Trotter times.
    let mut max_dev = 0.0f64;
    for (tt, et) in t_tables.iter().zip(&e_tables) {
        for (k, row) in tt.rows.iter().enumerate() {
            let e_row = &et.rows[k * config.substeps];
            let n = row.len().min(e_row.len());
            for j in 0..n {
                max_dev = max_dev.max((row[j] - e_row[j]).abs());
            }
            max_dev = max_dev.max(row[n..].iter().chain(&e_row[n..]).fold(0.0, |a: f64, &b| a.max(b)));
        }
    }
    let drift = |v: &[f64]| v.iter().map(|e| (e - v[0]).abs()).fold(0.0, f64::max);
    let summary = RunSummary {
        run_id,
        dir: dir.clone(),
        files: files.clone(),
        max_trotter_deviation: max_dev,
        max_leakage,
        max_trotter_energy_drift: drift(&t_energy),
        max_exact_energy_drift: drift(&e_energy),
        leakage_warnings: leakage,
    };
    let mut with_summary = summary.clone();
    with_summary.files.push("summary.json".into());
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&with_summary).expect("serializable"))?;
    Ok(with_summary)
}

fn plot_script(run_id: &str, n_modes: usize, legend: &[(String, String)]) -> String {
    let legend_py: Vec<String> = legend.iter().map(|(r, p)| format!("\"{r}\": \"{p}\"")).collect();
    format!(
        r#"#!/usr/bin/env python3
# Renders spin and Fock-population panels from the CSVs next to this script.
import csv
import os
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
RUN = "{run_id}"
N_MODES = {n_modes}
LEGEND = {{{legend}}}


def load(name):
    with open(os.path.join(HERE, f"{{RUN}}_{{name}}.csv")) as f:
        rows = list(csv.reader(f))
    header, data = rows[0], [[float(x) for x in r] for r in rows[1:]]
    cols = {{h: [r[i] for r in data] for i, h in enumerate(header)}}
    return cols


fig, axes = plt.subplots(1 + N_MODES, 1, figsize=(6, 2.4 * (1 + N_MODES)), sharex=True)
for ax, name in zip(axes, ["spin"] + [f"mode{{m}}" for m in range(N_MODES)]):
    tr, ex = load(f"trotter_{{name}}"), load(f"exact_{{name}}")
    for i, col in enumerate(c for c in ex if c != "t"):
        if max(ex[col]) < 1e-3 and (col not in tr or max(tr[col]) < 1e-3):
            continue
        label = LEGEND.get(col[1:], col[1:]) if name == "spin" else f"N={{col[1:]}}"
        ax.plot(ex["t"], ex[col], color=f"C{{i % 10}}", label=label)
        if col in tr:
            ax.plot(tr["t"], tr[col], "o", color=f"C{{i % 10}}", ms=3)
    ax.set_ylabel("P" if name == "spin" else f"P(mode {{name[4:]}})")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=6, ncol=4)
axes[-1].set_xlabel("t")
fig.tight_layout()
fig.savefig(os.path.join(HERE, f"{{RUN}}_panels.pdf"))
"#,
        legend = legend_py.join(", ")
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReadoutDemoConfig {
    pub preset: String,
    pub mode: usize,
    pub step: usize,
    pub shots: u64,
    pub seed: u64,
    pub resamples: usize,
    pub n_max: Option<usize>,
    pub omega1: f64,
    pub gamma1: f64,
    pub weighting: Weighting,
}

impl ReadoutDemoConfig {
    /// Mode 2 after three steps of the four-site g=2 preset.
    pub fn reference() -> Self {
        ReadoutDemoConfig {
            preset: Preset::N4Qm1G2.name().into(),
            mode: 2,
            step: 3,
            shots: 1000,
            seed: 0,
            resamples: 200,
            n_max: None,
            omega1: 1.0,
            gamma1: 0.01,
            weighting: Weighting::Unweighted,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReadoutDemoReport {
    pub config: ReadoutDemoConfig,
    pub model: SidebandModel,
    /// Simulated P_n for n = 0..=cutoff.
    pub truth: Vec<f64>,
    pub dataset: ReadoutDataset,
    pub fit: PopulationFit,
    pub bootstrap: BootstrapSummary,
    /// Components whose true value lies inside the 16/84 band.
    pub within_interval: usize,
    pub max_error: f64,
}

/// Mode-`m` Fock distribution after `step` Trotter steps of a preset.
pub fn readout_truth(preset: Preset, overrides: &Overrides, mode: usize, step: usize) -> Result<Vec<f64>> {
    let mut config = RunConfig::resolve(preset, overrides)?;
    if step > config.params.trotter_steps {
        config.params.trotter_steps = step;
    }
    let cutoff = config.params.cutoffs.get_mut(mode).ok_or(Error::IndexOutOfRange { index: mode, limit: config.params.n_sites })?;
    *cutoff = (*cutoff).max(READOUT_CUTOFF);
    let run = run_trotter_plans(&config.params, PlanOptions::default())?;
    run.mode_marginal(mode, step)
}

/// Largest |fitted − true| over the fitted components and the folded tail.
pub fn fit_error(truth: &[f64], fitted: &[f64]) -> f64 {
    let mut err = 0.0f64;
    for (n, &f) in fitted.iter().enumerate() {
        err = err.max((f - truth.get(n).copied().unwrap_or(0.0)).abs());
    }
    err
}

pub fn run_readout_demo(config: &ReadoutDemoConfig, overrides: &Overrides, out_dir: Option<&Path>) -> Result<ReadoutDemoReport> {
    let preset: Preset = config.preset.parse()?;
    let truth = readout_truth(preset, overrides, config.mode, config.step)?;
    let n_max = config.n_max.unwrap_or_else(|| choose_n_max(&truth, N_MAX_THRESHOLD));
    let model = SidebandModel::new(config.omega1, config.gamma1, n_max)?;
    let times = model.default_times();
    let curve = synthesize_signal(&truth, &model, &times)?;
    let dataset = sample_shots(&curve, &times, config.shots, config.seed)?;
    let fit = fit_populations(&dataset, &model, config.weighting)?;
    let boot = bootstrap(&dataset, &model, config.resamples, config.seed.wrapping_add(1), config.weighting)?;
    let within_interval = (0..=n_max)
        .filter(|&n| {
            let t = truth.get(n).copied().unwrap_or(0.0);
            boot.p16[n] - 1e-12 <= t && t <= boot.p84[n] + 1e-12
        })
        .count();
    let max_error = fit_error(&truth, &fit.populations);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let stem = format!("readout_{}_m{}_k{}_s{}", config.preset, config.mode, config.step, config.seed);
        let mut data = Vec::new();
        dataset.write_csv(&mut data)?;
        fs::write(dir.join(format!("{stem}_data.csv")), data)?;
        let mut cmp = String::from("n,true_P_n,fit_P_n,sigma_n,p16,p84\n");
        for n in 0..=n_max {
            cmp.push_str(&format!(
                "{n},{},{},{},{},{}\n",
                crate::evolution::format_sig(truth.get(n).copied().unwrap_or(0.0)),
                crate::evolution::format_sig(fit.populations[n]),
                crate::evolution::format_sig(boot.std[n]),
                crate::evolution::format_sig(boot.p16[n]),
                crate::evolution::format_sig(boot.p84[n]),
            ));
        }
        fs::write(dir.join(format!("{stem}_comparison.csv")), cmp)?;
    }
    Ok(ReadoutDemoReport { config: config.clone(), model, truth, dataset, fit, bootstrap: boot, within_interval, max_error })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Suite {
    Algebra,
    Gates,
    Trotter,
    Convergence,
    Readout,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Algebra, Suite::Gates, Suite::Trotter, Suite::Convergence, Suite::Readout];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Algebra => "algebra",
            Suite::Gates => "gates",
            Suite::Trotter => "trotter",
            Suite::Convergence => "convergence",
            Suite::Readout => "readout",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::InvalidParams(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value < threshold`.
    pub fn below(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, passed: value < threshold }
    }

    /// Passes when `value > threshold`.
    pub fn above(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, passed: value > threshold }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

pub fn verify(suite: Suite) -> Result<VerifyReport> {
    let checks = match suite {
        Suite::Algebra => verify_algebra()?,
        Suite::Gates => verify_gates()?,
        Suite::Trotter => verify_trotter()?,
        Suite::Convergence => verify_convergence()?,
        Suite::Readout => verify_readout()?,
    };
    Ok(VerifyReport { suite: suite.name().into(), passed: checks.iter().all(|c| c.passed), checks })
}

fn random_state(n_qubits: usize, cutoffs: &[usize], seed: u64) -> Result<HybridState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = crate::state::Layout::new(n_qubits, cutoffs)?;
    let mut amps: Vec<Complex64> =
        (0..layout.dim()).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|a| *a /= norm);
    HybridState::from_amplitudes(layout, amps)
}

fn verify_algebra() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for n in [2usize, 4] {
        let jw = jordan_wigner_check(n)?;
        out.push(Check::below(&format!("jordan_wigner_n{n}"), jw.max_anticommutator_deviation.max(jw.max_hamiltonian_deviation), 1e-12));
    }
    for params in [ModelParams::n2_reference(), ModelParams::n4_reference(2.0)] {
        let n = params.n_sites;
        let cuts = vec![2; n];
        let h = realize_matrix(&build_hamiltonian(&params)?, &cuts)?;
        out.push(Check::below(&format!("hermitian_n{n}"), h.hermiticity_defect(), 1e-12));
        let q = charge_diagonal(n, &cuts)?;
        out.push(Check::below(&format!("charge_commutator_n{n}"), charge_commutator_norm(&h, &q), 1e-12));
        let reduced = reduced_matrix(&params, &cuts)?;
        out.push(Check::below(&format!("reduced_hermitian_n{n}"), reduced.hermiticity_defect(), 1e-12));
    }
    let quoted = [(ModelParams::n2_reference(), vec![3.48, 1.5]), (ModelParams::n4_reference(2.0), vec![3.30, 1.86, 1.0, 1.86])];
    for (params, values) in quoted {
        for (m, v) in values.iter().enumerate() {
            let e = mode_energy(&params, m)?;
            out.push(Check::below(&format!("mode_energy_n{}_m{m}", params.n_sites), (e - v).abs(), 0.005 + 1e-12));
        }
    }
    Ok(out)
}

fn kron_dense(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    crate::linalg::kron(a, b)
}

fn verify_gates() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let cuts = [3usize];
    let gates = [
        GateOp::Rx { qubit: 0, theta: 0.7 },
        GateOp::Ry { qubit: 1, theta: -1.3 },
        GateOp::Rz { qubit: 0, theta: 2.1 },
        GateOp::Ms { q0: 0, q1: 1, theta: 0.9 },
        GateOp::Cnot { control: 1, target: 0 },
        GateOp::Snp { qubit: 1, mode: 0, theta: 1.1, phi: 0.4 },
        GateOp::ZKick { qubit: 0, mode: 0, theta: 0.6, phi: -0.8 },
        GateOp::ModePhase { mode: 0, theta: 0.5 },
        GateOp::Displace { mode: 0, alpha: Complex64::new(0.3, -0.2) },
    ];
    let mut worst = 0.0f64;
    for g in &gates {
        worst = worst.max(unitarity_defect(&gate_matrix(g, 2, &cuts)?));
    }
    out.push(Check::below("unitarity", worst, 1e-12));

    // CNOT from MS, up to a global phase.
    let dec = circuit_matrix(&cnot_decomposition(0, 1, 2, 0)?, &[])?;
    let cnot = gate_matrix(&GateOp::Cnot { control: 0, target: 1 }, 2, &[])?;
    let k = (0..dec.len()).max_by(|&a, &b| dec[a].norm().total_cmp(&dec[b].norm())).unwrap_or(0);
    let phase = dec[k] / cnot[k];
    out.push(Check::below("cnot_from_ms", max_abs(&(dec - cnot * phase)), 1e-12));

    // Conjugated kick against the direct exponential of its generator.
    let (theta, phi) = (0.8, 0.3);
    let g_terms = |pauli: &[(usize, Pauli)]| -> Result<OperatorSum> {
        let e = Complex64::from_polar(theta / 2.0, phi);
        OperatorSum::from_terms(
            2,
            1,
            vec![
                OperatorTerm::new(e, pauli, &[(0, Ladder::Annihilate)])?,
                OperatorTerm::new(e.conj(), pauli, &[(0, Ladder::Create)])?,
            ],
        )
    };
    let mut worst = 0.0f64;
    for (basis, paulis) in [
        (KickBasis::Z, vec![(1, Pauli::Z)]),
        (KickBasis::ZZ { control: 0 }, vec![(0, Pauli::Z), (1, Pauli::Z)]),
    ] {
        let circuit = conjugated_kick(1, 0, theta, phi, basis, 2, 1)?;
        let h = realize_matrix(&g_terms(&paulis)?, &cuts)?;
        for seed in 0..3 {
            let psi = random_state(2, &cuts, seed)?;
            let mut via = psi.clone();
            circuit.apply(&mut via)?;
            let direct = evolve_exact(&h, &psi, 1.0)?;
            let d = via.amplitudes().iter().zip(direct.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            worst = worst.max(d);
        }
    }
    out.push(Check::below("conjugated_kick", worst, 1e-10));

    // SNP on |0⟩|0⟩ prepares (|+y⟩|β⟩ + |−y⟩|−β⟩)/√2.
    let cutoff = 16;
    let mut st = HybridState::vacuum(1, &[cutoff])?;
    GateOp::Snp { qubit: 0, mode: 0, theta: 2.0, phi: 0.0 }.apply(&mut st)?;
    let beta = kick_alpha(2.0, 0.0);
    let coherent = |b: Complex64| -> DMatrix<Complex64> {
        let mut v = DMatrix::zeros(cutoff + 1, 1);
        let mut fact = 1.0;
        for n in 0..=cutoff {
            if n > 0 {
                fact *= n as f64;
            }
            v[(n, 0)] = b.powu(n as u32) * ((-b.norm_sqr() / 2.0).exp() / f64::sqrt(fact));
        }
        v
    };
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus_y = DMatrix::from_column_slice(2, 1, &[Complex64::new(s, 0.0), Complex64::new(0.0, s)]);
    let minus_y = DMatrix::from_column_slice(2, 1, &[Complex64::new(s, 0.0), Complex64::new(0.0, -s)]);
    let target = (kron_dense(&plus_y, &coherent(beta)) + kron_dense(&minus_y, &coherent(-beta))) * Complex64::new(s, 0.0);
    let overlap: Complex64 = st.amplitudes().iter().zip(target.iter()).map(|(a, b)| b.conj() * a).sum();
    out.push(Check::above("snp_cat_state_fidelity", overlap.norm_sqr(), 1.0 - 1e-6));
    Ok(out)
}

fn max_table_deviation(a: &[HybridState], b: &[HybridState], n_modes: usize) -> Result<f64> {
    let mut d = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        for (p, q) in x.spin_marginal().iter().zip(y.spin_marginal()) {
            d = d.max((p - q).abs());
        }
        for m in 0..n_modes {
            for (p, q) in x.mode_marginal(m)?.iter().zip(y.mode_marginal(m)?) {
                d = d.max((p - q).abs());
            }
        }
    }
    Ok(d)
}

/// Max spin or Fock marginal deviation between an N=2 Trotter run and the exact evolution.
pub fn n2_trotter_deviation(cutoff: usize, dt: f64, steps: usize) -> Result<f64> {
    let mut params = ModelParams::n2_reference().with_uniform_cutoff(cutoff);
    params.trotter_dt = dt;
    params.trotter_steps = steps;
    let run = run_trotter_plans(&params, PlanOptions::default())?;
    let (exact, _) = exact_series(&params, &run.times())?;
    max_table_deviation(&run.spin_states(), &exact, params.n_sites)
}

fn verify_trotter() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let params = ModelParams::n2_reference().with_uniform_cutoff(6);
    let plan = plan_n2(&params, PlanOptions::default())?;
    let cuts = plan.register_cutoffs(&params.cutoffs)?;

    // One step against the product of group exponentials.
    let psi = random_state(plan.n_qubits(), &cuts, 7)?;
    let mut via = psi.clone();
    plan.step_circuit(0)?.apply(&mut via)?;
    let mut direct = psi.clone();
    for g in &plan.groups {
        let h = realize_matrix(&OperatorSum::from_terms(plan.n_system_qubits, plan.n_modes, g.terms())?, &cuts)?;
        direct = evolve_exact(&h, &direct, plan.dt)?;
    }
    let d = via.amplitudes().iter().zip(direct.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    out.push(Check::below("step_equals_group_product", d, 1e-10));

    let base = run_trotter(&plan, &plan.vacuum(&params.cutoffs)?, None)?;
    let states = |s: &[Snapshot]| s.iter().map(|x| x.state.clone()).collect::<Vec<_>>();
    let compiled = PlanOptions { compile_phases: true, ..PlanOptions::default() };
    let cplan = plan.clone().with_options(compiled);
    let c = run_trotter(&cplan, &cplan.vacuum(&params.cutoffs)?, None)?;
    let mut worst = 0.0f64;
    for (a, b) in base.iter().zip(&c) {
        worst = worst.max(1.0 - a.state.fidelity(&b.state));
    }
    out.push(Check::below("compiled_phases_infidelity", worst, 1e-10));
    out.push(Check::below("compiled_phases_marginals", max_table_deviation(&states(&base), &states(&c), 2)?, 1e-10));

    let anc = plan.clone().with_options(PlanOptions { identity_kick: IdentityKick::Ancilla, ..PlanOptions::default() });
    let a = run_trotter(&anc, &anc.vacuum(&params.cutoffs)?, None)?;
    let sys: Vec<usize> = (0..plan.n_system_qubits).collect();
    let mut worst = 0.0f64;
    for (x, y) in base.iter().zip(&a) {
        for (p, q) in x.state.spin_marginal().iter().zip(y.state.spin_marginal_of(&sys)?) {
            worst = worst.max((p - q).abs());
        }
        for m in 0..2 {
            for (p, q) in x.state.mode_marginal(m)?.iter().zip(y.state.mode_marginal(m)?) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    out.push(Check::below("ancilla_vs_direct_kick", worst, 1e-10));

    out.push(Check::below("small_step_vs_exact", n2_trotter_deviation(12, 0.01, 600)?, 5e-3));

    // Full-register evolution stays in the charge sector.
    for p in [ModelParams::n2_reference(), ModelParams::n4_reference(2.0)] {
        let cuts = vec![2; p.n_sites];
        let h = realize_matrix(&build_hamiltonian(&p)?, &cuts)?;
        let map = SectorMap::descending(&p)?;
        let start = map.embed_state(&HybridState::vacuum(map.n_reduced(), &cuts)?)?;
        let end = evolve_exact(&h, &start, 3.0)?;
        out.push(Check::below(&format!("sector_weight_n{}", p.n_sites), weight_outside_sector(&end, p.charge_sector)?, 1e-10));
    }
    Ok(out)
}

fn verify_convergence() -> Result<Vec<Check>> {
    let sweep = cutoff_sweep(&ModelParams::n4_reference(2.0), &[7, 8], 5.0)?;
    let dev = sweep.max_relative_deviation().unwrap_or(f64::NAN);
    Ok(vec![Check::below("n4_g2_cutoff_7_vs_8", dev, 0.02)])
}

fn verify_readout() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let truth = readout_truth(Preset::N4Qm1G2, &Overrides::default(), 2, 3)?;
    let model = SidebandModel::with_defaults(choose_n_max(&truth, N_MAX_THRESHOLD))?;
    let times = model.default_times();
    let curve = synthesize_signal(&truth, &model, &times)?;
    let exact = ReadoutDataset::new(times.clone(), 1000, curve.clone(), None)?;
    let fit = fit_populations(&exact, &model, Weighting::Unweighted)?;
    out.push(Check::below("noiseless_roundtrip", fit_error(&truth, &fit.populations), 1e-4));
    let seeds = 20;
    let mut hits = 0;
    for seed in 0..seeds {
        let ds = sample_shots(&curve, &times, 1000, seed)?;
        if fit_error(&truth, &fit_populations(&ds, &model, Weighting::Unweighted)?.populations) <= 0.05 {
            hits += 1;
        }
    }
    out.push(Check::above("shot_noise_roundtrip_fraction", hits as f64 / seeds as f64, 0.9));
    Ok(out)
}
