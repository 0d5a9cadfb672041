//! Red-sideband phonon readout: signal synthesis, shot sampling, constrained
//! population fit and parametric bootstrap.
//!
//! Probe signal for populations `P_n`:
//! `P_1(t) = Σ_{n≥1} P_n sin²(√n Ω₁ t / 2) e^{-γ₁ t}`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::format_sig;

const KKT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SidebandModel {
    pub omega1: f64,
    pub gamma1: f64,
    pub n_max: usize,
}

impl SidebandModel {
    pub fn new(omega1: f64, gamma1: f64, n_max: usize) -> Result<Self> {
        if !(omega1 > 0.0 && omega1.is_finite()) {
            return Err(Error::InvalidParams(format!("Rabi frequency must be positive, got {omega1}")));
        }
        if !(gamma1 >= 0.0 && gamma1.is_finite()) {
            return Err(Error::InvalidParams(format!("decay constant must be non-negative, got {gamma1}")));
        }
        if n_max == 0 {
            return Err(Error::InvalidParams("n_max must be at least 1".into()));
        }
        Ok(SidebandModel { omega1, gamma1, n_max })
    }

    /// Ω₁ = 1, γ₁ = 0.01.
    pub fn with_defaults(n_max: usize) -> Result<Self> {
        Self::new(1.0, 0.01, n_max)
    }

    pub fn rabi(&self, n: usize) -> f64 {
        (n as f64).sqrt() * self.omega1
    }

    /// sin²(Ω_n t/2) e^{-γ t}
    pub fn basis(&self, n: usize, t: f64) -> f64 {
        (self.rabi(n) * t / 2.0).sin().powi(2) * (-self.gamma1 * t).exp()
    }

    /// 120 uniform points over [0, 6·2π/Ω₁].
    pub fn default_times(&self) -> Vec<f64> {
        uniform_times(120, 6.0 * std::f64::consts::TAU / self.omega1)
    }

    fn design(&self, times: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(times.len(), self.n_max, |r, c| self.basis(c + 1, times[r]))
    }
}

pub fn uniform_times(points: usize, t_max: f64) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect(),
    }
}

/// Smallest n_max ≥ 1 such that every level above it holds at most `threshold`.
pub fn choose_n_max(populations: &[f64], threshold: f64) -> usize {
    populations.iter().rposition(|&p| p > threshold).unwrap_or(1).max(1)
}

fn check_populations(p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| x < -1e-12 || !x.is_finite()) {
        return Err(Error::InvalidParams("populations must be non-negative".into()));
    }
    if p.iter().skip(1).sum::<f64>() > 1.0 + 1e-9 {
        return Err(Error::InvalidParams("excited populations sum above one".into()));
    }
    Ok(())
}

/// Ideal excited-state probability; `populations[n]` is P_n (P_0 is ignored).
pub fn synthesize_signal(populations: &[f64], model: &SidebandModel, times: &[f64]) -> Result<Vec<f64>> {
    check_populations(populations)?;
    Ok(times
        .iter()
        .map(|&t| populations.iter().enumerate().skip(1).map(|(n, &p)| p * model.basis(n, t)).sum())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReadoutDataset {
    pub times: Vec<f64>,
    pub shots: u64,
    pub fractions: Vec<f64>,
    pub seed: Option<u64>,
}

impl ReadoutDataset {
    pub fn new(times: Vec<f64>, shots: u64, fractions: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        if times.len() != fractions.len() {
            return Err(Error::DimensionMismatch(format!("{} times for {} fractions", times.len(), fractions.len())));
        }
        if shots == 0 {
            return Err(Error::InvalidParams("shots must be positive".into()));
        }
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidParams("excited fractions must lie in [0, 1]".into()));
        }
        Ok(ReadoutDataset { times, shots, fractions, seed })
    }

    /// Rows `t,excited_fraction,shots`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,excited_fraction,shots")?;
        for (t, f) in self.times.iter().zip(&self.fractions) {
            writeln!(w, "{},{},{}", format_sig(*t), format_sig(*f), self.shots)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let (mut times, mut fr) = (Vec::new(), Vec::new());
        let mut shots: Option<u64> = None;
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (k == 0 && line.starts_with('t')) {
                continue;
            }
            let parse_err = |m: &str| Error::Parse { line: k + 1, message: m.to_string() };
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(parse_err("expected `t,excited_fraction,shots`"));
            }
            times.push(cols[0].parse::<f64>().map_err(|_| parse_err("bad time"))?);
            fr.push(cols[1].parse::<f64>().map_err(|_| parse_err("bad fraction"))?);
            let s: u64 = cols[2].parse().map_err(|_| parse_err("bad shot count"))?;
            if shots.is_some_and(|x| x != s) {
                return Err(parse_err("shot count must be the same on every row"));
            }
            shots = Some(s);
        }
        ReadoutDataset::new(times, shots.unwrap_or(1), fr, None)
    }
}

/// Binomial(shots, p(t))/shots per point, reproducible for a given seed.
pub fn sample_shots(curve: &[f64], times: &[f64], shots: u64, seed: u64) -> Result<ReadoutDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fractions = sample_with(&mut rng, curve, shots)?;
    ReadoutDataset::new(times.to_vec(), shots, fractions, Some(seed))
}

fn sample_with(rng: &mut ChaCha8Rng, curve: &[f64], shots: u64) -> Result<Vec<f64>> {
    curve
        .iter()
        .map(|&p| {
            let p = p.clamp(0.0, 1.0);
            let d = Binomial::new(shots, p).map_err(|e| Error::InvalidParams(e.to_string()))?;
            Ok(d.sample(rng) as f64 / shots as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Residuals scaled by the inverse binomial standard error.
    Binomial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub residual_norm: f64,
    /// Ratio of extreme eigenvalues of the normal matrix.
    pub condition: f64,
    pub iterations: usize,
    pub sum_constraint_active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationFit {
    /// P_0 … P_{n_max}; non-negative and summing to one.
    pub populations: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

/// Least squares over P_1..P_{n_max} subject to P_n ≥ 0 and Σ P_n ≤ 1, with
/// P_0 = 1 − Σ P_n.
pub fn fit_populations(data: &ReadoutDataset, model: &SidebandModel, weighting: Weighting) -> Result<PopulationFit> {
    if data.times.len() < model.n_max {
        return Err(Error::InvalidParams(format!(
            "{} probe times cannot determine {} populations",
            data.times.len(),
            model.n_max
        )));
    }
    let mut a = model.design(&data.times);
    let mut y = DVector::from_column_slice(&data.fractions);
    if weighting == Weighting::Binomial {
        let floor = 1.0 / (data.shots as f64 + 2.0);
        for r in 0..y.len() {
            let f = y[r].clamp(floor, 1.0 - floor);
            let w = (data.shots as f64 / (f * (1.0 - f))).sqrt();
            a.row_mut(r).scale_mut(w);
            y[r] *= w;
        }
    }
    let q = a.transpose() * &a;
    let c = a.transpose() * &y;
    let eig = q.clone().symmetric_eigen();
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let (p, iterations, sum_active) = simplex_qp(&q, &c)?;
    let resid = (&a * &p - &y).norm();
    let excited: f64 = p.iter().sum();
    let mut populations = vec![(1.0 - excited).max(0.0)];
    populations.extend(p.iter().copied());
    Ok(PopulationFit {
        populations,
        diagnostics: FitDiagnostics { residual_norm: resid, condition, iterations, sum_constraint_active: sum_active },
    })
}

/// Primal active-set method for min ½xᵀQx − cᵀx, x ≥ 0, Σx ≤ 1, started at x = 0.
fn simplex_qp(q: &DMatrix<f64>, c: &DVector<f64>) -> Result<(DVector<f64>, usize, bool)> {
    let n = c.len();
    let mut x = DVector::<f64>::zeros(n);
    let mut bound = vec![true; n];
    let mut sum_active = false;
    let scale = q.diagonal().max().max(1e-300);
    let max_iter = 50 * (n + 1);
    for iter in 0..max_iter {
        let free: Vec<usize> = (0..n).filter(|&i| !bound[i]).collect();
        let m = free.len() + usize::from(sum_active);
        // Equality-constrained minimizer on the working set.
        let mut target = DVector::<f64>::zeros(n);
        let mut nu = 0.0;
        if m > 0 {
            let mut k = DMatrix::<f64>::zeros(m, m);
            let mut rhs = DVector::<f64>::zeros(m);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    k[(r, s)] = q[(i, j)];
                }
                rhs[r] = c[i];
                if sum_active {
                    k[(r, m - 1)] = 1.0;
                    k[(m - 1, r)] = 1.0;
                }
            }
            if sum_active {
                rhs[m - 1] = 1.0;
            }
            let sol = k
                .clone()
                .lu()
                .solve(&rhs)
                .or_else(|| k.pseudo_inverse(1e-14).ok().map(|pi| pi * &rhs))
                .ok_or(Error::NonConvergence { residual: f64::NAN })?;
            for (r, &i) in free.iter().enumerate() {
                target[i] = sol[r];
            }
            if sum_active {
                nu = sol[m - 1];
            }
        }
        let dir = &target - &x;
        if dir.amax() > 1e-14 {
            // Longest feasible step toward the subproblem minimizer.
            let mut alpha = 1.0;
            let mut block: Option<Option<usize>> = None;
            for &i in &free {
                if dir[i] < 0.0 {
                    let a = -x[i] / dir[i];
                    if a < alpha {
                        alpha = a;
                        block = Some(Some(i));
                    }
                }
            }
            if !sum_active {
                let ds: f64 = dir.sum();
                if ds > 0.0 {
                    let a = (1.0 - x.sum()) / ds;
                    if a < alpha {
                        alpha = a;
                        block = Some(None);
                    }
                }
            }
            x += dir * alpha.max(0.0);
            match block {
                Some(Some(i)) => {
                    bound[i] = true;
                    x[i] = 0.0;
                }
                Some(None) => sum_active = true,
                None => {}
            }
            continue;
        }
        // Multipliers: gradient g = Qx − c; bound i has μ_i = g_i + ν.
        let g = q * &x - c;
        // With the sum constraint active, g_F = −ν on free variables.
        let nu_sum = if sum_active { nu } else { 0.0 };
        let mut worst: Option<(f64, Option<usize>)> = None;
        for i in 0..n {
            if bound[i] {
                let mu = g[i] + nu_sum;
                if mu < -KKT_TOLERANCE * scale && worst.is_none_or(|(w, _)| mu < w) {
                    worst = Some((mu, Some(i)));
                }
            }
        }
        if sum_active && nu_sum < -KKT_TOLERANCE * scale && worst.is_none_or(|(w, _)| nu_sum < w) {
            worst = Some((nu_sum, None));
        }
        match worst {
            None => return Ok((x.map(|v| v.max(0.0)), iter + 1, sum_active)),
            Some((_, Some(i))) => bound[i] = false,
            Some((_, None)) => sum_active = false,
        }
    }
    Err(Error::NonConvergence { residual: f64::NAN })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub p16: Vec<f64>,
    pub p84: Vec<f64>,
    /// Set when fewer than two resamples make the spread meaningless.
    pub degenerate: bool,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Parametric binomial bootstrap: each resample redraws every point from
/// Binomial(shots, observed fraction) and refits. Resample `r` uses ChaCha
/// stream `r` of `seed`, so results do not depend on scheduling.
pub fn bootstrap(
    data: &ReadoutDataset,
    model: &SidebandModel,
    resamples: usize,
    seed: u64,
    weighting: Weighting,
) -> Result<BootstrapSummary> {
    if resamples == 0 {
        return Err(Error::InvalidParams("at least one bootstrap resample is required".into()));
    }
    let fits: Vec<Vec<f64>> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let fr = sample_with(&mut rng, &data.fractions, data.shots)?;
            let ds = ReadoutDataset::new(data.times.clone(), data.shots, fr, None)?;
            Ok(fit_populations(&ds, model, weighting)?.populations)
        })
        .collect::<Result<_>>()?;
    let k = model.n_max + 1;
    let (mut mean, mut std, mut p16, mut p84) = (vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    for n in 0..k {
        let mut col: Vec<f64> = fits.iter().map(|f| f[n]).collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        mean[n] = m;
        std[n] = if col.len() > 1 {
            (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        col.sort_by(f64::total_cmp);
        p16[n] = percentile(&col, 0.16);
        p84[n] = percentile(&col, 0.84);
    }
    Ok(BootstrapSummary { resamples, mean, std, p16, p84, degenerate: resamples < 2 })
}

/// Rows `n,P_n,sigma_n`.
pub fn write_fit_csv<W: Write>(mut w: W, fit: &PopulationFit, sigma: Option<&[f64]>) -> Result<()> {
    writeln!(w, "n,P_n,sigma_n")?;
    for (n, p) in fit.populations.iter().enumerate() {
        let s = sigma.and_then(|s| s.get(n)).copied().unwrap_or(0.0);
        writeln!(w, "{n},{},{}", format_sig(*p), format_sig(s))?;
    }
    Ok(())
}
