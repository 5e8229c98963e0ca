//! Command implementations. Each returns a serializable report; printing and
//! exit codes are left to the binary.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Complex, DMatrix};
use riskconv_core::block::{build_block_model, tau_n, TauOptions, Thresholds};
use riskconv_core::bounds::{
    bound_search, check_initial_condition, default_rho_grid, linspace, GainGrid, ObserverBound,
};
use riskconv_core::cone::{contraction_bound, SymMatrix};
use riskconv_core::riccati::{
    breakdown_search, fixed_point, iterate_trajectory, FixedPointOptions, FixedPointResult,
    InitialPolicy, RiccatiStep, StepStatus,
};
use riskconv_core::state_space::{is_observable, is_reachable, StateSpaceModel};
use serde::Serialize;

use crate::error::{exit, CliError, Result};
use crate::model_file::{read_model, read_sym_matrix, rows_of};
use crate::table::{status_label, write_trajectory};

fn eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    Ok(m.eigenvalues()?)
}

fn complex_pairs(z: &[Complex<f64>]) -> Vec<[f64; 2]> {
    z.iter().map(|c| [c.re, c.im]).collect()
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Initial Riccati iterate for `trajectory` and `fixed-point`.
#[derive(Debug, Clone, PartialEq)]
pub enum P0Choice {
    Identity,
    /// `Σ_ρ` of the observer bound selected by [`BoundChoice`].
    Sigma,
    File(PathBuf),
}

impl FromStr for P0Choice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "identity" => P0Choice::Identity,
            "sigma" => P0Choice::Sigma,
            "" => return Err("empty --p0".into()),
            path => P0Choice::File(PathBuf::from(path)),
        })
    }
}

impl P0Choice {
    fn label(&self) -> String {
        match self {
            P0Choice::Identity => "identity".into(),
            P0Choice::Sigma => "sigma".into(),
            P0Choice::File(p) => p.display().to_string(),
        }
    }
}

/// Which observer bound to use where `Σ_ρ` or `β_ρ` is needed: an explicit
/// `(G, ρ)`, or the result of a default-grid `bound_search`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundChoice {
    /// Entries of `G` in column-major order.
    pub gain: Option<Vec<f64>>,
    pub rho: Option<f64>,
}

impl BoundChoice {
    pub fn resolve(&self, model: &StateSpaceModel) -> Result<ObserverBound> {
        match (&self.gain, self.rho) {
            (Some(g), Some(rho)) => {
                let (n, p) = (model.n(), model.p());
                if g.len() != n * p {
                    return Err(CliError::Input(format!(
                        "--gain needs {} entries (n x p, column-major), got {}",
                        n * p,
                        g.len()
                    )));
                }
                Ok(ObserverBound::new(model, DMatrix::from_column_slice(n, p, g), rho)?)
            }
            (None, None) => Ok(bound_search(
                model,
                &default_rho_grid(),
                &GainGrid::default_for(model)?,
                true,
            )?),
            _ => Err(CliError::Input("--gain and --rho must be given together".into())),
        }
    }
}

fn initial_matrix(
    model: &StateSpaceModel,
    choice: &P0Choice,
    bound: &BoundChoice,
) -> Result<(SymMatrix, Option<ObserverBound>)> {
    match choice {
        P0Choice::Identity => Ok((SymMatrix::identity(model.n()), None)),
        P0Choice::Sigma => {
            let b = bound.resolve(model)?;
            Ok((b.sigma.clone(), Some(b)))
        }
        P0Choice::File(path) => {
            let p = read_sym_matrix(path)?;
            if p.dim() != model.n() {
                return Err(CliError::Input(format!(
                    "{}: P0 is {d}x{d}, model has n = {n}",
                    path.display(),
                    d = p.dim(),
                    n = model.n()
                )));
            }
            Ok((p, None))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub gain: Vec<Vec<f64>>,
    pub rho: f64,
    pub spectral_radius: f64,
    pub sigma: Vec<Vec<f64>>,
    pub sigma_eigenvalues: Vec<f64>,
    pub beta: f64,
}

impl BoundReport {
    pub fn new(b: &ObserverBound) -> Result<Self> {
        Ok(Self {
            gain: rows_of(&b.gain),
            rho: b.rho,
            spectral_radius: b.spectral_radius,
            sigma: rows_of(b.sigma.as_matrix()),
            sigma_eigenvalues: eigenvalues(&b.sigma)?,
            beta: b.beta,
        })
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "observer gain G  {:?}", self.gain)?;
        writeln!(f, "rho              {:.6}", self.rho)?;
        writeln!(f, "r(A - GC)        {:.6}", self.spectral_radius)?;
        writeln!(f, "Sigma_rho        {:?}", self.sigma)?;
        writeln!(f, "eig(Sigma_rho)   {:?}", self.sigma_eigenvalues)?;
        writeln!(f, "beta_rho         {:.6e}", self.beta)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub block_len: usize,
    /// `null` when `θ_N` is infinite.
    pub theta_n: Option<f64>,
    pub tau_n: f64,
    pub tau_is_capped: bool,
    pub bracket: [f64; 2],
}

impl From<&Thresholds> for ThresholdReport {
    fn from(t: &Thresholds) -> Self {
        Self {
            block_len: t.block_len,
            theta_n: finite_or_none(t.theta_n),
            tau_n: t.tau_n,
            tau_is_capped: t.tau_is_capped,
            bracket: [t.bracket.0, t.bracket.1],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub reachable: bool,
    pub observable: bool,
}

impl ModelSummary {
    pub fn new(model: &StateSpaceModel) -> Self {
        Self {
            n: model.n(),
            m: model.m(),
            p: model.p(),
            q: model.q(),
            reachable: is_reachable(model),
            observable: is_observable(model),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub model: ModelSummary,
    pub thresholds: ThresholdReport,
    pub bound: BoundReport,
    pub theta: Option<f64>,
    /// `θ < τ_N`.
    pub below_tau: Option<bool>,
    /// `θ <= β_ρ`.
    pub within_beta: Option<bool>,
    pub satisfied: Option<bool>,
    /// Contraction bound of the `N`-block map at θ (or 0), when `Ω_N^θ ≻ 0`.
    pub contraction_bound: Option<f64>,
}

impl AnalysisReport {
    pub fn exit_code(&self) -> i32 {
        match self.satisfied {
            Some(false) => exit::DOMAIN,
            _ => exit::OK,
        }
    }
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.model;
        writeln!(f, "model            n={} m={} p={} q={}", m.n, m.m, m.p, m.q)?;
        writeln!(f, "reachable        {}", m.reachable)?;
        writeln!(f, "observable       {}", m.observable)?;
        let t = &self.thresholds;
        match t.theta_n {
            Some(v) => writeln!(f, "theta_{}          {v:.6e}", t.block_len)?,
            None => writeln!(f, "theta_{}          inf", t.block_len)?,
        }
        let capped = if t.tau_is_capped { " (capped)" } else { "" };
        writeln!(f, "tau_{}            {:.6e}{capped}", t.block_len, t.tau_n)?;
        write!(f, "{}", self.bound)?;
        if let Some(c) = self.contraction_bound {
            writeln!(f, "contraction      {c:.6}")?;
        }
        if let (Some(theta), Some(bt), Some(wb)) = (self.theta, self.below_tau, self.within_beta) {
            writeln!(f, "theta            {theta:.6e}")?;
            writeln!(f, "theta < tau_N    {bt}")?;
            writeln!(f, "theta <= beta    {wb}")?;
        }
        Ok(())
    }
}

pub fn analyze(
    model_path: &Path,
    block_len: Option<usize>,
    theta: Option<f64>,
    bound: &BoundChoice,
) -> Result<AnalysisReport> {
    let model = read_model(model_path)?;
    if let Some(t) = theta {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(CliError::Input("--theta must be finite and nonnegative".into()));
        }
    }
    let block_len = block_len.unwrap_or(model.n());
    let thresholds = tau_n(&model, block_len, TauOptions::default())?;
    let ob = bound.resolve(&model)?;
    let at = theta.unwrap_or(0.0);
    let contraction = match build_block_model(&model, block_len, at) {
        Ok(b) if matches!(b.omega.lambda_min(), Ok(l) if l > 0.0) => {
            Some(contraction_bound(&b.alpha, &b.omega, &b.w)?)
        }
        Ok(_) | Err(riskconv_core::Error::AboveThetaN { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let below_tau = theta.map(|t| t < thresholds.tau_n);
    let within_beta = theta.map(|t| t <= ob.beta);
    Ok(AnalysisReport {
        model: ModelSummary::new(&model),
        thresholds: ThresholdReport::from(&thresholds),
        bound: BoundReport::new(&ob)?,
        theta,
        below_tau,
        within_beta,
        satisfied: below_tau.zip(within_beta).map(|(a, b)| a && b),
        contraction_bound: contraction,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub status: &'static str,
    pub lambda_p: Vec<f64>,
    pub lambda_v: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryReport {
    pub theta: f64,
    pub p0: String,
    /// Whether `(θ, P_0)` is covered by the observer bound; only for `--p0 sigma`.
    pub admissible: Option<bool>,
    pub first_violation: Option<usize>,
    pub steps: Vec<StepRecord>,
    #[serde(skip)]
    pub raw: Vec<RiccatiStep>,
    #[serde(skip)]
    pub n: usize,
}

impl TrajectoryReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        write_trajectory(out, &self.raw, self.n)
    }
}

impl fmt::Display for TrajectoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "theta {:.6e}, P0 {}, {} steps", self.theta, self.p0, self.steps.len())?;
        if let Some(a) = self.admissible {
            writeln!(f, "admissible (P0 <= Sigma, theta <= beta): {a}")?;
        }
        match self.first_violation {
            Some(t) => writeln!(f, "first violation at t = {t}"),
            None => writeln!(f, "no violation"),
        }
    }
}

pub fn trajectory(
    model_path: &Path,
    theta: f64,
    p0: &P0Choice,
    steps: usize,
    out: Option<&Path>,
    bound: &BoundChoice,
) -> Result<TrajectoryReport> {
    let model = read_model(model_path)?;
    let (start, ob) = initial_matrix(&model, p0, bound)?;
    let raw = iterate_trajectory(&model, theta, &start, steps)?;
    let report = TrajectoryReport {
        theta,
        p0: p0.label(),
        admissible: ob.map(|b| check_initial_condition(&model, theta, &start, &b).admissible),
        first_violation: raw.iter().find(|s| s.status != StepStatus::Ok).map(|s| s.t),
        steps: raw
            .iter()
            .map(|s| StepRecord {
                t: s.t,
                status: status_label(s.status),
                lambda_p: s.lambda_p.clone(),
                lambda_v: s.lambda_v.clone(),
            })
            .collect(),
        n: model.n(),
        raw,
    };
    if let Some(path) = out {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        report.write_csv(BufWriter::new(file))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    pub theta: f64,
    pub iterations: usize,
    pub final_step_distance: f64,
    pub p_star: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub validity_eigenvalues: Vec<f64>,
    pub gain: Vec<Vec<f64>>,
    /// `[re, im]` pairs.
    pub closed_loop_eigenvalues: Vec<[f64; 2]>,
    pub closed_loop_spectral_radius: f64,
    pub are_residual: f64,
}

impl FixedPointReport {
    pub fn new(theta: f64, r: &FixedPointResult) -> Result<Self> {
        Ok(Self {
            theta,
            iterations: r.iterations,
            final_step_distance: r.final_step_distance,
            p_star: rows_of(r.p_star.as_matrix()),
            eigenvalues: eigenvalues(&r.p_star)?,
            validity_eigenvalues: eigenvalues(&r.validity)?,
            gain: rows_of(&r.gain),
            closed_loop_eigenvalues: complex_pairs(&r.closed_loop_eigenvalues),
            closed_loop_spectral_radius: r.closed_loop_spectral_radius,
            are_residual: r.are_residual,
        })
    }
}

impl fmt::Display for FixedPointReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "theta            {:.6e}", self.theta)?;
        writeln!(f, "iterations       {}", self.iterations)?;
        writeln!(f, "eig(P)           {:?}", self.eigenvalues)?;
        writeln!(f, "eig(V)           {:?}", self.validity_eigenvalues)?;
        writeln!(f, "gain K           {:?}", self.gain)?;
        writeln!(f, "eig(A - KC)      {:?}", self.closed_loop_eigenvalues)?;
        writeln!(f, "r(A - KC)        {:.6}", self.closed_loop_spectral_radius)?;
        writeln!(f, "ARE residual     {:.3e}", self.are_residual)
    }
}

pub fn fixed_point_cmd(
    model_path: &Path,
    theta: f64,
    p0: &P0Choice,
    opts: FixedPointOptions,
    out: Option<&Path>,
    bound: &BoundChoice,
) -> Result<FixedPointReport> {
    let model = read_model(model_path)?;
    let (start, _) = initial_matrix(&model, p0, bound)?;
    let result = fixed_point(&model, theta, &start, opts)?;
    let report = FixedPointReport::new(theta, &result)?;
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyName {
    IdentityScaled,
    SigmaBound,
}

impl FromStr for PolicyName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "identity-scaled" => Ok(PolicyName::IdentityScaled),
            "sigma-bound" => Ok(PolicyName::SigmaBound),
            other => Err(format!("unknown policy {other:?}; use identity-scaled or sigma-bound")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BreakdownReport {
    pub theta: f64,
    pub bracket: [f64; 2],
    pub found: bool,
    pub policy: &'static str,
    pub p0: Vec<Vec<f64>>,
    pub evaluations: usize,
    pub fixed_point_tol: f64,
    pub max_iter: usize,
}

impl fmt::Display for BreakdownReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.found {
            writeln!(f, "breakdown        {:.6e}", self.theta)?;
            writeln!(f, "bracket          [{:.9e}, {:.9e}]", self.bracket[0], self.bracket[1])?;
        } else {
            writeln!(f, "no breakdown up to {:.6e}", self.theta)?;
        }
        writeln!(f, "policy           {}", self.policy)?;
        writeln!(f, "evaluations      {} (max_iter {})", self.evaluations, self.max_iter)
    }
}

pub fn breakdown(
    model_path: &Path,
    lo: f64,
    hi: Option<f64>,
    policy: PolicyName,
    tol: f64,
    opts: FixedPointOptions,
    bound: &BoundChoice,
) -> Result<BreakdownReport> {
    let model = read_model(model_path)?;
    let policy = match policy {
        PolicyName::IdentityScaled => InitialPolicy::IdentityScaled,
        PolicyName::SigmaBound => InitialPolicy::SigmaBound(bound.resolve(&model)?.sigma),
    };
    let r = breakdown_search(&model, lo, hi, &policy, tol, opts)?;
    Ok(BreakdownReport {
        theta: r.theta,
        bracket: [r.bracket.0, r.bracket.1],
        found: r.found,
        policy: r.policy,
        p0: rows_of(policy.initial(&model).as_matrix()),
        evaluations: r.evaluations,
        fixed_point_tol: r.fixed_point_options.tol,
        max_iter: r.fixed_point_options.max_iter,
    })
}

/// `START:STEP:STOP` (inclusive) or a comma-separated list.
pub fn parse_rho_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Input(format!("bad --rho-grid {spec:?}; use START:STEP:STOP or a,b,c"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let (start, step, stop) = (v[0], v[1], v[2]);
        if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|k| start + step * k as f64).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

/// `LO:HI:COUNT`, applied to every entry of `G`.
pub fn parse_gain_grid(spec: &str, entries: usize) -> Result<GainGrid> {
    let bad = || CliError::Input(format!("bad --gain-grid {spec:?}; use LO:HI:COUNT"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if count == 0 || !(hi >= lo) {
        return Err(bad());
    }
    Ok(GainGrid {
        axes: vec![linspace(lo, hi, count); entries],
    })
}

pub fn bound_search_cmd(
    model_path: &Path,
    rho_grid: Option<&str>,
    gain_grid: Option<&str>,
    refine: bool,
) -> Result<BoundReport> {
    let model = read_model(model_path)?;
    let rhos = match rho_grid {
        Some(s) => parse_rho_grid(s)?,
        None => default_rho_grid(),
    };
    let gains = match gain_grid {
        Some(s) => parse_gain_grid(s, model.n() * model.p())?,
        None => GainGrid::default_for(&model)?,
    };
    BoundReport::new(&bound_search(&model, &rhos, &gains, refine)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}
