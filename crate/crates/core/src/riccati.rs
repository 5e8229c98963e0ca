//! Risk-neutral and risk-sensitive Riccati maps and their iteration.
//!
//! `r^θ(P) = A [P^{-1} + C^T C - θ D^T D]^{-1} A^T + B B^T`, with `θ = 0`
//! giving the Kalman filter recursion. The iteration is only meaningful while
//! `V = (P^{-1} - θ D^T D)^{-1}` stays positive definite; losing that is
//! breakdown of the filter, and it is reported rather than patched over.

use alloc::boxed::Box;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix};
use num_traits::Float;

use crate::block::{theta_n, BlockModel};
use crate::bounds::{eigenvalues_general, modulus};
use crate::cone::{riemann_distance, spd_inverse, spectral, SymMatrix};
use crate::error::{Error, Result};
use crate::state_space::StateSpaceModel;

/// Smallest eigenvalue an inner matrix must exceed before it is inverted.
pub const CONE_GATE: f64 = 1e-12;

fn gated_inverse(m: &SymMatrix, on_fail: impl Fn(f64) -> Error) -> Result<SymMatrix> {
    let s = spectral(m)?;
    let lambda_min = s.lambda_min();
    if !(lambda_min > CONE_GATE) {
        return Err(on_fail(lambda_min));
    }
    Ok(s.map(Float::recip))
}

fn check_state_dim(model: &StateSpaceModel, p: &SymMatrix) -> Result<()> {
    if p.dim() != model.n() {
        return Err(Error::Dimension {
            context: "Riccati iterate",
            expected: (model.n(), model.n()),
            found: (p.dim(), p.dim()),
        });
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if !theta.is_finite() {
        return Err(Error::invalid("theta must be finite"));
    }
    Ok(())
}

fn process_noise(model: &StateSpaceModel) -> SymMatrix {
    SymMatrix::gram(model.b())
}

/// Kalman filter Riccati map `A [P^{-1} + C^T C]^{-1} A^T + B B^T`.
pub fn riccati_map(model: &StateSpaceModel, p: &SymMatrix) -> Result<SymMatrix> {
    rs_riccati_map(model, 0.0, p)
}

/// Risk-sensitive Riccati map `A [P^{-1} + C^T C - θ D^T D]^{-1} A^T + B B^T`.
pub fn rs_riccati_map(model: &StateSpaceModel, theta: f64, p: &SymMatrix) -> Result<SymMatrix> {
    check_state_dim(model, p)?;
    check_theta(theta)?;
    let p_inv = spd_inverse(p)?;
    let ctc = SymMatrix::symmetrize(model.c().transpose() * model.c());
    let dtd = SymMatrix::symmetrize(model.d().transpose() * model.d());
    let inner = p_inv.add(&ctc).sub(&dtd.scale(theta));
    let inner_inv = gated_inverse(&inner, |lambda_min| Error::LeavesCone { lambda_min })?;
    Ok(inner_inv.congruence(model.a()).add(&process_noise(model)))
}

/// Filter gain, innovation variance and validity matrix at one Riccati iterate.
#[derive(Debug, Clone)]
pub struct RsGain {
    /// `K = A V C^T R_ν^{-1}`, `n x p`.
    pub gain: DMatrix<f64>,
    /// `R_ν = C V C^T + I`.
    pub innovation_var: SymMatrix,
    /// `V = (P^{-1} - θ D^T D)^{-1}`.
    pub validity: SymMatrix,
}

/// Kalman gain `K = A P C^T R_ν^{-1}` and innovation variance `R_ν = C P C^T + I`.
pub fn kalman_gain(model: &StateSpaceModel, p: &SymMatrix) -> Result<(DMatrix<f64>, SymMatrix)> {
    let g = rs_gain(model, 0.0, p)?;
    Ok((g.gain, g.innovation_var))
}

/// Risk-sensitive gain. Fails with [`Error::ValidityViolated`] when
/// `P^{-1} - θ D^T D` is not positive definite.
pub fn rs_gain(model: &StateSpaceModel, theta: f64, p: &SymMatrix) -> Result<RsGain> {
    check_state_dim(model, p)?;
    check_theta(theta)?;
    let p_inv = spd_inverse(p)?;
    let dtd = SymMatrix::symmetrize(model.d().transpose() * model.d());
    let v_inv = p_inv.sub(&dtd.scale(theta));
    let validity = gated_inverse(&v_inv, |lambda_min| Error::ValidityViolated { lambda_min })?;
    let innovation_var = validity
        .congruence(model.c())
        .add(&SymMatrix::identity(model.p()));
    let r_inv = spd_inverse(&innovation_var)?;
    let gain = model.a() * validity.as_matrix() * model.c().transpose() * r_inv.as_matrix();
    Ok(RsGain {
        gain,
        innovation_var,
        validity,
    })
}

/// `(A - KC) V (A - KC)^T + B B^T + K K^T` with `K`, `V` from [`rs_gain`].
pub fn rs_riccati_gain_form(
    model: &StateSpaceModel,
    theta: f64,
    p: &SymMatrix,
) -> Result<SymMatrix> {
    let g = rs_gain(model, theta, p)?;
    let closed = model.a() - &g.gain * model.c();
    Ok(g
        .validity
        .congruence(&closed)
        .add(&process_noise(model))
        .add(&SymMatrix::gram(&g.gain)))
}

/// The Riccati update written around an arbitrary observer gain `G`:
///
/// `F V F^T + G G^T + B B^T - X R_ν^{-1} X^T` with `F = A - G C` and
/// `X = F V C^T - G`. The value does not depend on `G`.
pub fn rs_riccati_observer_form(
    model: &StateSpaceModel,
    theta: f64,
    p: &SymMatrix,
    observer_gain: &DMatrix<f64>,
) -> Result<SymMatrix> {
    if observer_gain.shape() != (model.n(), model.p()) {
        return Err(Error::Dimension {
            context: "observer gain G",
            expected: (model.n(), model.p()),
            found: observer_gain.shape(),
        });
    }
    let g = rs_gain(model, theta, p)?;
    let f = model.a() - observer_gain * model.c();
    let x = &f * g.validity.as_matrix() * model.c().transpose() - observer_gain;
    let r_inv = spd_inverse(&g.innovation_var)?;
    Ok(g
        .validity
        .congruence(&f)
        .add(&SymMatrix::gram(observer_gain))
        .add(&process_noise(model))
        .sub(&r_inv.congruence(&x)))
}

/// Block-update map `α [P^{-1} + Ω]^{-1} α^T + W`.
pub fn block_riccati_map(block: &BlockModel, p: &SymMatrix) -> Result<SymMatrix> {
    if p.dim() != block.alpha.nrows() {
        return Err(Error::Dimension {
            context: "block Riccati iterate",
            expected: block.alpha.shape(),
            found: (p.dim(), p.dim()),
        });
    }
    let inner = spd_inverse(p)?.add(&block.omega);
    let inner_inv = gated_inverse(&inner, |lambda_min| Error::LeavesCone { lambda_min })?;
    Ok(inner_inv.congruence(&block.alpha).add(&block.w))
}

/// Outcome of one trajectory step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Ok,
    /// `V_t` is not positive definite.
    ValidityViolated,
    /// `P_t` itself left the cone.
    NotPositiveDefinite,
}

#[derive(Debug, Clone)]
pub struct RiccatiStep {
    pub t: usize,
    pub p: SymMatrix,
    pub status: StepStatus,
    /// Eigenvalues of `P_t`, decreasing.
    pub lambda_p: Vec<f64>,
    /// `λ_min(P_t^{-1} - θ D^T D)` when computable.
    pub validity_margin: Option<f64>,
    /// Eigenvalues of `V_t`, decreasing; absent on violation.
    pub lambda_v: Option<Vec<f64>>,
}

/// Runs `P_{t+1} = r^θ(P_t)` for `t = 0..steps`, recording the spectra of `P_t`
/// and `V_t`. Stops at the first step where `V_t` or `P_t` is not positive
/// definite; that step is included with its status set.
pub fn iterate_trajectory(
    model: &StateSpaceModel,
    theta: f64,
    p0: &SymMatrix,
    steps: usize,
) -> Result<Vec<RiccatiStep>> {
    check_state_dim(model, p0)?;
    check_theta(theta)?;
    let mut out = Vec::with_capacity(steps + 1);
    let mut p = p0.clone();
    for t in 0..=steps {
        let spec = spectral(&p)?;
        let lambda_p: Vec<f64> = spec.eigenvalues.iter().copied().collect();
        if !(spec.lambda_min() > 0.0) {
            out.push(RiccatiStep {
                t,
                p,
                status: StepStatus::NotPositiveDefinite,
                lambda_p,
                validity_margin: None,
                lambda_v: None,
            });
            break;
        }
        let p_inv = spec.map(Float::recip);
        let dtd = SymMatrix::symmetrize(model.d().transpose() * model.d());
        let v_spec = spectral(&p_inv.sub(&dtd.scale(theta)))?;
        let margin = v_spec.lambda_min();
        if !(margin > CONE_GATE) {
            out.push(RiccatiStep {
                t,
                p,
                status: StepStatus::ValidityViolated,
                lambda_p,
                validity_margin: Some(margin),
                lambda_v: None,
            });
            break;
        }
        let lambda_v = v_spec.eigenvalues.iter().rev().map(|x| 1.0 / x).collect();
        let next = if t < steps {
            Some(rs_riccati_map(model, theta, &p)?)
        } else {
            None
        };
        out.push(RiccatiStep {
            t,
            p,
            status: StepStatus::Ok,
            lambda_p,
            validity_margin: Some(margin),
            lambda_v: Some(lambda_v),
        });
        match next {
            Some(n) => p = n,
            None => break,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    /// Stop once the Riemann distance between successive iterates drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub p_star: SymMatrix,
    pub iterations: usize,
    pub final_step_distance: f64,
    /// Limiting filter gain `K`.
    pub gain: DMatrix<f64>,
    pub innovation_var: SymMatrix,
    /// `V = (P^{-1} - θ D^T D)^{-1}` at the fixed point.
    pub validity: SymMatrix,
    /// Eigenvalues of `A - K C`.
    pub closed_loop_eigenvalues: Vec<Complex<f64>>,
    pub closed_loop_spectral_radius: f64,
    /// Frobenius residual of the algebraic Riccati equation.
    pub are_residual: f64,
}

/// Iterates `r^θ` from `p0` until successive iterates are within `opts.tol`
/// in Riemann distance.
///
/// Every iterate must keep `V_t` positive definite; otherwise the result is
/// [`Error::Breakdown`] carrying the last valid iterate.
pub fn fixed_point(
    model: &StateSpaceModel,
    theta: f64,
    p0: &SymMatrix,
    opts: FixedPointOptions,
) -> Result<FixedPointResult> {
    check_state_dim(model, p0)?;
    check_theta(theta)?;
    let breakdown = |step: usize, cause: Error, last: &SymMatrix| Error::Breakdown {
        step,
        cause: Box::new(cause),
        last_valid: Box::new(last.clone()),
    };
    rs_gain(model, theta, p0).map_err(|e| breakdown(0, e, p0))?;
    let mut p = p0.clone();
    let mut distance = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = rs_riccati_map(model, theta, &p).map_err(|e| breakdown(it, e, &p))?;
        let g = rs_gain(model, theta, &next).map_err(|e| breakdown(it, e, &p))?;
        distance = riemann_distance(&p, &next).map_err(|e| breakdown(it, e, &p))?;
        p = next;
        if distance < opts.tol {
            let report = are_report(model, &p, &g);
            return Ok(FixedPointResult {
                p_star: p,
                iterations: it,
                final_step_distance: distance,
                gain: g.gain,
                innovation_var: g.innovation_var,
                validity: g.validity,
                closed_loop_spectral_radius: report.closed_loop_spectral_radius,
                closed_loop_eigenvalues: report.closed_loop_eigenvalues,
                are_residual: report.residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        last_distance: distance,
    })
}

/// Residual of `P = (A-KC) V (A-KC)^T + B B^T + K K^T` and the spectrum of `A - KC`.
#[derive(Debug, Clone)]
pub struct AreReport {
    pub residual: f64,
    pub closed_loop_eigenvalues: Vec<Complex<f64>>,
    pub closed_loop_spectral_radius: f64,
}

fn are_report(model: &StateSpaceModel, p: &SymMatrix, g: &RsGain) -> AreReport {
    let closed = model.a() - &g.gain * model.c();
    let rhs = g
        .validity
        .congruence(&closed)
        .add(&process_noise(model))
        .add(&SymMatrix::gram(&g.gain));
    let eig = eigenvalues_general(&closed).unwrap_or_default();
    let radius = eig.iter().map(modulus).fold(0.0, f64::max);
    AreReport {
        residual: p.sub(&rhs).frobenius_norm(),
        closed_loop_eigenvalues: eig,
        closed_loop_spectral_radius: radius,
    }
}

pub fn verify_are(model: &StateSpaceModel, theta: f64, p: &SymMatrix) -> Result<AreReport> {
    let g = rs_gain(model, theta, p)?;
    let closed = model.a() - &g.gain * model.c();
    eigenvalues_general(&closed)?;
    Ok(are_report(model, p, &g))
}

/// How the breakdown search initializes each fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialPolicy {
    /// `trace(B B^T) / n * I`.
    IdentityScaled,
    /// A Lyapunov bound `Σ_ρ`, typically from [`crate::bounds::bound_search`].
    SigmaBound(SymMatrix),
}

impl InitialPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            InitialPolicy::IdentityScaled => "identity-scaled",
            InitialPolicy::SigmaBound(_) => "sigma-bound",
        }
    }

    pub fn initial(&self, model: &StateSpaceModel) -> SymMatrix {
        match self {
            InitialPolicy::IdentityScaled => {
                let n = model.n();
                let scale = model.b().norm_squared() / n as f64;
                SymMatrix::identity(n).scale(scale)
            }
            InitialPolicy::SigmaBound(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BreakdownResult {
    /// Midpoint of the final bracket, or the upper end when no breakdown was found.
    pub theta: f64,
    /// Largest θ known to succeed and smallest known to fail.
    pub bracket: (f64, f64),
    /// False when the fixed point still exists at the upper end of the range.
    pub found: bool,
    pub policy: &'static str,
    pub evaluations: usize,
    pub fixed_point_options: FixedPointOptions,
}

/// Bisects on "the fixed-point iteration converges with `V_t ≻ 0` along the
/// way and at the limit". Hitting `max_iter` counts as failure.
///
/// `theta_hi` defaults to `θ_n` (block length equal to the state dimension).
pub fn breakdown_search(
    model: &StateSpaceModel,
    theta_lo: f64,
    theta_hi: Option<f64>,
    policy: &InitialPolicy,
    tol: f64,
    opts: FixedPointOptions,
) -> Result<BreakdownResult> {
    let p0 = policy.initial(model);
    check_state_dim(model, &p0)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("breakdown tolerance must be positive"));
    }
    let hi = match theta_hi {
        Some(h) => h,
        None => {
            let t = theta_n(model, model.n())?;
            if !t.is_finite() {
                return Err(Error::invalid(
                    "theta_N is infinite for this model; supply an explicit upper bound",
                ));
            }
            t
        }
    };
    if !(hi > theta_lo) || !(theta_lo >= 0.0) {
        return Err(Error::invalid("breakdown search needs 0 <= theta_lo < theta_hi"));
    }
    let solves = |theta: f64| fixed_point(model, theta, &p0, opts).is_ok();
    let mut evaluations = 1;
    if !solves(theta_lo) {
        return Err(Error::invalid("fixed-point iteration already fails at theta_lo"));
    }
    evaluations += 1;
    if solves(hi) {
        return Ok(BreakdownResult {
            theta: hi,
            bracket: (hi, hi),
            found: false,
            policy: policy.name(),
            evaluations,
            fixed_point_options: opts,
        });
    }
    let (mut lo, mut hi) = (theta_lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        evaluations += 1;
        if solves(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(BreakdownResult {
        theta: 0.5 * (lo + hi),
        bracket: (lo, hi),
        found: true,
        policy: policy.name(),
        evaluations,
        fixed_point_options: opts,
    })
}
