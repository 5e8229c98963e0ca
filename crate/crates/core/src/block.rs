//! The N-block (downsampled) model and its θ-dependent Gramians.
//!
//! Collecting `N` observations before each update turns the Riccati map into
//! `α [P^{-1} + Ω]^{-1} α^T + W` with `Ω` and `W` the block observability and
//! reachability Gramians. With risk sensitivity the observation noise gains an
//! extra block whose inner-product matrix `K_N^θ` is indefinite; it is handled
//! through its block LDU factors so that nothing breaks down as `θ -> 0`.

use nalgebra::DMatrix;
use num_traits::Float;

use crate::cone::{spd_inverse, spectral, SymMatrix};
use crate::error::{Error, Result};
use crate::state_space::{
    impulse_toeplitz, observability_matrix, reachability_matrix, Output, StateSpaceModel,
};

/// Largest eigenvalues below this count as zero when computing `θ_N`.
pub const THETA_N_EIG_FLOOR: f64 = 1e-14;

/// All block-model matrices for a given block length and risk sensitivity.
#[derive(Debug, Clone)]
pub struct BlockModel {
    pub block_len: usize,
    pub theta: f64,
    /// `R_N`, `n x Nm`.
    pub reachability: DMatrix<f64>,
    /// `O_N`, `Np x n`.
    pub observability: DMatrix<f64>,
    /// `O_N^R`, `Nq x n`.
    pub risk_observability: DMatrix<f64>,
    /// `H_N`, `Np x Nm`.
    pub measured_toeplitz: DMatrix<f64>,
    /// `L_N`, `Nq x Nm`.
    pub risk_toeplitz: DMatrix<f64>,
    /// `K_N^θ`; absent at `θ = 0` where its lower-right block is unbounded.
    pub noise_gram: Option<SymMatrix>,
    /// Schur complement `S_N^θ`; absent at `θ = 0`.
    pub schur: Option<SymMatrix>,
    /// `(S_N^θ)^{-1}`, which is zero at `θ = 0`.
    pub schur_inv: SymMatrix,
    /// `Q_N^θ = [I + H^T H - θ L^T L]^{-1}`.
    pub residual_noise: SymMatrix,
    /// `J_N`.
    pub innovation_coupling: DMatrix<f64>,
    /// Risk-neutral `Ω_N`.
    pub omega_neutral: SymMatrix,
    /// `Ω_N^θ`.
    pub omega: SymMatrix,
    /// `W_N^θ`.
    pub w: SymMatrix,
    /// `α_N^θ`.
    pub alpha: DMatrix<f64>,
    /// `G_N^θ`, `Nm x Np`.
    pub gain: DMatrix<f64>,
    /// `G_N^{Rθ}`, `Nm x Nq`.
    pub risk_gain: DMatrix<f64>,
    /// `(I + H H^T)^{-1}`, kept for the LDU factors.
    measured_noise_inv: SymMatrix,
}

/// Block LDU factors of `K_N^θ`: `lower * diag(upper_left, schur) * lower^T`.
#[derive(Debug, Clone)]
pub struct LduFactors {
    pub lower: DMatrix<f64>,
    pub upper_left: SymMatrix,
    pub schur: SymMatrix,
}

impl LduFactors {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let (a, b) = (self.upper_left.dim(), self.schur.dim());
        let mut d = DMatrix::zeros(a + b, a + b);
        d.view_mut((0, 0), (a, a)).copy_from(self.upper_left.as_matrix());
        d.view_mut((a, a), (b, b)).copy_from(self.schur.as_matrix());
        &self.lower * d * self.lower.transpose()
    }
}

impl BlockModel {
    /// LDU factors of `K_N^θ`, or `None` at `θ = 0`.
    pub fn ldu_factors(&self) -> Option<LduFactors> {
        let schur = self.schur.clone()?;
        let (np, nq) = (self.observability.nrows(), self.risk_observability.nrows());
        let upper_left = SymMatrix::gram(&self.measured_toeplitz)
            .add(&SymMatrix::identity(np));
        let coupling =
            &self.risk_toeplitz * self.measured_toeplitz.transpose() * self.measured_noise_inv.as_matrix();
        let mut lower = DMatrix::identity(np + nq, np + nq);
        lower.view_mut((np, 0), (nq, np)).copy_from(&coupling);
        Some(LduFactors {
            lower,
            upper_left,
            schur,
        })
    }
}

fn identity_plus_gram_inv(m: &DMatrix<f64>, transpose_first: bool) -> Result<SymMatrix> {
    let g = if transpose_first {
        SymMatrix::symmetrize(m.transpose() * m)
    } else {
        SymMatrix::gram(m)
    };
    spd_inverse(&g.add(&SymMatrix::identity(g.dim())))
}

/// `θ_N = 1 / λ_1(L_N (I + H_N^T H_N)^{-1} L_N^T)`, or `+∞` when that
/// eigenvalue vanishes.
pub fn theta_n(model: &StateSpaceModel, block_len: usize) -> Result<f64> {
    let h = impulse_toeplitz(model, block_len, Output::Measured)?;
    let l = impulse_toeplitz(model, block_len, Output::Risk)?;
    let q0 = identity_plus_gram_inv(&h, true)?;
    let top = q0.congruence(&l).lambda_max()?;
    Ok(if top < THETA_N_EIG_FLOOR {
        f64::INFINITY
    } else {
        1.0 / top
    })
}

/// Builds every block-model matrix at `(N, θ)`. Requires `0 <= θ < θ_N`.
pub fn build_block_model(
    model: &StateSpaceModel,
    block_len: usize,
    theta: f64,
) -> Result<BlockModel> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::invalid("theta must be finite and nonnegative"));
    }
    let r = reachability_matrix(model, block_len)?;
    let o = observability_matrix(model, block_len, Output::Measured)?;
    let o_r = observability_matrix(model, block_len, Output::Risk)?;
    let h = impulse_toeplitz(model, block_len, Output::Measured)?;
    let l = impulse_toeplitz(model, block_len, Output::Risk)?;
    let (nq, nm) = (l.nrows(), h.ncols());

    let e_inv = identity_plus_gram_inv(&h, false)?;
    let q0 = identity_plus_gram_inv(&h, true)?;
    let omega_neutral = e_inv.congruence(&o.transpose());
    let coupling = &l * h.transpose() * e_inv.as_matrix();
    let j = &o_r - &coupling * &o;
    let neutral_gain = h.transpose() * e_inv.as_matrix();

    let (schur, schur_inv) = if theta > 0.0 {
        let s = q0
            .congruence(&l)
            .sub(&SymMatrix::identity(nq).scale(1.0 / theta));
        let sd = spectral(&s)?;
        if !(sd.lambda_max() < 0.0) {
            return Err(Error::AboveThetaN {
                theta,
                theta_n: theta_n(model, block_len)?,
            });
        }
        let inv = sd.map(Float::recip);
        (Some(s), inv)
    } else {
        (None, SymMatrix::zeros(nq))
    };

    let q_inv = SymMatrix::symmetrize(h.transpose() * &h - l.transpose() * &l * theta)
        .add(&SymMatrix::identity(nm));
    let residual_noise = match spd_inverse(&q_inv) {
        Ok(q) => q,
        Err(Error::NotPositiveDefinite { .. }) => {
            return Err(Error::AboveThetaN {
                theta,
                theta_n: theta_n(model, block_len)?,
            })
        }
        Err(e) => return Err(e),
    };

    let omega = omega_neutral.add(&schur_inv.congruence(&j.transpose()));
    let w = residual_noise.congruence(&r);
    let risk_gain = q0.as_matrix() * l.transpose() * schur_inv.as_matrix();
    let gain = &neutral_gain - &risk_gain * &coupling;
    let alpha = model.a().pow(block_len as u32) - &r * (&gain * &o + &risk_gain * &o_r);

    let noise_gram = (theta > 0.0).then(|| {
        let stacked = DMatrix::from_fn(h.nrows() + nq, nm, |i, c| {
            if i < h.nrows() {
                h[(i, c)]
            } else {
                l[(i - h.nrows(), c)]
            }
        });
        let mut k = &stacked * stacked.transpose();
        for i in h.nrows()..h.nrows() + nq {
            k[(i, i)] -= 1.0 / theta;
        }
        for i in 0..h.nrows() {
            k[(i, i)] += 1.0;
        }
        SymMatrix::symmetrize(k)
    });

    Ok(BlockModel {
        block_len,
        theta,
        reachability: r,
        observability: o,
        risk_observability: o_r,
        measured_toeplitz: h,
        risk_toeplitz: l,
        noise_gram,
        schur,
        schur_inv,
        residual_noise,
        innovation_coupling: j,
        omega_neutral,
        omega,
        w,
        alpha,
        gain,
        risk_gain,
        measured_noise_inv: e_inv,
    })
}

/// Risk-sensitivity thresholds for one block length.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub block_len: usize,
    /// `θ_N`; may be `+∞`.
    pub theta_n: f64,
    /// `τ_N`: first θ at which `Ω_N^θ` becomes singular, or the search cap.
    pub tau_n: f64,
    /// True when `Ω_N^θ` stayed positive definite over the whole search
    /// bracket and `tau_n` is the cap rather than a root.
    pub tau_is_capped: bool,
    /// Final bisection bracket.
    pub bracket: (f64, f64),
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TauOptions {
    /// Relative bracket width at exit, as a fraction of the bracket's upper end.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TauOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

fn omega_lambda_min(model: &StateSpaceModel, block_len: usize, theta: f64) -> Result<f64> {
    build_block_model(model, block_len, theta)?.omega.lambda_min()
}

/// Locates `τ_N` by bisection on `λ_min(Ω_N^θ)`, which decreases
/// monotonically in θ.
///
/// The bracket starts at `[0, (1 - 1e-9) θ_N]`. When `θ_N = +∞` its upper end
/// is `10^3 / λ_1(Ω_N)` instead. If `Ω_N^θ` is still positive definite at
/// `(1 - 10 tol) θ_N` (or at that cap), the upper end is returned with
/// `tau_is_capped` set.
pub fn tau_n(model: &StateSpaceModel, block_len: usize, opts: TauOptions) -> Result<Thresholds> {
    if block_len < model.n() {
        return Err(Error::invalid("tau_N requires block length N >= n"));
    }
    let theta_limit = theta_n(model, block_len)?;
    let neutral = build_block_model(model, block_len, 0.0)?.omega;
    let neutral_spec = neutral.spectral()?;
    if !(neutral_spec.lambda_min() > 0.0) {
        return Err(Error::NotObservable {
            block_len,
            lambda_min: neutral_spec.lambda_min(),
        });
    }
    let upper = if theta_limit.is_finite() {
        (1.0 - 1e-9) * theta_limit
    } else {
        1e3 / neutral_spec.lambda_max()
    };
    let scale = if theta_limit.is_finite() {
        theta_limit
    } else {
        upper
    };

    let cap_probe = if theta_limit.is_finite() {
        (1.0 - 10.0 * opts.tol) * theta_limit
    } else {
        upper
    };
    let (mut lo, mut hi) = (0.0, upper);
    if omega_lambda_min(model, block_len, cap_probe)? > 0.0 {
        return Ok(Thresholds {
            block_len,
            theta_n: theta_limit,
            tau_n: upper,
            tau_is_capped: true,
            bracket: (upper, upper),
            iterations: 0,
        });
    }
    let mut iterations = 0;
    while hi - lo > opts.tol * scale && iterations < opts.max_iter {
        let mid = 0.5 * (lo + hi);
        if omega_lambda_min(model, block_len, mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    Ok(Thresholds {
        block_len,
        theta_n: theta_limit,
        tau_n: 0.5 * (lo + hi),
        tau_is_capped: false,
        bracket: (lo, hi),
        iterations,
    })
}
