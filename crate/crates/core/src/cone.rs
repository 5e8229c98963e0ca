//! Geometry of the cone of symmetric positive definite matrices.
//!
//! Every matrix function here (square root, logarithm, inverse) goes through a
//! single symmetric eigendecomposition. Eigenvalues are always reported in
//! decreasing order, so `eigenvalues[0]` is the spectral norm of an SPD matrix
//! and the last entry is its smallest eigenvalue.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::error::{Error, Result};

/// Default absolute tolerance on the smallest eigenvalue for SPD predicates.
pub const SPD_TOL: f64 = 1e-10;

/// Construction rejects inputs whose relative asymmetry exceeds this.
pub const ASYMMETRY_TOL: f64 = 1e-8;

/// A dense real symmetric matrix.
///
/// Inputs are symmetrized as `(X + X^T) / 2`; the relative asymmetry of the
/// original input is kept so callers can inspect how far off it was.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
    asymmetry: f64,
}

impl SymMatrix {
    /// Validates and symmetrizes a square matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Dimension {
                context: "SymMatrix::new",
                expected: (m.nrows().max(1), m.nrows().max(1)),
                found: m.shape(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        let asymmetry = relative_asymmetry(&m);
        if asymmetry > ASYMMETRY_TOL {
            return Err(Error::Asymmetric {
                relative: asymmetry,
            });
        }
        let mut s = Self::symmetrize(m);
        s.asymmetry = asymmetry;
        Ok(s)
    }

    /// Symmetrizes without the asymmetry check. For results of computations
    /// that are symmetric up to roundoff.
    pub(crate) fn symmetrize(m: DMatrix<f64>) -> Self {
        let s = (&m + m.transpose()) * 0.5;
        Self { m: s, asymmetry: 0.0 }
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension {
                context: "SymMatrix::from_row_slice",
                expected: (n, n),
                found: (data.len(), 1),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn identity(n: usize) -> Self {
        Self::symmetrize(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self::symmetrize(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self::symmetrize(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// `M M^T`.
    pub fn gram(m: &DMatrix<f64>) -> Self {
        Self::symmetrize(m * m.transpose())
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        Self::symmetrize(&self.m + &other.m)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        Self::symmetrize(&self.m - &other.m)
    }

    pub fn scale(&self, a: f64) -> SymMatrix {
        Self::symmetrize(&self.m * a)
    }

    /// `M X M^T`; `M` may be rectangular.
    pub fn congruence(&self, m: &DMatrix<f64>) -> SymMatrix {
        Self::symmetrize(m * &self.m * m.transpose())
    }

    pub fn spectral(&self) -> Result<SpectralDecomposition> {
        spectral(self)
    }

    /// Eigenvalues in decreasing order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.spectral()?.eigenvalues.iter().copied().collect())
    }

    pub fn lambda_max(&self) -> Result<f64> {
        Ok(self.spectral()?.lambda_max())
    }

    pub fn lambda_min(&self) -> Result<f64> {
        Ok(self.spectral()?.lambda_min())
    }
}

fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / norm
}

/// Eigendecomposition `P = U diag(eigenvalues) U^T` with eigenvalues sorted in
/// decreasing order and column `i` of `eigenvectors` paired with eigenvalue `i`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `U f(Λ) U^T`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = DMatrix::from_diagonal(&self.eigenvalues.map(f));
        SymMatrix::symmetrize(&self.eigenvectors * d * self.eigenvectors.transpose())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|x| x)
    }
}

pub fn spectral(p: &SymMatrix) -> Result<SpectralDecomposition> {
    let n = p.dim();
    let eig = p
        .m
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 1000 * n.max(1))
        .ok_or(Error::EigenFailure { norm: p.m.norm() })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Decomposes `p` and checks it is positive definite at [`SPD_TOL`].
pub(crate) fn spd_spectral(p: &SymMatrix, what: &'static str) -> Result<SpectralDecomposition> {
    let s = spectral(p)?;
    let lambda_min = s.lambda_min();
    if !(lambda_min > SPD_TOL) {
        return Err(Error::NotPositiveDefinite { what, lambda_min });
    }
    Ok(s)
}

pub fn spd_sqrt(p: &SymMatrix) -> Result<SymMatrix> {
    Ok(spd_spectral(p, "P")?.map(Float::sqrt))
}

pub fn spd_inv_sqrt(p: &SymMatrix) -> Result<SymMatrix> {
    Ok(spd_spectral(p, "P")?.map(|x| 1.0 / x.sqrt()))
}

pub fn spd_inverse(p: &SymMatrix) -> Result<SymMatrix> {
    Ok(spd_spectral(p, "P")?.map(Float::recip))
}

pub fn spd_log(p: &SymMatrix) -> Result<SymMatrix> {
    Ok(spd_spectral(p, "P")?.map(Float::ln))
}

/// Matrix exponential of a symmetric matrix; the inverse of [`spd_log`].
pub fn sym_exp(s: &SymMatrix) -> Result<SymMatrix> {
    Ok(spectral(s)?.map(Float::exp))
}

fn check_same_dim(p: &SymMatrix, q: &SymMatrix, context: &'static str) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension {
            context,
            expected: (p.dim(), p.dim()),
            found: (q.dim(), q.dim()),
        });
    }
    Ok(())
}

/// Eigenvalues (decreasing) of `P^{-1/2} Q P^{-1/2}`, equal to those of `P^{-1} Q`.
fn relative_spectrum(p: &SymMatrix, q: &SymMatrix) -> Result<DVector<f64>> {
    let p_is = spd_spectral(p, "P")?.map(|x| 1.0 / x.sqrt());
    spd_spectral(q, "Q")?;
    Ok(spectral(&q.congruence(p_is.as_matrix()))?.eigenvalues)
}

/// Affine-invariant Riemann distance `||log(P^{-1/2} Q P^{-1/2})||_F`.
pub fn riemann_distance(p: &SymMatrix, q: &SymMatrix) -> Result<f64> {
    check_same_dim(p, q, "riemann_distance")?;
    let s = relative_spectrum(p, q)?;
    Ok(s.iter().map(|x| x.ln().powi(2)).sum::<f64>().sqrt())
}

/// Thompson metric: the larger of the top eigenvalues of
/// `log(P^{-1/2} Q P^{-1/2})` and `log(Q^{-1/2} P Q^{-1/2})`.
pub fn thompson_distance(p: &SymMatrix, q: &SymMatrix) -> Result<f64> {
    check_same_dim(p, q, "thompson_distance")?;
    let pq = relative_spectrum(p, q)?;
    let qp = relative_spectrum(q, p)?;
    Ok(pq[0].ln().max(qp[0].ln()))
}

/// Bound `α / (α + β)` on the contraction of `X -> X + S`, with
/// `α = max(λ_1(P), λ_1(Q))` and `β = λ_n(S)`.
pub fn translation_coefficient(p: &SymMatrix, q: &SymMatrix, s: &SymMatrix) -> Result<f64> {
    check_same_dim(p, q, "translation_coefficient")?;
    check_same_dim(p, s, "translation_coefficient")?;
    let alpha = spd_spectral(p, "P")?
        .lambda_max()
        .max(spd_spectral(q, "Q")?.lambda_max());
    let beta = s.lambda_min()?;
    if beta < -1e-12 {
        return Err(Error::NotPositiveDefinite {
            what: "translation S",
            lambda_min: beta,
        });
    }
    Ok(alpha / (alpha + beta.max(0.0)))
}

/// Upper bound on the contraction coefficient of
/// `f(P) = M [P^{-1} + Ω]^{-1} M^T + W`:
/// `λ_1(M Ω^{-1} M^T) / (λ_n(W) + λ_1(M Ω^{-1} M^T))`.
pub fn contraction_bound(m: &DMatrix<f64>, omega: &SymMatrix, w: &SymMatrix) -> Result<f64> {
    let n = omega.dim();
    if m.shape() != (n, n) || w.dim() != n {
        return Err(Error::Dimension {
            context: "contraction_bound",
            expected: (n, n),
            found: m.shape(),
        });
    }
    let omega_inv = spd_spectral(omega, "Omega")?.map(Float::recip);
    let w_min = spd_spectral(w, "W")?.lambda_min();
    let top = omega_inv.congruence(m).lambda_max()?.max(0.0);
    Ok(top / (w_min + top))
}

/// True iff `λ_n(P) > tol`.
pub fn is_spd(p: &SymMatrix, tol: f64) -> bool {
    matches!(p.lambda_min(), Ok(l) if l > tol)
}

/// True iff `P ⪯ Q` in the Loewner order, i.e. `λ_n(Q - P) >= -tol`.
pub fn loewner_leq(p: &SymMatrix, q: &SymMatrix, tol: f64) -> Result<bool> {
    check_same_dim(p, q, "loewner_leq")?;
    Ok(q.sub(p).lambda_min()? >= -tol)
}
