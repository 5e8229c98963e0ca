//! Positivity bounds from a suboptimal observer.
//!
//! Any observer gain `G` with `ρ (A - GC)` stable yields the Lyapunov solution
//! `Σ_ρ = ρ² F Σ_ρ F^T + B B^T + G G^T` (`F = A - GC`). For `0 < P_0 ⪯ Σ_ρ`
//! and `0 <= θ <= β_ρ = (ρ² - 1) / (ρ² λ_1(D Σ_ρ D^T))` every risk-sensitive
//! Riccati iterate keeps `V_t` positive definite.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector, Schur};
use num_traits::Float;

use crate::cone::{loewner_leq, spectral, SymMatrix};
use crate::error::{Error, Result};
use crate::state_space::{is_observable, observability_matrix, Output, StateSpaceModel};

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues_general(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !m.is_square() {
        return Err(Error::Dimension {
            context: "eigenvalues of a square matrix",
            expected: (m.nrows(), m.nrows()),
            found: m.shape(),
        });
    }
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 1000 * n.max(1))
        .ok_or(Error::EigenFailure { norm: m.norm() })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub(crate) fn modulus(z: &Complex<f64>) -> f64 {
    Float::hypot(z.re, z.im)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(f: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues_general(f)?
        .iter()
        .map(modulus)
        .fold(0.0, f64::max))
}

/// Observer gain `G` placing the eigenvalues of `A - GC` at `poles`
/// (single-output models only), by Ackermann's formula on the dual system:
/// `G = φ(A) O^{-1} e_n` with `O = [C; CA; ...; CA^{n-1}]`.
pub fn place_observer_gain(
    model: &StateSpaceModel,
    poles: &[Complex<f64>],
) -> Result<DMatrix<f64>> {
    if model.p() != 1 {
        return Err(Error::Unsupported(
            "pole placement needs a single output; use bound_search grids for p > 1",
        ));
    }
    let n = model.n();
    if poles.len() != n {
        return Err(Error::invalid(alloc::format!(
            "expected {n} poles, got {}",
            poles.len()
        )));
    }
    if !is_observable(model) {
        return Err(Error::domain("pole placement needs (C, A) observable"));
    }
    // monic characteristic polynomial, coefficients in increasing degree
    let mut coeffs = vec![Complex::new(1.0, 0.0)];
    for &pole in poles {
        let mut next = vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
        for (k, &c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * pole;
        }
        coeffs = next;
    }
    let scale = 1.0 + poles.iter().map(modulus).fold(0.0, f64::max).powi(n as i32);
    if coeffs.iter().any(|c| c.im.abs() > 1e-9 * scale) {
        return Err(Error::invalid("complex poles must come in conjugate pairs"));
    }
    let a = model.a();
    let mut phi = DMatrix::zeros(n, n);
    let mut apow = DMatrix::identity(n, n);
    for c in &coeffs {
        phi += &apow * c.re;
        apow = &apow * a;
    }
    // observability_matrix stacks newest-first; flip to the conventional order
    let stacked = observability_matrix(model, n, Output::Measured)?;
    let obs = DMatrix::from_fn(n, n, |i, j| stacked[(n - 1 - i, j)]);
    let mut e_n = DVector::zeros(n);
    e_n[n - 1] = 1.0;
    let col = obs
        .lu()
        .solve(&e_n)
        .ok_or(Error::Singular("observability matrix"))?;
    let g = phi * col;
    Ok(DMatrix::from_column_slice(n, 1, g.as_slice()))
}

/// Solves `Σ = ρ² F Σ F^T + B B^T + G G^T`, `F = A - GC`, as a dense linear
/// system in the `n(n+1)/2` independent entries of `Σ`.
pub fn lyapunov_sigma(
    model: &StateSpaceModel,
    gain: &DMatrix<f64>,
    rho: f64,
) -> Result<SymMatrix> {
    if gain.shape() != (model.n(), model.p()) {
        return Err(Error::Dimension {
            context: "observer gain G",
            expected: (model.n(), model.p()),
            found: gain.shape(),
        });
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid("rho must be positive and finite"));
    }
    let f = model.a() - gain * model.c();
    let product = rho * spectral_radius(&f)?;
    if !(product < 1.0) {
        return Err(Error::UnstableObserver { product });
    }
    let q = SymMatrix::gram(model.b()).add(&SymMatrix::gram(gain));
    solve_symmetric_stein(&f, rho * rho, &q)
}

/// Solves `X - s F X F^T = Q` for symmetric `X`.
pub(crate) fn solve_symmetric_stein(f: &DMatrix<f64>, s: f64, q: &SymMatrix) -> Result<SymMatrix> {
    let n = f.nrows();
    let unknowns = n * (n + 1) / 2;
    let index = |i: usize, j: usize| {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + j
    };
    let mut lhs = DMatrix::zeros(unknowns, unknowns);
    let mut rhs = DVector::zeros(unknowns);
    for i in 0..n {
        for j in i..n {
            let row = index(i, j);
            rhs[row] = q.as_matrix()[(i, j)];
            lhs[(row, row)] += 1.0;
            // (F X F^T)_ij = sum_{k,l} F_ik F_jl X_kl
            for k in 0..n {
                for l in 0..n {
                    lhs[(row, index(k, l))] -= s * f[(i, k)] * f[(j, l)];
                }
            }
        }
    }
    let x = lhs
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular("Lyapunov equation"))?;
    let sigma = DMatrix::from_fn(n, n, |i, j| x[index(i, j)]);
    Ok(SymMatrix::symmetrize(sigma))
}

/// `β_ρ = (ρ² - 1) / (ρ² λ_1(D Σ_ρ D^T))`.
pub fn beta_rho(model: &StateSpaceModel, gain: &DMatrix<f64>, rho: f64) -> Result<f64> {
    if !(rho > 1.0) {
        return Err(Error::domain("beta_rho needs rho > 1"));
    }
    let sigma = lyapunov_sigma(model, gain, rho)?;
    beta_from_sigma(model, &sigma, rho)
}

fn beta_from_sigma(model: &StateSpaceModel, sigma: &SymMatrix, rho: f64) -> Result<f64> {
    let top = sigma.congruence(model.d()).lambda_max()?;
    if !(top > 0.0) {
        return Err(Error::NotPositiveDefinite {
            what: "D Sigma D^T",
            lambda_min: top,
        });
    }
    let rho2 = rho * rho;
    Ok((rho2 - 1.0) / (rho2 * top))
}

/// An observer gain, a rate `ρ`, and the bounds they certify.
#[derive(Debug, Clone)]
pub struct ObserverBound {
    pub gain: DMatrix<f64>,
    pub rho: f64,
    /// Spectral radius of `A - GC`.
    pub spectral_radius: f64,
    pub sigma: SymMatrix,
    pub beta: f64,
}

impl ObserverBound {
    pub fn new(model: &StateSpaceModel, gain: DMatrix<f64>, rho: f64) -> Result<Self> {
        if !(rho > 1.0) {
            return Err(Error::domain("observer bound needs rho > 1"));
        }
        let sigma = lyapunov_sigma(model, &gain, rho)?;
        let lambda_min = sigma.lambda_min()?;
        if !(lambda_min > 0.0) {
            return Err(Error::NotPositiveDefinite {
                what: "Sigma_rho",
                lambda_min,
            });
        }
        let beta = beta_from_sigma(model, &sigma, rho)?;
        let spectral_radius = spectral_radius(&(model.a() - &gain * model.c()))?;
        Ok(Self {
            gain,
            rho,
            spectral_radius,
            sigma,
            beta,
        })
    }

    /// `λ_n(Σ_ρ)`, the size of the guaranteed set of initial conditions.
    pub fn sigma_lambda_min(&self) -> f64 {
        self.sigma.lambda_min().unwrap_or(f64::NAN)
    }
}

/// Per-coordinate candidate values for the entries of `G`, in column-major
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct GainGrid {
    pub axes: Vec<Vec<f64>>,
}

/// Points per coordinate in the default gain grid.
pub const DEFAULT_GAIN_POINTS: usize = 41;

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// `ρ ∈ {1.05, 1.10, …, 3.00}`.
pub fn default_rho_grid() -> Vec<f64> {
    (1..=40).map(|k| 1.0 + 0.05 * k as f64).collect()
}

impl GainGrid {
    pub fn singleton(gain: &DMatrix<f64>) -> Self {
        Self {
            axes: gain.iter().map(|&g| vec![g]).collect(),
        }
    }

    /// For single-output models, each entry spans `±3|g_i|` around zero where
    /// `g` is the gain placing every observer pole at the origin; otherwise, or
    /// when that entry is zero, the span is `±10 ||A||_F`.
    pub fn default_for(model: &StateSpaceModel) -> Result<Self> {
        let fallback = 10.0 * model.a().norm();
        let spans: Vec<f64> = if model.p() == 1 {
            let zeros = vec![Complex::new(0.0, 0.0); model.n()];
            place_observer_gain(model, &zeros)?
                .iter()
                .map(|g| if g.abs() > 0.0 { 3.0 * g.abs() } else { fallback })
                .collect()
        } else {
            vec![fallback; model.n() * model.p()]
        };
        Ok(Self {
            axes: spans
                .iter()
                .map(|&s| linspace(-s, s, DEFAULT_GAIN_POINTS))
                .collect(),
        })
    }

    fn spacing(&self, axis: usize) -> f64 {
        let a = &self.axes[axis];
        if a.len() > 1 {
            (a[a.len() - 1] - a[0]).abs() / (a.len() - 1) as f64
        } else {
            0.1 * a[0].abs().max(1.0)
        }
    }
}

/// Step size below which the coordinate-descent polish stops.
pub const REFINE_TOL: f64 = 1e-6;
/// Candidates whose β differ by at most this are treated as ties.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Default)]
struct Infeasible {
    rho: usize,
    unstable: usize,
    failed: usize,
}

fn evaluate(model: &StateSpaceModel, gain: &DMatrix<f64>, rho: f64) -> core::result::Result<f64, u8> {
    if !(rho > 1.0) {
        return Err(0);
    }
    match beta_rho(model, gain, rho) {
        Ok(b) => Ok(b),
        Err(Error::UnstableObserver { .. }) => Err(1),
        Err(_) => Err(2),
    }
}

/// Grid search for the `(G, ρ)` maximizing `β_ρ`, optionally polished by
/// coordinate descent with step halving.
///
/// Candidates are visited with `ρ` outermost and the gain entries in
/// lexicographic order, so among ties the lexicographically smallest
/// `(ρ, G)` wins.
pub fn bound_search(
    model: &StateSpaceModel,
    rho_grid: &[f64],
    gain_grid: &GainGrid,
    refine: bool,
) -> Result<ObserverBound> {
    let (n, p) = (model.n(), model.p());
    if rho_grid.is_empty() || gain_grid.axes.len() != n * p || gain_grid.axes.iter().any(Vec::is_empty) {
        return Err(Error::invalid(alloc::format!(
            "bound search needs a nonempty rho grid and {} nonempty gain axes",
            n * p
        )));
    }
    let mut rhos = rho_grid.to_vec();
    rhos.sort_by(f64::total_cmp);
    let axes: Vec<Vec<f64>> = gain_grid
        .axes
        .iter()
        .map(|a| {
            let mut a = a.clone();
            a.sort_by(f64::total_cmp);
            a
        })
        .collect();

    let mut infeasible = Infeasible::default();
    let mut best: Option<(f64, f64, DMatrix<f64>)> = None;
    let mut counter = vec![0usize; axes.len()];
    let mut gain = DMatrix::zeros(n, p);
    for &rho in &rhos {
        counter.iter_mut().for_each(|c| *c = 0);
        loop {
            for (k, &c) in counter.iter().enumerate() {
                gain[k] = axes[k][c];
            }
            match evaluate(model, &gain, rho) {
                Ok(beta) => {
                    if best.as_ref().is_none_or(|(b, _, _)| beta > b + TIE_TOL) {
                        best = Some((beta, rho, gain.clone()));
                    }
                }
                Err(0) => infeasible.rho += 1,
                Err(1) => infeasible.unstable += 1,
                Err(_) => infeasible.failed += 1,
            }
            // odometer with the first entry most significant
            let mut k = axes.len();
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                counter[k] += 1;
                if counter[k] < axes[k].len() {
                    break;
                }
                counter[k] = 0;
                if k == 0 {
                    k = usize::MAX;
                    break;
                }
            }
            if k == usize::MAX {
                break;
            }
        }
    }
    let (mut beta, mut rho, mut gain) = best.ok_or(Error::SearchFailed {
        infeasible_rho: infeasible.rho,
        unstable: infeasible.unstable,
        failed: infeasible.failed,
    })?;

    if refine {
        let rho_step = if rhos.len() > 1 {
            (rhos[rhos.len() - 1] - rhos[0]) / (rhos.len() - 1) as f64
        } else {
            0.05
        };
        let mut steps: Vec<f64> = core::iter::once(rho_step)
            .chain((0..axes.len()).map(|k| gain_grid_spacing(&axes, k)))
            .collect();
        let mut sweeps = 0;
        while steps.iter().copied().fold(0.0, f64::max) > REFINE_TOL && sweeps < 100_000 {
            sweeps += 1;
            let mut improved = false;
            for coord in 0..steps.len() {
                for sign in [1.0, -1.0] {
                    let delta = sign * steps[coord];
                    let (mut r, mut g) = (rho, gain.clone());
                    if coord == 0 {
                        r += delta;
                    } else {
                        g[coord - 1] += delta;
                    }
                    if let Ok(b) = evaluate(model, &g, r) {
                        if b > beta {
                            beta = b;
                            rho = r;
                            gain = g;
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if !improved {
                steps.iter_mut().for_each(|s| *s *= 0.5);
            }
        }
    }
    ObserverBound::new(model, gain, rho)
}

fn gain_grid_spacing(axes: &[Vec<f64>], k: usize) -> f64 {
    GainGrid {
        axes: axes.to_vec(),
    }
    .spacing(k)
}

/// Whether `(θ, P_0)` is covered by an observer bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Admissibility {
    pub p0_positive: bool,
    pub p0_below_sigma: bool,
    pub theta_within_beta: bool,
    /// All three hold, so every Riccati iterate keeps `V_t ≻ 0`.
    pub admissible: bool,
    /// `λ_min(Σ_ρ - P_0)`.
    pub sigma_margin: f64,
}

pub fn check_initial_condition(
    model: &StateSpaceModel,
    theta: f64,
    p0: &SymMatrix,
    bound: &ObserverBound,
) -> Admissibility {
    let p0_positive = p0.dim() == model.n() && matches!(p0.lambda_min(), Ok(l) if l > 0.0);
    let scale = bound.sigma.lambda_max().unwrap_or(1.0).max(1.0);
    let tol = 1e-12 * scale;
    let p0_below_sigma = p0_positive && loewner_leq(p0, &bound.sigma, tol).unwrap_or(false);
    let sigma_margin = if p0.dim() == bound.sigma.dim() {
        spectral(&bound.sigma.sub(p0))
            .map(|s| s.lambda_min())
            .unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    let theta_within_beta = theta >= 0.0 && theta <= bound.beta * (1.0 + 1e-12);
    Admissibility {
        p0_positive,
        p0_below_sigma,
        theta_within_beta,
        admissible: p0_positive && p0_below_sigma && theta_within_beta,
        sigma_margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(a: f64, b: f64, c: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
            None,
        )
        .unwrap()
    }

    fn example_gain() -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[-13.1, -14.4])
    }

    #[test]
    fn spectral_radius_cases() {
        let m = StateSpaceModel::weakly_observable_example();
        let f = m.a() - example_gain() * m.c();
        assert!(spectral_radius(&f).unwrap() < 1e-6);
        let d = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.9]);
        assert_relative_eq!(spectral_radius(&d).unwrap(), 0.9, epsilon = 1e-14);
        let (s, c) = 0.7f64.sin_cos();
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]) * 0.7;
        assert_relative_eq!(spectral_radius(&rot).unwrap(), 0.7, epsilon = 1e-13);
    }

    #[test]
    fn nilpotent_placement_matches_example_gain() {
        let m = StateSpaceModel::weakly_observable_example();
        let zeros = [Complex::new(0.0, 0.0); 2];
        let g = place_observer_gain(&m, &zeros).unwrap();
        assert_relative_eq!(g, example_gain(), epsilon = 1e-9);
    }

    #[test]
    fn scalar_placement_is_a_over_c() {
        let m = scalar(1.5, 1.0, 0.5);
        let g = place_observer_gain(&m, &[Complex::new(0.0, 0.0)]).unwrap();
        assert_relative_eq!(g[(0, 0)], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn placing_open_loop_poles_gives_zero_gain() {
        let m = StateSpaceModel::weakly_observable_example();
        let poles = [Complex::new(0.1, 0.0), Complex::new(1.2, 0.0)];
        let g = place_observer_gain(&m, &poles).unwrap();
        assert!(g.norm() < 1e-9);
    }

    #[test]
    fn complex_pair_placement() {
        let m = StateSpaceModel::weakly_observable_example();
        let poles = [Complex::new(0.3, 0.4), Complex::new(0.3, -0.4)];
        let g = place_observer_gain(&m, &poles).unwrap();
        let eig = eigenvalues_general(&(m.a() - g * m.c())).unwrap();
        for z in eig {
            assert!((modulus(&z) - 0.5).abs() < 1e-6);
            assert!((z.re - 0.3).abs() < 1e-6);
        }
        let unpaired = [Complex::new(0.3, 0.4), Complex::new(0.3, 0.4)];
        assert!(place_observer_gain(&m, &unpaired).is_err());
    }

    #[test]
    fn placement_rejects_multi_output_and_unobservable() {
        let multi = StateSpaceModel::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            None,
        )
        .unwrap();
        let zeros = [Complex::new(0.0, 0.0); 2];
        assert!(matches!(
            place_observer_gain(&multi, &zeros),
            Err(Error::Unsupported(_))
        ));
        let blind = StateSpaceModel::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            None,
        )
        .unwrap();
        assert_eq!(
            place_observer_gain(&blind, &zeros).unwrap_err().kind(),
            crate::ErrorKind::Domain
        );
    }

    #[test]
    fn zero_observer_dynamics_truncate_series() {
        let m = scalar(2.0, 0.5, 1.0);
        let g = DMatrix::from_element(1, 1, 2.0);
        let s = lyapunov_sigma(&m, &g, 7.0).unwrap();
        assert_relative_eq!(s.as_matrix()[(0, 0)], 0.25 + 4.0, max_relative = 1e-14);
    }

    #[test]
    fn unstable_observer_rejected() {
        let m = StateSpaceModel::weakly_observable_example();
        let g = DMatrix::zeros(2, 1);
        assert!(matches!(
            lyapunov_sigma(&m, &g, 1.0),
            Err(Error::UnstableObserver { .. })
        ));
        assert!(beta_rho(&m, &example_gain(), 1.0).is_err());
    }

    #[test]
    fn scalar_beta_large_rho_limit() {
        let (a, b, c) = (1.3, 0.7, 2.0);
        let m = scalar(a, b, c);
        let g = DMatrix::from_element(1, 1, a / c);
        let beta = beta_rho(&m, &g, 1e3).unwrap();
        let limit = 1.0 / (a * a / (c * c) + b * b);
        assert_relative_eq!(beta, limit, max_relative = 5e-3);
    }

    #[test]
    fn singleton_grid_returns_that_pair() {
        let m = StateSpaceModel::weakly_observable_example();
        let grid = GainGrid::singleton(&example_gain());
        let b = bound_search(&m, &[2.0], &grid, false).unwrap();
        assert_eq!(b.beta, beta_rho(&m, &example_gain(), 2.0).unwrap());
        assert_eq!(b.rho, 2.0);
    }

    #[test]
    fn infeasible_grid_reports_reasons() {
        let m = StateSpaceModel::weakly_observable_example();
        let grid = GainGrid {
            axes: vec![vec![0.0], vec![0.0]],
        };
        match bound_search(&m, &[0.5, 1.5], &grid, false) {
            Err(Error::SearchFailed {
                infeasible_rho,
                unstable,
                ..
            }) => assert_eq!((infeasible_rho, unstable), (1, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scalar_search_finds_deadbeat_gain() {
        let (a, b, c) = (1.3, 0.7, 2.0);
        let m = scalar(a, b, c);
        let grid = GainGrid {
            axes: vec![linspace(0.0, 1.3, 27)],
        };
        let best = bound_search(&m, &[50.0], &grid, false).unwrap();
        assert_relative_eq!(best.gain[(0, 0)], a / c, epsilon = 0.026);
    }

    #[test]
    fn admissibility_report() {
        let m = StateSpaceModel::weakly_observable_example();
        let bound = ObserverBound::new(&m, example_gain(), 2.0).unwrap();
        let ok = check_initial_condition(&m, bound.beta, &bound.sigma, &bound);
        assert!(ok.admissible);
        let big = check_initial_condition(&m, bound.beta, &bound.sigma.scale(2.0), &bound);
        assert!(!big.p0_below_sigma && !big.admissible);
        let hot = check_initial_condition(&m, 1.1 * bound.beta, &bound.sigma, &bound);
        assert!(!hot.theta_within_beta && !hot.admissible);
    }
}
