#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use riskconv_core::cone::SymMatrix;
use riskconv_core::state_space::StateSpaceModel;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut StdRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `G G^T / n + floor I`, eigenvalues roughly in `[floor, 4]`.
pub fn random_spd(rng: &mut StdRng, n: usize, floor: f64) -> SymMatrix {
    let g = gaussian(rng, n, n);
    SymMatrix::gram(&g)
        .scale(1.0 / n as f64)
        .add(&SymMatrix::identity(n).scale(floor))
}

/// Random SPD with eigenvalues drawn log-uniformly from `[lo, hi]`.
pub fn random_spd_spread(rng: &mut StdRng, n: usize, lo: f64, hi: f64) -> SymMatrix {
    let q = gaussian(rng, n, n).qr().q();
    let d: Vec<f64> = (0..n)
        .map(|_| (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp())
        .collect();
    SymMatrix::from_diagonal(&d).congruence(&q)
}

pub fn random_invertible(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
    gaussian(rng, n, n) + DMatrix::identity(n, n) * (n as f64).sqrt()
}

/// Random model with `A` scaled to spectral-norm-ish `radius`.
pub fn random_model(rng: &mut StdRng, n: usize, m: usize, p: usize, radius: f64) -> StateSpaceModel {
    let a = gaussian(rng, n, n);
    let a = &a * (radius / a.norm().max(1e-12) * (n as f64).sqrt());
    let b = gaussian(rng, n, m);
    let c = gaussian(rng, p, n);
    StateSpaceModel::new(a, b, c, None).unwrap()
}

pub fn scalar_model(a: f64, b: f64, c: f64, d: f64) -> StateSpaceModel {
    StateSpaceModel::new(
        DMatrix::from_element(1, 1, a),
        DMatrix::from_element(1, 1, b),
        DMatrix::from_element(1, 1, c),
        Some(DMatrix::from_element(1, 1, d)),
    )
    .unwrap()
}

pub fn example() -> StateSpaceModel {
    StateSpaceModel::weakly_observable_example()
}

pub fn example_gain() -> DMatrix<f64> {
    DMatrix::from_column_slice(2, 1, &[-13.1, -14.4])
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

pub fn sym_rel_diff(a: &SymMatrix, b: &SymMatrix) -> f64 {
    rel_diff(a.as_matrix(), b.as_matrix())
}
