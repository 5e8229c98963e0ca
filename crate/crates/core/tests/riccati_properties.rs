mod common;

use common::{example, example_gain, gaussian, random_model, random_spd, rng, scalar_model, sym_rel_diff};
use nalgebra::DMatrix;
use rand::Rng;
use riskconv_core::block::{build_block_model, tau_n, theta_n, TauOptions};
use riskconv_core::bounds::ObserverBound;
use riskconv_core::cone::{contraction_bound, loewner_leq, riemann_distance, spd_sqrt, SymMatrix};
use riskconv_core::riccati::{
    block_riccati_map, breakdown_search, fixed_point, iterate_trajectory, kalman_gain,
    riccati_map, rs_gain, rs_riccati_gain_form, rs_riccati_map, rs_riccati_observer_form,
    verify_are, FixedPointOptions, InitialPolicy, StepStatus,
};
use riskconv_core::state_space::StateSpaceModel;

/// A θ keeping `P^{-1} - θ D^T D` comfortably positive definite.
fn safe_theta(model: &StateSpaceModel, p: &SymMatrix, frac: f64) -> f64 {
    let dtd = model.d().transpose() * model.d();
    let top = p.lambda_max().unwrap() * dtd.symmetric_eigenvalues().max();
    frac / top
}

/// `P^{1/2} U P^{1/2}` with `U` having eigenvalues in `[lo, 1]`, so the result is `⪯ P`.
fn shrink_below(r: &mut rand::rngs::StdRng, p: &SymMatrix, lo: f64) -> SymMatrix {
    let n = p.dim();
    let q = gaussian(r, n, n).qr().q();
    let d: Vec<f64> = (0..n).map(|_| lo + (1.0 - lo) * r.random::<f64>()).collect();
    let u = SymMatrix::from_diagonal(&d).congruence(&q);
    u.congruence(spd_sqrt(p).unwrap().as_matrix())
}

#[test]
fn update_forms_agree() {
    let mut r = rng(101);
    for k in 0..100 {
        let n = 1 + k % 4;
        let p_out = 1 + k % n.max(1);
        let model = random_model(&mut r, n, 1 + k % 3, p_out, 1.2);
        let p = random_spd(&mut r, n, 0.1);
        let theta = if k % 5 == 0 { 0.0 } else { safe_theta(&model, &p, 0.8 * r.random::<f64>()) };
        let reference = rs_riccati_map(&model, theta, &p).unwrap();
        let gain_form = rs_riccati_gain_form(&model, theta, &p).unwrap();
        assert!(sym_rel_diff(&reference, &gain_form) < 1e-9, "sample {k}");
        for _ in 0..3 {
            let g = gaussian(&mut r, n, p_out) * 3.0;
            let observer = rs_riccati_observer_form(&model, theta, &p, &g).unwrap();
            assert!(sym_rel_diff(&reference, &observer) < 1e-9, "sample {k}");
        }
        if theta == 0.0 {
            let (kg, rv) = kalman_gain(&model, &p).unwrap();
            let closed = model.a() - &kg * model.c();
            let kalman = p
                .congruence(&closed)
                .add(&SymMatrix::gram(model.b()))
                .add(&SymMatrix::gram(&kg));
            assert!(sym_rel_diff(&riccati_map(&model, &p).unwrap(), &kalman) < 1e-9);
            let expected_r = p.congruence(model.c()).add(&SymMatrix::identity(p_out));
            assert!(sym_rel_diff(&rv, &expected_r) < 1e-12);
        }
    }
}

#[test]
fn block_map_is_the_n_fold_composition() {
    let mut r = rng(202);
    let mut checked = 0;
    for k in 0..60 {
        let n_blk = 1 + k % 3;
        let model = if k % 4 == 0 {
            example()
        } else {
            random_model(&mut r, 2 + k % 2, 2, 1 + k % 2, 1.1)
        };
        let p = random_spd(&mut r, model.n(), 0.1);
        let limit = theta_n(&model, n_blk).unwrap();
        let theta = if k % 3 == 0 {
            0.0
        } else {
            let cap = safe_theta(&model, &p, 0.5).min(0.3 * limit);
            cap * r.random::<f64>()
        };
        let mut composed = p.clone();
        let mut ok = true;
        for _ in 0..n_blk {
            match rs_riccati_map(&model, theta, &composed) {
                Ok(next) if rs_gain(&model, theta, &next).is_ok() => composed = next,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let block = build_block_model(&model, n_blk, theta).unwrap();
        let blocked = block_riccati_map(&block, &p).unwrap();
        assert!(sym_rel_diff(&composed, &blocked) < 1e-9, "sample {k}");
        checked += 1;
    }
    assert!(checked >= 40, "only {checked} valid samples");

    let model = example();
    let p = random_spd(&mut r, 2, 0.1);
    let block = build_block_model(&model, 1, 0.0).unwrap();
    assert!(
        sym_rel_diff(&block_riccati_map(&block, &p).unwrap(), &riccati_map(&model, &p).unwrap())
            < 1e-12
    );
}

#[test]
fn riccati_map_preserves_loewner_order() {
    let mut r = rng(303);
    for k in 0..100 {
        let n = 1 + k % 3;
        let model = random_model(&mut r, n, 2, 1 + k % n, 1.3);
        let p2 = random_spd(&mut r, n, 0.05);
        let p1 = p2.add(&random_spd(&mut r, n, 0.0));
        let theta = if k % 4 == 0 { 0.0 } else { safe_theta(&model, &p1, 0.9 * r.random::<f64>()) };
        let r1 = rs_riccati_map(&model, theta, &p1).unwrap();
        let r2 = rs_riccati_map(&model, theta, &p2).unwrap();
        let scale = r1.frobenius_norm().max(1.0);
        assert!(loewner_leq(&r2, &r1, 1e-10 * scale).unwrap(), "sample {k}");
    }
}

#[test]
fn block_map_contracts_below_tau() {
    let model = example();
    let mut r = rng(404);
    for n_blk in [2, 3] {
        let tau = tau_n(&model, n_blk, TauOptions::default()).unwrap().tau_n;
        for frac in [0.0, 0.5, 0.9] {
            let block = build_block_model(&model, n_blk, frac * tau).unwrap();
            let c = contraction_bound(&block.alpha, &block.omega, &block.w).unwrap();
            assert!(c < 1.0);
            for _ in 0..30 {
                let p = random_spd(&mut r, 2, 0.05).scale(50.0);
                let q = random_spd(&mut r, 2, 0.05).scale(50.0);
                let d = riemann_distance(&p, &q).unwrap();
                let fp = block_riccati_map(&block, &p).unwrap();
                let fq = block_riccati_map(&block, &q).unwrap();
                assert!(riemann_distance(&fp, &fq).unwrap() <= c * d + 1e-9);
            }
        }
    }
}

#[test]
fn fixed_point_does_not_depend_on_start() {
    let model = example();
    let bound = ObserverBound::new(&model, example_gain(), 2.0).unwrap();
    let mut r = rng(505);
    for theta in [0.0, 0.5 * bound.beta, bound.beta] {
        let starts: Vec<SymMatrix> = (0..10)
            .map(|_| shrink_below(&mut r, &bound.sigma, 1e-3))
            .collect();
        let points: Vec<SymMatrix> = starts
            .iter()
            .map(|p0| fixed_point(&model, theta, p0, FixedPointOptions::default()).unwrap().p_star)
            .collect();
        for p in &points[1..] {
            assert!(riemann_distance(&points[0], p).unwrap() < 1e-8);
        }
    }
}

#[test]
fn trajectory_from_sigma_is_monotone_and_order_following() {
    let model = example();
    let bound = ObserverBound::new(&model, example_gain(), 2.0).unwrap();
    let steps = iterate_trajectory(&model, bound.beta, &bound.sigma, 40).unwrap();
    assert_eq!(steps.len(), 41);
    for pair in steps.windows(2) {
        assert_eq!(pair[1].status, StepStatus::Ok);
        let scale = pair[0].p.frobenius_norm();
        assert!(loewner_leq(&pair[1].p, &pair[0].p, 1e-10 * scale).unwrap());
        for i in 0..2 {
            assert!(pair[1].lambda_p[i] <= pair[0].lambda_p[i] + 1e-10);
        }
    }
}

#[test]
fn fixed_point_grows_with_theta() {
    let model = example();
    let p0 = SymMatrix::identity(2);
    let grid: Vec<f64> = (0..10).map(|k| 0.9e-3 * k as f64 / 9.0).collect();
    let points: Vec<SymMatrix> = grid
        .iter()
        .map(|&t| fixed_point(&model, t, &p0, FixedPointOptions::default()).unwrap().p_star)
        .collect();
    for pair in points.windows(2) {
        let scale = pair[1].frobenius_norm();
        assert!(loewner_leq(&pair[0], &pair[1], 1e-9 * scale).unwrap());
    }
}

#[test]
fn admissible_starts_never_break_down() {
    let model = example();
    let mut r = rng(606);
    let gains = [
        example_gain(),
        DMatrix::from_column_slice(2, 1, &[-7.1, -7.9]),
        DMatrix::from_column_slice(2, 1, &[-9.0, -10.5]),
    ];
    for k in 0..20 {
        let rho = 1.1 + 0.9 * r.random::<f64>();
        let gain = gains[k % gains.len()].clone();
        let Ok(bound) = ObserverBound::new(&model, gain, rho) else {
            continue;
        };
        let p0 = shrink_below(&mut r, &bound.sigma, 1e-2);
        let theta = bound.beta * r.random::<f64>();
        let steps = iterate_trajectory(&model, theta, &p0, 40).unwrap();
        let scale = bound.sigma.frobenius_norm();
        for s in &steps {
            assert_eq!(s.status, StepStatus::Ok, "sample {k}, step {}", s.t);
            assert!(loewner_leq(&s.p, &bound.sigma, 1e-9 * scale).unwrap());
        }
    }
}

#[test]
fn fixed_points_satisfy_the_algebraic_equation() {
    let model = example();
    let bound = ObserverBound::new(&model, example_gain(), 2.0).unwrap();
    let fp = fixed_point(&model, bound.beta, &bound.sigma, FixedPointOptions::default()).unwrap();
    let scale = fp.p_star.frobenius_norm();
    assert!(fp.are_residual < 1e-8 * scale);
    assert!(verify_are(&model, bound.beta, &bound.sigma).unwrap().residual > 1.0);
}

#[test]
fn scalar_breakdown_matches_sweep() {
    let model = scalar_model(2.0, 1.0, 1.0, 1.0);
    let opts = FixedPointOptions::default();
    // plain scalar iteration, same success predicate
    let solves = |theta: f64| {
        let mut p: f64 = 1.0;
        if 1.0 / p - theta <= 1e-12 {
            return false;
        }
        for _ in 0..opts.max_iter {
            let inner = 1.0 / p + 1.0 - theta;
            if inner <= 1e-12 {
                return false;
            }
            let next = 4.0 / inner + 1.0;
            if 1.0 / next - theta <= 1e-12 {
                return false;
            }
            let d = (next / p).ln().abs();
            p = next;
            if d < opts.tol {
                return true;
            }
        }
        false
    };
    let step = 1e-4;
    let mut last_ok = 0.0;
    let mut t = 0.0;
    while t < 0.5 {
        if solves(t) {
            last_ok = t;
        } else {
            break;
        }
        t += step;
    }
    let found = breakdown_search(&model, 0.0, Some(0.5), &InitialPolicy::IdentityScaled, 1e-6, opts)
        .unwrap();
    assert!(found.found);
    assert!((found.theta - last_ok).abs() <= step + 1e-6, "{} vs {last_ok}", found.theta);
}
