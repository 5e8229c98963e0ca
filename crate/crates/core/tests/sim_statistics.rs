mod common;

use common::{example, scalar_model};
use nalgebra::{DMatrix, DVector};
use riskconv_core::bounds::lyapunov_sigma;
use riskconv_core::cone::SymMatrix;
use riskconv_core::riccati::{fixed_point, iterate_trajectory, FixedPointOptions};
use riskconv_core::sim::{run_filter, run_observer, simulate, SimulationRun};
use riskconv_core::state_space::StateSpaceModel;

fn stable_model() -> StateSpaceModel {
    StateSpaceModel::new(
        DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.8]),
        DMatrix::identity(2, 2),
        DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
        None,
    )
    .unwrap()
}

fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = x.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum();
    cov / var
}

#[test]
fn process_noise_has_unit_covariance() {
    let model = stable_model();
    let run = simulate(&model, 100_000, 2024, &DVector::zeros(2), &SymMatrix::identity(2)).unwrap();
    let mut cov = DMatrix::<f64>::zeros(2, 2);
    for u in &run.process_noise {
        cov += u * u.transpose();
    }
    cov /= run.horizon() as f64;
    for i in 0..2 {
        for j in 0..2 {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((cov[(i, j)] - target).abs() < 0.05, "{cov}");
        }
    }
}

#[test]
fn states_satisfy_the_model_given_recorded_noise() {
    let model = example();
    let run = simulate(&model, 40, 3, &DVector::from_vec(vec![1.0, 2.0]), &SymMatrix::identity(2)).unwrap();
    for t in 0..run.horizon() {
        let next = model.a() * &run.states[t] + model.b() * &run.process_noise[t];
        assert!((next - &run.states[t + 1]).norm() <= 1e-12 * (1.0 + run.states[t + 1].norm()));
        let y = model.c() * &run.states[t] + &run.measurement_noise[t];
        assert!((y - &run.observations[t]).norm() <= 1e-12 * (1.0 + run.observations[t].norm()));
    }
}

#[test]
fn kalman_innovations_are_white_at_the_fixed_point() {
    let model = stable_model();
    let p_star = fixed_point(&model, 0.0, &SymMatrix::identity(2), FixedPointOptions::default())
        .unwrap()
        .p_star;
    let t = 100_000;
    let mean = DVector::zeros(2);
    let run = simulate(&model, t, 99, &mean, &p_star).unwrap();
    let filt = run_filter(&model, 0.0, &p_star, &mean, &run.observations).unwrap();
    assert!(filt.aborted.is_none());
    let nu: Vec<f64> = filt.innovations.iter().map(|v| v[0]).collect();
    let bound = 3.0 / (t as f64).sqrt();
    assert!(autocorrelation(&nu, 1).abs() < bound);
    for (k, (y, x)) in run.observations.iter().zip(&filt.estimates).enumerate() {
        assert_eq!(filt.innovations[k], y - model.c() * x);
    }
}

#[test]
fn filter_covariances_follow_the_riccati_trajectory() {
    let model = example();
    let p0 = SymMatrix::identity(2).scale(3.0);
    let run = simulate(&model, 20, 4, &DVector::zeros(2), &p0).unwrap();
    for theta in [0.0, 2e-4] {
        let filt = run_filter(&model, theta, &p0, &DVector::zeros(2), &run.observations).unwrap();
        let traj = iterate_trajectory(&model, theta, &p0, 20).unwrap();
        assert_eq!(filt.p_sequence.len(), traj.len());
        for (a, b) in filt.p_sequence.iter().zip(&traj) {
            assert_eq!(a.as_matrix(), b.p.as_matrix());
        }
    }
}

#[test]
fn tiny_theta_matches_kalman_filter() {
    let model = example();
    let p0 = SymMatrix::identity(2);
    let run = simulate(&model, 30, 8, &DVector::zeros(2), &p0).unwrap();
    let kalman = run_filter(&model, 0.0, &p0, &DVector::zeros(2), &run.observations).unwrap();
    let risky = run_filter(&model, 1e-10, &p0, &DVector::zeros(2), &run.observations).unwrap();
    for (a, b) in kalman.estimates.iter().zip(&risky.estimates) {
        assert!((a - b).norm() < 1e-6 * (1.0 + a.norm()));
    }
}

#[test]
fn kalman_filter_beats_raw_measurements() {
    let model = StateSpaceModel::new(
        DMatrix::from_row_slice(2, 2, &[0.95, 0.1, 0.0, 0.9]),
        DMatrix::identity(2, 2) * 0.01,
        DMatrix::identity(2, 2),
        None,
    )
    .unwrap();
    let p0 = SymMatrix::identity(2).scale(1e4);
    let run = simulate(&model, 2000, 17, &DVector::zeros(2), &SymMatrix::identity(2)).unwrap();
    let filt = run_filter(&model, 0.0, &p0, &DVector::zeros(2), &run.observations).unwrap();
    let filter_rmse = filt.rmse(&run.states[..run.horizon()]);
    let raw_rmse = rmse(&run.observations, &run.states[..run.horizon()]);
    for i in 0..2 {
        assert!(filter_rmse[i] < raw_rmse[i], "{filter_rmse:?} vs {raw_rmse:?}");
    }
}

fn rmse(estimates: &[DVector<f64>], states: &[DVector<f64>]) -> Vec<f64> {
    (0..states[0].len())
        .map(|i| {
            let s: f64 = estimates.iter().zip(states).map(|(e, x)| (x[i] - e[i]).powi(2)).sum();
            (s / states.len() as f64).sqrt()
        })
        .collect()
}

#[test]
fn open_loop_observer_is_pure_prediction() {
    let model = example();
    let run = simulate(&model, 10, 1, &DVector::zeros(2), &SymMatrix::identity(2)).unwrap();
    let x0 = DVector::from_vec(vec![0.5, -1.0]);
    let obs = run_observer(&model, &DMatrix::zeros(2, 1), &x0, &run.observations).unwrap();
    let mut x = x0;
    for e in &obs.estimates {
        assert_eq!(e, &x);
        x = model.a() * x;
    }
}

#[test]
fn nilpotent_observer_error_variance_within_lyapunov_bound() {
    let model = example();
    let g = DMatrix::from_column_slice(2, 1, &[-13.1, -14.4]);
    let sigma1 = lyapunov_sigma(&model, &g, 1.0).unwrap();
    let mut cov = DMatrix::<f64>::zeros(2, 2);
    let mut count = 0.0;
    for seed in 0..400 {
        let run = simulate(&model, 40, seed, &DVector::zeros(2), &SymMatrix::identity(2)).unwrap();
        let obs = run_observer(&model, &g, &DVector::zeros(2), &run.observations).unwrap();
        for t in 5..=run.horizon() {
            let e = &run.states[t] - &obs.estimates[t];
            cov += &e * e.transpose();
            count += 1.0;
        }
    }
    cov /= count;
    let trace = sigma1.as_matrix().trace();
    assert!(cov.trace() <= 1.05 * trace, "{} vs {trace}", cov.trace());
    assert!(cov.trace() >= 0.9 * trace);
}

#[test]
fn deadbeat_scalar_observer_error_is_memoryless() {
    let model = scalar_model(0.9, 1.0, 1.0, 1.0);
    let g = DMatrix::from_element(1, 1, 0.9);
    let run = simulate(&model, 100_000, 31, &DVector::zeros(1), &SymMatrix::identity(1)).unwrap();
    let obs = run_observer(&model, &g, &DVector::zeros(1), &run.observations).unwrap();
    let err: Vec<f64> = (1..=run.horizon())
        .map(|t| run.states[t][0] - obs.estimates[t][0])
        .collect();
    let bound = 3.0 / (err.len() as f64).sqrt();
    assert!(autocorrelation(&err, 2).abs() < bound);
    assert!(autocorrelation(&err, 3).abs() < bound);
}

#[test]
fn zeroed_noise_hook_gives_deterministic_states() {
    let model = StateSpaceModel::new(
        DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.8]),
        DMatrix::zeros(2, 1),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        None,
    )
    .unwrap();
    let x0 = DVector::from_vec(vec![1.0, 1.0]);
    let run = SimulationRun::from_noises(&model, x0.clone(), vec![DVector::zeros(1); 6], vec![DVector::zeros(1); 6])
        .unwrap();
    let mut x = x0;
    for s in &run.states {
        assert_eq!(s, &x);
        x = model.a() * x;
    }
}
