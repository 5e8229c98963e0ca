//! Synthetic Gauss-Markov data and the predicted-form filters run on it.
//!
//! Randomness comes from ChaCha20 seeded with `ChaCha20Rng::seed_from_u64(seed)`.
//! Each noise source reads its own stream of that generator: stream 0 draws
//! the initial state, stream 1 the process noise `u_t`, stream 2 the
//! measurement noise `v_t`. Runs are therefore bit-reproducible and adding
//! steps never perturbs earlier draws of another source.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::cone::{spd_sqrt, SymMatrix};
use crate::error::{Error, Result};
use crate::riccati::{rs_gain, rs_riccati_map, StepStatus};
use crate::state_space::StateSpaceModel;

pub const INITIAL_STATE_STREAM: u64 = 0;
pub const PROCESS_NOISE_STREAM: u64 = 1;
pub const MEASUREMENT_NOISE_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn standard_normal(rng: &mut ChaCha20Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

/// States, observations and the noise draws that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub seed: Option<u64>,
    /// `x_0 ..= x_T`.
    pub states: Vec<DVector<f64>>,
    /// `y_0 .. y_{T-1}`.
    pub observations: Vec<DVector<f64>>,
    pub process_noise: Vec<DVector<f64>>,
    pub measurement_noise: Vec<DVector<f64>>,
}

impl SimulationRun {
    pub fn horizon(&self) -> usize {
        self.observations.len()
    }

    /// Propagates the model from `x0` with the given noise sequences.
    pub fn from_noises(
        model: &StateSpaceModel,
        x0: DVector<f64>,
        process_noise: Vec<DVector<f64>>,
        measurement_noise: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if x0.len() != model.n() {
            return Err(Error::Dimension {
                context: "initial state",
                expected: (model.n(), 1),
                found: (x0.len(), 1),
            });
        }
        if process_noise.len() != measurement_noise.len() {
            return Err(Error::invalid("noise sequences must have equal length"));
        }
        if process_noise.iter().any(|u| u.len() != model.m())
            || measurement_noise.iter().any(|v| v.len() != model.p())
        {
            return Err(Error::invalid("noise sample has the wrong dimension"));
        }
        let mut states = Vec::with_capacity(process_noise.len() + 1);
        let mut observations = Vec::with_capacity(process_noise.len());
        let mut x = x0;
        for (u, v) in process_noise.iter().zip(&measurement_noise) {
            observations.push(model.c() * &x + v);
            let next = model.a() * &x + model.b() * u;
            states.push(x);
            x = next;
        }
        states.push(x);
        Ok(Self {
            seed: None,
            states,
            observations,
            process_noise,
            measurement_noise,
        })
    }
}

/// Draws `x_0 ~ N(x0_mean, P0)` and `T` steps of unit-variance process and
/// measurement noise.
pub fn simulate(
    model: &StateSpaceModel,
    horizon: usize,
    seed: u64,
    x0_mean: &DVector<f64>,
    p0: &SymMatrix,
) -> Result<SimulationRun> {
    if horizon == 0 {
        return Err(Error::invalid("simulation horizon must be at least 1"));
    }
    if p0.dim() != model.n() || x0_mean.len() != model.n() {
        return Err(Error::Dimension {
            context: "initial state distribution",
            expected: (model.n(), model.n()),
            found: (x0_mean.len(), p0.dim()),
        });
    }
    let root = spd_sqrt(p0)?;
    let mut init = stream(seed, INITIAL_STATE_STREAM);
    let x0 = x0_mean + root.as_matrix() * standard_normal(&mut init, model.n());
    let mut u_rng = stream(seed, PROCESS_NOISE_STREAM);
    let mut v_rng = stream(seed, MEASUREMENT_NOISE_STREAM);
    let u = (0..horizon)
        .map(|_| standard_normal(&mut u_rng, model.m()))
        .collect();
    let v = (0..horizon)
        .map(|_| standard_normal(&mut v_rng, model.p()))
        .collect();
    let mut run = SimulationRun::from_noises(model, x0, u, v)?;
    run.seed = Some(seed);
    Ok(run)
}

/// Output of a filter or observer pass over a sequence of observations.
#[derive(Debug, Clone)]
pub struct FilterRun {
    /// `x̂_0 ..= x̂_T` (one more than the observations consumed).
    pub estimates: Vec<DVector<f64>>,
    /// `ν_t = y_t - C x̂_t`.
    pub innovations: Vec<DVector<f64>>,
    /// Riccati iterates `P_0 ..= P_T`; empty for a fixed-gain observer.
    pub p_sequence: Vec<SymMatrix>,
    /// Set when the filter stopped early because `V_t` lost positive definiteness.
    pub aborted: Option<(usize, StepStatus)>,
}

impl FilterRun {
    /// Per-component root-mean-square error against the true states,
    /// over the estimates that have a matching state.
    pub fn rmse(&self, states: &[DVector<f64>]) -> Vec<f64> {
        let count = self.estimates.len().min(states.len());
        if count == 0 {
            return Vec::new();
        }
        let n = states[0].len();
        let mut acc = DVector::<f64>::zeros(n);
        for (e, x) in self.estimates.iter().zip(states).take(count) {
            acc += (x - e).map(|d| d * d);
        }
        acc.iter()
            .map(|s| num_traits::Float::sqrt(s / count as f64))
            .collect()
    }
}

fn check_filter_inputs(
    model: &StateSpaceModel,
    x0_hat: &DVector<f64>,
    observations: &[DVector<f64>],
) -> Result<()> {
    if observations.is_empty() {
        return Err(Error::invalid("no observations"));
    }
    if x0_hat.len() != model.n() || observations.iter().any(|y| y.len() != model.p()) {
        return Err(Error::invalid("initial estimate or observation has the wrong dimension"));
    }
    Ok(())
}

/// Predicted-form risk-sensitive filter `x̂_{t+1} = A x̂_t + K_t ν_t`, with
/// `K_t` recomputed from the Riccati iterate at every step (`θ = 0` is the
/// Kalman filter).
pub fn run_filter(
    model: &StateSpaceModel,
    theta: f64,
    p0: &SymMatrix,
    x0_hat: &DVector<f64>,
    observations: &[DVector<f64>],
) -> Result<FilterRun> {
    check_filter_inputs(model, x0_hat, observations)?;
    let mut run = FilterRun {
        estimates: Vec::with_capacity(observations.len() + 1),
        innovations: Vec::with_capacity(observations.len()),
        p_sequence: Vec::with_capacity(observations.len() + 1),
        aborted: None,
    };
    let mut x = x0_hat.clone();
    let mut p = p0.clone();
    for (t, y) in observations.iter().enumerate() {
        let gain = match rs_gain(model, theta, &p) {
            Ok(g) => g,
            Err(Error::ValidityViolated { .. }) => {
                run.aborted = Some((t, StepStatus::ValidityViolated));
                break;
            }
            Err(Error::NotPositiveDefinite { .. }) => {
                run.aborted = Some((t, StepStatus::NotPositiveDefinite));
                break;
            }
            Err(e) => return Err(e),
        };
        let nu = y - model.c() * &x;
        let next_x = model.a() * &x + &gain.gain * &nu;
        let next_p = rs_riccati_map(model, theta, &p)?;
        run.estimates.push(core::mem::replace(&mut x, next_x));
        run.innovations.push(nu);
        run.p_sequence.push(core::mem::replace(&mut p, next_p));
    }
    run.estimates.push(x);
    run.p_sequence.push(p);
    Ok(run)
}

/// Fixed-gain observer `x̂_{t+1} = A x̂_t + G (y_t - C x̂_t)`.
pub fn run_observer(
    model: &StateSpaceModel,
    gain: &DMatrix<f64>,
    x0_hat: &DVector<f64>,
    observations: &[DVector<f64>],
) -> Result<FilterRun> {
    check_filter_inputs(model, x0_hat, observations)?;
    if gain.shape() != (model.n(), model.p()) {
        return Err(Error::Dimension {
            context: "observer gain G",
            expected: (model.n(), model.p()),
            found: gain.shape(),
        });
    }
    let mut estimates = Vec::with_capacity(observations.len() + 1);
    let mut innovations = Vec::with_capacity(observations.len());
    let mut x = x0_hat.clone();
    for y in observations {
        let nu = y - model.c() * &x;
        let next = model.a() * &x + gain * &nu;
        estimates.push(core::mem::replace(&mut x, next));
        innovations.push(nu);
    }
    estimates.push(x);
    Ok(FilterRun {
        estimates,
        innovations,
        p_sequence: Vec::new(),
        aborted: None,
    })
}
