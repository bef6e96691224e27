//! Day-ahead prediction with a 2-input, single-hidden-layer network.
//!
//! The power at sample `m` of day `d` is predicted from the powers at the same
//! sample of days `d-1` and `d-2`. Hidden units use `tanh`, the output unit is
//! linear, and all powers are divided by the training-set maximum before they
//! reach the network. Training is Levenberg–Marquardt on the sum of squared
//! errors, repeated from several seeded initialisations.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, Matrix};
use crate::timeseries::{DayProfile, SamplingGrid, SolarSeries};
use crate::Scalar;

pub const INPUT_WIDTH: usize = 2;
pub const MAX_HIDDEN_NEURONS: usize = 64;

/// Damping above this ends training.
pub const MAX_DAMPING: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnConfig {
    pub hidden_neurons: usize,
    pub restarts: usize,
    pub lm_initial_damping: f64,
    pub lm_damping_factor: f64,
    pub max_iterations: usize,
    pub loss_tolerance: f64,
    pub rng_seed: u64,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self {
            hidden_neurons: 6,
            restarts: 10,
            lm_initial_damping: 1e-3,
            lm_damping_factor: 10.0,
            max_iterations: 200,
            loss_tolerance: 1e-9,
            rng_seed: 0,
        }
    }
}

impl NnConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(1..=MAX_HIDDEN_NEURONS).contains(&self.hidden_neurons) {
            return fail(format!(
                "hidden neurons must be in 1..={MAX_HIDDEN_NEURONS}, got {}",
                self.hidden_neurons
            ));
        }
        if self.restarts == 0 {
            return fail("restarts must be positive".into());
        }
        if !(self.lm_initial_damping > 0.0) || !self.lm_initial_damping.is_finite() {
            return fail(format!(
                "initial damping {} must be positive",
                self.lm_initial_damping
            ));
        }
        if !(self.lm_damping_factor > 1.0) || !self.lm_damping_factor.is_finite() {
            return fail(format!(
                "damping factor {} must exceed 1",
                self.lm_damping_factor
            ));
        }
        if !(self.loss_tolerance > 0.0) || !self.loss_tolerance.is_finite() {
            return fail(format!(
                "loss tolerance {} must be positive",
                self.loss_tolerance
            ));
        }
        Ok(())
    }

    /// Seed of restart `r` under this config's master seed.
    pub fn restart_seed(&self, restart: usize) -> u64 {
        self.rng_seed.wrapping_add(restart as u64)
    }
}

/// Number of trainable parameters for `hidden` hidden units.
pub fn parameter_count(hidden: usize) -> usize {
    hidden * INPUT_WIDTH + hidden + hidden + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnModel<T> {
    hidden_weights: Vec<[T; INPUT_WIDTH]>,
    hidden_biases: Vec<T>,
    output_weights: Vec<T>,
    output_bias: T,
    scale_max: T,
    config: NnConfig,
    grid: Option<SamplingGrid>,
}

impl<T: Scalar> NnModel<T> {
    /// Assembles a model from explicit weights, validating every invariant.
    pub fn from_parts(
        hidden_weights: Vec<[T; INPUT_WIDTH]>,
        hidden_biases: Vec<T>,
        output_weights: Vec<T>,
        output_bias: T,
        scale_max: T,
        config: NnConfig,
        grid: Option<SamplingGrid>,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_neurons;
        if hidden_weights.len() != h || hidden_biases.len() != h || output_weights.len() != h {
            return Err(Error::InvalidConfig(format!(
                "weight shapes ({}, {}, {}) do not match {h} hidden neurons",
                hidden_weights.len(),
                hidden_biases.len(),
                output_weights.len()
            )));
        }
        let model = Self {
            hidden_weights,
            hidden_biases,
            output_weights,
            output_bias,
            scale_max,
            config,
            grid,
        };
        if model.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite network weight".into()));
        }
        if !(scale_max > T::zero()) || !scale_max.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "scale_max {scale_max} must be positive"
            )));
        }
        Ok(model)
    }

    pub fn hidden_neurons(&self) -> usize {
        self.hidden_weights.len()
    }

    pub fn hidden_weights(&self) -> &[[T; INPUT_WIDTH]] {
        &self.hidden_weights
    }

    pub fn hidden_biases(&self) -> &[T] {
        &self.hidden_biases
    }

    pub fn output_weights(&self) -> &[T] {
        &self.output_weights
    }

    pub fn output_bias(&self) -> T {
        self.output_bias
    }

    pub fn scale_max(&self) -> T {
        self.scale_max
    }

    pub fn config(&self) -> &NnConfig {
        &self.config
    }

    pub fn grid(&self) -> Option<SamplingGrid> {
        self.grid
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(self.hidden_neurons())
    }

    /// Flat parameter vector: hidden weights row by row, hidden biases,
    /// output weights, output bias. Jacobian columns use the same order.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for row in &self.hidden_weights {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.hidden_biases);
        out.extend_from_slice(&self.output_weights);
        out.push(self.output_bias);
        out
    }

    pub fn set_params(&mut self, params: &[T]) {
        let h = self.hidden_neurons();
        assert_eq!(params.len(), parameter_count(h), "parameter vector length");
        for (j, row) in self.hidden_weights.iter_mut().enumerate() {
            row.copy_from_slice(&params[j * INPUT_WIDTH..(j + 1) * INPUT_WIDTH]);
        }
        let mut at = h * INPUT_WIDTH;
        self.hidden_biases.copy_from_slice(&params[at..at + h]);
        at += h;
        self.output_weights.copy_from_slice(&params[at..at + h]);
        at += h;
        self.output_bias = params[at];
    }

    /// Network output for one normalised input pair.
    pub fn forward(&self, input: [T; INPUT_WIDTH]) -> T {
        self.hidden_weights
            .iter()
            .zip(&self.hidden_biases)
            .zip(&self.output_weights)
            .fold(self.output_bias, |acc, ((w, &b), &v)| {
                acc + v * (w[0] * input[0] + w[1] * input[1] + b).tanh()
            })
    }

    /// Analytic `∂forward/∂θ` for every input in `batch`, one row per input.
    pub fn jacobian(&self, batch: &[[T; INPUT_WIDTH]]) -> Matrix<T> {
        let h = self.hidden_neurons();
        let mut jac = Matrix::zeros(batch.len(), self.parameter_count());
        for (r, input) in batch.iter().enumerate() {
            let row = jac.row_mut(r);
            for j in 0..h {
                let w = self.hidden_weights[j];
                let t = (w[0] * input[0] + w[1] * input[1] + self.hidden_biases[j]).tanh();
                let dact = self.output_weights[j] * (T::one() - t * t);
                row[j * INPUT_WIDTH] = dact * input[0];
                row[j * INPUT_WIDTH + 1] = dact * input[1];
                row[h * INPUT_WIDTH + j] = dact;
                row[h * INPUT_WIDTH + h + j] = t;
            }
            row[h * INPUT_WIDTH + 2 * h] = T::one();
        }
        jac
    }

    /// Day-ahead forecast from the two preceding days, in watts, clamped at 0.
    pub fn predict_day(
        &self,
        prev_day: &DayProfile<T>,
        prev_prev_day: &DayProfile<T>,
    ) -> Result<Vec<T>> {
        if prev_day.samples.len() != prev_prev_day.samples.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(grid) = self.grid {
            if prev_day.samples.len() != grid.samples_per_day() {
                return Err(Error::GridMismatch);
            }
        }
        let scale = self.scale_max;
        Ok(prev_day
            .samples
            .iter()
            .zip(&prev_prev_day.samples)
            .map(|(&p1, &p2)| {
                let out = self.forward([p1 / scale, p2 / scale]) * scale;
                if out > T::zero() {
                    out
                } else {
                    T::zero()
                }
            })
            .collect())
    }

    /// Forecast for `target_day`, taking the two preceding days from `history`.
    pub fn predict_for(&self, history: &SolarSeries<T>, target_day: usize) -> Result<Vec<T>> {
        let missing = Error::InsufficientHistory {
            target_day,
            depth_days: 2,
        };
        if target_day < 2 {
            return Err(missing);
        }
        match (history.day(target_day - 1), history.day(target_day - 2)) {
            (Some(p1), Some(p2)) => self.predict_day(p1, p2),
            _ => Err(missing),
        }
    }
}

/// A freshly initialised network: every weight and bias i.i.d. uniform in
/// `[-0.5, 0.5]` from a ChaCha8 stream seeded with `seed`, `scale_max` 1.
pub fn build<T: Scalar>(config: &NnConfig, seed: u64) -> NnModel<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || T::lit(unit_interval(rng.next_u64()) - 0.5);
    let h = config.hidden_neurons;
    let hidden_weights = (0..h).map(|_| [draw(), draw()]).collect();
    let hidden_biases = (0..h).map(|_| draw()).collect();
    let output_weights = (0..h).map(|_| draw()).collect();
    let output_bias = draw();
    NnModel {
        hidden_weights,
        hidden_biases,
        output_weights,
        output_bias,
        scale_max: T::one(),
        config: *config,
        grid: None,
    }
}

/// Maps 64 random bits to `[0, 1)` using the top 53.
pub(crate) fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub input: [T; INPUT_WIDTH],
    pub target: T,
}

/// Record of one Levenberg–Marquardt run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace<T> {
    pub initial_loss: T,
    /// Sum of squared errors after every proposed step, accepted or not.
    pub losses: Vec<T>,
    pub accepted: Vec<bool>,
    pub final_damping: f64,
    pub iterations: usize,
}

impl<T: Scalar> TrainTrace<T> {
    pub fn accepted_losses(&self) -> Vec<T> {
        self.losses
            .iter()
            .zip(&self.accepted)
            .filter(|(_, &a)| a)
            .map(|(&l, _)| l)
            .collect()
    }

    pub fn final_loss(&self) -> T {
        self.losses.last().copied().unwrap_or(self.initial_loss)
    }
}

fn sum_squared_error<T: Scalar>(model: &NnModel<T>, samples: &[Sample<T>]) -> T {
    samples
        .iter()
        .map(|s| {
            let e = s.target - model.forward(s.input);
            e * e
        })
        .fold(T::zero(), |a, b| a + b)
}

/// Levenberg–Marquardt on the sum of squared errors.
///
/// Each iteration solves `(JᵀJ + λI)δ = Jᵀe` and keeps the step only if the
/// loss drops, dividing `λ` by the damping factor; otherwise `λ` is
/// multiplied by it and the step is retried. Training stops after
/// `max_iterations` accepted steps, when an accepted step improves the loss
/// by less than `loss_tolerance`, when the loss itself falls below it, or
/// when `λ` exceeds [`MAX_DAMPING`].
pub fn train_lm<T: Scalar>(
    model: &NnModel<T>,
    samples: &[Sample<T>],
    config: &NnConfig,
) -> Result<(NnModel<T>, TrainTrace<T>)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut model = model.clone();
    let inputs: Vec<[T; INPUT_WIDTH]> = samples.iter().map(|s| s.input).collect();
    let tolerance = T::lit(config.loss_tolerance);
    let factor = config.lm_damping_factor;
    let mut damping = config.lm_initial_damping;
    let mut loss = sum_squared_error(&model, samples);
    let mut trace = TrainTrace {
        initial_loss: loss,
        losses: Vec::new(),
        accepted: Vec::new(),
        final_damping: damping,
        iterations: 0,
    };
    if !loss.is_finite() {
        return Err(Error::NumericalFailure("initial loss is not finite".into()));
    }

    'outer: while trace.iterations < config.max_iterations && loss > tolerance {
        trace.iterations += 1;
        let jac = model.jacobian(&inputs);
        let errors: Vec<T> = samples
            .iter()
            .map(|s| s.target - model.forward(s.input))
            .collect();
        let gram = jac.gram();
        let gradient = jac.tr_mul_vec(&errors);
        let params = model.params();
        let mut solved_any = false;

        loop {
            if damping > MAX_DAMPING {
                if !solved_any {
                    return Err(Error::SingularStep);
                }
                break 'outer;
            }
            let mut damped = gram.clone();
            for i in 0..damped.rows() {
                damped[(i, i)] = damped[(i, i)] + T::lit(damping);
            }
            let Some(step) = cholesky_solve(&damped, &gradient) else {
                damping *= factor;
                continue;
            };
            solved_any = true;

            let candidate: Vec<T> = params.iter().zip(&step).map(|(&p, &d)| p + d).collect();
            let mut proposal = model.clone();
            proposal.set_params(&candidate);
            let new_loss = sum_squared_error(&proposal, samples);

            if new_loss.is_finite() && new_loss < loss {
                let improvement = loss - new_loss;
                model = proposal;
                loss = new_loss;
                damping /= factor;
                trace.losses.push(loss);
                trace.accepted.push(true);
                if improvement < tolerance {
                    break 'outer;
                }
                break;
            }
            trace.losses.push(loss);
            trace.accepted.push(false);
            damping *= factor;
        }
    }
    trace.final_damping = damping;
    Ok((model, trace))
}

/// Normalised `(P_{d-1}(m), P_{d-2}(m)) -> P_d(m)` samples over every day
/// `d` with two predecessors in `train`, plus the scale used.
pub fn day_ahead_samples<T: Scalar>(train: &SolarSeries<T>) -> Result<(Vec<Sample<T>>, T)> {
    if train.len() < 3 {
        return Err(Error::InsufficientTrainingDays {
            needed: 3,
            available: train.len(),
        });
    }
    let scale = train
        .days()
        .iter()
        .flat_map(|d| d.samples.iter().copied())
        .fold(T::zero(), T::max);
    if !(scale > T::zero()) {
        return Err(Error::InvalidSeries(
            "training data is identically zero".into(),
        ));
    }
    let days = train.days();
    let mut samples = Vec::with_capacity((days.len() - 2) * train.grid().samples_per_day());
    for d in 2..days.len() {
        for m in 0..train.grid().samples_per_day() {
            samples.push(Sample {
                input: [
                    days[d - 1].samples[m] / scale,
                    days[d - 2].samples[m] / scale,
                ],
                target: days[d].samples[m] / scale,
            });
        }
    }
    Ok((samples, scale))
}

/// Outcome of one seeded training run.
#[derive(Debug, Clone)]
pub struct RestartResult<T> {
    pub seed: u64,
    pub model: NnModel<T>,
    /// RMSE on the normalised training samples.
    pub train_rmse: T,
    pub trace: TrainTrace<T>,
}

/// Builds from `seed` and trains once on `samples`.
pub fn train_from_seed<T: Scalar>(
    samples: &[Sample<T>],
    scale: T,
    grid: SamplingGrid,
    config: &NnConfig,
    seed: u64,
) -> Result<RestartResult<T>> {
    let mut initial = build::<T>(config, seed);
    initial.scale_max = scale;
    initial.grid = Some(grid);
    let (model, trace) = train_lm(&initial, samples, config)?;
    let train_rmse = (trace.final_loss() / T::from_usize_lossy(samples.len())).sqrt();
    Ok(RestartResult {
        seed,
        model,
        train_rmse,
        trace,
    })
}

/// Trains `config.restarts` networks from consecutive seeds and keeps the one
/// with the lowest training RMSE (earliest restart on ties). Restarts run in
/// parallel; the selection does not depend on completion order.
pub fn fit_day_ahead<T: Scalar>(train: &SolarSeries<T>, config: &NnConfig) -> Result<NnModel<T>> {
    config.validate()?;
    let (samples, scale) = day_ahead_samples(train)?;
    let runs = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            train_from_seed(
                &samples,
                scale,
                train.grid(),
                config,
                config.restart_seed(r),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let best = runs
        .into_iter()
        .reduce(|best, run| {
            if run.train_rmse < best.train_rmse {
                run
            } else {
                best
            }
        })
        .expect("at least one restart");
    Ok(best.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn zero_model(hidden: usize) -> NnModel<f64> {
        let config = NnConfig {
            hidden_neurons: hidden,
            ..NnConfig::default()
        };
        let mut model = build::<f64>(&config, 0);
        model.set_params(&vec![0.0; parameter_count(hidden)]);
        model
    }

    fn day(i: usize, samples: Vec<f64>) -> DayProfile<f64> {
        let start = NaiveDate::from_ymd_opt(2015, 2, 15).unwrap();
        DayProfile::new(i, start + chrono::Days::new(i as u64), samples)
    }

    #[test]
    fn parameter_count_for_six_hidden() {
        assert_eq!(parameter_count(6), 25);
        let model = build::<f64>(&NnConfig::default(), 3);
        assert_eq!(model.params().len(), 25);
    }

    #[test]
    fn build_is_seeded() {
        let config = NnConfig::default();
        let a = build::<f64>(&config, 42);
        let b = build::<f64>(&config, 42);
        let c = build::<f64>(&config, 43);
        assert_eq!(
            a.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a.params(), c.params());
        assert!(a.params().iter().all(|v| (-0.5..=0.5).contains(v)));
    }

    #[test]
    fn zero_and_bias_only_networks() {
        let mut model = zero_model(6);
        assert_eq!(model.forward([0.3, 0.9]), 0.0);
        model.output_bias = 0.7;
        assert_eq!(model.forward([0.3, 0.9]), 0.7);
        let jac = model.jacobian(&[[0.1, 0.2], [0.5, 0.5], [1.0, 0.0]]);
        assert_eq!((jac.rows(), jac.cols()), (3, 25));
        assert!(jac.column(24).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn bias_only_forecast_is_flat() {
        let mut model = zero_model(6);
        model.output_bias = 0.5;
        model.scale_max = 1000.0;
        let p1 = day(1, vec![300.0; 96]);
        let p2 = day(0, vec![100.0; 96]);
        assert_eq!(model.predict_day(&p1, &p2).unwrap(), vec![500.0; 96]);
    }

    #[test]
    fn negative_outputs_clamp() {
        let mut model = zero_model(2);
        model.output_bias = -0.25;
        let p = day(0, vec![1.0; 4]);
        assert_eq!(model.predict_day(&p, &p).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn grid_mismatch() {
        let model = zero_model(2);
        assert!(matches!(
            model.predict_day(&day(1, vec![0.0; 4]), &day(0, vec![0.0; 5])),
            Err(Error::GridMismatch)
        ));
        let mut gridded = model.clone();
        gridded.grid = Some(SamplingGrid::default());
        assert!(matches!(
            gridded.predict_day(&day(1, vec![0.0; 4]), &day(0, vec![0.0; 4])),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn zero_iteration_budget_returns_model_unchanged() {
        let config = NnConfig {
            max_iterations: 0,
            ..NnConfig::default()
        };
        let model = build::<f64>(&config, 9);
        let samples = vec![Sample {
            input: [0.1, 0.2],
            target: 0.3,
        }];
        let (trained, trace) = train_lm(&model, &samples, &config).unwrap();
        assert_eq!(trained, model);
        assert!(trace.losses.is_empty());
    }

    #[test]
    fn empty_samples_rejected() {
        let config = NnConfig::default();
        let model = build::<f64>(&config, 1);
        assert!(matches!(
            train_lm(&model, &[], &config),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn config_validation() {
        let bad = |f: fn(&mut NnConfig)| {
            let mut c = NnConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.hidden_neurons = 0));
        assert!(bad(|c| c.hidden_neurons = 65));
        assert!(bad(|c| c.restarts = 0));
        assert!(bad(|c| c.lm_damping_factor = 1.0));
        assert!(bad(|c| c.lm_initial_damping = 0.0));
        assert!(bad(|c| c.loss_tolerance = -1.0));
        assert!(NnConfig::default().validate().is_ok());
    }

    #[test]
    fn sample_count_for_thirty_days() {
        let grid = SamplingGrid::default();
        let days = (0..30).map(|i| day(i, vec![(i + 1) as f64; 96])).collect();
        let series = SolarSeries::new(grid, days).unwrap();
        let (samples, scale) = day_ahead_samples(&series).unwrap();
        assert_eq!(samples.len(), 28 * 96);
        assert_eq!(scale, 30.0);
        assert_eq!(samples[0].input, [2.0 / 30.0, 1.0 / 30.0]);
        assert_eq!(samples[0].target, 3.0 / 30.0);
    }

    #[test]
    fn too_few_days() {
        let grid = SamplingGrid::new(43_200).unwrap();
        let days = (0..2).map(|i| day(i, vec![1.0; 2])).collect();
        let series = SolarSeries::new(grid, days).unwrap();
        assert!(matches!(
            fit_day_ahead(&series, &NnConfig::default()),
            Err(Error::InsufficientTrainingDays {
                needed: 3,
                available: 2
            })
        ));
    }
}
