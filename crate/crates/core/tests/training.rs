use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twotier::evaluation::rmse;
use twotier::nn::{self, NnConfig, Sample};
use twotier::synth::SynthConfig;
use twotier::timeseries::{DayProfile, SamplingGrid};
use twotier::{Error, SolarSeries};

fn series_of(days: Vec<Vec<f64>>) -> SolarSeries {
    let start = NaiveDate::from_ymd_opt(2015, 3, 1).unwrap();
    let days = days
        .into_iter()
        .enumerate()
        .map(|(i, s)| DayProfile::new(i, start + Days::new(i as u64), s))
        .collect();
    SolarSeries::new(SamplingGrid::default(), days).unwrap()
}

fn sample_rmse(model: &twotier::NnModel, samples: &[Sample<f64>]) -> f64 {
    let predicted: Vec<f64> = samples.iter().map(|s| model.forward(s.input)).collect();
    let targets: Vec<f64> = samples.iter().map(|s| s.target).collect();
    rmse(&predicted, &targets).unwrap()
}

#[test]
fn lm_fits_a_linear_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<Sample<f64>> = (0..50)
        .map(|_| {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            Sample {
                input: x,
                target: 0.3 * x[0] + 0.1 * x[1],
            }
        })
        .collect();

    // Ordinary least squares on [1, x1, x2] reproduces the targets exactly,
    // so the same data is representable with essentially zero error.
    let design = DMatrix::from_fn(
        50,
        3,
        |r, c| if c == 0 { 1.0 } else { samples[r].input[c - 1] },
    );
    let targets = DVector::from_iterator(50, samples.iter().map(|s| s.target));
    let beta = design
        .clone()
        .svd(true, true)
        .solve(&targets, 1e-14)
        .unwrap();
    let baseline = ((design * beta - &targets).norm_squared() / 50.0).sqrt();
    assert!(baseline < 1e-12);

    let config = NnConfig::default();
    let (model, trace) = nn::train_lm(&nn::build(&config, 3), &samples, &config).unwrap();
    let fitted = sample_rmse(&model, &samples);
    assert!(fitted < 1e-3, "rmse {fitted}, trace {:?}", trace.iterations);
}

#[test]
fn accepted_losses_never_increase() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for problem in 0..20 {
        let hidden = rng.gen_range(2..8);
        let config = NnConfig {
            hidden_neurons: hidden,
            max_iterations: 60,
            ..NnConfig::default()
        };
        let teacher = nn::build::<f64>(
            &NnConfig {
                hidden_neurons: 4,
                ..config
            },
            1000 + problem,
        );
        let samples: Vec<Sample<f64>> = (0..rng.gen_range(20..120))
            .map(|_| {
                let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                Sample {
                    input: x,
                    target: teacher.forward(x) + rng.gen_range(-0.05..0.05),
                }
            })
            .collect();
        let result = nn::train_lm(&nn::build(&config, problem), &samples, &config);
        let (_, trace) = match result {
            Err(Error::SingularStep) => panic!("problem {problem}: singular step"),
            other => other.unwrap(),
        };
        let accepted = trace.accepted_losses();
        assert!(!accepted.is_empty(), "problem {problem}: no step accepted");
        assert!(accepted[0] <= trace.initial_loss);
        assert!(
            accepted.windows(2).all(|w| w[1] <= w[0]),
            "problem {problem}: {accepted:?}"
        );
    }
}

#[test]
fn constant_series_is_learned() {
    let c = 1234.5;
    let train = series_of(vec![vec![c; 96]; 30]);
    let model = nn::fit_day_ahead(
        &train,
        &NnConfig {
            restarts: 3,
            ..NnConfig::default()
        },
    )
    .unwrap();
    let mut worst = 0.0f64;
    for d in 2..30 {
        let forecast = model.predict_for(&train, d).unwrap();
        worst = worst.max(rmse(&forecast, &train.day(d).unwrap().samples).unwrap());
    }
    assert!(worst < 1e-6 * c, "rmse {worst}");
}

#[test]
fn two_day_cycle_is_learned() {
    let clear = SynthConfig::default().clear_sky().unwrap();
    let dim: Vec<f64> = clear
        .iter()
        .enumerate()
        .map(|(m, v)| v * (0.55 + 0.1 * (m as f64 * 0.3).sin()))
        .collect();
    let days = (0..30)
        .map(|d| {
            if d % 2 == 0 {
                clear.clone()
            } else {
                dim.clone()
            }
        })
        .collect();
    let train = series_of(days);
    let model = nn::fit_day_ahead(&train, &NnConfig::default()).unwrap();
    let peak = 35_000.0;
    for d in 2..30 {
        let forecast = model.predict_for(&train, d).unwrap();
        let error = rmse(&forecast, &train.day(d).unwrap().samples).unwrap();
        assert!(error < 0.02 * peak, "day {d}: rmse {error}");
    }
}

#[test]
fn fit_is_deterministic_for_a_seed() {
    let data = twotier::synth::generate::<f64>(&SynthConfig::default(), 12, 9).unwrap();
    let config = NnConfig {
        restarts: 4,
        rng_seed: 77,
        ..NnConfig::default()
    };
    let a = nn::fit_day_ahead(&data.series, &config).unwrap();
    let b = nn::fit_day_ahead(&data.series, &config).unwrap();
    let bits = |m: &twotier::NnModel| m.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let other = nn::fit_day_ahead(
        &data.series,
        &NnConfig {
            rng_seed: 78,
            ..config
        },
    )
    .unwrap();
    assert_ne!(bits(&a), bits(&other));
}

#[test]
fn f32_pipeline_trains() {
    let data = twotier::synth::generate::<f32>(&SynthConfig::default(), 10, 2).unwrap();
    let model = nn::fit_day_ahead(
        &data.series,
        &NnConfig {
            restarts: 2,
            max_iterations: 30,
            ..NnConfig::default()
        },
    )
    .unwrap();
    let forecast = model.predict_for(&data.series, 9).unwrap();
    assert!(forecast.iter().all(|v| v.is_finite() && *v >= 0.0));
}
