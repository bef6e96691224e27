//! Weighted k-nearest-neighbour day-ahead prediction.
//!
//! Each training pair maps the `D` days preceding day `i` (concatenated) to
//! the profile of day `i`. A forecast finds the `k + 1` stored contexts
//! closest to the query in Euclidean distance and blends the targets of the
//! first `k` with weights that fall linearly from 1 at the nearest neighbour
//! to 0 at the `(k+1)`-th.

use crate::error::{Error, Result};
use crate::timeseries::{day_context, SolarSeries};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KnnConfig {
    pub depth_days: usize,
    pub neighbors: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            depth_days: 5,
            neighbors: 2,
        }
    }
}

impl KnnConfig {
    pub fn new(depth_days: usize, neighbors: usize) -> Result<Self> {
        let config = Self {
            depth_days,
            neighbors,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth_days == 0 {
            return Err(Error::InvalidConfig(
                "k-NN depth must be at least one day".into(),
            ));
        }
        // With k = 1 the weight formula degenerates to plain nearest neighbour.
        if self.neighbors < 2 {
            return Err(Error::InvalidConfig(format!(
                "k-NN needs at least 2 neighbours, got {}",
                self.neighbors
            )));
        }
        Ok(())
    }

    /// Days of training data `fit` needs.
    pub fn min_training_days(&self) -> usize {
        self.depth_days + self.neighbors + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair<T> {
    /// Index of the target day; also the distance tie-breaker.
    pub day_index: usize,
    pub context: Vec<T>,
    pub target: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel<T> {
    config: KnnConfig,
    pairs: Vec<TrainingPair<T>>,
}

/// One stored pair ranked against a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<T> {
    pub pair: usize,
    pub day_index: usize,
    pub distance: T,
}

impl<T: Scalar> KnnModel<T> {
    /// Builds a model from stored pairs, checking every model invariant.
    pub fn from_parts(config: KnnConfig, pairs: Vec<TrainingPair<T>>) -> Result<Self> {
        config.validate()?;
        if pairs.len() < config.neighbors + 1 {
            return Err(Error::InsufficientTrainingDays {
                needed: config.neighbors + 1,
                available: pairs.len(),
            });
        }
        let context_len = pairs[0].context.len();
        let target_len = pairs[0].target.len();
        if target_len == 0 || context_len != config.depth_days * target_len {
            return Err(Error::InvalidConfig(format!(
                "context length {context_len} is not depth {} x target length {target_len}",
                config.depth_days
            )));
        }
        for pair in &pairs {
            if pair.context.len() != context_len {
                return Err(Error::DimensionMismatch {
                    expected: context_len,
                    found: pair.context.len(),
                });
            }
            if pair.target.len() != target_len {
                return Err(Error::DimensionMismatch {
                    expected: target_len,
                    found: pair.target.len(),
                });
            }
            if pair
                .context
                .iter()
                .chain(&pair.target)
                .any(|v| !v.is_finite())
            {
                return Err(Error::InvalidConfig(format!(
                    "pair for day {} holds a non-finite value",
                    pair.day_index
                )));
            }
        }
        Ok(Self { config, pairs })
    }

    pub fn config(&self) -> KnnConfig {
        self.config
    }

    pub fn pairs(&self) -> &[TrainingPair<T>] {
        &self.pairs
    }

    pub fn context_len(&self) -> usize {
        self.pairs[0].context.len()
    }

    pub fn samples_per_day(&self) -> usize {
        self.pairs[0].target.len()
    }

    /// The `k + 1` nearest stored pairs, closest first. Equal distances are
    /// ordered by ascending day index.
    pub fn nearest(&self, context: &[T]) -> Result<Vec<Neighbor<T>>> {
        if context.len() != self.context_len() {
            return Err(Error::DimensionMismatch {
                expected: self.context_len(),
                found: context.len(),
            });
        }
        let mut ranked: Vec<Neighbor<T>> = self
            .pairs
            .iter()
            .enumerate()
            .map(|(i, pair)| Neighbor {
                pair: i,
                day_index: pair.day_index,
                distance: euclidean(&pair.context, context),
            })
            .collect();
        if ranked.iter().any(|n| n.distance.is_nan()) {
            return Err(Error::NumericalFailure("NaN distance in k-NN query".into()));
        }
        ranked.sort_by(|a, b| {
            a.distance
                .partial_cmp(&b.distance)
                .expect("distances are not NaN")
                .then(a.day_index.cmp(&b.day_index))
        });
        ranked.truncate(self.config.neighbors + 1);
        Ok(ranked)
    }

    /// Day-ahead forecast for the day following `context`.
    pub fn predict_day(&self, context: &[T]) -> Result<Vec<T>> {
        let nearest = self.nearest(context)?;
        let distances: Vec<T> = nearest.iter().map(|n| n.distance).collect();
        let weights = neighbor_weights(&distances)?;
        let total = weights.iter().copied().fold(T::zero(), |a, b| a + b);

        // Σ sₗ·yₗ written as y₁ + Σ sₗ·(yₗ − y₁): identical targets come back
        // exactly instead of picking up rounding from the shares.
        let base = &self.pairs[nearest[0].pair].target;
        let mut forecast = base.clone();
        for (neighbor, &w) in nearest.iter().zip(&weights).skip(1) {
            let share = w / total;
            for ((out, &y), &y0) in forecast
                .iter_mut()
                .zip(&self.pairs[neighbor.pair].target)
                .zip(base)
            {
                *out = *out + share * (y - y0);
            }
        }
        Ok(forecast)
    }

    /// Forecast for `target_day`, taking the context from `history`.
    pub fn predict_for(&self, history: &SolarSeries<T>, target_day: usize) -> Result<Vec<T>> {
        let context = day_context(history, target_day, self.config.depth_days)?;
        self.predict_day(&context)
    }
}

/// One pair per training day that has `D` days of history inside `train`.
pub fn fit<T: Scalar>(train: &SolarSeries<T>, config: KnnConfig) -> Result<KnnModel<T>> {
    config.validate()?;
    let needed = config.min_training_days();
    if train.len() < needed {
        return Err(Error::InsufficientTrainingDays {
            needed,
            available: train.len(),
        });
    }
    let pairs = train.days()[config.depth_days..]
        .iter()
        .map(|day| {
            Ok(TrainingPair {
                day_index: day.day_index,
                context: day_context(train, day.day_index, config.depth_days)?,
                target: day.samples.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    KnnModel::from_parts(config, pairs)
}

/// Blending weights for the first `k` of `k + 1` ascending distances.
///
/// `w(l) = (d[k+1] - d[l]) / (d[k+1] - d[1])`; when every distance is equal
/// the ratio is 0/0 and all weights are 1.
pub fn neighbor_weights<T: Scalar>(sorted_distances: &[T]) -> Result<Vec<T>> {
    if sorted_distances.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: sorted_distances.len(),
        });
    }
    if sorted_distances.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::UnsortedDistances);
    }
    let k = sorted_distances.len() - 1;
    let nearest = sorted_distances[0];
    let cutoff = sorted_distances[k];
    let span = cutoff - nearest;
    if span == T::zero() {
        return Ok(vec![T::one(); k]);
    }
    Ok(sorted_distances[..k]
        .iter()
        .map(|&d| (cutoff - d) / span)
        .collect())
}

fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |acc, v| acc + v)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{DayProfile, SamplingGrid};
    use chrono::NaiveDate;

    fn series(n: usize) -> SolarSeries<f64> {
        let grid = SamplingGrid::default();
        let start = NaiveDate::from_ymd_opt(2015, 2, 15).unwrap();
        let days = (0..n)
            .map(|i| {
                DayProfile::new(
                    i,
                    start + chrono::Days::new(i as u64),
                    (0..96)
                        .map(|m| ((i * 7 + m * 3) % 11) as f64 * 100.0)
                        .collect(),
                )
            })
            .collect();
        SolarSeries::new(grid, days).unwrap()
    }

    fn pair(day_index: usize, context: Vec<f64>, target: Vec<f64>) -> TrainingPair<f64> {
        TrainingPair {
            day_index,
            context,
            target,
        }
    }

    #[test]
    fn weights_hand_examples() {
        let w = neighbor_weights(&[1.0f64, 2.0, 4.0]).unwrap();
        assert_eq!(w[0], 1.0);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(neighbor_weights(&[3.0, 3.0, 3.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(neighbor_weights(&[0.0, 5.0, 10.0]).unwrap(), vec![1.0, 0.5]);
        assert!(matches!(
            neighbor_weights(&[2.0, 1.0, 4.0]),
            Err(Error::UnsortedDistances)
        ));
    }

    #[test]
    fn config_rejects_single_neighbour() {
        assert!(KnnConfig::new(5, 1).is_err());
        assert!(KnnConfig::new(0, 2).is_err());
        assert!(KnnConfig::new(5, 2).is_ok());
    }

    #[test]
    fn fit_counts_pairs_and_shapes() {
        let model = fit(&series(30), KnnConfig::new(5, 2).unwrap()).unwrap();
        assert_eq!(model.pairs().len(), 25);
        assert_eq!(model.pairs()[0].day_index, 5);
        assert!(model
            .pairs()
            .iter()
            .all(|p| p.context.len() == 480 && p.target.len() == 96));
        assert!(model
            .pairs()
            .windows(2)
            .all(|w| w[0].day_index < w[1].day_index));
    }

    #[test]
    fn fit_needs_enough_days() {
        match fit(&series(7), KnnConfig::new(5, 2).unwrap()) {
            Err(Error::InsufficientTrainingDays {
                needed: 8,
                available: 7,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(fit(&series(8), KnnConfig::new(5, 2).unwrap()).is_ok());
    }

    #[test]
    fn hand_example_prediction() {
        // Contexts on a line so the query distances are exactly 1, 2 and 4.
        let pairs = vec![
            pair(0, vec![1.0], vec![10.0, 20.0]),
            pair(1, vec![2.0], vec![20.0, 30.0]),
            pair(2, vec![4.0], vec![99.0, 99.0]),
        ];
        let model = KnnModel {
            config: KnnConfig {
                depth_days: 1,
                neighbors: 2,
            },
            pairs,
        };
        let p = model.predict_day(&[0.0]).unwrap();
        assert!((p[0] - 14.0).abs() < 1e-12);
        assert!((p[1] - 24.0).abs() < 1e-12);
    }

    #[test]
    fn identical_targets_are_reproduced() {
        let pairs = (0..5)
            .map(|i| pair(i, vec![i as f64 * 3.0, 1.0, 0.0], vec![7.0, 8.0]))
            .collect();
        let model = KnnModel::from_parts(
            KnnConfig {
                depth_days: 1,
                neighbors: 3,
            },
            pairs,
        );
        assert!(model.is_err(), "context must be depth x target long");

        let pairs = (0..5)
            .map(|i| pair(i, vec![i as f64 * 3.0, 1.0], vec![7.0, 8.0]))
            .collect();
        let model = KnnModel::from_parts(
            KnnConfig {
                depth_days: 1,
                neighbors: 3,
            },
            pairs,
        )
        .unwrap();
        assert_eq!(model.predict_day(&[4.0, 0.0]).unwrap(), vec![7.0, 8.0]);
    }

    #[test]
    fn ties_prefer_earlier_days() {
        let pairs = vec![
            pair(3, vec![1.0], vec![30.0]),
            pair(1, vec![-1.0], vec![10.0]),
            pair(2, vec![1.0], vec![20.0]),
        ];
        let model = KnnModel::from_parts(
            KnnConfig {
                depth_days: 1,
                neighbors: 2,
            },
            pairs,
        )
        .unwrap();
        let order: Vec<usize> = model
            .nearest(&[0.0])
            .unwrap()
            .iter()
            .map(|n| n.day_index)
            .collect();
        assert_eq!(order, vec![1, 2, 3]);
        // All three distances equal: uniform weights over days 1 and 2.
        assert_eq!(model.predict_day(&[0.0]).unwrap(), vec![15.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let model = fit(&series(10), KnnConfig::new(2, 2).unwrap()).unwrap();
        assert!(matches!(
            model.predict_day(&[0.0; 10]),
            Err(Error::DimensionMismatch {
                expected: 192,
                found: 10
            })
        ));
    }
}
