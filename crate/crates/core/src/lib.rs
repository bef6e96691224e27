//! Two-tier solar generation forecasting.
//!
//! The global tier forecasts a whole day ahead from historical power alone,
//! either by weighted k-nearest-neighbour blending of past days ([`knn`]) or
//! with a small feed-forward network trained by Levenberg–Marquardt
//! ([`nn`]). The local tier ([`correction`]) then tracks the residual between
//! that forecast and live measurements, fits its low-frequency content with a
//! short Fourier series and corrects the rest of the day.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

// `!(a > b)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correction;
pub mod error;
pub mod evaluation;
pub mod knn;
pub mod linalg;
pub mod nn;
pub mod persistence;
mod scalar;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SolarSeries = timeseries::SolarSeries<f64>;
pub type DayProfile = timeseries::DayProfile<f64>;
pub type DatasetSplit = timeseries::DatasetSplit<f64>;
pub type KnnModel = knn::KnnModel<f64>;
pub type NnModel = nn::NnModel<f64>;
pub type DfsFit = correction::DfsFit<f64>;
pub type ResidualWindow = correction::ResidualWindow<f64>;
pub type EvalReport = evaluation::EvalReport<f64>;
pub type TuneGrid = evaluation::TuneGrid<f64>;

pub type SolarSeriesF32 = timeseries::SolarSeries<f32>;
pub type KnnModelF32 = knn::KnnModel<f32>;
pub type NnModelF32 = nn::NnModel<f32>;
pub type DfsFitF32 = correction::DfsFit<f32>;
