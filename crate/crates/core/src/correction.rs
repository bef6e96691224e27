//! Real-time correction of a day-ahead forecast.
//!
//! The residual `R(m) = forecast(m) - measured(m)` over the last `n` samples is
//! fitted by least squares with a truncated Fourier series (constant plus `L`
//! harmonics of the window length). The fitted series, carried forward from
//! the newest window sample along its periodic extension, estimates how much
//! the forecast will over-predict next, and that estimate is subtracted from
//! the rest of the forecast.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::linalg::{least_squares, Matrix};
use crate::Scalar;

pub const DEFAULT_WINDOW_LENGTH: usize = 8;
pub const DEFAULT_MAX_HARMONIC: usize = 2;

/// Forecast minus measurement.
pub fn residual<T: Scalar>(predicted: T, measured: T) -> T {
    predicted - measured
}

/// The newest `values.len()` residuals, ending at sample `anchor_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualWindow<T> {
    values: Vec<T>,
    anchor_index: usize,
}

impl<T: Scalar> ResidualWindow<T> {
    pub fn new(values: Vec<T>, anchor_index: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if anchor_index + 1 < values.len() {
            return Err(Error::IndexOutOfDay {
                index: anchor_index,
                samples_per_day: values.len(),
            });
        }
        Ok(Self {
            values,
            anchor_index,
        })
    }

    /// Residuals of samples `anchor - n + 1 ..= anchor`.
    pub fn from_series(
        forecast: &[T],
        measured: &[T],
        anchor_index: usize,
        window_length: usize,
    ) -> Result<Self> {
        if forecast.len() != measured.len() {
            return Err(Error::LengthMismatch {
                left: forecast.len(),
                right: measured.len(),
            });
        }
        if anchor_index >= forecast.len() || anchor_index + 1 < window_length || window_length == 0
        {
            return Err(Error::IndexOutOfDay {
                index: anchor_index,
                samples_per_day: forecast.len(),
            });
        }
        let start = anchor_index + 1 - window_length;
        let values = forecast[start..=anchor_index]
            .iter()
            .zip(&measured[start..=anchor_index])
            .map(|(&p, &m)| residual(p, m))
            .collect();
        Self::new(values, anchor_index)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn window_length(&self) -> usize {
        self.values.len()
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor_index
    }
}

fn check_solvable(window_length: usize, max_harmonic: usize) -> Result<()> {
    if 2 * max_harmonic + 1 > window_length {
        return Err(Error::Underdetermined {
            window_length,
            max_harmonic,
        });
    }
    Ok(())
}

fn basis_angle<T: Scalar>(harmonic: usize, position: i64, window_length: usize) -> T {
    // Reduce the phase exactly before going to floating point so that
    // evaluation is periodic to the last bit.
    let n = window_length as i64;
    let phase = (harmonic as i64 * position).rem_euclid(n);
    T::lit(TAU * phase as f64 / n as f64)
}

/// Least-squares design matrix: row `v` (for `v = 1..=n`) is
/// `[1, cos(2π·1·v/n), sin(2π·1·v/n), …, cos(2π·L·v/n), sin(2π·L·v/n)]`.
pub fn design_matrix<T: Scalar>(window_length: usize, max_harmonic: usize) -> Result<Matrix<T>> {
    check_solvable(window_length, max_harmonic)?;
    Ok(Matrix::from_fn(
        window_length,
        2 * max_harmonic + 1,
        |r, c| {
            if c == 0 {
                return T::one();
            }
            let harmonic = c.div_ceil(2);
            let angle: T = basis_angle(harmonic, r as i64 + 1, window_length);
            if c % 2 == 1 {
                angle.cos()
            } else {
                angle.sin()
            }
        },
    ))
}

/// Fourier coefficients `[a0, a1, b1, …, aL, bL]` of a residual window.
#[derive(Debug, Clone, PartialEq)]
pub struct DfsFit<T> {
    coefficients: Vec<T>,
    window_length: usize,
    anchor_index: usize,
}

impl<T: Scalar> DfsFit<T> {
    pub fn from_coefficients(
        coefficients: Vec<T>,
        window_length: usize,
        anchor_index: usize,
    ) -> Result<Self> {
        if coefficients.len().is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "{} coefficients; expected 2L+1",
                coefficients.len()
            )));
        }
        check_solvable(window_length, coefficients.len() / 2)?;
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NumericalFailure(
                "non-finite Fourier coefficient".into(),
            ));
        }
        Ok(Self {
            coefficients,
            window_length,
            anchor_index,
        })
    }

    /// An all-zero fit: applying it leaves a forecast unchanged.
    pub fn zero(window_length: usize, max_harmonic: usize, anchor_index: usize) -> Result<Self> {
        Self::from_coefficients(
            vec![T::zero(); 2 * max_harmonic + 1],
            window_length,
            anchor_index,
        )
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn max_harmonic(&self) -> usize {
        self.coefficients.len() / 2
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor_index
    }

    /// `a0 + Σ aᵢcos(2πik/n) + bᵢsin(2πik/n)`; any integer `k`, period `n`.
    pub fn eval(&self, k: i64) -> T {
        let mut total = self.coefficients[0];
        for i in 1..=self.max_harmonic() {
            let angle: T = basis_angle(i, k, self.window_length);
            total = total
                + self.coefficients[2 * i - 1] * angle.cos()
                + self.coefficients[2 * i] * angle.sin();
        }
        total
    }
}

/// Least-squares Fourier fit of `window` with `max_harmonic` harmonics,
/// solved by Householder QR of the design matrix.
pub fn fit_dfs<T: Scalar>(window: &ResidualWindow<T>, max_harmonic: usize) -> Result<DfsFit<T>> {
    let n = window.window_length();
    let design = design_matrix::<T>(n, max_harmonic)?;
    if window.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite residual".into()));
    }
    let coefficients = least_squares(&design, &window.values)
        .ok_or_else(|| Error::NumericalFailure("rank-deficient Fourier design matrix".into()))?;
    DfsFit::from_coefficients(coefficients, n, window.anchor_index)
}

pub fn eval_dfs<T: Scalar>(fit: &DfsFit<T>, k: i64) -> T {
    fit.eval(k)
}

/// A forecast with the samples after `corrected_from - 1` adjusted.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedForecast<T> {
    pub values: Vec<T>,
    pub corrected_from: usize,
}

/// Subtracts the fitted residual from every sample after `current_index`
/// (`m`), then clamps at zero. Sample `l` is lowered by `eval(n + l - m - 1)`:
/// the first corrected sample takes the fit's value at the newest window
/// position and later ones continue along the `n`-periodic extension.
/// Samples up to `m` are copied unchanged.
pub fn correct_remaining<T: Scalar>(
    global_forecast: &[T],
    fit: &DfsFit<T>,
    current_index: usize,
) -> Result<CorrectedForecast<T>> {
    if current_index + 1 >= global_forecast.len() {
        return Err(Error::IndexOutOfDay {
            index: current_index,
            samples_per_day: global_forecast.len(),
        });
    }
    let n = fit.window_length() as i64;
    let values = global_forecast
        .iter()
        .enumerate()
        .map(|(l, &g)| {
            if l <= current_index {
                g
            } else {
                let ahead = (l - current_index) as i64;
                clamp_non_negative(g - fit.eval(n + ahead - 1))
            }
        })
        .collect();
    Ok(CorrectedForecast {
        values,
        corrected_from: current_index + 1,
    })
}

fn clamp_non_negative<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

/// Replay of one day with the correction running in real time.
#[derive(Debug, Clone, PartialEq)]
pub struct DaySimulation<T> {
    /// One-step-ahead corrected prediction per sample. Samples before the
    /// first full window carry the global forecast.
    pub corrected: CorrectedForecast<T>,
    /// Fit anchored at every sample from `n - 1` up to the second-to-last.
    pub fits: Vec<DfsFit<T>>,
    /// Full remaining-day correction issued at each anchor, parallel to `fits`.
    pub remaining: Vec<CorrectedForecast<T>>,
}

impl<T: Scalar> DaySimulation<T> {
    /// The fit anchored at sample `m`, if one was made.
    pub fn fit_at(&self, m: usize) -> Option<&DfsFit<T>> {
        let first = self.fits.first()?.anchor_index();
        m.checked_sub(first).and_then(|i| self.fits.get(i))
    }
}

/// Walks the day sample by sample. At each `m ≥ n-1` the window of residuals
/// between the global forecast and the measurements is refitted, and the
/// correction for sample `m + 1` is recorded.
pub fn simulate_day<T: Scalar>(
    global_forecast: &[T],
    measured: &[T],
    window_length: usize,
    max_harmonic: usize,
) -> Result<DaySimulation<T>> {
    if global_forecast.len() != measured.len() {
        return Err(Error::GridMismatch);
    }
    check_solvable(window_length, max_harmonic)?;
    let samples = global_forecast.len();
    let mut corrected = global_forecast.to_vec();
    let mut fits = Vec::new();
    let mut remaining = Vec::new();

    for m in window_length.saturating_sub(1)..samples.saturating_sub(1) {
        let window = ResidualWindow::from_series(global_forecast, measured, m, window_length)?;
        let fit = fit_dfs(&window, max_harmonic)?;
        let ahead = correct_remaining(global_forecast, &fit, m)?;
        corrected[m + 1] = ahead.values[m + 1];
        fits.push(fit);
        remaining.push(ahead);
    }
    Ok(DaySimulation {
        corrected: CorrectedForecast {
            values: corrected,
            corrected_from: window_length.min(samples),
        },
        fits,
        remaining,
    })
}
