//! Seeded synthetic solar days: a half-sine clear-sky bell, attenuated on
//! cloudy days by haze and by passing cloud events.
//!
//! Randomness comes from a ChaCha8 stream (`rand_chacha`), whose output is
//! fixed by its published algorithm, and is turned into numbers by the
//! helpers in this module rather than by `rand`'s distribution code, so a
//! seed always reproduces the same series.
//!
//! Per day, in order: one draw decides whether the day is cloudy; a cloudy
//! day then draws its cloudiness `c`, its haze depth, a Poisson number of
//! cloud events with mean `cloud_event_rate * c`, and for each event a start,
//! a duration and a depth. The attenuation is
//! `(1 - c * haze) * Π (1 - c * depth)` over the events covering a sample,
//! smoothed by a centred 5-sample moving average.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::unit_interval;
use crate::timeseries::{DayProfile, SamplingGrid, SolarSeries};
use crate::Scalar;

const SMOOTHING_HALF_WIDTH: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub peak_power_w: f64,
    pub sample_interval_seconds: u32,
    /// First and last sample of daylight; power is zero outside.
    pub sunrise_index: usize,
    pub sunset_index: usize,
    /// Probability that a day is cloudy.
    pub cloudy_fraction: f64,
    /// Range of the per-day cloudiness of cloudy days, within `[0, 1]`.
    pub cloudiness: (f64, f64),
    /// Expected cloud events on a day of cloudiness 1.
    pub cloud_event_rate: f64,
    /// Range of the attenuation fraction of a single event.
    pub cloud_depth: (f64, f64),
    /// Range of the whole-day haze attenuation fraction.
    pub haze_depth: (f64, f64),
    /// Range of event durations, in samples.
    pub cloud_duration: (usize, usize),
    pub start_date: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            peak_power_w: 35_000.0,
            sample_interval_seconds: 900,
            sunrise_index: 26,
            sunset_index: 72,
            cloudy_fraction: 0.5,
            cloudiness: (0.3, 1.0),
            cloud_event_rate: 6.0,
            cloud_depth: (0.2, 0.8),
            haze_depth: (0.1, 0.5),
            cloud_duration: (4, 16),
            start_date: NaiveDate::from_ymd_opt(2015, 2, 15).expect("valid date"),
        }
    }
}

impl SynthConfig {
    pub fn grid(&self) -> Result<SamplingGrid> {
        SamplingGrid::new(self.sample_interval_seconds)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.peak_power_w > 0.0) || !self.peak_power_w.is_finite() {
            return fail(format!("peak power {} must be positive", self.peak_power_w));
        }
        if self.sunrise_index >= self.sunset_index || self.sunset_index >= grid.samples_per_day() {
            return fail(format!(
                "sunrise {} must precede sunset {} within a {}-sample day",
                self.sunrise_index,
                self.sunset_index,
                grid.samples_per_day()
            ));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} {v} outside [0, 1]")))
            }
        };
        unit("cloudy fraction", self.cloudy_fraction)?;
        for (name, (lo, hi)) in [
            ("cloudiness", self.cloudiness),
            ("cloud depth", self.cloud_depth),
            ("haze depth", self.haze_depth),
        ] {
            unit(name, lo)?;
            unit(name, hi)?;
            if lo > hi {
                return fail(format!("{name} range ({lo}, {hi}) is reversed"));
            }
        }
        if !(self.cloud_event_rate >= 0.0) || !self.cloud_event_rate.is_finite() {
            return fail(format!(
                "cloud event rate {} must be non-negative",
                self.cloud_event_rate
            ));
        }
        let (dmin, dmax) = self.cloud_duration;
        if dmin == 0 || dmin > dmax {
            return fail(format!("cloud duration range ({dmin}, {dmax}) is invalid"));
        }
        Ok(())
    }

    /// Cloudless profile: `peak * sin(π j / (sunset - sunrise))` for
    /// `j = m - sunrise`, exactly zero outside daylight and exactly symmetric
    /// about solar noon.
    pub fn clear_sky(&self) -> Result<Vec<f64>> {
        let grid = self.grid()?;
        let span = self.sunset_index - self.sunrise_index;
        Ok((0..grid.samples_per_day())
            .map(|m| {
                if m <= self.sunrise_index || m >= self.sunset_index {
                    return 0.0;
                }
                let j = m - self.sunrise_index;
                let j = j.min(span - j);
                self.peak_power_w * (std::f64::consts::PI * j as f64 / span as f64).sin()
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DayLabel {
    Sunny,
    Cloudy,
}

impl fmt::Display for DayLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DayLabel::Sunny => "sunny",
            DayLabel::Cloudy => "cloudy",
        })
    }
}

impl FromStr for DayLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sunny" => Ok(DayLabel::Sunny),
            "cloudy" => Ok(DayLabel::Cloudy),
            other => Err(Error::Parse {
                line: 0,
                reason: format!("unknown day label `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData<T> {
    pub series: SolarSeries<T>,
    pub labels: Vec<(NaiveDate, DayLabel)>,
    /// Cloudiness drawn for each day; 0 on sunny days.
    pub cloudiness: Vec<f64>,
}

impl<T> SyntheticData<T> {
    pub fn count(&self, label: DayLabel) -> usize {
        self.labels.iter().filter(|(_, l)| *l == label).count()
    }
}

struct Draws {
    rng: ChaCha8Rng,
}

impl Draws {
    fn unit(&mut self) -> f64 {
        unit_interval(self.rng.next_u64())
    }

    fn between(&mut self, (lo, hi): (f64, f64)) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn index(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        let span = (hi_inclusive - lo + 1) as f64;
        lo + ((self.unit() * span) as usize).min(hi_inclusive - lo)
    }

    /// Knuth's product-of-uniforms Poisson sampler.
    fn poisson(&mut self, mean: f64) -> usize {
        let limit = (-mean).exp();
        let mut count = 0;
        let mut product = self.unit();
        while product > limit {
            count += 1;
            product *= self.unit();
        }
        count
    }
}

/// Attenuation factors in `[0, 1]` for one day of the given cloudiness.
fn attenuation(
    config: &SynthConfig,
    samples: usize,
    cloudiness: f64,
    draws: &mut Draws,
) -> Vec<f64> {
    let haze = draws.between(config.haze_depth);
    let mut factor = vec![1.0 - cloudiness * haze; samples];
    let events = draws.poisson(config.cloud_event_rate * cloudiness);
    for _ in 0..events {
        let start = draws.index(config.sunrise_index, config.sunset_index);
        let duration = draws.index(config.cloud_duration.0, config.cloud_duration.1);
        let depth = cloudiness * draws.between(config.cloud_depth);
        for f in factor.iter_mut().skip(start).take(duration) {
            *f *= 1.0 - depth;
        }
    }
    (0..samples)
        .map(|m| {
            let lo = m.saturating_sub(SMOOTHING_HALF_WIDTH);
            let hi = (m + SMOOTHING_HALF_WIDTH).min(samples - 1);
            factor[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// One day's profile for an explicit cloudiness (0 gives the clear-sky bell).
pub fn generate_day(config: &SynthConfig, cloudiness: f64, seed: u64) -> Result<Vec<f64>> {
    config.validate()?;
    let clear = config.clear_sky()?;
    if cloudiness == 0.0 {
        return Ok(clear);
    }
    let mut draws = Draws {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let factor = attenuation(config, clear.len(), cloudiness.clamp(0.0, 1.0), &mut draws);
    Ok(clear.iter().zip(&factor).map(|(c, f)| c * f).collect())
}

/// `num_days` consecutive synthetic days starting at `config.start_date`.
pub fn generate<T: Scalar>(
    config: &SynthConfig,
    num_days: usize,
    seed: u64,
) -> Result<SyntheticData<T>> {
    config.validate()?;
    if num_days == 0 {
        return Err(Error::InvalidConfig(
            "number of days must be at least 1".into(),
        ));
    }
    let grid = config.grid()?;
    let clear = config.clear_sky()?;
    let mut draws = Draws {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut days = Vec::with_capacity(num_days);
    let mut labels = Vec::with_capacity(num_days);
    let mut cloudiness = Vec::with_capacity(num_days);
    for i in 0..num_days {
        let date = config
            .start_date
            .checked_add_days(Days::new(i as u64))
            .ok_or_else(|| Error::InvalidConfig("date range overflows".into()))?;
        let cloudy = draws.unit() < config.cloudy_fraction;
        let (power, label, c) = if cloudy {
            let c = draws.between(config.cloudiness);
            let factor = attenuation(config, clear.len(), c, &mut draws);
            let power: Vec<f64> = clear.iter().zip(&factor).map(|(p, f)| p * f).collect();
            (power, DayLabel::Cloudy, c)
        } else {
            (clear.clone(), DayLabel::Sunny, 0.0)
        };
        let samples = power
            .into_iter()
            .map(|p| T::lit(p.clamp(0.0, config.peak_power_w)))
            .collect();
        days.push(DayProfile::new(i, date, samples));
        labels.push((date, label));
        cloudiness.push(c);
    }
    Ok(SyntheticData {
        series: SolarSeries::new(grid, days)?,
        labels,
        cloudiness,
    })
}

/// Writes the `date,label` sidecar.
pub fn write_labels<W: Write>(labels: &[(NaiveDate, DayLabel)], mut sink: W) -> Result<()> {
    writeln!(sink, "date,label")?;
    for (date, label) in labels {
        writeln!(sink, "{},{}", date.format("%Y-%m-%d"), label)?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(mut source: R) -> Result<Vec<(NaiveDate, DayLabel)>> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "date,label")) => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                reason: "expected header `date,label`".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let parse_err = |reason: String| Error::Parse {
                line: i + 1,
                reason,
            };
            let (date, label) = line
                .split_once(',')
                .ok_or_else(|| parse_err(format!("expected `date,label`, found `{line}`")))?;
            let date = NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d")
                .map_err(|e| parse_err(format!("bad date `{date}`: {e}")))?;
            let label = label
                .trim()
                .parse()
                .map_err(|e: Error| parse_err(e.to_string()))?;
            Ok((date, label))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clear_day_is_the_bell() {
        let config = SynthConfig::default();
        let bell = config.clear_sky().unwrap();
        assert_eq!(generate_day(&config, 0.0, 1).unwrap(), bell);
        assert_eq!(bell.len(), 96);
        let (rise, set) = (config.sunrise_index, config.sunset_index);
        for j in 0..=(set - rise) {
            assert_eq!(bell[rise + j], bell[set - j]);
        }
        assert!(bell
            .iter()
            .enumerate()
            .all(|(m, &p)| (m > rise && m < set) || p == 0.0));
        assert_eq!(bell[(rise + set) / 2], 35_000.0);
    }

    #[test]
    fn samples_stay_in_range_and_nights_are_dark() {
        let config = SynthConfig::default();
        let data = generate::<f64>(&config, 40, 11).unwrap();
        for day in data.series.days() {
            for (m, &p) in day.samples.iter().enumerate() {
                assert!((0.0..=config.peak_power_w).contains(&p));
                if m <= config.sunrise_index || m >= config.sunset_index {
                    assert_eq!(p, 0.0);
                }
            }
        }
        assert!(data.count(DayLabel::Cloudy) > 0 && data.count(DayLabel::Sunny) > 0);
    }

    #[test]
    fn seeded_and_clear_days_do_not_depend_on_seed() {
        let config = SynthConfig::default();
        let a = generate::<f64>(&config, 10, 5).unwrap();
        let b = generate::<f64>(&config, 10, 5).unwrap();
        assert_eq!(a, b);
        let c = generate::<f64>(&config, 10, 6).unwrap();
        assert_ne!(a.series, c.series);
        let bell = config.clear_sky().unwrap();
        for data in [&a, &c] {
            for (day, (_, label)) in data.series.days().iter().zip(&data.labels) {
                if *label == DayLabel::Sunny {
                    assert_eq!(day.samples, bell);
                }
            }
        }
    }

    #[test]
    fn cloudy_days_are_attenuated() {
        let config = SynthConfig {
            cloudy_fraction: 1.0,
            ..SynthConfig::default()
        };
        let data = generate::<f64>(&config, 5, 2).unwrap();
        let bell = config.clear_sky().unwrap();
        for day in data.series.days() {
            let energy: f64 = day.samples.iter().sum();
            assert!(energy < bell.iter().sum::<f64>());
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SynthConfig {
            sunrise_index: 80,
            ..SynthConfig::default()
        };
        assert!(generate::<f64>(&bad, 3, 1).is_err());
        assert!(generate::<f64>(&SynthConfig::default(), 0, 1).is_err());
        let bad = SynthConfig {
            cloud_depth: (0.5, 1.5),
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn labels_round_trip() {
        let data = generate::<f64>(&SynthConfig::default(), 6, 3).unwrap();
        let mut buf = Vec::new();
        write_labels(&data.labels, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("date,label\n2015-02-15,"));
        assert_eq!(read_labels(buf.as_slice()).unwrap(), data.labels);
    }
}
