//! Per-day solar power profiles on a uniform sampling grid, CSV ingestion and
//! export, and the chronological train/tune/test split.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};

use crate::error::{Error, Result};
use crate::Scalar;

pub const SECONDS_PER_DAY: u32 = 86_400;

/// Powers in `[-NEGATIVE_TOLERANCE_W, 0)` are sensor noise and clamp to zero.
pub const NEGATIVE_TOLERANCE_W: f64 = 1.0;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
const ACCEPTED_TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SamplingGrid {
    sample_interval_seconds: u32,
    samples_per_day: usize,
}

impl SamplingGrid {
    pub const DEFAULT_INTERVAL_SECONDS: u32 = 900;

    pub fn new(sample_interval_seconds: u32) -> Result<Self> {
        if sample_interval_seconds == 0 || !SECONDS_PER_DAY.is_multiple_of(sample_interval_seconds)
        {
            return Err(Error::InvalidGrid(format!(
                "sample interval {sample_interval_seconds} s does not divide {SECONDS_PER_DAY}"
            )));
        }
        Ok(Self {
            sample_interval_seconds,
            samples_per_day: (SECONDS_PER_DAY / sample_interval_seconds) as usize,
        })
    }

    pub fn sample_interval_seconds(&self) -> u32 {
        self.sample_interval_seconds
    }

    pub fn samples_per_day(&self) -> usize {
        self.samples_per_day
    }

    /// Wall-clock time of sample `m`.
    pub fn time_of(&self, m: usize) -> NaiveTime {
        let secs = m as u32 * self.sample_interval_seconds;
        NaiveTime::from_num_seconds_from_midnight_opt(secs, 0).expect("sample index within day")
    }
}

impl Default for SamplingGrid {
    fn default() -> Self {
        Self::new(Self::DEFAULT_INTERVAL_SECONDS).expect("900 divides 86400")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayProfile<T> {
    pub day_index: usize,
    pub date: NaiveDate,
    pub samples: Vec<T>,
}

impl<T: Scalar> DayProfile<T> {
    pub fn new(day_index: usize, date: NaiveDate, samples: Vec<T>) -> Self {
        Self {
            day_index,
            date,
            samples,
        }
    }

    fn validate(&self, grid: &SamplingGrid) -> Result<()> {
        if self.samples.len() != grid.samples_per_day() {
            return Err(Error::InvalidSeries(format!(
                "day {} has {} samples, grid needs {}",
                self.date,
                self.samples.len(),
                grid.samples_per_day()
            )));
        }
        if let Some(bad) = self
            .samples
            .iter()
            .find(|v| !v.is_finite() || **v < T::zero())
        {
            return Err(Error::InvalidSeries(format!(
                "day {} holds invalid power {bad}",
                self.date
            )));
        }
        Ok(())
    }
}

/// Consecutive days of measured power sharing one sampling grid.
///
/// Day indices and dates both increase by exactly one from day to day; the
/// first day may carry any index, so a slice of a longer series keeps the
/// indices of the original.
#[derive(Debug, Clone, PartialEq)]
pub struct SolarSeries<T> {
    grid: SamplingGrid,
    days: Vec<DayProfile<T>>,
}

impl<T: Scalar> SolarSeries<T> {
    pub fn new(grid: SamplingGrid, days: Vec<DayProfile<T>>) -> Result<Self> {
        for day in &days {
            day.validate(&grid)?;
        }
        for pair in days.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.day_index != a.day_index + 1 || a.date.succ_opt() != Some(b.date) {
                return Err(Error::InvalidSeries(format!(
                    "days {} (#{}) and {} (#{}) are not consecutive",
                    a.date, a.day_index, b.date, b.day_index
                )));
            }
        }
        Ok(Self { grid, days })
    }

    pub fn grid(&self) -> SamplingGrid {
        self.grid
    }

    pub fn days(&self) -> &[DayProfile<T>] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn first_day_index(&self) -> Option<usize> {
        self.days.first().map(|d| d.day_index)
    }

    /// Looks a day up by its index.
    pub fn day(&self, day_index: usize) -> Option<&DayProfile<T>> {
        let first = self.first_day_index()?;
        day_index
            .checked_sub(first)
            .and_then(|offset| self.days.get(offset))
    }

    pub fn day_by_date(&self, date: NaiveDate) -> Option<&DayProfile<T>> {
        let first = self.days.first()?;
        let offset = (date - first.date).num_days();
        usize::try_from(offset)
            .ok()
            .and_then(|offset| self.days.get(offset))
    }

    /// Sub-series of the positions in `range` (positions, not day indices).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            grid: self.grid,
            days: self.days[range].to_vec(),
        }
    }
}

/// Reads a `timestamp,power_w` CSV into a series of complete days.
///
/// Rows may appear in any order. Every calendar day between the first and the
/// last must be complete; a missing day is reported as an incomplete day with
/// zero samples.
pub fn ingest_csv<T: Scalar, R: Read>(source: R, grid: SamplingGrid) -> Result<SolarSeries<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "power_w" {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!(
                "expected header `timestamp,power_w`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let per_day = grid.samples_per_day();
    let mut by_date: BTreeMap<NaiveDate, Vec<Option<T>>> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader
            .read_record(&mut record)
            .map_err(|e| csv_error(e, 0))?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 2 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let stamp = parse_timestamp(&record[0]).ok_or_else(|| Error::MalformedRow {
            line,
            reason: format!("bad timestamp `{}`", &record[0]),
        })?;
        let power = parse_power::<T>(&record[1], line)?;

        let seconds = stamp.time().num_seconds_from_midnight();
        if stamp.time().nanosecond() != 0 || seconds % grid.sample_interval_seconds() != 0 {
            return Err(Error::GridMisalignment {
                line,
                timestamp: record[0].to_string(),
                interval_seconds: grid.sample_interval_seconds(),
            });
        }
        let m = (seconds / grid.sample_interval_seconds()) as usize;
        let slots = by_date
            .entry(stamp.date())
            .or_insert_with(|| vec![None; per_day]);
        if slots[m].replace(power).is_some() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("duplicate sample for {}", stamp.format(TIMESTAMP_FORMAT)),
            });
        }
    }

    let mut days = Vec::with_capacity(by_date.len());
    let mut expected_date = by_date.keys().next().copied();
    for (date, slots) in by_date {
        if let Some(expected) = expected_date {
            if date != expected {
                return Err(Error::IncompleteDay {
                    date: expected,
                    found: 0,
                    expected: per_day,
                });
            }
        }
        let found = slots.iter().filter(|s| s.is_some()).count();
        if found != per_day {
            return Err(Error::IncompleteDay {
                date,
                found,
                expected: per_day,
            });
        }
        let samples = slots.into_iter().map(|s| s.expect("checked")).collect();
        days.push(DayProfile::new(days.len(), date, samples));
        expected_date = date.succ_opt();
    }
    SolarSeries::new(grid, days)
}

/// Writes the series in the ingestion schema. Power values use the shortest
/// decimal text that parses back to the same bits.
pub fn export_csv<T: Scalar, W: Write>(series: &SolarSeries<T>, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer
        .write_record(["timestamp", "power_w"])
        .map_err(csv_write_error)?;
    let grid = series.grid();
    for day in series.days() {
        for (m, value) in day.samples.iter().enumerate() {
            let stamp = day.date.and_time(grid.time_of(m));
            writer
                .write_record([
                    stamp.format(TIMESTAMP_FORMAT).to_string(),
                    value.to_string(),
                ])
                .map_err(csv_write_error)?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    ACCEPTED_TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(text, fmt).ok())
}

fn parse_power<T: Scalar>(text: &str, line: usize) -> Result<T> {
    let value: T = text.parse().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("non-numeric power `{text}`"),
    })?;
    if !value.is_finite() {
        return Err(Error::MalformedRow {
            line,
            reason: format!("non-finite power `{text}`"),
        });
    }
    if value < -T::lit(NEGATIVE_TOLERANCE_W) {
        return Err(Error::NegativePower {
            line,
            value: value.to_f64_lossy(),
        });
    }
    Ok(if value < T::zero() { T::zero() } else { value })
}

fn csv_error(err: csv::Error, fallback_line: usize) -> Error {
    let line = err
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::MalformedRow {
            line,
            reason: format!("{other:?}"),
        },
    }
}

fn csv_write_error(err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Fractions of the series assigned to training, tuning and testing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub tune: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            tune: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, tune: f64, test: f64) -> Result<Self> {
        let ratios = Self { train, tune, test };
        ratios.validate()?;
        Ok(ratios)
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.tune, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0 || *r > 1.0) {
            return Err(Error::InvalidRatios(format!(
                "{parts:?} must each lie in [0, 1]"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!("{parts:?} do not sum to 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: SolarSeries<T>,
    pub tune: SolarSeries<T>,
    pub test: SolarSeries<T>,
    pub ratios: SplitRatios,
}

/// Chronological split: `floor(N·train)` days, then `floor(N·tune)` days, and
/// the remainder for testing.
pub fn split_chronological<T: Scalar>(
    series: &SolarSeries<T>,
    ratios: SplitRatios,
) -> Result<DatasetSplit<T>> {
    ratios.validate()?;
    let n = series.len();
    if n < 5 {
        return Err(Error::TooFewDays(format!(
            "split needs at least 5 days, have {n}"
        )));
    }
    // Products such as 0.6 * 50 land a hair under the integer in binary.
    let portion = |ratio: f64| (n as f64 * ratio + 1e-9).floor() as usize;
    let n_train = portion(ratios.train);
    let n_tune = portion(ratios.tune);
    if n_train == 0 || n_tune == 0 || n_train + n_tune >= n {
        return Err(Error::TooFewDays(format!(
            "{n} days split {:?} leaves an empty partition",
            (ratios.train, ratios.tune, ratios.test)
        )));
    }
    Ok(DatasetSplit {
        train: series.slice(0..n_train),
        tune: series.slice(n_train..n_train + n_tune),
        test: series.slice(n_train + n_tune..n),
        ratios,
    })
}

/// The `depth_days` full profiles immediately preceding `target_day`, oldest
/// first, concatenated.
pub fn day_context<T: Scalar>(
    series: &SolarSeries<T>,
    target_day: usize,
    depth_days: usize,
) -> Result<Vec<T>> {
    let insufficient = Error::InsufficientHistory {
        target_day,
        depth_days,
    };
    let first = series.first_day_index().ok_or(Error::InsufficientHistory {
        target_day,
        depth_days,
    })?;
    if depth_days == 0 || target_day < first + depth_days {
        return Err(insufficient);
    }
    let mut context = Vec::with_capacity(depth_days * series.grid().samples_per_day());
    for day_index in (target_day - depth_days)..target_day {
        let day = series.day(day_index).ok_or(Error::InsufficientHistory {
            target_day,
            depth_days,
        })?;
        context.extend_from_slice(&day.samples);
    }
    Ok(context)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_for(days: &[(NaiveDate, Vec<f64>)], grid: SamplingGrid) -> String {
        let mut out = String::from("timestamp,power_w\n");
        for (date, samples) in days {
            for (m, v) in samples.iter().enumerate() {
                let stamp = date.and_time(grid.time_of(m));
                out.push_str(&format!("{},{}\n", stamp.format(TIMESTAMP_FORMAT), v));
            }
        }
        out
    }

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn series_with_days(n: usize) -> SolarSeries<f64> {
        let grid = SamplingGrid::new(21_600).unwrap();
        let start = date(2015, 2, 15);
        let days = (0..n)
            .map(|i| {
                let d = start + chrono::Days::new(i as u64);
                DayProfile::new(i, d, (0..4).map(|m| (10 * i + m) as f64).collect())
            })
            .collect();
        SolarSeries::new(grid, days).unwrap()
    }

    #[test]
    fn grid_arithmetic() {
        let grid = SamplingGrid::default();
        assert_eq!(grid.samples_per_day(), 96);
        assert_eq!(
            grid.samples_per_day() as u32 * grid.sample_interval_seconds(),
            SECONDS_PER_DAY
        );
        assert!(SamplingGrid::new(7).is_err());
        assert!(SamplingGrid::new(0).is_err());
        assert_eq!(grid.time_of(29), NaiveTime::from_hms_opt(7, 15, 0).unwrap());
    }

    #[test]
    fn ingests_two_complete_days() {
        let grid = SamplingGrid::default();
        let text = csv_for(
            &[
                (date(2015, 2, 15), (0..96).map(|m| m as f64).collect()),
                (date(2015, 2, 16), vec![5.5; 96]),
            ],
            grid,
        );
        let series: SolarSeries<f64> = ingest_csv(text.as_bytes(), grid).unwrap();
        assert_eq!(series.len(), 2);
        assert!(series.days().iter().all(|d| d.samples.len() == 96));
        assert_eq!(series.days()[0].samples[95], 95.0);
        assert_eq!(series.days()[1].day_index, 1);
    }

    #[test]
    fn missing_sample_reports_incomplete_day() {
        let grid = SamplingGrid::default();
        let text = csv_for(
            &[
                (date(2015, 2, 15), vec![1.0; 96]),
                (date(2015, 2, 16), vec![1.0; 96]),
            ],
            grid,
        );
        let text: String = text
            .lines()
            .filter(|l| !l.starts_with("2015-02-16T07:15:00"))
            .map(|l| format!("{l}\n"))
            .collect();
        match ingest_csv::<f64, _>(text.as_bytes(), grid) {
            Err(Error::IncompleteDay {
                date: d,
                found,
                expected,
            }) => {
                assert_eq!(d, date(2015, 2, 16));
                assert_eq!((found, expected), (95, 96));
            }
            other => panic!("expected IncompleteDay, got {other:?}"),
        }
    }

    #[test]
    fn missing_whole_day_is_an_incomplete_day() {
        let grid = SamplingGrid::new(43_200).unwrap();
        let text = "timestamp,power_w\n2015-02-15T00:00:00,0\n2015-02-15T12:00:00,1\n2015-02-17T00:00:00,0\n2015-02-17T12:00:00,1\n";
        match ingest_csv::<f64, _>(text.as_bytes(), grid) {
            Err(Error::IncompleteDay {
                date: d, found: 0, ..
            }) => assert_eq!(d, date(2015, 2, 16)),
            other => panic!("expected IncompleteDay, got {other:?}"),
        }
    }

    #[test]
    fn row_errors() {
        let grid = SamplingGrid::new(43_200).unwrap();
        let bad_power = "timestamp,power_w\n2015-02-15T00:00:00,abc\n";
        assert!(matches!(
            ingest_csv::<f64, _>(bad_power.as_bytes(), grid),
            Err(Error::MalformedRow { line: 2, .. })
        ));
        let bad_stamp = "timestamp,power_w\n2015-02-15X00,1\n";
        assert!(matches!(
            ingest_csv::<f64, _>(bad_stamp.as_bytes(), grid),
            Err(Error::MalformedRow { .. })
        ));
        let off_grid = "timestamp,power_w\n2015-02-15T00:15:00,1\n";
        assert!(matches!(
            ingest_csv::<f64, _>(off_grid.as_bytes(), grid),
            Err(Error::GridMisalignment { line: 2, .. })
        ));
        let negative = "timestamp,power_w\n2015-02-15T00:00:00,-1.5\n";
        assert!(matches!(
            ingest_csv::<f64, _>(negative.as_bytes(), grid),
            Err(Error::NegativePower { .. })
        ));
        let duplicate = "timestamp,power_w\n2015-02-15T00:00:00,1\n2015-02-15T00:00:00,1\n";
        assert!(matches!(
            ingest_csv::<f64, _>(duplicate.as_bytes(), grid),
            Err(Error::MalformedRow { line: 3, .. })
        ));
        let header = "time,power\n";
        assert!(matches!(
            ingest_csv::<f64, _>(header.as_bytes(), grid),
            Err(Error::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn small_negative_noise_clamps_to_zero() {
        let grid = SamplingGrid::new(43_200).unwrap();
        let text = "timestamp,power_w\n2015-02-15T12:00:00,-0.4\n2015-02-15T00:00:00,-1\n";
        let series: SolarSeries<f64> = ingest_csv(text.as_bytes(), grid).unwrap();
        assert_eq!(series.days()[0].samples, vec![0.0, 0.0]);
    }

    #[test]
    fn export_then_ingest_is_identity() {
        let series = series_with_days(3);
        let grid = series.grid();
        let days = series
            .days()
            .iter()
            .map(|d| {
                DayProfile::new(
                    d.day_index,
                    d.date,
                    d.samples.iter().map(|v| v / 3.0 + 0.1).collect(),
                )
            })
            .collect();
        let series = SolarSeries::new(grid, days).unwrap();
        let mut buf = Vec::new();
        export_csv(&series, &mut buf).unwrap();
        let back: SolarSeries<f64> = ingest_csv(buf.as_slice(), grid).unwrap();
        assert_eq!(back, series);
    }

    #[test]
    fn split_sizes() {
        let sizes = |n| {
            let s = split_chronological(&series_with_days(n), SplitRatios::default()).unwrap();
            (s.train.len(), s.tune.len(), s.test.len())
        };
        assert_eq!(sizes(50), (30, 10, 10));
        assert_eq!(sizes(5), (3, 1, 1));
        assert_eq!(sizes(7), (4, 1, 2));
    }

    #[test]
    fn split_rejects_small_or_bad_input() {
        assert!(matches!(
            split_chronological(&series_with_days(4), SplitRatios::default()),
            Err(Error::TooFewDays(_))
        ));
        let lopsided = SplitRatios::new(0.9, 0.1, 0.0).unwrap();
        assert!(matches!(
            split_chronological(&series_with_days(10), lopsided),
            Err(Error::TooFewDays(_))
        ));
        assert!(SplitRatios::new(0.5, 0.2, 0.2).is_err());
    }

    #[test]
    fn split_is_chronological() {
        let s = split_chronological(&series_with_days(12), SplitRatios::default()).unwrap();
        assert!(s.train.days().last().unwrap().date < s.tune.days()[0].date);
        assert!(s.tune.days().last().unwrap().date < s.test.days()[0].date);
        assert_eq!(s.tune.first_day_index(), Some(s.train.len()));
    }

    #[test]
    fn context_concatenates_preceding_days() {
        let series = series_with_days(6);
        assert_eq!(
            day_context(&series, 5, 1).unwrap(),
            series.days()[4].samples
        );
        let ctx = day_context(&series, 4, 2).unwrap();
        assert_eq!(ctx, vec![20.0, 21.0, 22.0, 23.0, 30.0, 31.0, 32.0, 33.0]);
        assert_eq!(day_context(&series, 5, 5).unwrap().len(), 5 * 4);
        assert!(matches!(
            day_context(&series, 3, 4),
            Err(Error::InsufficientHistory {
                target_day: 3,
                depth_days: 4
            })
        ));
    }

    #[test]
    fn context_respects_offset_day_indices() {
        let series = series_with_days(10).slice(4..10);
        assert_eq!(series.first_day_index(), Some(4));
        assert_eq!(day_context(&series, 6, 2).unwrap()[0], 40.0);
        assert!(day_context(&series, 5, 2).is_err());
    }

    #[test]
    fn rejects_non_consecutive_days() {
        let grid = SamplingGrid::new(43_200).unwrap();
        let days = vec![
            DayProfile::new(0, date(2015, 2, 15), vec![0.0, 1.0]),
            DayProfile::new(1, date(2015, 2, 17), vec![0.0, 1.0]),
        ];
        assert!(SolarSeries::new(grid, days).is_err());
    }
}
