//! RMSE scoring, hyper-parameter grid search on the tuning split and the
//! four-way comparison of global-tier and two-tier forecasts on the test
//! split.

use std::fmt::{self, Write as _};

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::correction::{simulate_day, DaySimulation};
use crate::error::{Error, Result};
use crate::knn::{self, KnnConfig, KnnModel};
use crate::nn::{self, NnConfig, NnModel};
use crate::timeseries::{DatasetSplit, SolarSeries};
use crate::Scalar;

/// Root mean squared difference, averaged over the number of samples.
pub fn rmse<T: Scalar>(predicted: &[T], actual: &[T]) -> Result<T> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum = predicted
        .iter()
        .zip(actual)
        .map(|(&p, &a)| (p - a) * (p - a))
        .fold(T::zero(), |acc, v| acc + v);
    Ok((sum / T::from_usize_lossy(predicted.len())).sqrt())
}

/// `100 · (baseline − improved) / baseline`; undefined unless `baseline > 0`.
pub fn improvement_percent<T: Scalar>(baseline: T, improved: T) -> Option<T> {
    (baseline > T::zero()).then(|| T::lit(100.0) * (baseline - improved) / baseline)
}

fn mean<T: Scalar>(values: &[T]) -> T {
    values.iter().copied().fold(T::zero(), |a, b| a + b) / T::from_usize_lossy(values.len())
}

/// RMSE per candidate value of one hyper-parameter, normalised so that the
/// worst available candidate maps to exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneGrid<T> {
    pub axis: String,
    pub candidates: Vec<usize>,
    /// `None` marks a candidate that could not be evaluated.
    pub raw_rmse: Vec<Option<T>>,
    pub normalized: Vec<Option<T>>,
    /// Raw RMSE that normalises to 1.
    pub reference_rmse: T,
    /// Candidate with the lowest RMSE; the earliest one on ties.
    pub best: usize,
}

impl<T: Scalar> TuneGrid<T> {
    pub fn new(
        axis: impl Into<String>,
        candidates: Vec<usize>,
        raw_rmse: Vec<Option<T>>,
    ) -> Result<Self> {
        assert_eq!(candidates.len(), raw_rmse.len(), "one RMSE per candidate");
        let available = || {
            raw_rmse
                .iter()
                .enumerate()
                .filter_map(|(i, r)| r.map(|r| (i, r)))
        };
        let reference_rmse = available()
            .map(|(_, r)| r)
            .fold(None, |acc: Option<T>, r| Some(acc.map_or(r, |a| a.max(r))))
            .ok_or(Error::InsufficientTrainingDays {
                needed: 1,
                available: 0,
            })?;
        let best_pos = available()
            .fold(None, |acc: Option<(usize, T)>, (i, r)| match acc {
                Some((_, b)) if b <= r => acc,
                _ => Some((i, r)),
            })
            .map(|(i, _)| i)
            .expect("at least one available candidate");
        let normalized = raw_rmse
            .iter()
            .map(|r| {
                r.map(|r| {
                    if reference_rmse > T::zero() {
                        r / reference_rmse
                    } else {
                        T::one()
                    }
                })
            })
            .collect();
        Ok(Self {
            axis: axis.into(),
            best: candidates[best_pos],
            candidates,
            raw_rmse,
            normalized,
            reference_rmse,
        })
    }

    /// Two-row table in the layout `N | 3 4 5 …` / `RMSE^a | 1 0.959 …`,
    /// followed by the normalisation footnote.
    pub fn render_table(&self, title: &str) -> String {
        let mut header = vec![self.axis.clone()];
        let mut values = vec!["RMSE^a".to_string()];
        for (candidate, norm) in self.candidates.iter().zip(&self.normalized) {
            header.push(candidate.to_string());
            values.push(match norm {
                Some(v) if *v == T::one() => "1".to_string(),
                Some(v) => format!("{:.3}", v.to_f64_lossy()),
                None => "n/a".to_string(),
            });
        }
        let width = header
            .iter()
            .chain(&values)
            .map(|s| s.len())
            .max()
            .unwrap_or(0);
        let row = |cells: &[String]| {
            cells
                .iter()
                .map(|c| format!("{c:>width$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = String::new();
        writeln!(out, "{title}").unwrap();
        writeln!(out, "{}", row(&header)).unwrap();
        writeln!(out, "{}", row(&values)).unwrap();
        writeln!(out, "a. {}", self.footnote()).unwrap();
        out
    }

    pub fn footnote(&self) -> String {
        format!(
            "RMSE {:.1} is normalized to 1",
            self.reference_rmse.to_f64_lossy()
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},raw_rmse_w,normalized\n", self.axis);
        for ((c, raw), norm) in self
            .candidates
            .iter()
            .zip(&self.raw_rmse)
            .zip(&self.normalized)
        {
            match (raw, norm) {
                (Some(r), Some(n)) => writeln!(out, "{c},{r},{n}").unwrap(),
                _ => writeln!(out, "{c},,").unwrap(),
            }
        }
        out
    }
}

/// Days of `split` up to and including the tuning partition.
fn history_through_tune<T: Scalar>(split: &DatasetSplit<T>) -> Result<SolarSeries<T>> {
    let days = split
        .train
        .days()
        .iter()
        .chain(split.tune.days())
        .cloned()
        .collect();
    SolarSeries::new(split.train.grid(), days)
}

fn history_through_test<T: Scalar>(split: &DatasetSplit<T>) -> Result<SolarSeries<T>> {
    let days = split
        .train
        .days()
        .iter()
        .chain(split.tune.days())
        .chain(split.test.days())
        .cloned()
        .collect();
    SolarSeries::new(split.train.grid(), days)
}

fn average_daily_rmse<T: Scalar>(
    days: &SolarSeries<T>,
    mut forecast: impl FnMut(usize) -> Result<Vec<T>>,
) -> Result<T> {
    if days.is_empty() {
        return Err(Error::TooFewDays("tuning partition is empty".into()));
    }
    let per_day = days
        .days()
        .iter()
        .map(|day| rmse(&forecast(day.day_index)?, &day.samples))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&per_day))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnTuning<T> {
    pub depth_candidates: Vec<usize>,
    pub neighbor_candidates: Vec<usize>,
    /// `cells[d][k]`: average tuning RMSE, `None` if the candidate could not be fitted.
    pub cells: Vec<Vec<Option<T>>>,
    pub best: KnnConfig,
    /// RMSE over depth at the best neighbour count.
    pub depth_grid: TuneGrid<T>,
    /// RMSE over neighbour count at the best depth.
    pub neighbor_grid: TuneGrid<T>,
}

/// Fits a k-NN model on the training days for every `(D, k)` and scores it on
/// the tuning days. Candidates without enough training days are marked
/// unavailable. The best pair minimises RMSE, ties going to smaller `D`, then
/// smaller `k`.
pub fn tune_knn<T: Scalar>(
    split: &DatasetSplit<T>,
    depth_candidates: &[usize],
    neighbor_candidates: &[usize],
) -> Result<KnnTuning<T>> {
    if split.tune.is_empty() {
        return Err(Error::TooFewDays("tuning partition is empty".into()));
    }
    let history = history_through_tune(split)?;
    let jobs: Vec<(usize, usize)> = depth_candidates
        .iter()
        .flat_map(|&d| neighbor_candidates.iter().map(move |&k| (d, k)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(d, k)| {
            let config = KnnConfig::new(d, k)?;
            let model = match knn::fit(&split.train, config) {
                Ok(model) => model,
                Err(e) if e.is_insufficient_data() => return Ok(None),
                Err(e) => return Err(e),
            };
            average_daily_rmse(&split.tune, |g| model.predict_for(&history, g)).map(Some)
        })
        .collect::<Result<Vec<Option<T>>>>()?;

    let cells: Vec<Vec<Option<T>>> = scores
        .chunks(neighbor_candidates.len().max(1))
        .map(|c| c.to_vec())
        .collect();
    let mut best: Option<(usize, usize, T)> = None;
    for (i, row) in cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let Some(v) = *cell else { continue };
            let better = match best {
                None => true,
                Some((bi, bj, b)) => {
                    v < b
                        || (v == b
                            && (depth_candidates[i], neighbor_candidates[j])
                                < (depth_candidates[bi], neighbor_candidates[bj]))
                }
            };
            if better {
                best = Some((i, j, v));
            }
        }
    }
    let (bi, bj, _) = best.ok_or(Error::InsufficientTrainingDays {
        needed: depth_candidates.iter().min().copied().unwrap_or(1)
            + neighbor_candidates.iter().min().copied().unwrap_or(2)
            + 1,
        available: split.train.len(),
    })?;
    let best = KnnConfig::new(depth_candidates[bi], neighbor_candidates[bj])?;
    let depth_grid = TuneGrid::new(
        "D",
        depth_candidates.to_vec(),
        cells.iter().map(|row| row[bj]).collect(),
    )?;
    let neighbor_grid = TuneGrid::new("k", neighbor_candidates.to_vec(), cells[bi].clone())?;
    Ok(KnnTuning {
        depth_candidates: depth_candidates.to_vec(),
        neighbor_candidates: neighbor_candidates.to_vec(),
        cells,
        best,
        depth_grid,
        neighbor_grid,
    })
}

impl<T: Scalar> KnnTuning<T> {
    pub fn cells_csv(&self) -> String {
        let mut out = String::from("D,k,rmse_w\n");
        for (d, row) in self.depth_candidates.iter().zip(&self.cells) {
            for (k, cell) in self.neighbor_candidates.iter().zip(row) {
                match cell {
                    Some(v) => writeln!(out, "{d},{k},{v}").unwrap(),
                    None => writeln!(out, "{d},{k},").unwrap(),
                }
            }
        }
        out
    }
}

/// For every hidden-layer size, trains `restarts` networks from consecutive
/// seeds (one LM run each) and averages their tuning RMSE.
pub fn tune_nn<T: Scalar>(
    split: &DatasetSplit<T>,
    hidden_candidates: &[usize],
    restarts: usize,
    base: &NnConfig,
) -> Result<TuneGrid<T>> {
    if split.tune.is_empty() {
        return Err(Error::TooFewDays("tuning partition is empty".into()));
    }
    if restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be positive".into()));
    }
    let history = history_through_tune(split)?;
    let (samples, scale) = nn::day_ahead_samples(&split.train)?;
    let jobs: Vec<(usize, usize)> = hidden_candidates
        .iter()
        .flat_map(|&h| (0..restarts).map(move |r| (h, r)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(h, r)| {
            let config = NnConfig {
                hidden_neurons: h,
                restarts,
                ..*base
            };
            config.validate()?;
            let run = nn::train_from_seed(
                &samples,
                scale,
                split.train.grid(),
                &config,
                config.restart_seed(r),
            )?;
            average_daily_rmse(&split.tune, |g| run.model.predict_for(&history, g))
        })
        .collect::<Result<Vec<T>>>()?;
    let raw = scores
        .chunks(restarts)
        .map(|runs| Some(mean(runs)))
        .collect();
    TuneGrid::new("N", hidden_candidates.to_vec(), raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Knn,
    Nn,
    KnnLocal,
    NnLocal,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Knn, Method::Nn, Method::KnnLocal, Method::NnLocal];

    pub fn label(self) -> &'static str {
        match self {
            Method::Knn => "knn",
            Method::Nn => "nn",
            Method::KnnLocal => "knn+local",
            Method::NnLocal => "nn+local",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Window length and harmonic count of the real-time correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrectionParams {
    pub window_length: usize,
    pub max_harmonic: usize,
}

impl Default for CorrectionParams {
    fn default() -> Self {
        Self {
            window_length: crate::correction::DEFAULT_WINDOW_LENGTH,
            max_harmonic: crate::correction::DEFAULT_MAX_HARMONIC,
        }
    }
}

/// Global forecast and its real-time replay for one day.
#[derive(Debug, Clone)]
pub struct TwoTierRun<T> {
    pub global: Vec<T>,
    pub simulation: DaySimulation<T>,
}

impl<T: Scalar> TwoTierRun<T> {
    pub fn new(global: Vec<T>, measured: &[T], params: CorrectionParams) -> Result<Self> {
        let simulation =
            simulate_day(&global, measured, params.window_length, params.max_harmonic)?;
        Ok(Self { global, simulation })
    }

    pub fn corrected(&self) -> &[T] {
        &self.simulation.corrected.values
    }

    /// `(global RMSE, corrected RMSE)` against `measured`.
    pub fn scores(&self, measured: &[T]) -> Result<(T, T)> {
        Ok((
            rmse(&self.global, measured)?,
            rmse(self.corrected(), measured)?,
        ))
    }

    /// `sample_index,global_w,measured_w,corrected_w,a0,a1,b1,…` with the
    /// coefficients of the fit anchored at each sample (blank before the
    /// first full window). `corrected_w` at sample `m` is the prediction
    /// made at `m - 1`.
    pub fn trace_csv(&self, measured: &[T], max_harmonic: usize) -> String {
        let mut out = String::from("sample_index,global_w,measured_w,corrected_w,a0");
        for i in 1..=max_harmonic {
            write!(out, ",a{i},b{i}").unwrap();
        }
        out.push('\n');
        for (m, ((g, p), c)) in self
            .global
            .iter()
            .zip(measured)
            .zip(self.corrected())
            .enumerate()
        {
            write!(out, "{m},{g},{p},{c}").unwrap();
            match self.simulation.fit_at(m) {
                Some(fit) => fit
                    .coefficients()
                    .iter()
                    .for_each(|v| write!(out, ",{v}").unwrap()),
                None => (0..2 * max_harmonic + 1).for_each(|_| out.push(',')),
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayScores<T> {
    pub date: NaiveDate,
    pub day_index: usize,
    /// Indexed like [`Method::ALL`].
    pub rmse: [T; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Improvement<T> {
    pub baseline: Method,
    pub improved: Method,
    pub percent: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<T> {
    pub per_day: Vec<DayScores<T>>,
    /// Test days left out, with the reason.
    pub skipped: Vec<(NaiveDate, String)>,
    /// Mean per-day RMSE, indexed like [`Method::ALL`].
    pub averaged_rmse: [T; 4],
    pub improvements: Vec<Improvement<T>>,
}

pub const IMPROVEMENT_PAIRS: [(Method, Method); 3] = [
    (Method::Knn, Method::KnnLocal),
    (Method::Nn, Method::NnLocal),
    (Method::KnnLocal, Method::NnLocal),
];

fn method_slot(method: Method) -> usize {
    Method::ALL
        .iter()
        .position(|m| *m == method)
        .expect("listed")
}

impl<T: Scalar> EvalReport<T> {
    pub fn from_days(
        per_day: Vec<DayScores<T>>,
        skipped: Vec<(NaiveDate, String)>,
    ) -> Result<Self> {
        if per_day.is_empty() {
            return Err(Error::TooFewDays("no test day could be evaluated".into()));
        }
        let mut averaged_rmse = [T::zero(); 4];
        for (slot, avg) in averaged_rmse.iter_mut().enumerate() {
            let column: Vec<T> = per_day.iter().map(|d| d.rmse[slot]).collect();
            *avg = mean(&column);
        }
        let improvements = IMPROVEMENT_PAIRS
            .iter()
            .map(|&(baseline, improved)| Improvement {
                baseline,
                improved,
                percent: improvement_percent(
                    averaged_rmse[method_slot(baseline)],
                    averaged_rmse[method_slot(improved)],
                ),
            })
            .collect();
        Ok(Self {
            per_day,
            skipped,
            averaged_rmse,
            improvements,
        })
    }

    pub fn average(&self, method: Method) -> T {
        self.averaged_rmse[method_slot(method)]
    }

    pub fn improvement(&self, baseline: Method, improved: Method) -> Option<T> {
        self.improvements
            .iter()
            .find(|i| i.baseline == baseline && i.improved == improved)
            .and_then(|i| i.percent)
    }

    pub fn per_day_csv(&self) -> String {
        let mut out = String::from("date");
        for m in Method::ALL {
            write!(out, ",{m}").unwrap();
        }
        out.push('\n');
        for day in &self.per_day {
            write!(out, "{}", day.date.format("%Y-%m-%d")).unwrap();
            for v in &day.rmse {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,average_rmse_w\n");
        for m in Method::ALL {
            writeln!(out, "{m},{}", self.average(m)).unwrap();
        }
        out.push_str("\nbaseline,improved,improvement_percent\n");
        for imp in &self.improvements {
            match imp.percent {
                Some(p) => writeln!(out, "{},{},{p}", imp.baseline, imp.improved).unwrap(),
                None => writeln!(out, "{},{},n/a", imp.baseline, imp.improved).unwrap(),
            }
        }
        out
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<12}{:>12}{:>12}{:>12}{:>12}",
            "date", "knn", "nn", "knn+local", "nn+local"
        )
        .unwrap();
        let row = |out: &mut String, label: &str, v: &[T; 4]| {
            write!(out, "{label:<12}").unwrap();
            for x in v {
                write!(out, "{:>12.1}", x.to_f64_lossy()).unwrap();
            }
            out.push('\n');
        };
        for day in &self.per_day {
            row(
                &mut out,
                &day.date.format("%Y-%m-%d").to_string(),
                &day.rmse,
            );
        }
        row(&mut out, "average", &self.averaged_rmse);
        out.push('\n');
        for imp in &self.improvements {
            match imp.percent {
                Some(p) => writeln!(
                    out,
                    "{} vs {}: {:.2} percent improvement",
                    imp.improved,
                    imp.baseline,
                    p.to_f64_lossy()
                )
                .unwrap(),
                None => {
                    writeln!(out, "{} vs {}: not applicable", imp.improved, imp.baseline).unwrap()
                }
            }
        }
        for (date, why) in &self.skipped {
            writeln!(out, "skipped {date}: {why}").unwrap();
        }
        out
    }
}

/// Scores k-NN, NN and both two-tier variants on every test day. Days whose
/// history is too short for either model are skipped and listed.
pub fn compare_methods<T: Scalar>(
    split: &DatasetSplit<T>,
    knn_model: &KnnModel<T>,
    nn_model: &NnModel<T>,
    params: CorrectionParams,
) -> Result<EvalReport<T>> {
    if split.test.is_empty() {
        return Err(Error::TooFewDays("test partition is empty".into()));
    }
    let history = history_through_test(split)?;
    let results = split
        .test
        .days()
        .par_iter()
        .map(|day| {
            let forecasts = knn_model
                .predict_for(&history, day.day_index)
                .and_then(|k| Ok((k, nn_model.predict_for(&history, day.day_index)?)));
            let (knn_global, nn_global) = match forecasts {
                Ok(f) => f,
                Err(e @ Error::InsufficientHistory { .. }) => {
                    return Ok(Err((day.date, e.to_string())))
                }
                Err(e) => return Err(e),
            };
            let knn_run = TwoTierRun::new(knn_global, &day.samples, params)?;
            let nn_run = TwoTierRun::new(nn_global, &day.samples, params)?;
            let (knn, knn_local) = knn_run.scores(&day.samples)?;
            let (nn, nn_local) = nn_run.scores(&day.samples)?;
            Ok(Ok(DayScores {
                date: day.date,
                day_index: day.day_index,
                rmse: [knn, nn, knn_local, nn_local],
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_day = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(d) => per_day.push(d),
            Err(s) => skipped.push(s),
        }
    }
    EvalReport::from_days(per_day, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[3.0, 1.0], &[1.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(rmse::<f64>(&[], &[]), Err(Error::EmptyInput)));
        assert!(matches!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn improvement_definition() {
        assert!((improvement_percent(100.0f64, 72.0).unwrap() - 28.0).abs() < 1e-12);
        assert_eq!(improvement_percent(0.0, 0.0), None);
    }

    #[test]
    fn grid_normalisation() {
        let grid = TuneGrid::new("D", vec![1, 2, 3], vec![Some(2.0), None, Some(4.0)]).unwrap();
        assert_eq!(grid.normalized, vec![Some(0.5), None, Some(1.0)]);
        assert_eq!(grid.best, 1);
        assert_eq!(grid.reference_rmse, 4.0);

        let single = TuneGrid::new("N", vec![6], vec![Some(2499.5)]).unwrap();
        assert_eq!(single.normalized, vec![Some(1.0)]);
        assert_eq!(single.best, 6);
        assert!(TuneGrid::<f64>::new("N", vec![6], vec![None]).is_err());

        let tied =
            TuneGrid::new("k", vec![2, 3, 4], vec![Some(3.0), Some(1.0), Some(1.0)]).unwrap();
        assert_eq!(tied.best, 3);
    }

    #[test]
    fn table_has_footnote() {
        let grid = TuneGrid::new("D", vec![1, 2], vec![Some(4943.6), Some(2000.0)]).unwrap();
        let table = grid.render_table("COMPARISONS OF RMSE OVER D");
        assert!(table.contains("a. RMSE 4943.6 is normalized to 1"));
        assert!(table
            .lines()
            .nth(2)
            .unwrap()
            .split_whitespace()
            .any(|c| c == "1"));
        assert!(table.contains("0.405"));
    }

    #[test]
    fn report_without_error_has_no_improvements() {
        let day = DayScores {
            date: NaiveDate::from_ymd_opt(2015, 3, 26).unwrap(),
            day_index: 40,
            rmse: [0.0; 4],
        };
        let report = EvalReport::from_days(vec![day], vec![]).unwrap();
        assert!(report.improvements.iter().all(|i| i.percent.is_none()));
        assert!(report.summary_csv().contains("knn,knn+local,n/a"));
        assert!(report
            .per_day_csv()
            .starts_with("date,knn,nn,knn+local,nn+local\n"));
    }
}
