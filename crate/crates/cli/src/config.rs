//! Run configuration: built-in defaults, overridden by `key = value` files,
//! overridden by command-line settings.

use std::fmt::Write as _;
use std::str::FromStr;

use chrono::NaiveDate;
use twotier::evaluation::CorrectionParams;
use twotier::knn::KnnConfig;
use twotier::nn::NnConfig;
use twotier::synth::SynthConfig;
use twotier::timeseries::{SamplingGrid, SplitRatios};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sample_interval_seconds: u32,
    pub split_train: f64,
    pub split_tune: f64,
    pub split_test: f64,
    pub knn_depth_days: usize,
    pub knn_neighbors: usize,
    pub nn_hidden_neurons: usize,
    pub nn_restarts: usize,
    pub nn_lm_initial_damping: f64,
    pub nn_lm_damping_factor: f64,
    pub nn_max_iterations: usize,
    pub nn_loss_tolerance: f64,
    pub window_length: usize,
    pub max_harmonic: usize,
    pub tune_depths: Vec<usize>,
    pub tune_neighbors: Vec<usize>,
    pub tune_hidden: Vec<usize>,
    pub tune_restarts: usize,
    /// Seeds both the synthetic generator and NN initialisation.
    pub seed: u64,
    pub synth_days: usize,
    pub synth_peak_power_w: f64,
    pub synth_cloudy_fraction: f64,
    pub synth_sunrise_index: usize,
    pub synth_sunset_index: usize,
    pub synth_start_date: NaiveDate,
}

impl Default for RunConfig {
    fn default() -> Self {
        let nn = NnConfig::default();
        let knn = KnnConfig::default();
        let synth = SynthConfig::default();
        let correction = CorrectionParams::default();
        let ratios = SplitRatios::default();
        Self {
            sample_interval_seconds: SamplingGrid::default().sample_interval_seconds(),
            split_train: ratios.train,
            split_tune: ratios.tune,
            split_test: ratios.test,
            knn_depth_days: knn.depth_days,
            knn_neighbors: knn.neighbors,
            nn_hidden_neurons: nn.hidden_neurons,
            nn_restarts: nn.restarts,
            nn_lm_initial_damping: nn.lm_initial_damping,
            nn_lm_damping_factor: nn.lm_damping_factor,
            nn_max_iterations: nn.max_iterations,
            nn_loss_tolerance: nn.loss_tolerance,
            window_length: correction.window_length,
            max_harmonic: correction.max_harmonic,
            tune_depths: (1..=8).collect(),
            tune_neighbors: (2..=4).collect(),
            tune_hidden: (3..=8).collect(),
            tune_restarts: nn.restarts,
            seed: nn.rng_seed,
            synth_days: 50,
            synth_peak_power_w: synth.peak_power_w,
            synth_cloudy_fraction: synth.cloudy_fraction,
            synth_sunrise_index: synth.sunrise_index,
            synth_sunset_index: synth.sunset_index,
            synth_start_date: synth.start_date,
        }
    }
}

/// Every accepted key, with a one-line description, in documentation order.
pub const KEYS: &[(&str, &str)] = &[
    (
        "sample_interval_seconds",
        "sampling interval of the data, must divide 86400",
    ),
    ("split_train", "fraction of days used for training"),
    ("split_tune", "fraction of days used for tuning"),
    ("split_test", "fraction of days used for testing"),
    ("knn_depth_days", "k-NN context depth D in days"),
    ("knn_neighbors", "k-NN neighbour count k"),
    ("nn_hidden_neurons", "hidden tanh units of the network"),
    ("nn_restarts", "random restarts, best training RMSE kept"),
    (
        "nn_lm_initial_damping",
        "initial Levenberg-Marquardt damping",
    ),
    (
        "nn_lm_damping_factor",
        "damping multiplier on rejected steps",
    ),
    ("nn_max_iterations", "LM iteration cap per restart"),
    (
        "nn_loss_tolerance",
        "LM stops when the loss improves by less",
    ),
    (
        "window_length",
        "residual window n of the real-time correction",
    ),
    (
        "max_harmonic",
        "Fourier harmonics L of the real-time correction",
    ),
    ("tune_depths", "D candidates for tuning, e.g. 1-8 or 1,3,5"),
    ("tune_neighbors", "k candidates for tuning"),
    ("tune_hidden", "hidden-unit candidates for tuning"),
    (
        "tune_restarts",
        "networks averaged per hidden-unit candidate",
    ),
    (
        "seed",
        "seed of the synthetic generator and network initialisation",
    ),
    ("synth_days", "days generated by synth"),
    ("synth_peak_power_w", "clear-sky peak power"),
    (
        "synth_cloudy_fraction",
        "probability that a generated day is cloudy",
    ),
    (
        "synth_sunrise_index",
        "first daylight sample of generated days",
    ),
    (
        "synth_sunset_index",
        "last daylight sample of generated days",
    ),
    ("synth_start_date", "date of the first generated day"),
];

fn parse<V: FromStr>(key: &str, raw: &str) -> Result<V, String> {
    raw.parse()
        .map_err(|_| format!("invalid value `{raw}` for `{key}`"))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi): (usize, usize) = (parse(key, lo.trim())?, parse(key, hi.trim())?);
                if lo > hi {
                    return Err(format!("reversed range `{part}` for `{key}`"));
                }
                out.extend(lo..=hi);
            }
            None => out.push(parse(key, part)?),
        }
    }
    if out.is_empty() {
        return Err(format!("`{key}` needs at least one value"));
    }
    Ok(out)
}

fn format_list(values: &[usize]) -> String {
    values
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), String> {
        let raw = raw.trim();
        match key {
            "sample_interval_seconds" => self.sample_interval_seconds = parse(key, raw)?,
            "split_train" => self.split_train = parse(key, raw)?,
            "split_tune" => self.split_tune = parse(key, raw)?,
            "split_test" => self.split_test = parse(key, raw)?,
            "knn_depth_days" => self.knn_depth_days = parse(key, raw)?,
            "knn_neighbors" => self.knn_neighbors = parse(key, raw)?,
            "nn_hidden_neurons" => self.nn_hidden_neurons = parse(key, raw)?,
            "nn_restarts" => self.nn_restarts = parse(key, raw)?,
            "nn_lm_initial_damping" => self.nn_lm_initial_damping = parse(key, raw)?,
            "nn_lm_damping_factor" => self.nn_lm_damping_factor = parse(key, raw)?,
            "nn_max_iterations" => self.nn_max_iterations = parse(key, raw)?,
            "nn_loss_tolerance" => self.nn_loss_tolerance = parse(key, raw)?,
            "window_length" => self.window_length = parse(key, raw)?,
            "max_harmonic" => self.max_harmonic = parse(key, raw)?,
            "tune_depths" => self.tune_depths = parse_list(key, raw)?,
            "tune_neighbors" => self.tune_neighbors = parse_list(key, raw)?,
            "tune_hidden" => self.tune_hidden = parse_list(key, raw)?,
            "tune_restarts" => self.tune_restarts = parse(key, raw)?,
            "seed" => self.seed = parse(key, raw)?,
            "synth_days" => self.synth_days = parse(key, raw)?,
            "synth_peak_power_w" => self.synth_peak_power_w = parse(key, raw)?,
            "synth_cloudy_fraction" => self.synth_cloudy_fraction = parse(key, raw)?,
            "synth_sunrise_index" => self.synth_sunrise_index = parse(key, raw)?,
            "synth_sunset_index" => self.synth_sunset_index = parse(key, raw)?,
            "synth_start_date" => {
                self.synth_start_date = NaiveDate::parse_from_str(raw, "%Y-%m-%d")
                    .map_err(|_| format!("invalid date `{raw}` for `{key}`"))?
            }
            _ => return Err(format!("unknown configuration key `{key}`")),
        }
        Ok(())
    }

    /// Applies a config file. Blank lines and lines starting with `#` are
    /// skipped; everything else must be `key = value`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), String> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{origin}:{}: expected `key = value`", i + 1))?;
            self.set(key.trim(), value)
                .map_err(|e| format!("{origin}:{}: {e}", i + 1))?;
        }
        Ok(())
    }

    /// `KEY=VALUE` from the command line.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<(), String> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| format!("--set expects KEY=VALUE, got `{assignment}`"))?;
        self.set(key.trim(), value)
    }

    /// The whole configuration as a file that [`RunConfig::apply_text`] reads
    /// back, each key preceded by its description.
    pub fn to_documented_text(&self) -> String {
        let mut out = String::new();
        for (key, about) in KEYS {
            writeln!(out, "# {about}\n{key} = {}", self.get(key)).unwrap();
        }
        out
    }

    pub fn get(&self, key: &str) -> String {
        match key {
            "sample_interval_seconds" => self.sample_interval_seconds.to_string(),
            "split_train" => self.split_train.to_string(),
            "split_tune" => self.split_tune.to_string(),
            "split_test" => self.split_test.to_string(),
            "knn_depth_days" => self.knn_depth_days.to_string(),
            "knn_neighbors" => self.knn_neighbors.to_string(),
            "nn_hidden_neurons" => self.nn_hidden_neurons.to_string(),
            "nn_restarts" => self.nn_restarts.to_string(),
            "nn_lm_initial_damping" => self.nn_lm_initial_damping.to_string(),
            "nn_lm_damping_factor" => self.nn_lm_damping_factor.to_string(),
            "nn_max_iterations" => self.nn_max_iterations.to_string(),
            "nn_loss_tolerance" => self.nn_loss_tolerance.to_string(),
            "window_length" => self.window_length.to_string(),
            "max_harmonic" => self.max_harmonic.to_string(),
            "tune_depths" => format_list(&self.tune_depths),
            "tune_neighbors" => format_list(&self.tune_neighbors),
            "tune_hidden" => format_list(&self.tune_hidden),
            "tune_restarts" => self.tune_restarts.to_string(),
            "seed" => self.seed.to_string(),
            "synth_days" => self.synth_days.to_string(),
            "synth_peak_power_w" => self.synth_peak_power_w.to_string(),
            "synth_cloudy_fraction" => self.synth_cloudy_fraction.to_string(),
            "synth_sunrise_index" => self.synth_sunrise_index.to_string(),
            "synth_sunset_index" => self.synth_sunset_index.to_string(),
            "synth_start_date" => self.synth_start_date.format("%Y-%m-%d").to_string(),
            _ => String::new(),
        }
    }

    pub fn grid(&self) -> twotier::Result<SamplingGrid> {
        SamplingGrid::new(self.sample_interval_seconds)
    }

    pub fn ratios(&self) -> twotier::Result<SplitRatios> {
        SplitRatios::new(self.split_train, self.split_tune, self.split_test)
    }

    pub fn knn(&self) -> twotier::Result<KnnConfig> {
        KnnConfig::new(self.knn_depth_days, self.knn_neighbors)
    }

    pub fn nn(&self) -> twotier::Result<NnConfig> {
        let config = NnConfig {
            hidden_neurons: self.nn_hidden_neurons,
            restarts: self.nn_restarts,
            lm_initial_damping: self.nn_lm_initial_damping,
            lm_damping_factor: self.nn_lm_damping_factor,
            max_iterations: self.nn_max_iterations,
            loss_tolerance: self.nn_loss_tolerance,
            rng_seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn correction(&self) -> CorrectionParams {
        CorrectionParams {
            window_length: self.window_length,
            max_harmonic: self.max_harmonic,
        }
    }

    pub fn synth(&self) -> twotier::Result<SynthConfig> {
        let config = SynthConfig {
            peak_power_w: self.synth_peak_power_w,
            sample_interval_seconds: self.sample_interval_seconds,
            sunrise_index: self.synth_sunrise_index,
            sunset_index: self.synth_sunset_index,
            cloudy_fraction: self.synth_cloudy_fraction,
            start_date: self.synth_start_date,
            ..SynthConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_library() {
        let c = RunConfig::default();
        assert_eq!(c.sample_interval_seconds, 900);
        assert_eq!((c.knn_depth_days, c.knn_neighbors), (5, 2));
        assert_eq!((c.nn_hidden_neurons, c.nn_restarts), (6, 10));
        assert_eq!((c.window_length, c.max_harmonic), (8, 2));
        assert_eq!((c.split_train, c.split_tune, c.split_test), (0.6, 0.2, 0.2));
    }

    #[test]
    fn file_overrides_and_comments() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# tuned\n\nknn_depth_days = 3\n tune_hidden = 2-4, 7\n",
            "t.conf",
        )
        .unwrap();
        assert_eq!(c.knn_depth_days, 3);
        assert_eq!(c.tune_hidden, vec![2, 3, 4, 7]);
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let mut c = RunConfig::default();
        let err = c
            .apply_text("seed = 1\nknn_neighbours = 3\n", "x.conf")
            .unwrap_err();
        assert!(err.starts_with("x.conf:2:"), "{err}");
        assert!(err.contains("knn_neighbours"));
        assert!(c.apply_assignment("no_equals").is_err());
        assert!(c.apply_assignment("seed=abc").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_assignment("nn_loss_tolerance=3e-7").unwrap();
        c.apply_assignment("synth_start_date=2020-01-31").unwrap();
        let mut back = RunConfig {
            seed: 99,
            ..RunConfig::default()
        };
        back.apply_text(&c.to_documented_text(), "round").unwrap();
        assert_eq!(back, c);
        assert_eq!(2 * KEYS.len(), c.to_documented_text().lines().count());
    }
}
