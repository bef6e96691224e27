//! Versioned, line-oriented text files for trained models (`.htm-model`).
//!
//! ```text
//! htm-model 1
//! kind knn
//! checksum sha256:<hex digest of the payload>
//! payload <number of payload lines>
//! <payload lines>
//! ```
//!
//! Payload lines are `key value…` pairs in a fixed order per model kind; see
//! `docs/model-format.md`. Floats are written as the shortest decimal that
//! parses back to the identical bits.

use std::fmt::Write as _;
use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::knn::{KnnConfig, KnnModel, TrainingPair};
use crate::nn::{NnConfig, NnModel};
use crate::timeseries::SamplingGrid;
use crate::Scalar;

pub const FORMAT_VERSION: u32 = 1;
pub const MAGIC: &str = "htm-model";
pub const FILE_EXTENSION: &str = "htm-model";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Knn,
    Nn,
}

impl ModelKind {
    fn tag(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::Nn => "nn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model<T> {
    Knn(KnnModel<T>),
    Nn(NnModel<T>),
}

impl<T> Model<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Knn(_) => ModelKind::Knn,
            Model::Nn(_) => ModelKind::Nn,
        }
    }

    pub fn into_knn(self) -> Option<KnnModel<T>> {
        match self {
            Model::Knn(m) => Some(m),
            Model::Nn(_) => None,
        }
    }

    pub fn into_nn(self) -> Option<NnModel<T>> {
        match self {
            Model::Nn(m) => Some(m),
            Model::Knn(_) => None,
        }
    }
}

fn join<T: Scalar>(values: &[T]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v}").unwrap();
    }
    out
}

fn knn_payload<T: Scalar>(model: &KnnModel<T>) -> String {
    let config = model.config();
    let mut out = String::new();
    writeln!(out, "scalar {}", T::NAME).unwrap();
    writeln!(out, "depth_days {}", config.depth_days).unwrap();
    writeln!(out, "neighbors {}", config.neighbors).unwrap();
    writeln!(out, "pair_count {}", model.pairs().len()).unwrap();
    for pair in model.pairs() {
        writeln!(out, "pair {}", pair.day_index).unwrap();
        writeln!(out, "context {}", join(&pair.context)).unwrap();
        writeln!(out, "target {}", join(&pair.target)).unwrap();
    }
    out
}

fn nn_payload<T: Scalar>(model: &NnModel<T>) -> String {
    let config = model.config();
    let mut out = String::new();
    writeln!(out, "scalar {}", T::NAME).unwrap();
    writeln!(out, "hidden_neurons {}", config.hidden_neurons).unwrap();
    writeln!(out, "restarts {}", config.restarts).unwrap();
    writeln!(out, "lm_initial_damping {}", config.lm_initial_damping).unwrap();
    writeln!(out, "lm_damping_factor {}", config.lm_damping_factor).unwrap();
    writeln!(out, "max_iterations {}", config.max_iterations).unwrap();
    writeln!(out, "loss_tolerance {}", config.loss_tolerance).unwrap();
    writeln!(out, "rng_seed {}", config.rng_seed).unwrap();
    match model.grid() {
        Some(grid) => writeln!(
            out,
            "sample_interval_seconds {}",
            grid.sample_interval_seconds()
        )
        .unwrap(),
        None => writeln!(out, "sample_interval_seconds none").unwrap(),
    }
    writeln!(out, "scale_max {}", model.scale_max()).unwrap();
    for (w, b) in model.hidden_weights().iter().zip(model.hidden_biases()) {
        writeln!(out, "hidden {} {} {}", w[0], w[1], b).unwrap();
    }
    writeln!(out, "output_weights {}", join(model.output_weights())).unwrap();
    writeln!(out, "output_bias {}", model.output_bias()).unwrap();
    out
}

fn digest(payload: &str) -> String {
    let hash = Sha256::digest(payload.as_bytes());
    hash.iter().fold(String::with_capacity(64), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

/// Full file text for `model`.
pub fn to_text<T: Scalar>(model: &Model<T>) -> String {
    let payload = match model {
        Model::Knn(m) => knn_payload(m),
        Model::Nn(m) => nn_payload(m),
    };
    format!(
        "{MAGIC} {FORMAT_VERSION}\nkind {}\nchecksum sha256:{}\npayload {}\n{payload}",
        model.kind().tag(),
        digest(&payload),
        payload.lines().count()
    )
}

pub fn save_model<T: Scalar, W: Write>(model: &Model<T>, mut sink: W) -> Result<()> {
    sink.write_all(to_text(model).as_bytes())?;
    sink.flush()?;
    Ok(())
}

pub fn load_model<T: Scalar, R: Read>(mut source: R) -> Result<Model<T>> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    from_text(&text)
}

/// Parses and validates a model file. Nothing is returned unless the whole
/// file is present, its checksum matches and the model passes every
/// invariant check.
pub fn from_text<T: Scalar>(text: &str) -> Result<Model<T>> {
    let mut header = Lines::new(text, 0);
    let version: u32 = header
        .value(MAGIC)?
        .parse()
        .map_err(|_| header.error("bad format version"))?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let kind = match header.value("kind")? {
        "knn" => ModelKind::Knn,
        "nn" => ModelKind::Nn,
        other => return Err(header.error(&format!("unknown model kind `{other}`"))),
    };
    let checksum = header.value("checksum")?;
    let expected = checksum
        .strip_prefix("sha256:")
        .ok_or_else(|| header.error("checksum must be sha256:<hex>"))?
        .to_string();
    let line_count: usize = header
        .value("payload")?
        .parse()
        .map_err(|_| header.error("bad payload line count"))?;

    let payload_start = header.byte_offset();
    let payload = &text[payload_start..];
    if payload.lines().count() != line_count || (line_count > 0 && !payload.ends_with('\n')) {
        return Err(Error::Parse {
            line: header.line_number() + 1,
            reason: format!(
                "payload has {} line(s), header promises {line_count} (truncated file?)",
                payload.lines().count()
            ),
        });
    }
    let actual = digest(payload);
    if actual != expected {
        return Err(Error::ChecksumMismatch { expected, actual });
    }

    let mut lines = Lines::new(payload, header.line_number());
    let scalar = lines.value("scalar")?;
    if scalar != T::NAME {
        return Err(lines.error(&format!("model stores {scalar}, loading as {}", T::NAME)));
    }
    let model = match kind {
        ModelKind::Knn => Model::Knn(parse_knn(&mut lines)?),
        ModelKind::Nn => Model::Nn(parse_nn(&mut lines)?),
    };
    if let Some(extra) = lines.next_line() {
        return Err(lines.error(&format!("unexpected trailing line `{extra}`")));
    }
    Ok(model)
}

fn invariant(e: Error) -> Error {
    match e {
        Error::InvariantViolation(_) => e,
        other => Error::InvariantViolation(other.to_string()),
    }
}

fn parse_knn<T: Scalar>(lines: &mut Lines<'_>) -> Result<KnnModel<T>> {
    let depth_days = lines.count_value("depth_days")?;
    let neighbors = lines.count_value("neighbors")?;
    let pair_count = lines.count_value("pair_count")?;
    let mut pairs = Vec::with_capacity(pair_count.min(1 << 16));
    for _ in 0..pair_count {
        let day_index = lines.count_value("pair")?;
        let context = lines.floats("context")?;
        let target = lines.floats("target")?;
        pairs.push(TrainingPair {
            day_index,
            context,
            target,
        });
    }
    if pairs.windows(2).any(|w| w[0].day_index >= w[1].day_index) {
        return Err(Error::InvariantViolation(
            "pairs are not in chronological order".into(),
        ));
    }
    KnnModel::from_parts(
        KnnConfig {
            depth_days,
            neighbors,
        },
        pairs,
    )
    .map_err(invariant)
}

fn parse_nn<T: Scalar>(lines: &mut Lines<'_>) -> Result<NnModel<T>> {
    let hidden_neurons = lines.count_value("hidden_neurons")?;
    let restarts = lines.count_value("restarts")?;
    let lm_initial_damping = lines.f64_value("lm_initial_damping")?;
    let lm_damping_factor = lines.f64_value("lm_damping_factor")?;
    let max_iterations = lines.count_value("max_iterations")?;
    let loss_tolerance = lines.f64_value("loss_tolerance")?;
    let rng_seed: u64 = {
        let raw = lines.value("rng_seed")?;
        raw.parse()
            .map_err(|_| lines.error(&format!("bad seed `{raw}`")))?
    };
    let grid = match lines.value("sample_interval_seconds")? {
        "none" => None,
        raw => {
            let secs = parse_count(raw).map_err(|e| lines.error(&e))?;
            let secs = u32::try_from(secs)
                .map_err(|_| Error::InvariantViolation(format!("interval {secs} too large")))?;
            Some(SamplingGrid::new(secs).map_err(invariant)?)
        }
    };
    let scale_max = lines.float_value::<T>("scale_max")?;
    if hidden_neurons > crate::nn::MAX_HIDDEN_NEURONS {
        return Err(Error::InvariantViolation(format!(
            "{hidden_neurons} hidden neurons"
        )));
    }
    let mut hidden_weights = Vec::with_capacity(hidden_neurons);
    let mut hidden_biases = Vec::with_capacity(hidden_neurons);
    for _ in 0..hidden_neurons {
        let row = lines.floats::<T>("hidden")?;
        if row.len() != 3 {
            return Err(lines.error("hidden line needs two weights and a bias"));
        }
        hidden_weights.push([row[0], row[1]]);
        hidden_biases.push(row[2]);
    }
    let output_weights = lines.floats("output_weights")?;
    let output_bias = lines.float_value::<T>("output_bias")?;
    let config = NnConfig {
        hidden_neurons,
        restarts,
        lm_initial_damping,
        lm_damping_factor,
        max_iterations,
        loss_tolerance,
        rng_seed,
    };
    NnModel::from_parts(
        hidden_weights,
        hidden_biases,
        output_weights,
        output_bias,
        scale_max,
        config,
        grid,
    )
    .map_err(invariant)
}

fn parse_count(raw: &str) -> std::result::Result<usize, String> {
    match raw.parse::<i128>() {
        Ok(v) if v < 0 => Err(format!("negative count {v}")),
        Ok(v) => usize::try_from(v).map_err(|_| format!("count {v} too large")),
        Err(_) => Err(format!("expected an integer, found `{raw}`")),
    }
}

struct Lines<'a> {
    text: &'a str,
    offset: usize,
    line_base: usize,
    consumed: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, line_base: usize) -> Self {
        Self {
            text,
            offset: 0,
            line_base,
            consumed: 0,
        }
    }

    fn line_number(&self) -> usize {
        self.line_base + self.consumed
    }

    fn byte_offset(&self) -> usize {
        self.offset
    }

    fn error(&self, reason: &str) -> Error {
        Error::Parse {
            line: self.line_number(),
            reason: reason.to_string(),
        }
    }

    fn next_line(&mut self) -> Option<&'a str> {
        let rest = &self.text[self.offset..];
        if rest.is_empty() {
            return None;
        }
        let end = rest.find('\n').map_or(rest.len(), |i| i + 1);
        self.offset += end;
        self.consumed += 1;
        Some(rest[..end].trim_end_matches('\n'))
    }

    fn value(&mut self, key: &str) -> Result<&'a str> {
        let line = self
            .next_line()
            .ok_or_else(|| self.error(&format!("unexpected end of file, expected `{key}`")))?;
        let (found, rest) = line.split_once(' ').unwrap_or((line, ""));
        if found != key {
            return Err(self.error(&format!("expected `{key}`, found `{found}`")));
        }
        Ok(rest)
    }

    /// A non-negative integer; negative values are invariant violations.
    fn count_value(&mut self, key: &str) -> Result<usize> {
        let raw = self.value(key)?;
        match raw.parse::<i128>() {
            Ok(v) if v < 0 => Err(Error::InvariantViolation(format!(
                "{key} is negative ({v})"
            ))),
            _ => parse_count(raw).map_err(|e| self.error(&e)),
        }
    }

    fn f64_value(&mut self, key: &str) -> Result<f64> {
        let raw = self.value(key)?;
        raw.parse()
            .map_err(|_| self.error(&format!("bad number `{raw}` for {key}")))
    }

    fn float_value<T: Scalar>(&mut self, key: &str) -> Result<T> {
        let raw = self.value(key)?;
        raw.parse()
            .map_err(|_| self.error(&format!("bad number `{raw}` for {key}")))
    }

    fn floats<T: Scalar>(&mut self, key: &str) -> Result<Vec<T>> {
        let raw = self.value(key)?;
        raw.split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| self.error(&format!("bad number `{s}` in {key}")))
            })
            .collect()
    }
}
