use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use twotier::evaluation::{self, improvement_percent, TwoTierRun};
use twotier::persistence::{self, Model};
use twotier::synth;
use twotier::timeseries::{export_csv, ingest_csv, split_chronological};
use twotier::{knn, nn, KnnModel, NnModel, SolarSeries};

use crate::config::RunConfig;
use crate::Failure;

pub const KNN_MODEL_FILE: &str = "knn.htm-model";
pub const NN_MODEL_FILE: &str = "nn.htm-model";
pub const TUNED_CONFIG_FILE: &str = "tuned.conf";

fn read_series(config: &RunConfig, path: &Path) -> Result<SolarSeries, Failure> {
    let file = File::open(path).map_err(|e| Failure::io(path, e))?;
    ingest_csv(BufReader::new(file), config.grid()?).map_err(|e| {
        let mut failure = Failure::from(e);
        failure.message = format!("{}: {}", path.display(), failure.message);
        failure
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn labels_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.labels.csv"))
}

pub fn synth(config: &RunConfig, out: Option<&Path>, labels: Option<&Path>) -> Result<(), Failure> {
    if config.synth_days == 0 {
        return Err(Failure::usage("--days must be at least 1"));
    }
    let synth_config = config.synth()?;
    let data = synth::generate::<f64>(&synth_config, config.synth_days, config.seed)?;
    let mut csv = Vec::new();
    export_csv(&data.series, &mut csv)?;
    let mut sidecar = Vec::new();
    synth::write_labels(&data.labels, &mut sidecar)?;

    let summary = format!(
        "{} days from {}: {} sunny, {} cloudy (seed {})",
        data.series.len(),
        config.synth_start_date,
        data.count(synth::DayLabel::Sunny),
        data.count(synth::DayLabel::Cloudy),
        config.seed
    );
    let labels = labels
        .map(Path::to_path_buf)
        .or_else(|| out.map(labels_path));
    if let Some(path) = &labels {
        write_file(path, &sidecar)?;
    }
    match out {
        Some(path) => {
            write_file(path, &csv)?;
            println!("{summary}");
            println!("wrote {}", path.display());
            if let Some(labels) = labels {
                println!("wrote {}", labels.display());
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&csv)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::io(Path::new("<stdout>"), e))?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

pub fn ingest(config: &RunConfig, data: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let series = read_series(config, data)?;
    let days = series.days();
    let (first, last) = (&days[0], &days[days.len() - 1]);
    println!(
        "{} days, {} to {}, {} samples per day at {} s",
        series.len(),
        first.date,
        last.date,
        series.grid().samples_per_day(),
        series.grid().sample_interval_seconds()
    );
    match split_chronological(&series, config.ratios()?) {
        Ok(split) => println!(
            "split: {} train, {} tune, {} test",
            split.train.len(),
            split.tune.len(),
            split.test.len()
        ),
        Err(e) => println!("split: not possible ({e})"),
    }
    if let Some(path) = out {
        let mut csv = Vec::new();
        export_csv(&series, &mut csv)?;
        write_file(path, &csv)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn tune(config: &RunConfig, data: &Path, out: &Path) -> Result<(), Failure> {
    let series = read_series(config, data)?;
    let split = split_chronological(&series, config.ratios()?)?;
    let base = config.nn()?;

    let knn_tuning = evaluation::tune_knn(&split, &config.tune_depths, &config.tune_neighbors)?;
    let nn_grid = evaluation::tune_nn(&split, &config.tune_hidden, config.tune_restarts, &base)?;

    print!(
        "{}",
        nn_grid.render_table("Table I. Tuning RMSE over NN hidden neurons N")
    );
    println!();
    print!(
        "{}",
        knn_tuning.depth_grid.render_table(&format!(
            "Table II. Tuning RMSE over k-NN depth D (k = {})",
            knn_tuning.best.neighbors
        ))
    );
    println!();
    print!(
        "{}",
        knn_tuning.neighbor_grid.render_table(&format!(
            "Table III. Tuning RMSE over k-NN neighbours k (D = {})",
            knn_tuning.best.depth_days
        ))
    );
    println!();

    let mut tuned = String::from("# chosen on the tuning days\n");
    writeln!(tuned, "knn_depth_days = {}", knn_tuning.best.depth_days).unwrap();
    writeln!(tuned, "knn_neighbors = {}", knn_tuning.best.neighbors).unwrap();
    writeln!(tuned, "nn_hidden_neurons = {}", nn_grid.best).unwrap();

    ensure_dir(out)?;
    write_file(&out.join("tune_knn.csv"), knn_tuning.cells_csv().as_bytes())?;
    write_file(&out.join("tune_nn.csv"), nn_grid.to_csv().as_bytes())?;
    let tuned_path = out.join(TUNED_CONFIG_FILE);
    write_file(&tuned_path, tuned.as_bytes())?;
    println!(
        "best: D = {}, k = {}, N = {}",
        knn_tuning.best.depth_days, knn_tuning.best.neighbors, nn_grid.best
    );
    println!("wrote {}", tuned_path.display());
    Ok(())
}

pub fn train(
    config: &RunConfig,
    data: &Path,
    out: &Path,
    with_knn: bool,
    with_nn: bool,
) -> Result<(), Failure> {
    let series = read_series(config, data)?;
    let split = split_chronological(&series, config.ratios()?)?;
    ensure_dir(out)?;
    if with_knn {
        let model = knn::fit(&split.train, config.knn()?)?;
        let path = out.join(KNN_MODEL_FILE);
        write_file(&path, persistence::to_text(&Model::Knn(model)).as_bytes())?;
        println!("wrote {}", path.display());
    }
    if with_nn {
        let model = nn::fit_day_ahead(&split.train, &config.nn()?)?;
        let path = out.join(NN_MODEL_FILE);
        write_file(&path, persistence::to_text(&Model::Nn(model)).as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn read_model(path: &Path) -> Result<Option<Model<f64>>, Failure> {
    if !path.exists() {
        return Ok(None);
    }
    let file = File::open(path).map_err(|e| Failure::io(path, e))?;
    persistence::load_model(BufReader::new(file))
        .map(Some)
        .map_err(|e| {
            let mut failure = Failure::from(e);
            failure.message = format!("{}: {}", path.display(), failure.message);
            failure
        })
}

fn wrong_kind(path: &Path) -> Failure {
    Failure::io(path, "holds a different model kind")
}

fn read_knn(dir: &Path) -> Result<Option<KnnModel>, Failure> {
    let path = dir.join(KNN_MODEL_FILE);
    match read_model(&path)? {
        Some(model) => model.into_knn().map(Some).ok_or_else(|| wrong_kind(&path)),
        None => Ok(None),
    }
}

fn read_nn(dir: &Path) -> Result<Option<NnModel>, Failure> {
    let path = dir.join(NN_MODEL_FILE);
    match read_model(&path)? {
        Some(model) => model.into_nn().map(Some).ok_or_else(|| wrong_kind(&path)),
        None => Ok(None),
    }
}

fn missing_model(dir: &Path, file: &str) -> Failure {
    Failure::io(&dir.join(file), "model file not found")
}

pub fn simulate(
    config: &RunConfig,
    data: &Path,
    models: &Path,
    day: NaiveDate,
    out: &Path,
) -> Result<(), Failure> {
    let series = read_series(config, data)?;
    let target = series
        .day_by_date(day)
        .ok_or(twotier::Error::UnknownDate(day))?;
    let knn_model = read_knn(models)?;
    let nn_model = read_nn(models)?;
    if knn_model.is_none() && nn_model.is_none() {
        return Err(missing_model(models, KNN_MODEL_FILE));
    }
    let params = config.correction();

    let mut runs = Vec::new();
    if let Some(model) = &knn_model {
        runs.push(("knn", model.predict_for(&series, target.day_index)?));
    }
    if let Some(model) = &nn_model {
        runs.push(("nn", model.predict_for(&series, target.day_index)?));
    }

    ensure_dir(out)?;
    println!("{day}: {} samples", target.samples.len());
    println!(
        "{:<8}{:>16}{:>18}{:>14}",
        "method", "global_rmse_w", "two_tier_rmse_w", "improvement"
    );
    for (label, global) in runs {
        let run = TwoTierRun::new(global, &target.samples, params)?;
        let (global_rmse, corrected_rmse) = run.scores(&target.samples)?;
        let trace = out.join(format!("trace_{label}_{day}.csv"));
        write_file(
            &trace,
            run.trace_csv(&target.samples, params.max_harmonic)
                .as_bytes(),
        )?;
        let improvement = match improvement_percent(global_rmse, corrected_rmse) {
            Some(p) => format!("{p:.2}%"),
            None => "n/a".into(),
        };
        println!("{label:<8}{global_rmse:>16.1}{corrected_rmse:>18.1}{improvement:>14}");
        println!("wrote {}", trace.display());
    }
    Ok(())
}

pub fn evaluate(config: &RunConfig, data: &Path, models: &Path, out: &Path) -> Result<(), Failure> {
    let series = read_series(config, data)?;
    let split = split_chronological(&series, config.ratios()?)?;
    let knn_model = read_knn(models)?.ok_or_else(|| missing_model(models, KNN_MODEL_FILE))?;
    let nn_model = read_nn(models)?.ok_or_else(|| missing_model(models, NN_MODEL_FILE))?;
    let report = evaluation::compare_methods(&split, &knn_model, &nn_model, config.correction())?;

    ensure_dir(out)?;
    write_file(&out.join("per_day.csv"), report.per_day_csv().as_bytes())?;
    write_file(&out.join("summary.csv"), report.summary_csv().as_bytes())?;
    print!("{}", report.render_table());
    println!("wrote {}", out.join("per_day.csv").display());
    println!("wrote {}", out.join("summary.csv").display());
    Ok(())
}
