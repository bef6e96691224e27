use twotier::synth::{generate, read_labels, write_labels, SynthConfig};
use twotier::timeseries::{export_csv, ingest_csv, split_chronological, SplitRatios};
use twotier::SolarSeries;

#[test]
fn fifty_synthetic_days_survive_export_and_ingest() {
    let config = SynthConfig::default();
    let data = generate::<f64>(&config, 50, 1).unwrap();
    let mut csv = Vec::new();
    export_csv(&data.series, &mut csv).unwrap();

    let back: SolarSeries = ingest_csv(csv.as_slice(), config.grid().unwrap()).unwrap();
    assert_eq!(back.len(), 50);
    for (a, b) in data.series.days().iter().zip(back.days()) {
        assert_eq!(a.date, b.date);
        let bits = |s: &[f64]| s.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.samples), bits(&b.samples));
    }
    let mut again = Vec::new();
    export_csv(&back, &mut again).unwrap();
    assert_eq!(csv, again);

    let split = split_chronological(&back, SplitRatios::default()).unwrap();
    assert_eq!(
        (split.train.len(), split.tune.len(), split.test.len()),
        (30, 10, 10)
    );
}

#[test]
fn generation_is_reproducible() {
    let config = SynthConfig::default();
    let text = |seed| {
        let data = generate::<f64>(&config, 50, seed).unwrap();
        let mut csv = Vec::new();
        export_csv(&data.series, &mut csv).unwrap();
        write_labels(&data.labels, &mut csv).unwrap();
        csv
    };
    assert_eq!(text(1), text(1));
    assert_ne!(text(1), text(2));

    let data = generate::<f64>(&config, 50, 1).unwrap();
    let mut labels = Vec::new();
    write_labels(&data.labels, &mut labels).unwrap();
    assert_eq!(read_labels(labels.as_slice()).unwrap(), data.labels);
}
