use greenwood::critical::{build_quantile_table, QuantileRequest, QuantileTable, Side};
use greenwood::distributions::{DistributionSpec, RngStream};
use greenwood::error::Error;
use greenwood::hypothesis::{TestKind, TestSpec};
use greenwood::signal::{
    add_spectrogram_null_entries, batch_test, frequency_rows, read_signal, read_spectrogram_matrix, segment_signal,
    spectrogram_with, write_signal_raw, write_spectrogram, Domain, Signal, StftConfig, TimeFrequencyConfig,
};

const FS: f64 = 8000.0;

fn gaussian() -> DistributionSpec {
    DistributionSpec::standard_gaussian()
}

fn mg2() -> TestSpec {
    TestSpec::new(TestKind::Mg2, 0.05).unwrap()
}

fn raw_table(ns: &[usize]) -> QuantileTable {
    let r: Vec<_> = ns
        .iter()
        .map(|&n| QuantileRequest::new(gaussian(), n, 0.05, Side::Upper))
        .collect();
    build_quantile_table(&r, 20_000, RngStream::new(40, 0)).unwrap()
}

fn signal(spec: DistributionSpec, len: usize, seed: u64) -> Signal {
    Signal::new(spec.sample(len, RngStream::new(seed, 0)).unwrap(), FS).unwrap()
}

#[test]
fn time_domain_batches() {
    let table = raw_table(&[1000]);
    let null = signal(gaussian(), 1_000_000, 1);
    let units = segment_signal(&null, 1000).unwrap();
    assert_eq!(units.len(), 1000);
    let report = batch_test(&units, &mg2(), Some(&table), None, Domain::Time).unwrap();
    assert!(
        (report.rejection_percentage - 5.0).abs() <= 3.0,
        "{}",
        report.rejection_percentage
    );
    assert_eq!(report.units.len(), 1000);
    assert_eq!(report.rejections() as f64 / 10.0, report.rejection_percentage);

    let heavy = signal(DistributionSpec::stable(1.8, 1.0).unwrap(), 1_000_000, 2);
    let units = segment_signal(&heavy, 1000).unwrap();
    let report = batch_test(&units, &mg2(), Some(&table), None, Domain::Time).unwrap();
    assert!(report.rejection_percentage >= 95.0, "{}", report.rejection_percentage);

    let one = batch_test(&units[..1], &mg2(), Some(&table), None, Domain::Time).unwrap();
    assert!(one.rejection_percentage == 0.0 || one.rejection_percentage == 100.0);
}

#[test]
fn segments_are_views_in_order() {
    let s = signal(gaussian(), 10_050, 3);
    let units = segment_signal(&s, 1000).unwrap();
    assert_eq!(units.len(), 10);
    let joined: Vec<f64> = units.concat();
    assert_eq!(&joined[..], &s.samples()[..10_000]);
    assert!(segment_signal(&s, 1).is_err());
}

#[test]
fn batch_refuses_uncovered_lengths() {
    let table = raw_table(&[100]);
    let s = signal(gaussian(), 1000, 4);
    let units = segment_signal(&s, 200).unwrap();
    let err = batch_test(&units, &mg2(), Some(&table), None, Domain::Time).unwrap_err();
    assert!(matches!(err, Error::MissingEntry(_)));
}

#[test]
fn spectrogram_rows_need_their_own_null() {
    let cfg = TimeFrequencyConfig {
        stft: StftConfig::kaiser(128, 5.0, 0),
        sample_rate: FS,
        f_min: 0.0,
        f_max: FS / 2.0,
    };
    let len = 128 * 200;
    let frames = cfg.stft.frame_count(len).unwrap();
    assert_eq!(frames, 200);
    assert_eq!(cfg.band_bins().unwrap(), 65);

    let raw = raw_table(&[frames]);
    let mut tf = QuantileTable::new(10_000, 41);
    add_spectrogram_null_entries(
        &mut tf,
        &gaussian(),
        &cfg,
        len,
        &[(0.05, Side::Upper)],
        10_000,
        RngStream::new(41, 0),
    )
    .unwrap();
    let label = cfg.label(len);
    assert!(tf.has_transform(&label));

    let specs: Vec<_> = (0..16)
        .map(|k| spectrogram_with(&signal(gaussian(), len, 100 + k), &cfg.stft).unwrap())
        .collect();
    let units: Vec<&[f64]> = specs
        .iter()
        .flat_map(|s| {
            frequency_rows(s, cfg.f_min, cfg.f_max)
                .unwrap()
                .into_iter()
                .map(|r| r.1)
        })
        .collect();
    assert_eq!(units.len(), 16 * 65);

    let against_raw = batch_test(&units, &mg2(), Some(&raw), None, Domain::TimeFrequency).unwrap();
    let against_tf = batch_test(&units, &mg2(), Some(&tf), Some(&label), Domain::TimeFrequency).unwrap();
    assert!(
        against_raw.rejection_percentage > 50.0,
        "{}",
        against_raw.rejection_percentage
    );
    assert!(
        (against_tf.rejection_percentage - 5.0).abs() <= 3.0,
        "{}",
        against_tf.rejection_percentage
    );

    // Raw-sample entries are never used for spectrogram rows.
    assert!(batch_test(&units, &mg2(), Some(&raw), Some(&label), Domain::TimeFrequency).is_err());
}

#[test]
fn band_selection() {
    let s = signal(gaussian(), 4096, 5);
    let spec = spectrogram_with(&s, &StftConfig::rectangular(256, 0)).unwrap();
    assert_eq!(frequency_rows(&spec, 0.0, FS / 2.0).unwrap().len(), spec.bins());
    let band = frequency_rows(&spec, 1000.0, 2000.0).unwrap();
    assert!(band
        .iter()
        .all(|(f, row)| (1000.0..=2000.0).contains(f) && row.len() == spec.frames()));
    assert_eq!(band.len(), 33);
    assert!(frequency_rows(&spec, 5000.0, 6000.0).is_err());
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = signal(DistributionSpec::stable(1.2, 1.0).unwrap(), 5000, 6);
    let raw = dir.path().join("x.gwsig");
    write_signal_raw(&s, &raw).unwrap();
    let back = read_signal(&raw, None).unwrap();
    assert_eq!(back.samples(), s.samples());
    assert_eq!(back.sample_rate(), FS);

    let csv = dir.path().join("x.csv");
    let text: String = std::iter::once("value".to_string())
        .chain(s.samples().iter().map(|v| format!("{v:?}")))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&csv, text).unwrap();
    assert_eq!(read_signal(&csv, Some(FS)).unwrap().samples(), s.samples());
    assert!(read_signal(&csv, None).is_err());

    let spec = spectrogram_with(&s, &StftConfig::kaiser(500, 5.0, 250).with_nfft(512)).unwrap();
    let out = dir.path().join("x.spec");
    write_spectrogram(&spec, &out).unwrap();
    let (bins, frames, values) = read_spectrogram_matrix(&out).unwrap();
    assert_eq!((bins, frames), (257, spec.frames()));
    assert_eq!(values, spec.values());
}
