use std::sync::OnceLock;

use greenwood::critical::{build_quantile_table, QuantileRequest, QuantileTable, Side};
use greenwood::distributions::{DistributionSpec, Dof, RngStream};
use greenwood::hypothesis::{TestKind, TestSpec};
use greenwood::power::{
    export_curve, import_curve, run_power_study, sidecar_path, size_check, PowerStudyConfig, SweepFamily, CSV_HEADER,
};

const SIZES: [usize; 6] = [10, 50, 100, 200, 500, 1000];

fn table() -> &'static QuantileTable {
    static TABLE: OnceLock<QuantileTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut r: Vec<_> = SIZES
            .iter()
            .map(|&n| QuantileRequest::new(DistributionSpec::standard_gaussian(), n, 0.05, Side::Upper))
            .collect();
        let t2 = DistributionSpec::student_t(Dof::Finite(2)).unwrap();
        r.push(QuantileRequest::new(t2, 500, 0.05, Side::Lower));
        build_quantile_table(&r, 40_000, RngStream::new(30, 0)).unwrap()
    })
}

fn mg2() -> TestSpec {
    TestSpec::new(TestKind::Mg2, 0.05).unwrap()
}

fn alpha_grid() -> Vec<f64> {
    (0..=20).map(|i| 1.0 + 0.05 * i as f64).collect()
}

#[test]
fn figure_shaped_study_exports_126_rows() {
    let config = PowerStudyConfig {
        test: mg2(),
        data_family: SweepFamily::Stable { sigma: 1.0 },
        parameter_grid: alpha_grid(),
        sample_sizes: SIZES.to_vec(),
        replications: 100,
        master_seed: 1,
    };
    let curve = run_power_study(&config, Some(table())).unwrap();
    assert_eq!(curve.points.len(), 126);
    assert!(curve
        .points
        .iter()
        .all(|p| (0.0..=1.0).contains(&p.rejection_rate) && p.replications == 100));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig4.csv");
    export_curve(&curve, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 126);
    assert!(sidecar_path(&path).exists());
    assert_eq!(import_curve(&path).unwrap(), curve);

    let again = run_power_study(&config, Some(table())).unwrap();
    assert_eq!(again, curve);
}

#[test]
fn large_sample_power_ends() {
    let config = PowerStudyConfig {
        test: mg2(),
        data_family: SweepFamily::Stable { sigma: 1.0 },
        parameter_grid: vec![1.0, 2.0],
        sample_sizes: vec![1000],
        replications: 2000,
        master_seed: 2,
    };
    let curve = run_power_study(&config, Some(table())).unwrap();
    let at_two = curve.rate(2.0, 1000).unwrap();
    assert!((at_two - 0.05).abs() <= 0.015, "{at_two}");
    assert!(curve.rate(1.0, 1000).unwrap() >= 0.99);
}

#[test]
fn power_grows_with_sample_size() {
    let config = PowerStudyConfig {
        test: mg2(),
        data_family: SweepFamily::Stable { sigma: 1.0 },
        parameter_grid: vec![1.5],
        sample_sizes: vec![100, 1000],
        replications: 1000,
        master_seed: 3,
    };
    let curve = run_power_study(&config, Some(table())).unwrap();
    assert!(curve.rate(1.5, 1000).unwrap() >= curve.rate(1.5, 100).unwrap());
}

#[test]
fn student_t_power_rises_with_nu() {
    let config = PowerStudyConfig {
        test: TestSpec::new(TestKind::Mg4StudentT, 0.05).unwrap(),
        data_family: SweepFamily::StudentT,
        parameter_grid: vec![5.0, 10.0, 20.0, 50.0],
        sample_sizes: vec![500],
        replications: 500,
        master_seed: 4,
    };
    let rates: Vec<f64> = run_power_study(&config, Some(table()))
        .unwrap()
        .series(500)
        .into_iter()
        .map(|p| p.1)
        .collect();
    assert!(rates.windows(2).all(|w| w[1] + 0.03 >= w[0]), "{rates:?}");
    let size = size_check(&config.test, 500, 2000, RngStream::new(5, 0), Some(table())).unwrap();
    assert!((size - 0.05).abs() <= 0.015, "{size}");
}

#[test]
fn curves_do_not_depend_on_thread_count() {
    let config = PowerStudyConfig {
        test: mg2(),
        data_family: SweepFamily::Stable { sigma: 1.0 },
        parameter_grid: vec![1.3, 1.7],
        sample_sizes: vec![50, 200],
        replications: 300,
        master_seed: 6,
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_power_study(&config, Some(table())).unwrap())
    };
    assert_eq!(run(1), run(3));
}
