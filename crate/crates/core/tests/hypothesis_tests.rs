use std::sync::OnceLock;

use greenwood::critical::{build_quantile_table, QuantileRequest, QuantileTable, Side};
use greenwood::distributions::{DistributionSpec, Dof, RngStream};
use greenwood::error::Error;
use greenwood::hypothesis::{
    jarque_bera_test, ks_normality_test, mg1_test, mg_gaussianity_test, mg_infinite_variance_test_gpd,
    mg_infinite_variance_test_t, mg_two_sided_test, MgTest, TestKind, TestSpec,
};
use greenwood::numeric::standard_normal_quantile;
use greenwood::power::{run_power_study, size_check, PowerStudyConfig, SweepFamily};
use greenwood::statistic::StatisticValue;
use proptest::prelude::*;

fn gaussian() -> DistributionSpec {
    DistributionSpec::standard_gaussian()
}

fn gpd_half() -> DistributionSpec {
    DistributionSpec::gpd(0.5, 1.0).unwrap()
}

fn t2() -> DistributionSpec {
    DistributionSpec::student_t(Dof::Finite(2)).unwrap()
}

fn stable_null() -> DistributionSpec {
    DistributionSpec::stable(1.5, 1.0).unwrap()
}

fn table() -> &'static QuantileTable {
    static TABLE: OnceLock<QuantileTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut r = Vec::new();
        for n in [10, 50, 100, 200] {
            r.push(QuantileRequest::new(gaussian(), n, 0.05, Side::Upper));
            r.push(QuantileRequest::new(gaussian(), n, 0.05, Side::Lower));
        }
        for n in [10, 100, 1000] {
            r.push(QuantileRequest::new(gpd_half(), n, 0.05, Side::Lower));
        }
        for n in [10, 500, 1000] {
            r.push(QuantileRequest::new(t2(), n, 0.05, Side::Lower));
        }
        for n in [100, 500] {
            r.push(QuantileRequest::new(stable_null(), n, 0.025, Side::Lower));
            r.push(QuantileRequest::new(stable_null(), n, 0.025, Side::Upper));
        }
        build_quantile_table(&r, 40_000, RngStream::new(12, 0)).unwrap()
    })
}

fn power_at(test: TestSpec, family: SweepFamily, param: f64, n: usize, reps: usize, seed: u64) -> f64 {
    let config = PowerStudyConfig {
        test,
        data_family: family,
        parameter_grid: vec![param],
        sample_sizes: vec![n],
        replications: reps,
        master_seed: seed,
    };
    run_power_study(&config, Some(table())).unwrap().points[0].rejection_rate
}

const STABLE: SweepFamily = SweepFamily::Stable { sigma: 1.0 };
const GPD: SweepFamily = SweepFamily::Gpd { delta: 1.0 };

#[test]
fn gaussianity_test_examples() {
    let alternating: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let out = mg_gaussianity_test(&alternating, 0.05, table()).unwrap();
    assert_eq!(out.statistic, 0.02);
    assert!(!out.reject);

    let mut spiky: Vec<f64> = (0..49).map(|i| 1e-9 * (i as f64 - 24.0)).collect();
    spiky.push(1e6);
    let out = mg_gaussianity_test(&spiky, 0.05, table()).unwrap();
    assert!(out.statistic > 0.999_999);
    assert!(out.reject);

    let size = size_check(
        &TestSpec::new(TestKind::Mg2, 0.05).unwrap(),
        100,
        2000,
        RngStream::new(1, 0),
        Some(table()),
    )
    .unwrap();
    assert!((size - 0.05).abs() <= 0.015, "{size}");
}

#[test]
fn mg1_uses_the_lower_tail() {
    let alternating: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let out = mg1_test(&alternating, 0.05, table()).unwrap();
    assert!(out.reject);
    assert_eq!(
        out.thresholds,
        vec![table().critical_value(&gaussian(), 50, 0.05, Side::Lower).unwrap()]
    );
    let size = size_check(
        &TestSpec::new(TestKind::Mg1, 0.05).unwrap(),
        100,
        2000,
        RngStream::new(2, 0),
        Some(table()),
    )
    .unwrap();
    assert!((size - 0.05).abs() <= 0.015, "{size}");
}

#[test]
fn gpd_test_examples() {
    let constant = vec![3.5; 100];
    let out = mg_infinite_variance_test_gpd(&constant, 0.05, table()).unwrap();
    assert!((out.statistic - 0.01).abs() < 1e-15);
    assert!(out.reject);

    let heavy = power_at(TestSpec::new(TestKind::Mg3Gpd, 0.05).unwrap(), GPD, 1.0, 100, 2000, 3);
    assert!(heavy <= 0.065, "{heavy}");
    let light = power_at(TestSpec::new(TestKind::Mg3Gpd, 0.05).unwrap(), GPD, 0.0, 1000, 2000, 4);
    assert!(light >= 0.95, "{light}");

    let mut negative = constant.clone();
    negative[7] = -1.0;
    assert!(matches!(
        mg_infinite_variance_test_gpd(&negative, 0.05, table()),
        Err(Error::InvalidSample(_))
    ));
}

#[test]
fn student_t_test_examples() {
    let alternating: Vec<f64> = (0..10).map(|i| if i % 3 == 0 { -2.0 } else { 2.0 }).collect();
    let out = mg_infinite_variance_test_t(&alternating, 0.05, table()).unwrap();
    assert!((out.statistic - 0.1).abs() < 1e-15);
    assert!(out.reject);

    let test = TestSpec::new(TestKind::Mg4StudentT, 0.05).unwrap();
    let cauchy = power_at(test, SweepFamily::StudentT, 1.0, 500, 2000, 5);
    assert!(cauchy <= 0.065, "{cauchy}");
    let ten = power_at(test, SweepFamily::StudentT, 10.0, 1000, 2000, 6);
    assert!(ten >= 0.9, "{ten}");
    let size = size_check(&test, 500, 2000, RngStream::new(7, 0), Some(table())).unwrap();
    assert!((size - 0.05).abs() <= 0.015, "{size}");
}

#[test]
fn two_sided_test_examples() {
    let test = TestSpec::two_sided(stable_null(), 0.05).unwrap();
    let size = size_check(&test, 100, 2000, RngStream::new(8, 0), Some(table())).unwrap();
    assert!((size - 0.05).abs() <= 0.015, "{size}");

    let mg = MgTest::new(test, table());
    let t = mg.region(100).unwrap().thresholds();
    let mid = StatisticValue::new(0.5 * (t[0] + t[1]), 100).unwrap();
    assert!(!mg.decide(mid).unwrap().reject);

    let far = power_at(test, STABLE, 1.0, 500, 2000, 9);
    let near = power_at(test, STABLE, 1.4, 500, 2000, 10);
    assert!(far > near, "{far} vs {near}");

    let x = stable_null().sample(100, RngStream::new(11, 0)).unwrap();
    let out = mg_two_sided_test(&x, &stable_null(), 0.05, table()).unwrap();
    assert_eq!(out.thresholds, t);
}

#[test]
fn two_sided_needs_both_entries() {
    let test = TestSpec::two_sided(stable_null(), 0.05).unwrap();
    let err = test.check_coverage(Some(table()), None, 10).unwrap_err();
    assert!(matches!(err, Error::MissingEntry(_)));
    assert!(err.to_string().contains("n=10"), "{err}");
}

#[test]
fn jarque_bera_examples() {
    let test = TestSpec::new(TestKind::JarqueBera, 0.05).unwrap();
    let size = size_check(&test, 100, 2000, RngStream::new(13, 0), None).unwrap();
    assert!((size - 0.05).abs() <= 0.015, "{size}");
    assert!(jarque_bera_test(&[2.0; 20], 0.05).is_err());
    assert!(jarque_bera_test(&[1.0, 2.0, 3.0], 0.05).is_err());

    // Both tests saturate at alpha = 1, n = 100, so the strict comparison
    // is made at a smaller sample where power is still informative.
    let mg2 = TestSpec::new(TestKind::Mg2, 0.05).unwrap();
    let jb = power_at(test, STABLE, 1.0, 100, 2000, 14);
    let mg = power_at(mg2, STABLE, 1.0, 100, 2000, 14);
    assert!(jb <= mg, "JB {jb} vs MG {mg}");
    let jb = power_at(test, STABLE, 1.4, 50, 2000, 14);
    let mg = power_at(mg2, STABLE, 1.4, 50, 2000, 14);
    assert!(jb < mg, "JB {jb} vs MG {mg}");
}

#[test]
fn ks_examples() {
    let test = TestSpec::new(TestKind::KolmogorovSmirnov, 0.05).unwrap();
    let size = size_check(&test, 50, 2000, RngStream::new(15, 0), None).unwrap();
    assert!((size - 0.05).abs() <= 0.015, "{size}");
    assert!(ks_normality_test(&[-1.0; 30], 0.05).is_err());

    let n = 60;
    let ideal: Vec<f64> = (1..=n)
        .map(|i| 3.0 + 2.0 * standard_normal_quantile((i as f64 - 0.5) / n as f64))
        .collect();
    let out = ks_normality_test(&ideal, 0.05).unwrap();
    assert!(!out.reject);
    assert!(out.statistic < out.thresholds[0] / 2.0);

    let mg2 = TestSpec::new(TestKind::Mg2, 0.05).unwrap();
    let ks = power_at(test, STABLE, 1.2, 200, 2000, 16);
    let mg = power_at(mg2, STABLE, 1.2, 200, 2000, 16);
    assert!(ks <= mg, "KS {ks} vs MG {mg}");
    let ks = power_at(test, STABLE, 1.6, 200, 2000, 16);
    let mg = power_at(mg2, STABLE, 1.6, 200, 2000, 16);
    assert!(ks < mg, "KS {ks} vs MG {mg}");
}

#[test]
fn specs_check_their_nulls() {
    assert!(TestSpec::with_null(TestKind::Mg2, stable_null(), 0.05).is_err());
    assert!(TestSpec::with_null(TestKind::Mg3Gpd, DistributionSpec::gpd(0.4, 1.0).unwrap(), 0.05).is_err());
    assert!(TestSpec::with_null(
        TestKind::Mg4StudentT,
        DistributionSpec::student_t(Dof::Finite(3)).unwrap(),
        0.05
    )
    .is_err());
    assert!(TestSpec::with_null(TestKind::Mg2, DistributionSpec::stable(2.0, 4.0).unwrap(), 0.05).is_ok());
    assert!(TestSpec::new(TestKind::MgTwoSided, 0.05).is_err());
    assert!(TestSpec::new(TestKind::Mg2, 0.0).is_err());
    assert!(TestSpec::new(TestKind::Mg2, 0.05)
        .unwrap()
        .run(&[1.0, 2.0], None)
        .is_err());
}

#[test]
fn outcome_serializes_with_stable_field_names() {
    let x = gaussian().sample(100, RngStream::new(17, 0)).unwrap();
    let out = mg_gaussianity_test(&x, 0.05, table()).unwrap();
    let v: serde_json::Value = serde_json::to_value(&out).unwrap();
    assert_eq!(v["kind"], "MG2");
    assert_eq!(v["n"], 100);
    assert_eq!(v["c"], 0.05);
    assert!(v["statistic"].is_f64());
    assert_eq!(v["thresholds"].as_array().unwrap().len(), 1);
    assert!(v["reject"].is_boolean());
}

fn mg_kind() -> impl Strategy<Value = TestSpec> {
    prop_oneof![
        Just(TestSpec::new(TestKind::Mg1, 0.05).unwrap()),
        Just(TestSpec::new(TestKind::Mg2, 0.05).unwrap()),
        Just(TestSpec::new(TestKind::Mg3Gpd, 0.05).unwrap()),
        Just(TestSpec::new(TestKind::Mg4StudentT, 0.05).unwrap()),
        Just(TestSpec::two_sided(stable_null(), 0.05).unwrap()),
    ]
}

fn covered_n(test: &TestSpec) -> usize {
    match test.kind {
        TestKind::Mg3Gpd => 100,
        TestKind::Mg4StudentT => 500,
        _ => 100,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn region_geometry(test in mg_kind(), pick in 0usize..2, offset in -3i64..=3) {
        let n = covered_n(&test);
        let mg = MgTest::new(test, table());
        let region = mg.region(n).unwrap();
        let t = region.thresholds();
        let anchor = t[pick.min(t.len() - 1)];
        let mut s = anchor;
        for _ in 0..offset.abs() {
            s = if offset > 0 { s.next_up() } else { s.next_down() };
        }
        let out = mg.decide(StatisticValue::new(s, n).unwrap()).unwrap();
        let expected = match test.kind {
            TestKind::Mg2 => s >= t[0],
            TestKind::MgTwoSided => s <= t[0] || s >= t[1],
            _ => s <= t[0],
        };
        prop_assert_eq!(out.reject, expected);
        prop_assert_eq!(out.thresholds, t);
    }

    #[test]
    fn decisions_are_scale_invariant(test in mg_kind(), seed in any::<u64>(), k in 1e-6f64..1e6) {
        let n = covered_n(&test);
        let x = test.null_spec.sample(n, RngStream::new(seed, 0)).unwrap();
        let y: Vec<f64> = x.iter().map(|v| k * v).collect();
        let a = test.run(&x, Some(table())).unwrap();
        let b = test.run(&y, Some(table())).unwrap();
        prop_assert_eq!(a.reject, b.reject);
    }
}
