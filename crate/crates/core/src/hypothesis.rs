//! Decision procedures built on S_n, and the Jarque-Bera and
//! Kolmogorov-Smirnov baselines.
//!
//! | kind          | null             | rejects when                       |
//! |---------------|------------------|------------------------------------|
//! | MG1           | Gaussian         | `S_n <= Q_c`                       |
//! | MG2           | Gaussian         | `S_n >= Q_{1-c}`                   |
//! | MG3_GPD       | GPD(0.5)         | `S_n <= Q_c` (finite variance)     |
//! | MG4_StudentT  | t(2)             | `S_n <= Q_c` (finite variance)     |
//! | MG_TwoSided   | any              | `S_n <= Q_{c/2}` or `>= Q_{1-c/2}` |
//!
//! Thresholds belong to the rejection region. Baselines use Monte Carlo
//! critical values under the Gaussian null at the sample's own size.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical::{sorted_quantile, QuantileTable, Side};
use crate::distributions::{DistributionSpec, Dof, RngStream, Sampler};
use crate::error::{invalid_param, Error, Result};
use crate::numeric::standard_normal_cdf;
use crate::statistic::{GreenwoodAccumulator, StatisticValue};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

/// Boundary of the infinite-variance region in the GPD class.
pub const GPD_BOUNDARY_GAMMA: f64 = 0.5;
/// Boundary of the infinite-variance region in the Student's t class.
pub const STUDENT_T_BOUNDARY_NU: u32 = 2;

/// Replications behind the baseline critical values.
pub const BASELINE_REPLICATIONS: usize = 20_000;
const BASELINE_SEED: u64 = 0x4a42_4b53;
/// Smallest sample the baselines accept.
pub const BASELINE_MIN_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "MG1")]
    Mg1,
    #[serde(rename = "MG2")]
    Mg2,
    #[serde(rename = "MG3_GPD")]
    Mg3Gpd,
    #[serde(rename = "MG4_StudentT")]
    Mg4StudentT,
    #[serde(rename = "MG_TwoSided")]
    MgTwoSided,
    #[serde(rename = "JB")]
    JarqueBera,
    #[serde(rename = "KS")]
    KolmogorovSmirnov,
}

impl TestKind {
    pub const ALL: [TestKind; 7] = [
        TestKind::Mg1,
        TestKind::Mg2,
        TestKind::Mg3Gpd,
        TestKind::Mg4StudentT,
        TestKind::MgTwoSided,
        TestKind::JarqueBera,
        TestKind::KolmogorovSmirnov,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Mg1 => "MG1",
            TestKind::Mg2 => "MG2",
            TestKind::Mg3Gpd => "MG3_GPD",
            TestKind::Mg4StudentT => "MG4_StudentT",
            TestKind::MgTwoSided => "MG_TwoSided",
            TestKind::JarqueBera => "JB",
            TestKind::KolmogorovSmirnov => "KS",
        }
    }

    /// True for the tests driven by S_n and a quantile table.
    pub fn uses_table(self) -> bool {
        !matches!(self, TestKind::JarqueBera | TestKind::KolmogorovSmirnov)
    }

    /// The null law fixed by the test, if any.
    pub fn default_null(self) -> Option<DistributionSpec> {
        match self {
            TestKind::Mg1 | TestKind::Mg2 | TestKind::JarqueBera | TestKind::KolmogorovSmirnov => {
                Some(DistributionSpec::standard_gaussian())
            }
            TestKind::Mg3Gpd => Some(DistributionSpec::Gpd {
                gamma: GPD_BOUNDARY_GAMMA,
                delta: 1.0,
            }),
            TestKind::Mg4StudentT => Some(DistributionSpec::StudentT {
                nu: Dof::Finite(STUDENT_T_BOUNDARY_NU),
            }),
            TestKind::MgTwoSided => None,
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        let kind = match norm.as_str() {
            "mg1" => TestKind::Mg1,
            "mg2" => TestKind::Mg2,
            "mg3" | "mg3gpd" => TestKind::Mg3Gpd,
            "mg4" | "mg4studentt" | "mg4t" => TestKind::Mg4StudentT,
            "mgtwosided" | "twosided" | "mg5" => TestKind::MgTwoSided,
            "jb" | "jarquebera" => TestKind::JarqueBera,
            "ks" | "kolmogorovsmirnov" => TestKind::KolmogorovSmirnov,
            _ => return Err(invalid_param(format!("unknown test kind {s:?}"))),
        };
        Ok(kind)
    }
}

/// A test together with its null law and significance level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub kind: TestKind,
    pub null_spec: DistributionSpec,
    pub c: f64,
}

impl TestSpec {
    /// A test with its fixed null; fails for the two-sided test, which needs
    /// an explicit null (see [`TestSpec::two_sided`]).
    pub fn new(kind: TestKind, c: f64) -> Result<Self> {
        let null_spec = kind
            .default_null()
            .ok_or_else(|| invalid_param("the two-sided test needs an explicit null distribution"))?;
        Self::with_null(kind, null_spec, c)
    }

    pub fn two_sided(null_spec: DistributionSpec, c: f64) -> Result<Self> {
        Self::with_null(TestKind::MgTwoSided, null_spec, c)
    }

    pub fn with_null(kind: TestKind, null_spec: DistributionSpec, c: f64) -> Result<Self> {
        let spec = Self { kind, null_spec, c };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(invalid_param(format!(
                "significance level must lie in (0, 1), got {}",
                self.c
            )));
        }
        self.null_spec.validate()?;
        let ok = match self.kind {
            TestKind::Mg1 | TestKind::Mg2 | TestKind::JarqueBera | TestKind::KolmogorovSmirnov => {
                self.null_spec.is_gaussian_case()
            }
            TestKind::Mg3Gpd => {
                matches!(self.null_spec, DistributionSpec::Gpd { gamma, .. } if gamma == GPD_BOUNDARY_GAMMA)
            }
            TestKind::Mg4StudentT => {
                self.null_spec
                    == DistributionSpec::StudentT {
                        nu: Dof::Finite(STUDENT_T_BOUNDARY_NU),
                    }
            }
            TestKind::MgTwoSided => true,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid_param(format!(
                "{} cannot use null {}",
                self.kind, self.null_spec
            )))
        }
    }

    /// The table entries `(side, level)` this test reads.
    pub fn required_entries(&self) -> Vec<(Side, f64)> {
        match self.kind {
            TestKind::Mg2 => vec![(Side::Upper, self.c)],
            TestKind::Mg1 | TestKind::Mg3Gpd | TestKind::Mg4StudentT => vec![(Side::Lower, self.c)],
            TestKind::MgTwoSided => vec![(Side::Lower, self.c / 2.0), (Side::Upper, self.c / 2.0)],
            TestKind::JarqueBera | TestKind::KolmogorovSmirnov => vec![],
        }
    }

    /// Fails with the first missing entry when `table` cannot serve samples
    /// of size `n`.
    pub fn check_coverage(&self, table: Option<&QuantileTable>, transform: Option<&str>, n: usize) -> Result<()> {
        if !self.kind.uses_table() {
            return if n >= BASELINE_MIN_N {
                Ok(())
            } else {
                Err(invalid_param(format!(
                    "{} needs n >= {BASELINE_MIN_N}, got {n}",
                    self.kind
                )))
            };
        }
        let table = table.ok_or_else(|| invalid_param(format!("{} needs a quantile table", self.kind)))?;
        self.region(table, transform, n).map(|_| ())
    }

    fn region(&self, table: &QuantileTable, transform: Option<&str>, n: usize) -> Result<Region> {
        let get = |side, level| table.critical_value_with(&self.null_spec, transform, n, level, side);
        Ok(match self.kind {
            TestKind::Mg2 => Region::Upper(get(Side::Upper, self.c)?),
            TestKind::Mg1 | TestKind::Mg3Gpd | TestKind::Mg4StudentT => Region::Lower(get(Side::Lower, self.c)?),
            TestKind::MgTwoSided => Region::TwoSided(get(Side::Lower, self.c / 2.0)?, get(Side::Upper, self.c / 2.0)?),
            TestKind::JarqueBera | TestKind::KolmogorovSmirnov => {
                return Err(invalid_param(format!("{} does not use a quantile table", self.kind)))
            }
        })
    }

    /// Runs the test on `values` using `table` for the MG kinds.
    pub fn run(&self, values: &[f64], table: Option<&QuantileTable>) -> Result<TestOutcome> {
        self.run_with(values, table, None)
    }

    /// As [`TestSpec::run`], reading table entries recorded under
    /// `transform`.
    pub fn run_with(
        &self,
        values: &[f64],
        table: Option<&QuantileTable>,
        transform: Option<&str>,
    ) -> Result<TestOutcome> {
        match self.kind {
            TestKind::JarqueBera => jarque_bera_test(values, self.c),
            TestKind::KolmogorovSmirnov => ks_normality_test(values, self.c),
            _ => {
                let table = table.ok_or_else(|| invalid_param(format!("{} needs a quantile table", self.kind)))?;
                MgTest::with_transform(*self, table, transform).apply(values)
            }
        }
    }
}

/// Rejection region geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Upper(f64),
    Lower(f64),
    TwoSided(f64, f64),
}

impl Region {
    pub fn rejects(&self, statistic: f64) -> bool {
        match *self {
            Region::Upper(t) => statistic >= t,
            Region::Lower(t) => statistic <= t,
            Region::TwoSided(lo, hi) => statistic <= lo || statistic >= hi,
        }
    }

    pub fn thresholds(&self) -> Vec<f64> {
        match *self {
            Region::Upper(t) | Region::Lower(t) => vec![t],
            Region::TwoSided(lo, hi) => vec![lo, hi],
        }
    }
}

/// Result of applying one test to one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub kind: TestKind,
    pub n: usize,
    pub c: f64,
    pub statistic: f64,
    pub thresholds: Vec<f64>,
    pub reject: bool,
}

/// An MG test bound to its quantile table.
#[derive(Debug, Clone)]
pub struct MgTest<'t> {
    spec: TestSpec,
    table: &'t QuantileTable,
    transform: Option<String>,
}

impl<'t> MgTest<'t> {
    pub fn new(spec: TestSpec, table: &'t QuantileTable) -> Self {
        Self::with_transform(spec, table, None)
    }

    /// Reads entries built for samples produced by `transform`.
    pub fn with_transform(spec: TestSpec, table: &'t QuantileTable, transform: Option<&str>) -> Self {
        Self {
            spec,
            table,
            transform: transform.map(str::to_owned),
        }
    }

    pub fn spec(&self) -> &TestSpec {
        &self.spec
    }

    pub fn region(&self, n: usize) -> Result<Region> {
        self.spec.region(self.table, self.transform.as_deref(), n)
    }

    pub fn apply(&self, values: &[f64]) -> Result<TestOutcome> {
        if self.spec.kind == TestKind::Mg3Gpd {
            check_nonnegative(values)?;
        }
        let stat = GreenwoodAccumulator::new().compute(values)?;
        self.decide(stat)
    }

    /// Decision for a precomputed statistic.
    pub fn decide(&self, stat: StatisticValue) -> Result<TestOutcome> {
        let region = self.region(stat.n)?;
        Ok(TestOutcome {
            kind: self.spec.kind,
            n: stat.n,
            c: self.spec.c,
            statistic: stat.s_n,
            thresholds: region.thresholds(),
            reject: region.rejects(stat.s_n),
        })
    }
}

fn check_nonnegative(values: &[f64]) -> Result<()> {
    match values.iter().find(|&&v| v < 0.0) {
        Some(v) => Err(Error::InvalidSample(format!(
            "the GPD test needs nonnegative observations, got {v}"
        ))),
        None => Ok(()),
    }
}

/// MG2: Gaussian null against heavier-tailed alternatives.
pub fn mg_gaussianity_test(values: &[f64], c: f64, table: &QuantileTable) -> Result<TestOutcome> {
    MgTest::new(TestSpec::new(TestKind::Mg2, c)?, table).apply(values)
}

/// MG1: Gaussian null against alternatives with smaller S_n.
pub fn mg1_test(values: &[f64], c: f64, table: &QuantileTable) -> Result<TestOutcome> {
    MgTest::new(TestSpec::new(TestKind::Mg1, c)?, table).apply(values)
}

/// MG3: infinite-variance null GPD(gamma >= 0.5); rejection means finite
/// variance.
pub fn mg_infinite_variance_test_gpd(values: &[f64], c: f64, table: &QuantileTable) -> Result<TestOutcome> {
    MgTest::new(TestSpec::new(TestKind::Mg3Gpd, c)?, table).apply(values)
}

/// MG4: infinite-variance null t(nu <= 2); rejection means finite variance.
pub fn mg_infinite_variance_test_t(values: &[f64], c: f64, table: &QuantileTable) -> Result<TestOutcome> {
    MgTest::new(TestSpec::new(TestKind::Mg4StudentT, c)?, table).apply(values)
}

/// Two-sided test of a fully specified null.
pub fn mg_two_sided_test(
    values: &[f64],
    null_spec: &DistributionSpec,
    c: f64,
    table: &QuantileTable,
) -> Result<TestOutcome> {
    MgTest::new(TestSpec::two_sided(*null_spec, c)?, table).apply(values)
}

struct Moments {
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

fn central_moments(values: &[f64]) -> Result<Moments> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let m2 = m2 / n;
    // Rounding in the mean leaves a residue of order eps |mean| on constant
    // input; treat anything that small as zero spread.
    let floor = 8.0 * f64::EPSILON * mean.abs();
    if !(m2 > floor * floor) {
        return Err(Error::InvalidSample("sample has zero variance".into()));
    }
    Ok(Moments {
        mean,
        m2,
        m3: m3 / n,
        m4: m4 / n,
    })
}

fn check_baseline_input(values: &[f64]) -> Result<()> {
    if values.len() < BASELINE_MIN_N {
        return Err(Error::InvalidSample(format!(
            "baseline tests need at least {BASELINE_MIN_N} observations, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidSample(format!("non-finite observation {v}")));
    }
    Ok(())
}

/// `n (skew^2 / 6 + (kurt - 3)^2 / 24)` with moment estimators.
pub fn jarque_bera_statistic(values: &[f64]) -> Result<f64> {
    check_baseline_input(values)?;
    let m = central_moments(values)?;
    let skew = m.m3 / m.m2.powf(1.5);
    let kurt = m.m4 / (m.m2 * m.m2);
    let n = values.len() as f64;
    Ok(n * (skew * skew / 6.0 + (kurt - 3.0) * (kurt - 3.0) / 24.0))
}

/// Sup distance between the empirical CDF and the normal CDF with the
/// sample mean and standard deviation plugged in.
pub fn ks_normality_statistic(values: &[f64]) -> Result<f64> {
    check_baseline_input(values)?;
    let m = central_moments(values)?;
    let n = values.len() as f64;
    let sd = (m.m2 * n / (n - 1.0)).sqrt();
    let mut z: Vec<f64> = values.iter().map(|v| (v - m.mean) / sd).collect();
    z.sort_unstable_by(f64::total_cmp);
    let mut d = 0.0f64;
    for (i, &zi) in z.iter().enumerate() {
        let f = standard_normal_cdf(zi);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Baseline {
    JarqueBera,
    Ks,
}

impl Baseline {
    fn statistic(self, values: &[f64]) -> Result<f64> {
        match self {
            Baseline::JarqueBera => jarque_bera_statistic(values),
            Baseline::Ks => ks_normality_statistic(values),
        }
    }

    fn kind(self) -> TestKind {
        match self {
            Baseline::JarqueBera => TestKind::JarqueBera,
            Baseline::Ks => TestKind::KolmogorovSmirnov,
        }
    }
}

type CriticalCache = Mutex<HashMap<(Baseline, usize, u64), f64>>;

fn baseline_cache() -> &'static CriticalCache {
    static CACHE: OnceLock<CriticalCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn simulate_baseline(b: Baseline, n: usize, m: usize, rng: RngStream) -> Result<Vec<f64>> {
    let sampler = Sampler::new(&DistributionSpec::standard_gaussian())?;
    let mut values = (0..m as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, i| {
                sampler.fill(&mut rng.substream(i).generator(), buf);
                b.statistic(buf)
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    values.sort_unstable_by(f64::total_cmp);
    Ok(values)
}

fn baseline_critical(b: Baseline, n: usize, c: f64) -> Result<f64> {
    let key = (b, n, (c * 1e9).round() as u64);
    if let Some(&v) = baseline_cache().lock().unwrap().get(&key) {
        return Ok(v);
    }
    let stream = RngStream::new(BASELINE_SEED, (n as u64) << 32);
    let values = simulate_baseline(b, n, BASELINE_REPLICATIONS, stream)?;
    let q = sorted_quantile(&values, 1.0 - c)?;
    baseline_cache().lock().unwrap().insert(key, q);
    Ok(q)
}

/// Monte Carlo (1 - c)-quantile of the Jarque-Bera statistic under the
/// Gaussian null at sample size `n`, cached per process.
pub fn jarque_bera_critical_value(n: usize, c: f64) -> Result<f64> {
    baseline_critical(Baseline::JarqueBera, n, c)
}

/// Monte Carlo (1 - c)-quantile of the plug-in KS distance under the
/// Gaussian null at sample size `n`, cached per process.
pub fn ks_critical_value(n: usize, c: f64) -> Result<f64> {
    baseline_critical(Baseline::Ks, n, c)
}

fn baseline_test(b: Baseline, values: &[f64], c: f64) -> Result<TestOutcome> {
    if !(c > 0.0 && c < 1.0) {
        return Err(invalid_param(format!("significance level must lie in (0, 1), got {c}")));
    }
    let statistic = b.statistic(values)?;
    let threshold = baseline_critical(b, values.len(), c)?;
    Ok(TestOutcome {
        kind: b.kind(),
        n: values.len(),
        c,
        statistic,
        thresholds: vec![threshold],
        reject: statistic >= threshold,
    })
}

pub fn jarque_bera_test(values: &[f64], c: f64) -> Result<TestOutcome> {
    baseline_test(Baseline::JarqueBera, values, c)
}

pub fn ks_normality_test(values: &[f64], c: f64) -> Result<TestOutcome> {
    baseline_test(Baseline::Ks, values, c)
}
