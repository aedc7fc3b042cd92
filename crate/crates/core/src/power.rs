//! Size and power simulation over parameter grids.
//!
//! Replication `r` at grid index `g` and sample-size index `k` draws from
//! stream `g << 40 | k << 32 | r` of the study's master seed, so any single
//! point can be recomputed on its own.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical::QuantileTable;
use crate::distributions::{DistributionSpec, Dof, RngStream, Sampler};
use crate::error::{invalid_param, Error, Result};
use crate::fileio::write_atomic;
use crate::hypothesis::{MgTest, Region, TestKind, TestSpec};
use crate::statistic::GreenwoodAccumulator;

pub const DEFAULT_REPLICATIONS: usize = 2000;
pub const QUICK_REPLICATIONS: usize = 500;
pub const MIN_REPLICATIONS: usize = 100;
pub const CSV_HEADER: &str = "family,param,n,replications,rejection_rate";

/// A one-parameter family swept by a power study. The swept parameter is
/// alpha for stable, nu for Student's t and gamma for GPD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SweepFamily {
    Stable { sigma: f64 },
    StudentT,
    Gpd { delta: f64 },
}

impl SweepFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SweepFamily::Stable { .. } => "stable",
            SweepFamily::StudentT => "student_t",
            SweepFamily::Gpd { .. } => "gpd",
        }
    }

    /// Parses `stable`, `t` / `student_t` or `gpd`, with unit scales.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "stable" => Ok(SweepFamily::Stable { sigma: 1.0 }),
            "t" | "student_t" | "studentt" => Ok(SweepFamily::StudentT),
            "gpd" => Ok(SweepFamily::Gpd { delta: 1.0 }),
            other => Err(invalid_param(format!("unknown sweep family {other:?}"))),
        }
    }

    pub fn spec_at(&self, param: f64) -> Result<DistributionSpec> {
        match *self {
            SweepFamily::Stable { sigma } => DistributionSpec::stable(param, sigma),
            SweepFamily::StudentT => DistributionSpec::student_t(Dof::from_f64(param)?),
            SweepFamily::Gpd { delta } => DistributionSpec::gpd(param, delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStudyConfig {
    pub test: TestSpec,
    pub data_family: SweepFamily,
    pub parameter_grid: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
}

fn strictly_monotone<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1]) || v.windows(2).all(|w| w[0] > w[1])
}

impl PowerStudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.test.validate()?;
        if self.replications < MIN_REPLICATIONS {
            return Err(invalid_param(format!(
                "need at least {MIN_REPLICATIONS} replications, got {}",
                self.replications
            )));
        }
        if self.parameter_grid.is_empty() || self.sample_sizes.is_empty() {
            return Err(invalid_param("parameter grid and sample sizes must be non-empty"));
        }
        if !strictly_monotone(&self.parameter_grid) {
            return Err(invalid_param("parameter grid must be strictly monotone"));
        }
        if !strictly_monotone(&self.sample_sizes) {
            return Err(invalid_param("sample sizes must be strictly monotone"));
        }
        if self.sample_sizes.len() > 255 || self.parameter_grid.len() > 1 << 24 || self.replications > u32::MAX as usize
        {
            return Err(invalid_param("grid too large for the stream layout"));
        }
        for &p in &self.parameter_grid {
            let spec = self.data_family.spec_at(p)?;
            if self.test.kind == TestKind::Mg3Gpd && !spec.is_nonnegative() {
                return Err(invalid_param(format!(
                    "{} needs nonnegative data, got {spec}",
                    self.test.kind
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub param: f64,
    pub n: usize,
    pub replications: usize,
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub config: PowerStudyConfig,
    pub points: Vec<PowerPoint>,
}

impl PowerCurve {
    /// Rejection rate at `(param, n)`, if that point was simulated.
    pub fn rate(&self, param: f64, n: usize) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.param == param && p.n == n)
            .map(|p| p.rejection_rate)
    }

    /// Rates for one sample size in grid order.
    pub fn series(&self, n: usize) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.n == n)
            .map(|p| (p.param, p.rejection_rate))
            .collect()
    }
}

/// Decision rule resolved for one sample size.
enum Rule {
    Greenwood(Region),
    Baseline(TestSpec),
}

impl Rule {
    fn resolve(test: &TestSpec, table: Option<&QuantileTable>, n: usize) -> Result<Self> {
        test.check_coverage(table, None, n)?;
        if test.kind.uses_table() {
            let table = table.ok_or_else(|| invalid_param("missing quantile table"))?;
            Ok(Rule::Greenwood(MgTest::new(*test, table).region(n)?))
        } else {
            Ok(Rule::Baseline(*test))
        }
    }
}

fn rejection_count(
    rule: &Rule,
    data: &DistributionSpec,
    n: usize,
    replications: usize,
    stream_of: impl Fn(u64) -> RngStream + Sync,
) -> Result<usize> {
    let sampler = Sampler::new(data)?;
    let rejects = (0..replications as u64)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], GreenwoodAccumulator::new()),
            |(buf, acc), r| -> Result<bool> {
                sampler.fill(&mut stream_of(r).generator(), buf);
                match rule {
                    Rule::Greenwood(region) => Ok(region.rejects(acc.compute(buf)?.s_n)),
                    Rule::Baseline(test) => Ok(test.run(buf, None)?.reject),
                }
            },
        )
        .collect::<Result<Vec<bool>>>()?;
    Ok(rejects.into_iter().filter(|&r| r).count())
}

/// Rejection fraction of `config.test` at every (parameter, n) pair.
///
/// Table coverage for every sample size is checked before any simulation.
pub fn run_power_study(config: &PowerStudyConfig, table: Option<&QuantileTable>) -> Result<PowerCurve> {
    config.validate()?;
    let rules = config
        .sample_sizes
        .iter()
        .map(|&n| Rule::resolve(&config.test, table, n))
        .collect::<Result<Vec<_>>>()?;
    let mut points = Vec::with_capacity(config.parameter_grid.len() * config.sample_sizes.len());
    for (g, &param) in config.parameter_grid.iter().enumerate() {
        let data = config.data_family.spec_at(param)?;
        for (k, (&n, rule)) in config.sample_sizes.iter().zip(&rules).enumerate() {
            let prefix = (g as u64) << 40 | (k as u64) << 32;
            let count = rejection_count(rule, &data, n, config.replications, |r| {
                RngStream::new(config.master_seed, prefix | r)
            })?;
            points.push(PowerPoint {
                param,
                n,
                replications: config.replications,
                rejection_rate: count as f64 / config.replications as f64,
            });
        }
    }
    Ok(PowerCurve {
        config: config.clone(),
        points,
    })
}

/// Rejection fraction of `test` on `replications` samples drawn from its own
/// null law. Replication `r` uses `rng.substream(r)`.
pub fn size_check(
    test: &TestSpec,
    n: usize,
    replications: usize,
    rng: RngStream,
    table: Option<&QuantileTable>,
) -> Result<f64> {
    test.validate()?;
    if replications == 0 {
        return Err(invalid_param("size check needs at least one replication"));
    }
    let rule = Rule::resolve(test, table, n)?;
    let count = rejection_count(&rule, &test.null_spec, n, replications, |r| rng.substream(r))?;
    Ok(count as f64 / replications as f64)
}

/// Path of the JSON sidecar written next to a curve CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn curve_to_csv(curve: &PowerCurve) -> String {
    let family = curve.config.data_family.name();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{family},{},{},{},{}",
            p.param, p.n, p.replications, p.rejection_rate
        );
    }
    out
}

/// Writes the CSV at `path` and the config to `<path>.json`.
pub fn export_curve(curve: &PowerCurve, path: &Path) -> Result<()> {
    let sidecar = serde_json::to_string_pretty(&curve.config)?;
    write_atomic(&sidecar_path(path), sidecar.as_bytes())?;
    write_atomic(path, curve_to_csv(curve).as_bytes())
}

/// Reads a curve written by [`export_curve`].
pub fn import_curve(path: &Path) -> Result<PowerCurve> {
    let config: PowerStudyConfig = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::Format(format!(
            "{} does not start with {CSV_HEADER:?}",
            path.display()
        )));
    }
    let bad = |line: &str| Error::Format(format!("malformed curve row {line:?}"));
    let mut points = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [family, param, n, reps, rate] = fields[..] else {
            return Err(bad(line));
        };
        if family != config.data_family.name() {
            return Err(bad(line));
        }
        points.push(PowerPoint {
            param: param.parse().map_err(|_| bad(line))?,
            n: n.parse().map_err(|_| bad(line))?,
            replications: reps.parse().map_err(|_| bad(line))?,
            rejection_rate: rate.parse().map_err(|_| bad(line))?,
        });
    }
    Ok(PowerCurve { config, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::{build_quantile_table, QuantileRequest, Side};

    fn mg2_table(ns: &[usize]) -> QuantileTable {
        let g = DistributionSpec::standard_gaussian();
        let requests: Vec<_> = ns
            .iter()
            .map(|&n| QuantileRequest::new(g, n, 0.05, Side::Upper))
            .collect();
        build_quantile_table(&requests, 4000, RngStream::new(21, 0)).unwrap()
    }

    fn config(grid: Vec<f64>, ns: Vec<usize>, r: usize) -> PowerStudyConfig {
        PowerStudyConfig {
            test: TestSpec::new(TestKind::Mg2, 0.05).unwrap(),
            data_family: SweepFamily::Stable { sigma: 1.0 },
            parameter_grid: grid,
            sample_sizes: ns,
            replications: r,
            master_seed: 3,
        }
    }

    #[test]
    fn single_point_and_determinism() {
        let table = mg2_table(&[20]);
        let cfg = config(vec![1.5], vec![20], 100);
        let a = run_power_study(&cfg, Some(&table)).unwrap();
        assert_eq!(a.points.len(), 1);
        assert!((0.0..=1.0).contains(&a.points[0].rejection_rate));
        let b = run_power_study(&cfg, Some(&table)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coverage_checked_first() {
        let table = mg2_table(&[20]);
        let cfg = config(vec![1.0, 1.5], vec![20, 40], 100);
        assert!(matches!(
            run_power_study(&cfg, Some(&table)),
            Err(Error::MissingEntry(_))
        ));
        assert!(run_power_study(&cfg, None).is_err());
    }

    #[test]
    fn invalid_configs() {
        let table = mg2_table(&[20]);
        assert!(run_power_study(&config(vec![], vec![20], 100), Some(&table)).is_err());
        assert!(run_power_study(&config(vec![1.0, 1.0], vec![20], 100), Some(&table)).is_err());
        assert!(run_power_study(&config(vec![1.0], vec![20], 99), Some(&table)).is_err());
        assert!(run_power_study(&config(vec![2.5], vec![20], 100), Some(&table)).is_err());
        let test = TestSpec::new(TestKind::Mg2, 0.05).unwrap();
        assert!(size_check(&test, 20, 0, RngStream::new(1, 0), Some(&table)).is_err());
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let table = mg2_table(&[10, 20]);
        let curve = run_power_study(&config(vec![1.0, 1.7, 2.0], vec![10, 20], 100), Some(&table)).unwrap();
        export_curve(&curve, &path).unwrap();
        assert!(sidecar_path(&path).exists());
        assert_eq!(import_curve(&path).unwrap(), curve);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with(CSV_HEADER));
    }

    #[test]
    fn empty_curve_is_header_only() {
        let curve = PowerCurve {
            config: config(vec![1.0], vec![10], 100),
            points: vec![],
        };
        assert_eq!(curve_to_csv(&curve), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn sweep_families() {
        assert_eq!(
            SweepFamily::StudentT.spec_at(5.0).unwrap(),
            DistributionSpec::StudentT { nu: Dof::Finite(5) }
        );
        assert!(SweepFamily::StudentT.spec_at(2.5).is_err());
        assert_eq!(SweepFamily::from_name("gpd").unwrap(), SweepFamily::Gpd { delta: 1.0 });
    }
}
