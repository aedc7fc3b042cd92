//! Monte Carlo null distributions of S_n and the quantile tables built from
//! them.
//!
//! Upper-side entries hold the (1 - c)-quantile of the null law and
//! lower-side entries the c-quantile, so a one-sided test at level `c`
//! rejects on `S_n >= upper` or `S_n <= lower` respectively.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{DistributionSpec, RngStream, Sampler};
use crate::error::{invalid_param, Error, Result};
use crate::fileio::write_atomic;
use crate::statistic::GreenwoodAccumulator;

pub const SCHEMA_VERSION: u64 = 1;
pub const ESTIMATOR: &str = "type7";
pub const MIN_REPLICATIONS: usize = 1000;
pub const DEFAULT_REPLICATIONS: usize = 100_000;
pub const QUICK_REPLICATIONS: usize = 10_000;

/// Which tail of the null distribution a critical value bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    /// Probability level of the quantile used for significance `c`.
    pub fn quantile_level(self, c: f64) -> f64 {
        match self {
            Side::Upper => 1.0 - c,
            Side::Lower => c,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "upper" => Ok(Side::Upper),
            "lower" => Ok(Side::Lower),
            other => Err(invalid_param(format!("side must be upper or lower, got {other:?}"))),
        }
    }
}

/// `M` independent realisations of S_n for samples of size `n` from `spec`.
///
/// Replication `i` draws from `rng.substream(i)`, so the result is the same
/// for any number of worker threads.
pub fn estimate_null_distribution(spec: &DistributionSpec, n: usize, m: usize, rng: RngStream) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(invalid_param(format!("sample size must be at least 2, got {n}")));
    }
    if m < MIN_REPLICATIONS {
        return Err(invalid_param(format!(
            "need at least {MIN_REPLICATIONS} replications, got {m}"
        )));
    }
    let sampler = Sampler::new(spec)?;
    let values = (0..m as u64)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], GreenwoodAccumulator::new()),
            |(buf, acc), i| {
                sampler.fill(&mut rng.substream(i).generator(), buf);
                // A draw of all zeros has probability zero for every family;
                // map it to the upper bound rather than failing the run.
                acc.compute(buf).map(|s| s.s_n).unwrap_or(1.0)
            },
        )
        .collect();
    Ok(values)
}

/// Linear-interpolation quantile of order `p` (the "type 7" estimator:
/// `h = (m - 1) p` on the 0-based sorted values).
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    let mut sorted = values.to_vec();
    sort_for_quantiles(&mut sorted)?;
    sorted_quantile(&sorted, p)
}

/// Sorts ascending for [`sorted_quantile`], rejecting empty or NaN input.
pub fn sort_for_quantiles(values: &mut [f64]) -> Result<()> {
    if values.is_empty() {
        return Err(invalid_param("cannot take a quantile of an empty vector"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(invalid_param("cannot take a quantile of NaN values"));
    }
    values.sort_unstable_by(f64::total_cmp);
    Ok(())
}

/// [`empirical_quantile`] on values already sorted ascending.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(invalid_param("cannot take a quantile of an empty vector"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid_param(format!("quantile order must lie in (0, 1), got {p}")));
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let (a, b) = (sorted[lo], sorted[hi]);
    if a == b {
        return Ok(a);
    }
    Ok(a + (h - lo as f64) * (b - a))
}

/// One critical value to compute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileRequest {
    pub spec: DistributionSpec,
    pub n: usize,
    pub c: f64,
    pub side: Side,
}

impl QuantileRequest {
    pub fn new(spec: DistributionSpec, n: usize, c: f64, side: Side) -> Self {
        Self { spec, n, c, side }
    }
}

/// Lookup key of a table entry. Parameters are stored in their
/// [statistic-equivalent](DistributionSpec::statistic_equivalent) form and
/// `c` in parts per billion, so keys compare exactly.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryKey {
    spec: String,
    transform: String,
    n: usize,
    c_ppb: u64,
    side: Side,
}

impl EntryKey {
    pub fn new(spec: &DistributionSpec, transform: Option<&str>, n: usize, c: f64, side: Side) -> Self {
        Self {
            spec: spec.statistic_equivalent().to_string(),
            transform: transform.unwrap_or_default().to_owned(),
            n,
            c_ppb: c_to_ppb(c),
            side,
        }
    }
}

impl fmt::Display for EntryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(n={}, c={}) of {} side {}",
            self.n,
            self.c_ppb as f64 / 1e9,
            self.spec,
            self.side
        )?;
        if !self.transform.is_empty() {
            write!(f, " under {}", self.transform)?;
        }
        Ok(())
    }
}

fn c_to_ppb(c: f64) -> u64 {
    (c * 1e9).round() as u64
}

fn check_level(c: f64) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(invalid_param(format!("significance level must lie in (0, 1), got {c}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    #[serde(rename = "M")]
    pub replications: usize,
    pub master_seed: u64,
    pub estimator: String,
    pub created_at: String,
    /// Free-form record of the settings that produced the table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
struct StoredEntry {
    spec: DistributionSpec,
    c: f64,
    value: f64,
}

/// Critical values keyed by (null law, transform, n, c, side).
///
/// The transform is empty for tables of raw samples and names the
/// preprocessing (for example a spectrogram configuration) otherwise; the
/// two kinds never match each other on lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    metadata: TableMetadata,
    entries: BTreeMap<EntryKey, StoredEntry>,
}

impl QuantileTable {
    pub fn new(replications: usize, master_seed: u64) -> Self {
        Self {
            metadata: TableMetadata {
                replications,
                master_seed,
                estimator: ESTIMATOR.to_owned(),
                created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                config: None,
            },
            entries: BTreeMap::new(),
        }
    }

    pub fn metadata(&self) -> &TableMetadata {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut TableMetadata {
        &mut self.metadata
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds one entry; a second entry under the same key is an error.
    pub fn insert(
        &mut self,
        spec: &DistributionSpec,
        transform: Option<&str>,
        n: usize,
        c: f64,
        side: Side,
        value: f64,
    ) -> Result<()> {
        check_level(c)?;
        if n < 2 {
            return Err(invalid_param(format!("sample size must be at least 2, got {n}")));
        }
        if !value.is_finite() {
            return Err(invalid_param(format!("critical value {value} is not finite")));
        }
        let key = EntryKey::new(spec, transform, n, c, side);
        match self.entries.entry(key) {
            Entry::Occupied(e) => Err(Error::DuplicateRequest(e.key().to_string())),
            Entry::Vacant(e) => {
                e.insert(StoredEntry {
                    spec: spec.statistic_equivalent(),
                    c,
                    value,
                });
                Ok(())
            }
        }
    }

    /// Critical value for a raw-sample test.
    pub fn critical_value(&self, spec: &DistributionSpec, n: usize, c: f64, side: Side) -> Result<f64> {
        self.critical_value_with(spec, None, n, c, side)
    }

    /// Critical value for a test applied after `transform`.
    pub fn critical_value_with(
        &self,
        spec: &DistributionSpec,
        transform: Option<&str>,
        n: usize,
        c: f64,
        side: Side,
    ) -> Result<f64> {
        let key = EntryKey::new(spec, transform, n, c, side);
        self.entries
            .get(&key)
            .map(|e| e.value)
            .ok_or_else(|| Error::MissingEntry(key.to_string()))
    }

    pub fn contains(&self, spec: &DistributionSpec, transform: Option<&str>, n: usize, c: f64, side: Side) -> bool {
        self.entries.contains_key(&EntryKey::new(spec, transform, n, c, side))
    }

    /// True when the table holds at least one entry under `transform`.
    pub fn has_transform(&self, transform: &str) -> bool {
        self.entries.keys().any(|k| k.transform == transform)
    }

    /// Iterates `(spec, transform, n, c, side, value)` in key order.
    pub fn entries(&self) -> impl Iterator<Item = (DistributionSpec, Option<&str>, usize, f64, Side, f64)> + '_ {
        self.entries.iter().map(|(k, e)| {
            let transform = (!k.transform.is_empty()).then_some(k.transform.as_str());
            (e.spec, transform, k.n, e.c, k.side, e.value)
        })
    }

    /// Checks the range and monotonicity invariants: every value lies in
    /// [1/n, 1]; lower values grow with c and upper values shrink with c.
    pub fn validate(&self) -> Result<()> {
        for (k, e) in &self.entries {
            let lo = 1.0 / k.n as f64;
            if e.value < lo * (1.0 - 1e-12) || e.value > 1.0 {
                return Err(Error::Format(format!(
                    "critical value {} outside [1/n, 1] for {k}",
                    e.value
                )));
            }
        }
        // Keys sort by c within (spec, transform, n), then by side.
        let mut previous: HashMap<(&str, &str, usize, Side), f64> = HashMap::new();
        for (k, e) in &self.entries {
            let slot = (k.spec.as_str(), k.transform.as_str(), k.n, k.side);
            if let Some(&prev) = previous.get(&slot) {
                let ordered = match k.side {
                    Side::Lower => prev <= e.value,
                    Side::Upper => prev >= e.value,
                };
                if !ordered {
                    return Err(Error::Format(format!("critical values not monotone in c at {k}")));
                }
            }
            previous.insert(slot, e.value);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let entries = self
            .entries
            .iter()
            .map(|(k, e)| {
                let mut params = serde_json::to_value(e.spec)?;
                let family = params
                    .as_object_mut()
                    .and_then(|o| o.remove("family"))
                    .unwrap_or_default();
                Ok(EntryFile {
                    family: family.as_str().unwrap_or_default().to_owned(),
                    params,
                    n: k.n,
                    c: e.c,
                    side: k.side,
                    value: e.value,
                    transform: (!k.transform.is_empty()).then(|| k.transform.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let file = TableFile {
            schema_version: SCHEMA_VERSION,
            metadata: self.metadata.clone(),
            entries,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let head: SchemaProbe = serde_json::from_str(text)?;
        if head.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(head.schema_version));
        }
        let file: TableFile = serde_json::from_str(text)?;
        let mut table = QuantileTable {
            metadata: file.metadata,
            entries: BTreeMap::new(),
        };
        for e in file.entries {
            let mut params = e.params;
            let obj = params
                .as_object_mut()
                .ok_or_else(|| Error::Format("entry params must be an object".into()))?;
            obj.insert("family".into(), serde_json::Value::String(e.family));
            let spec: DistributionSpec = serde_json::from_value(params)?;
            table.insert(&spec, e.transform.as_deref(), e.n, e.c, e.side, e.value)?;
        }
        table.validate()?;
        Ok(table)
    }

    /// Writes the table atomically.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema_version: u64,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    schema_version: u64,
    metadata: TableMetadata,
    entries: Vec<EntryFile>,
}

#[derive(Serialize, Deserialize)]
struct EntryFile {
    family: String,
    params: serde_json::Value,
    n: usize,
    c: f64,
    side: Side,
    value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transform: Option<String>,
}

/// Stream offset reserved for one (null law, n) simulation. The high half
/// comes from a hash of the key, leaving 2^32 replication indices, so an
/// entry does not depend on which other requests share the table.
pub fn stream_base(spec: &DistributionSpec, transform: Option<&str>, n: usize) -> u64 {
    let key = format!(
        "{}|{}|{}",
        spec.statistic_equivalent(),
        transform.unwrap_or_default(),
        n
    );
    fnv1a(key.as_bytes()) & 0xFFFF_FFFF_0000_0000
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Builds one entry per request. Requests sharing a null law and sample size
/// reuse one simulated null distribution of `m` replications.
pub fn build_quantile_table(requests: &[QuantileRequest], m: usize, rng: RngStream) -> Result<QuantileTable> {
    let mut table = QuantileTable::new(m, rng.master_seed);
    extend_quantile_table(&mut table, requests, m, rng)?;
    Ok(table)
}

/// Adds entries for `requests` to an existing table. All requests are
/// checked against each other and against the table before simulating.
pub fn extend_quantile_table(
    table: &mut QuantileTable,
    requests: &[QuantileRequest],
    m: usize,
    rng: RngStream,
) -> Result<()> {
    if m < MIN_REPLICATIONS {
        return Err(invalid_param(format!(
            "need at least {MIN_REPLICATIONS} replications, got {m}"
        )));
    }
    let mut seen = BTreeMap::new();
    for r in requests {
        r.spec.validate()?;
        check_level(r.c)?;
        let key = EntryKey::new(&r.spec, None, r.n, r.c, r.side);
        if table.entries.contains_key(&key) || seen.insert(key.clone(), ()).is_some() {
            return Err(Error::DuplicateRequest(key.to_string()));
        }
    }
    let mut groups: Vec<(DistributionSpec, usize, Vec<&QuantileRequest>)> = Vec::new();
    for r in requests {
        let equiv = r.spec.statistic_equivalent();
        match groups.iter_mut().find(|(s, n, _)| *s == equiv && *n == r.n) {
            Some(g) => g.2.push(r),
            None => groups.push((equiv, r.n, vec![r])),
        }
    }
    for (spec, n, members) in groups {
        let base = rng.substream(stream_base(&spec, None, n));
        let mut values = estimate_null_distribution(&spec, n, m, base)?;
        sort_for_quantiles(&mut values)?;
        for r in members {
            let q = sorted_quantile(&values, r.side.quantile_level(r.c))?;
            table.insert(&r.spec, None, n, r.c, r.side, q)?;
        }
    }
    Ok(())
}
