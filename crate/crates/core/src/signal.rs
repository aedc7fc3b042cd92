//! Segmentation, spectrograms and batch testing of long signals.
//!
//! A spectrogram row (one frequency bin across all frames) is treated as a
//! sample. Rows of one spectrogram are dependent across frequency; reports
//! nevertheless count them as separate units.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::critical::{sort_for_quantiles, sorted_quantile, QuantileTable, Side, MIN_REPLICATIONS};
use crate::distributions::{DistributionSpec, RngStream};
use crate::error::{invalid_param, Error, Result};
use crate::fileio::write_atomic;
use crate::hypothesis::{TestOutcome, TestSpec};
use crate::numeric::bessel_i0;
use crate::statistic::GreenwoodAccumulator;

const SIGNAL_MAGIC: &[u8; 8] = b"GWSIG\0\0\x01";
const SPECTROGRAM_MAGIC: &[u8; 8] = b"GWSPEC\0\x01";

/// A real signal with its sampling rate in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(invalid_param(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidSample(format!(
                "signal needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("non-finite signal value {v}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Consecutive non-overlapping segments of `segment_length` samples; the
/// trailing remainder is dropped.
pub fn segment_signal(signal: &Signal, segment_length: usize) -> Result<Vec<&[f64]>> {
    if segment_length < 2 {
        return Err(invalid_param(format!(
            "segment length must be at least 2, got {segment_length}"
        )));
    }
    if segment_length > signal.len() {
        return Err(invalid_param(format!(
            "segment length {segment_length} exceeds signal length {}",
            signal.len()
        )));
    }
    Ok(signal.samples.chunks_exact(segment_length).collect())
}

/// Kaiser window `I0(beta sqrt(1 - r^2)) / I0(beta)` with `r` running from -1
/// to 1 across the window.
pub fn kaiser_window(length: usize, beta: f64) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(invalid_param("window length must be at least 1"));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid_param(format!("kaiser beta must be >= 0, got {beta}")));
    }
    if length == 1 {
        return Ok(vec![1.0]);
    }
    let denom = bessel_i0(beta);
    let last = (length - 1) as f64;
    let mut w: Vec<f64> = (0..length)
        .map(|i| {
            let r = 2.0 * i as f64 / last - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect();
    for i in 0..length / 2 {
        w[length - 1 - i] = w[i];
    }
    Ok(w)
}

/// Named window shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowShape {
    Rectangular,
    Kaiser { beta: f64 },
}

/// Short-time Fourier transform settings. `nfft` zero-pads each frame to a
/// longer transform; it defaults to the window length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window: WindowShape,
    pub window_length: usize,
    pub overlap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nfft: Option<usize>,
}

impl StftConfig {
    pub fn kaiser(window_length: usize, beta: f64, overlap: usize) -> Self {
        Self {
            window: WindowShape::Kaiser { beta },
            window_length,
            overlap,
            nfft: None,
        }
    }

    pub fn rectangular(window_length: usize, overlap: usize) -> Self {
        Self {
            window: WindowShape::Rectangular,
            window_length,
            overlap,
            nfft: None,
        }
    }

    pub fn with_nfft(self, nfft: usize) -> Self {
        Self {
            nfft: Some(nfft),
            ..self
        }
    }

    pub fn window_values(&self) -> Result<Vec<f64>> {
        match self.window {
            WindowShape::Rectangular => {
                if self.window_length == 0 {
                    return Err(invalid_param("window length must be at least 1"));
                }
                Ok(vec![1.0; self.window_length])
            }
            WindowShape::Kaiser { beta } => kaiser_window(self.window_length, beta),
        }
    }

    pub fn label(&self) -> String {
        let w = match self.window {
            WindowShape::Rectangular => format!("rect({})", self.window_length),
            WindowShape::Kaiser { beta } => format!("kaiser({},{beta})", self.window_length),
        };
        format!(
            "{w},overlap={},nfft={}",
            self.overlap,
            self.nfft.unwrap_or(self.window_length)
        )
    }

    /// Number of frames for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> Result<usize> {
        check_geometry(len, self.window_length, self.overlap, self.nfft)?;
        Ok((len - self.window_length) / (self.window_length - self.overlap) + 1)
    }
}

fn check_geometry(len: usize, window: usize, overlap: usize, nfft: Option<usize>) -> Result<()> {
    if window == 0 || window > len {
        return Err(invalid_param(format!(
            "window length {window} must lie in [1, {len}] for this signal"
        )));
    }
    if overlap >= window {
        return Err(invalid_param(format!(
            "overlap {overlap} must be below window length {window}"
        )));
    }
    if let Some(nfft) = nfft {
        if nfft < window {
            return Err(invalid_param(format!(
                "nfft {nfft} is shorter than the window {window}"
            )));
        }
    }
    Ok(())
}

/// Squared STFT magnitudes over non-negative frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    /// Row-major `bins x frames`.
    values: Vec<f64>,
    bins: usize,
    frames: usize,
    frequencies: Vec<f64>,
    times: Vec<f64>,
    window: String,
    overlap: usize,
    nfft: usize,
    sample_rate: f64,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Bin frequencies in Hz.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Frame centres in seconds.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn window(&self) -> &str {
        &self.window
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn nfft(&self) -> usize {
        self.nfft
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.frames + frame]
    }

    /// All frames of one frequency bin.
    pub fn row(&self, bin: usize) -> &[f64] {
        &self.values[bin * self.frames..(bin + 1) * self.frames]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Spectrogram with a caller-supplied window; the transform length equals
/// the window length.
pub fn spectrogram(signal: &Signal, window: &[f64], overlap: usize) -> Result<Spectrogram> {
    spectrogram_raw(signal, window, overlap, None, format!("custom({})", window.len()))
}

pub fn spectrogram_with(signal: &Signal, config: &StftConfig) -> Result<Spectrogram> {
    let window = config.window_values()?;
    spectrogram_raw(signal, &window, config.overlap, config.nfft, config.label())
}

fn spectrogram_raw(
    signal: &Signal,
    window: &[f64],
    overlap: usize,
    nfft: Option<usize>,
    label: String,
) -> Result<Spectrogram> {
    let len = window.len();
    check_geometry(signal.len(), len, overlap, nfft)?;
    if let Some(w) = window.iter().find(|w| !w.is_finite()) {
        return Err(invalid_param(format!("window value {w} is not finite")));
    }
    let nfft = nfft.unwrap_or(len);
    let hop = len - overlap;
    let frames = (signal.len() - len) / hop + 1;
    let bins = nfft / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let x = signal.samples();
    let columns: Vec<Vec<f64>> = (0..frames)
        .into_par_iter()
        .map_init(
            || {
                (
                    vec![Complex::new(0.0, 0.0); nfft],
                    vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), f| {
                let start = f * hop;
                for (slot, (&v, &w)) in buf.iter_mut().zip(x[start..start + len].iter().zip(window)) {
                    *slot = Complex::new(v * w, 0.0);
                }
                for slot in &mut buf[len..] {
                    *slot = Complex::new(0.0, 0.0);
                }
                fft.process_with_scratch(buf, scratch);
                buf[..bins].iter().map(|z| z.norm_sqr()).collect()
            },
        )
        .collect();
    let mut values = vec![0.0; bins * frames];
    for (f, col) in columns.iter().enumerate() {
        for (b, &v) in col.iter().enumerate() {
            values[b * frames + f] = v;
        }
    }
    let fs = signal.sample_rate();
    Ok(Spectrogram {
        values,
        bins,
        frames,
        frequencies: (0..bins).map(|k| k as f64 * fs / nfft as f64).collect(),
        times: (0..frames)
            .map(|f| (f * hop) as f64 / fs + len as f64 / (2.0 * fs))
            .collect(),
        window: label,
        overlap,
        nfft,
        sample_rate: fs,
    })
}

/// Bins with `f_min <= frequency <= f_max`, each paired with its row.
pub fn frequency_rows(spec: &Spectrogram, f_min: f64, f_max: f64) -> Result<Vec<(f64, &[f64])>> {
    if !(f_min < f_max) {
        return Err(invalid_param(format!("empty band [{f_min}, {f_max}]")));
    }
    let rows: Vec<_> = spec
        .frequencies
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= f_min && f <= f_max)
        .map(|(b, &f)| (f, spec.row(b)))
        .collect();
    if rows.is_empty() {
        return Err(invalid_param(format!(
            "band [{f_min}, {f_max}] Hz holds no bins (axis spans 0 to {} Hz)",
            spec.frequencies.last().copied().unwrap_or(0.0)
        )));
    }
    Ok(rows)
}

/// The complete map from a raw signal to the samples tested in the
/// time-frequency domain. Its label keys spectrogram-null table entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeFrequencyConfig {
    pub stft: StftConfig,
    pub sample_rate: f64,
    pub f_min: f64,
    pub f_max: f64,
}

impl TimeFrequencyConfig {
    pub fn label(&self, signal_len: usize) -> String {
        format!(
            "spectrogram({},fs={},band={}-{},len={signal_len})",
            self.stft.label(),
            self.sample_rate,
            self.f_min,
            self.f_max
        )
    }

    /// Number of spectrogram bins inside the band.
    pub fn band_bins(&self) -> Result<usize> {
        let nfft = self.stft.nfft.unwrap_or(self.stft.window_length);
        let count = (0..=nfft / 2)
            .map(|k| k as f64 * self.sample_rate / nfft as f64)
            .filter(|&f| f >= self.f_min && f <= self.f_max)
            .count();
        if count == 0 {
            return Err(invalid_param(format!(
                "band [{}, {}] Hz holds no bins",
                self.f_min, self.f_max
            )));
        }
        Ok(count)
    }

    /// S_n of every in-band row of `signal`.
    pub fn row_statistics(&self, signal: &Signal) -> Result<Vec<f64>> {
        let spec = spectrogram_with(signal, &self.stft)?;
        let mut acc = GreenwoodAccumulator::new();
        frequency_rows(&spec, self.f_min, self.f_max)?
            .into_iter()
            .map(|(_, row)| acc.compute(row).map(|s| s.s_n))
            .collect()
    }
}

/// Row statistics of spectrograms of simulated null signals of
/// `signal_len` samples, collecting every in-band row of
/// `ceil(m / rows)` signals. Signal `k` is drawn from `rng.substream(k)`.
pub fn estimate_spectrogram_null(
    null: &DistributionSpec,
    config: &TimeFrequencyConfig,
    signal_len: usize,
    m: usize,
    rng: RngStream,
) -> Result<Vec<f64>> {
    if m < MIN_REPLICATIONS {
        return Err(invalid_param(format!(
            "need at least {MIN_REPLICATIONS} null rows, got {m}"
        )));
    }
    config.stft.frame_count(signal_len)?;
    let rows = config.band_bins()?;
    let signals = m.div_ceil(rows);
    let per_signal = (0..signals as u64)
        .into_par_iter()
        .map(|k| {
            let x = null.sample(signal_len, rng.substream(k))?;
            config.row_statistics(&Signal::new(x, config.sample_rate)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_signal.into_iter().flatten().collect())
}

/// Adds spectrogram-null entries for `null` at each `(c, side)`, keyed by
/// the configuration label and the row length.
pub fn add_spectrogram_null_entries(
    table: &mut QuantileTable,
    null: &DistributionSpec,
    config: &TimeFrequencyConfig,
    signal_len: usize,
    levels: &[(f64, Side)],
    m: usize,
    rng: RngStream,
) -> Result<()> {
    let n = config.stft.frame_count(signal_len)?;
    let label = config.label(signal_len);
    let base = rng.substream(crate::critical::stream_base(null, Some(&label), n));
    let mut values = estimate_spectrogram_null(null, config, signal_len, m, base)?;
    sort_for_quantiles(&mut values)?;
    for &(c, side) in levels {
        let q = sorted_quantile(&values, side.quantile_level(c))?;
        table.insert(null, Some(&label), n, c, side, q)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "time")]
    Time,
    #[serde(rename = "time-frequency")]
    TimeFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitOutcome {
    /// Segment index, or bin index within the selected band.
    pub unit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    #[serde(flatten)]
    pub outcome: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub domain: Domain,
    pub c: f64,
    pub units: Vec<UnitOutcome>,
    pub rejection_percentage: f64,
}

impl BatchReport {
    pub fn rejections(&self) -> usize {
        self.units.iter().filter(|u| u.outcome.reject).count()
    }
}

/// Applies `test` to every unit. Table coverage is checked for each distinct
/// unit length before any unit is tested.
pub fn batch_test(
    units: &[&[f64]],
    test: &TestSpec,
    table: Option<&QuantileTable>,
    transform: Option<&str>,
    domain: Domain,
) -> Result<BatchReport> {
    batch_test_labelled(units, None, test, table, transform, domain)
}

/// As [`batch_test`], attaching `frequencies[i]` to unit `i`.
pub fn batch_test_labelled(
    units: &[&[f64]],
    frequencies: Option<&[f64]>,
    test: &TestSpec,
    table: Option<&QuantileTable>,
    transform: Option<&str>,
    domain: Domain,
) -> Result<BatchReport> {
    if units.is_empty() {
        return Err(invalid_param("batch has no units"));
    }
    if let Some(f) = frequencies {
        if f.len() != units.len() {
            return Err(invalid_param("one frequency per unit required"));
        }
    }
    let mut lengths: Vec<usize> = units.iter().map(|u| u.len()).collect();
    lengths.sort_unstable();
    lengths.dedup();
    for n in lengths {
        test.check_coverage(table, transform, n)?;
    }
    let outcomes = units
        .par_iter()
        .map(|u| test.run_with(u, table, transform))
        .collect::<Result<Vec<_>>>()?;
    let units: Vec<UnitOutcome> = outcomes
        .into_iter()
        .enumerate()
        .map(|(i, outcome)| UnitOutcome {
            unit: i,
            frequency: frequencies.map(|f| f[i]),
            outcome,
        })
        .collect();
    let rejected = units.iter().filter(|u| u.outcome.reject).count();
    Ok(BatchReport {
        domain,
        c: test.c,
        rejection_percentage: 100.0 * rejected as f64 / units.len() as f64,
        units,
    })
}

/// Reads a signal from a raw file (magic, u64 count, f64 rate, values, all
/// little-endian) or from a single-column text file. Text files carry no
/// rate, so `sample_rate` must be given; for raw files it overrides the
/// stored rate when present.
pub fn read_signal(path: &Path, sample_rate: Option<f64>) -> Result<Signal> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(SIGNAL_MAGIC) {
        let (stored_rate, samples) = decode_raw_signal(&bytes)?;
        return Signal::new(samples, sample_rate.unwrap_or(stored_rate));
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Format(format!("{} is neither a raw signal nor text", path.display())))?;
    let rate = sample_rate.ok_or_else(|| invalid_param("text signals need an explicit sample rate"))?;
    Signal::new(parse_column(&text)?, rate)
}

/// Parses one number per line; a single non-numeric header line and blank
/// lines are skipped.
pub fn parse_column(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.trim().trim_end_matches(',');
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::Format(format!("line {}: cannot parse {field:?}", i + 1))),
        }
    }
    Ok(values)
}

fn decode_raw_signal(bytes: &[u8]) -> Result<(f64, Vec<f64>)> {
    let mut r = &bytes[SIGNAL_MAGIC.len()..];
    let mut word = [0u8; 8];
    r.read_exact(&mut word)
        .map_err(|_| Error::Format("truncated signal header".into()))?;
    let count = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)
        .map_err(|_| Error::Format("truncated signal header".into()))?;
    let rate = f64::from_le_bytes(word);
    if r.len() != count * 8 {
        return Err(Error::Format(format!(
            "signal header announces {count} samples but {} bytes follow",
            r.len()
        )));
    }
    let samples = r
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((rate, samples))
}

pub fn write_signal_raw(signal: &Signal, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(24 + 8 * signal.len());
    out.write_all(SIGNAL_MAGIC)?;
    out.write_all(&(signal.len() as u64).to_le_bytes())?;
    out.write_all(&signal.sample_rate.to_le_bytes())?;
    for v in &signal.samples {
        out.write_all(&v.to_le_bytes())?;
    }
    write_atomic(path, &out)
}

#[derive(Serialize)]
struct SpectrogramAxes<'a> {
    layout: &'static str,
    bins: usize,
    frames: usize,
    sample_rate: f64,
    window: &'a str,
    overlap: usize,
    nfft: usize,
    frequencies: &'a [f64],
    times: &'a [f64],
}

/// Writes the matrix (magic, u64 bins, u64 frames, row-major f64 values,
/// little-endian) to `path` and its axes to `<path>.json`.
pub fn write_spectrogram(spec: &Spectrogram, path: &Path) -> Result<()> {
    let axes = SpectrogramAxes {
        layout: "row-major bins x frames, f64 little-endian",
        bins: spec.bins,
        frames: spec.frames,
        sample_rate: spec.sample_rate,
        window: &spec.window,
        overlap: spec.overlap,
        nfft: spec.nfft,
        frequencies: &spec.frequencies,
        times: &spec.times,
    };
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".json");
    write_atomic(Path::new(&sidecar), serde_json::to_string_pretty(&axes)?.as_bytes())?;
    let mut out = Vec::with_capacity(24 + 8 * spec.values.len());
    out.write_all(SPECTROGRAM_MAGIC)?;
    out.write_all(&(spec.bins as u64).to_le_bytes())?;
    out.write_all(&(spec.frames as u64).to_le_bytes())?;
    for v in &spec.values {
        out.write_all(&v.to_le_bytes())?;
    }
    write_atomic(path, &out)
}

/// Reads back the matrix written by [`write_spectrogram`] as
/// `(bins, frames, values)`.
pub fn read_spectrogram_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path)?;
    if !bytes.starts_with(SPECTROGRAM_MAGIC) || bytes.len() < 24 {
        return Err(Error::Format(format!("{} is not a spectrogram file", path.display())));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes")) as usize;
    let (bins, frames) = (word(0), word(1));
    let body = &bytes[24..];
    if body.len() != bins * frames * 8 {
        return Err(Error::Format("spectrogram body length does not match header".into()));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((bins, frames, values))
}

/// `amplitude * sin(2 pi f t)` sampled at `sample_rate`.
pub fn tone(len: usize, frequency: f64, amplitude: f64, sample_rate: f64) -> Result<Signal> {
    let x = (0..len)
        .map(|i| amplitude * (2.0 * PI * frequency * i as f64 / sample_rate).sin())
        .collect();
    Signal::new(x, sample_rate)
}
