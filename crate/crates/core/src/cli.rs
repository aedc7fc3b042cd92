//! Command-line interface.
//!
//! Exit status is 0 on success, 2 for invalid arguments or missing table
//! coverage and 1 for other failures. Test decisions are reported in the
//! output and never change the exit status.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::critical::{self, extend_quantile_table, QuantileRequest, QuantileTable, Side};
use crate::distributions::{DistributionSpec, RngStream};
use crate::error::{invalid_param, Error, Result};
use crate::fileio::write_atomic;
use crate::hypothesis::{TestKind, TestOutcome, TestSpec, DEFAULT_SIGNIFICANCE};
use crate::power::{self, export_curve, run_power_study, PowerStudyConfig, SweepFamily};
use crate::signal::{
    self, add_spectrogram_null_entries, batch_test, batch_test_labelled, frequency_rows, segment_signal,
    spectrogram_with, write_spectrogram, BatchReport, Domain, StftConfig, TimeFrequencyConfig,
};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "greenwood",
    version,
    about = "Heavy-tail and Gaussianity tests built on the modified Greenwood statistic"
)]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "GREENWOOD_THREADS")]
    #[serde(skip)]
    pub threads: Option<usize>,

    /// Desk-scale defaults: 10000 table replications, 500 power replications.
    #[arg(long, global = true)]
    pub quick: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Simulate null distributions and write a quantile table.
    Quantiles(QuantilesArgs),
    /// Test one sample and print the outcome as JSON.
    Test(TestArgs),
    /// Run a power study and write a CSV curve with a JSON sidecar.
    Power(PowerArgs),
    /// Segment a signal (or take spectrogram rows) and test every unit.
    Analyze(AnalyzeArgs),
    /// Write the spectrogram of a signal as a binary matrix plus JSON axes.
    Spectrogram(SpectrogramArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SideArg {
    Upper,
    Lower,
    Both,
}

impl SideArg {
    fn sides(self) -> Vec<Side> {
        match self {
            SideArg::Upper => vec![Side::Upper],
            SideArg::Lower => vec![Side::Lower],
            SideArg::Both => vec![Side::Lower, Side::Upper],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Time,
    Tf,
}

/// Spectrogram geometry shared by `quantiles --tf`, `analyze --mode tf`
/// and `spectrogram`.
#[derive(Debug, Args, Serialize, Clone)]
pub struct StftArgs {
    /// Kaiser window length in samples.
    #[arg(long, default_value_t = 2000)]
    pub window_length: usize,
    /// Kaiser shape parameter; 0 gives a rectangular window.
    #[arg(long, default_value_t = 5.0)]
    pub beta: f64,
    /// Samples shared by consecutive frames.
    #[arg(long, default_value_t = 0)]
    pub overlap: usize,
    /// Transform length (zero padding); defaults to the window length.
    #[arg(long)]
    pub nfft: Option<usize>,
}

impl StftArgs {
    fn config(&self) -> StftConfig {
        let cfg = StftConfig::kaiser(self.window_length, self.beta, self.overlap);
        match self.nfft {
            Some(n) => cfg.with_nfft(n),
            None => cfg,
        }
    }
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct BandArgs {
    /// Lowest frequency kept, in Hz.
    #[arg(long, default_value_t = 0.0)]
    pub f_min: f64,
    /// Highest frequency kept, in Hz; defaults to the Nyquist frequency.
    #[arg(long)]
    pub f_max: Option<f64>,
}

impl BandArgs {
    fn tf_config(&self, stft: StftConfig, fs: f64) -> TimeFrequencyConfig {
        TimeFrequencyConfig {
            stft,
            sample_rate: fs,
            f_min: self.f_min,
            f_max: self.f_max.unwrap_or(fs / 2.0),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct QuantilesArgs {
    /// Null law, e.g. `gaussian`, `stable(1.5)`, `t(2)`, `gpd(0.5)`.
    /// Repeat for several laws.
    #[arg(long, required = true)]
    pub family: Vec<String>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', required_unless_present = "tf")]
    pub n: Vec<usize>,
    /// Significance levels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    pub c: Vec<f64>,
    #[arg(long, value_enum, default_value_t = SideArg::Both)]
    pub side: SideArg,
    /// Monte Carlo replications M [default: 100000, 10000 with --quick].
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Add entries to the table already at --out.
    #[arg(long)]
    pub append: bool,
    /// Build spectrogram-row nulls instead of raw-sample nulls.
    #[arg(long)]
    pub tf: bool,
    /// Length of the simulated signals (with --tf).
    #[arg(long, requires = "tf")]
    pub signal_len: Option<usize>,
    /// Sampling rate in Hz (with --tf).
    #[arg(long, requires = "tf")]
    pub fs: Option<f64>,
    #[command(flatten)]
    pub stft: StftArgs,
    #[command(flatten)]
    pub band: BandArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TestArgs {
    /// MG1, MG2, MG3, MG4, two-sided, JB or KS.
    #[arg(long, default_value = "MG2")]
    pub kind: String,
    /// Sample file: one value per line, or a raw signal file.
    #[arg(long)]
    pub input: PathBuf,
    /// Quantile table (not needed for JB and KS).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SIGNIFICANCE)]
    pub c: f64,
    /// Null law of the two-sided test.
    #[arg(long)]
    pub null: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct PowerArgs {
    #[arg(long, default_value = "MG2")]
    pub kind: String,
    /// Family swept: stable (alpha), t (nu) or gpd (gamma).
    #[arg(long)]
    pub family: String,
    /// Parameter grid: `a,b,c` or `start:stop:step`.
    #[arg(long)]
    pub grid: String,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Replications per point R [default: 2000, 500 with --quick].
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SIGNIFICANCE)]
    pub c: f64,
    #[arg(long)]
    pub null: Option<String>,
    /// CSV output; the config goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Signal file: raw signal or one value per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Sampling rate in Hz (required for text input).
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long, value_enum, default_value_t = Mode::Time)]
    pub mode: Mode,
    #[arg(long, default_value = "MG2")]
    pub kind: String,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SIGNIFICANCE)]
    pub c: f64,
    #[arg(long)]
    pub null: Option<String>,
    /// Segment length in time mode.
    #[arg(long, default_value_t = 1000)]
    pub segment: usize,
    #[command(flatten)]
    pub stft: StftArgs,
    #[command(flatten)]
    pub band: BandArgs,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectrogramArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub fs: Option<f64>,
    #[command(flatten)]
    pub stft: StftArgs,
    /// Matrix output; axes go to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().ansi().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // The global pool can only be set once per process; later calls
        // keep the first pool, which cannot change results.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_configuration() {
                2
            } else {
                1
            }
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Quantiles(a) => cmd_quantiles(cli, a, err),
        Command::Test(a) => cmd_test(cli, a, out),
        Command::Power(a) => cmd_power(cli, a, err),
        Command::Analyze(a) => cmd_analyze(cli, a, out, err),
        Command::Spectrogram(a) => cmd_spectrogram(a, err),
    }
}

fn echo(cli: &Cli) -> serde_json::Value {
    serde_json::to_value(cli).unwrap_or(serde_json::Value::Null)
}

fn parse_spec(text: &str) -> Result<DistributionSpec> {
    text.parse()
}

fn test_spec(kind: &str, null: Option<&str>, c: f64) -> Result<TestSpec> {
    let kind: TestKind = kind.parse()?;
    match (kind, null) {
        (TestKind::MgTwoSided, None) => Err(invalid_param("the two-sided test needs --null")),
        (_, Some(text)) => TestSpec::with_null(kind, parse_spec(text)?, c),
        (_, None) => TestSpec::new(kind, c),
    }
}

fn load_table(path: Option<&Path>, test: &TestSpec) -> Result<Option<QuantileTable>> {
    match path {
        Some(p) => Ok(Some(QuantileTable::load(p)?)),
        None if test.kind.uses_table() => Err(invalid_param(format!("{} needs --table", test.kind))),
        None => Ok(None),
    }
}

fn read_sample(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"GWSIG") {
        return Ok(signal::read_signal(path, None)?.samples().to_vec());
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Format(format!("{} is not text", path.display())))?;
    signal::parse_column(&text)
}

/// Parses `a,b,c` or `start:stop:step` (inclusive of `stop`).
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(invalid_param("empty parameter grid"));
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| invalid_param(format!("bad grid value {s:?}")))
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(invalid_param(format!(
                "grid range must be start:stop:step, got {text:?}"
            )));
        };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || stop < start {
            return Err(invalid_param(format!("invalid grid range {text:?}")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // Rounding to 12 decimals keeps 1.05 from printing as 1.0500000000000003.
        return Ok((0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect());
    }
    text.split(',').map(num).collect()
}

fn cmd_quantiles(cli: &Cli, a: &QuantilesArgs, err: &mut dyn Write) -> Result<()> {
    let m = a.reps.unwrap_or(if cli.quick {
        critical::QUICK_REPLICATIONS
    } else {
        critical::DEFAULT_REPLICATIONS
    });
    if m < critical::MIN_REPLICATIONS {
        return Err(invalid_param(format!(
            "--reps must be at least {}, got {m}",
            critical::MIN_REPLICATIONS
        )));
    }
    let specs = a.family.iter().map(|f| parse_spec(f)).collect::<Result<Vec<_>>>()?;
    if a.c.is_empty() {
        return Err(invalid_param("no significance levels given"));
    }
    let rng = RngStream::new(a.seed, 0);
    let mut table = if a.append && a.out.exists() {
        let t = QuantileTable::load(&a.out)?;
        if t.metadata().replications != m || t.metadata().master_seed != a.seed {
            return Err(invalid_param(format!(
                "{} was built with M={} and seed {}; append with the same --reps and --seed",
                a.out.display(),
                t.metadata().replications,
                t.metadata().master_seed
            )));
        }
        t
    } else {
        QuantileTable::new(m, a.seed)
    };
    let levels: Vec<(f64, Side)> =
        a.c.iter()
            .flat_map(|&c| a.side.sides().into_iter().map(move |s| (c, s)))
            .collect();
    if a.tf {
        let len = a.signal_len.ok_or_else(|| invalid_param("--tf needs --signal-len"))?;
        let fs = a.fs.ok_or_else(|| invalid_param("--tf needs --fs"))?;
        let cfg = a.band.tf_config(a.stft.config(), fs);
        for spec in &specs {
            add_spectrogram_null_entries(&mut table, spec, &cfg, len, &levels, m, rng)?;
        }
        let _ = writeln!(err, "spectrogram null key: {}", cfg.label(len));
    } else {
        if a.n.is_empty() {
            return Err(invalid_param("no sample sizes given"));
        }
        let mut requests = Vec::new();
        for spec in &specs {
            for &n in &a.n {
                for &(c, side) in &levels {
                    requests.push(QuantileRequest::new(*spec, n, c, side));
                }
            }
        }
        extend_quantile_table(&mut table, &requests, m, rng)?;
    }
    table.metadata_mut().config = Some(echo(cli));
    table.save(&a.out)?;
    let _ = writeln!(err, "wrote {} entries to {}", table.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct Echoed<'a, T: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    config: serde_json::Value,
}

fn cmd_test(cli: &Cli, a: &TestArgs, out: &mut dyn Write) -> Result<()> {
    let test = test_spec(&a.kind, a.null.as_deref(), a.c)?;
    let table = load_table(a.table.as_deref(), &test)?;
    let values = read_sample(&a.input)?;
    test.check_coverage(table.as_ref(), None, values.len())?;
    let outcome: TestOutcome = test.run(&values, table.as_ref())?;
    let doc = Echoed {
        body: &outcome,
        config: echo(cli),
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn cmd_power(cli: &Cli, a: &PowerArgs, err: &mut dyn Write) -> Result<()> {
    let test = test_spec(&a.kind, a.null.as_deref(), a.c)?;
    let table = load_table(a.table.as_deref(), &test)?;
    let config = PowerStudyConfig {
        test,
        data_family: SweepFamily::from_name(&a.family)?,
        parameter_grid: parse_grid(&a.grid)?,
        sample_sizes: a.n.clone(),
        replications: a.reps.unwrap_or(if cli.quick {
            power::QUICK_REPLICATIONS
        } else {
            power::DEFAULT_REPLICATIONS
        }),
        master_seed: a.seed,
    };
    let curve = run_power_study(&config, table.as_ref())?;
    export_curve(&curve, &a.out)?;
    let _ = writeln!(err, "wrote {} points to {}", curve.points.len(), a.out.display());
    Ok(())
}

fn cmd_analyze(cli: &Cli, a: &AnalyzeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let test = test_spec(&a.kind, a.null.as_deref(), a.c)?;
    let table = load_table(a.table.as_deref(), &test)?;
    let signal = signal::read_signal(&a.input, a.fs)?;
    let report: BatchReport = match a.mode {
        Mode::Time => {
            let units = segment_signal(&signal, a.segment)?;
            batch_test(&units, &test, table.as_ref(), None, Domain::Time)?
        }
        Mode::Tf => {
            if !test.kind.uses_table() {
                return Err(invalid_param(format!(
                    "{} has no spectrogram null; use an MG test in tf mode",
                    test.kind
                )));
            }
            let cfg = a.band.tf_config(a.stft.config(), signal.sample_rate());
            let label = cfg.label(signal.len());
            let covered = table.as_ref().is_some_and(|t| t.has_transform(&label));
            if !covered {
                return Err(Error::MissingEntry(format!(
                    "spectrogram-row null {label}; raw-sample critical values do not apply to spectrogram rows, \
                     build them with `greenwood quantiles --tf` using the same geometry"
                )));
            }
            let spec = spectrogram_with(&signal, &cfg.stft)?;
            let rows = frequency_rows(&spec, cfg.f_min, cfg.f_max)?;
            let freqs: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let units: Vec<&[f64]> = rows.iter().map(|r| r.1).collect();
            batch_test_labelled(
                &units,
                Some(&freqs),
                &test,
                table.as_ref(),
                Some(&label),
                Domain::TimeFrequency,
            )?
        }
    };
    let _ = writeln!(
        err,
        "{}: H0 rejected for {:.2}% of {} units ({} rejections)",
        test.kind,
        report.rejection_percentage,
        report.units.len(),
        report.rejections()
    );
    let doc = serde_json::to_string_pretty(&Echoed {
        body: &report,
        config: echo(cli),
    })?;
    match &a.out {
        Some(path) => write_atomic(path, doc.as_bytes())?,
        None => writeln!(out, "{doc}")?,
    }
    Ok(())
}

fn cmd_spectrogram(a: &SpectrogramArgs, err: &mut dyn Write) -> Result<()> {
    let signal = signal::read_signal(&a.input, a.fs)?;
    let spec = spectrogram_with(&signal, &a.stft.config())?;
    write_spectrogram(&spec, &a.out)?;
    let _ = writeln!(
        err,
        "wrote {} bins x {} frames to {}",
        spec.bins(),
        spec.frames(),
        a.out.display()
    );
    Ok(())
}
