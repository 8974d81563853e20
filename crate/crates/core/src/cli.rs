//! The `impnoise` command line.
//!
//! Exit status is 0 on success, 2 for usage errors, 3 for detection and
//! fitting failures and 4 for I/O and file-format failures. Every failure
//! prints a single error-code token as the first line on stderr, followed by
//! a human-readable message.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::builder::TypedValueParser as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::baselines::{fit_bg_memory, fit_class_a, BaselineError};
use crate::chain::StatesPerSystem;
use crate::detect::{
    detect_impulses, DetectError, Detection, ThresholdRule, DEFAULT_THRESHOLD_MULTIPLE,
};
use crate::fit::{fit_chain, FitOptions, FitReport, PipelineError};
use crate::format::{self, FormatError, ModelParams, ParamsFile, MAGIC};
use crate::metrics::{
    compare_report, impulse_spectrum, pearson, trace_spectrum, CompareConfig, MetricsError,
    MetricsReport, Spectrum, Window,
};
use crate::trace::NoiseTrace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ANALYSIS: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "impnoise",
    version,
    about = "Fit, generate and compare impulsive noise models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate model parameters from a recorded trace.
    Fit(FitArgs),
    /// Draw a trace from a parameter file.
    Generate(GenerateArgs),
    /// Detect impulses and list them as CSV.
    Analyze(AnalyzeArgs),
    /// Score model traces against a measured trace.
    Compare(CompareArgs),
    /// Averaged power spectrum as CSV.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    Chain,
    Bg,
    ClassA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowChoice {
    Rect,
    Hann,
}

impl From<WindowChoice> for Window {
    fn from(w: WindowChoice) -> Self {
        match w {
            WindowChoice::Rect => Window::Rectangular,
            WindowChoice::Hann => Window::Hann,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    /// Amplitude threshold as a multiple of the background deviation.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_MULTIPLE, conflicts_with = "universal_threshold")]
    pub threshold_multiple: f64,
    /// Use sigma0 * sqrt(2 ln n) with n the trace length instead.
    #[arg(long)]
    pub universal_threshold: bool,
}

impl ThresholdArgs {
    fn rule(&self, trace_len: usize) -> Result<ThresholdRule, CliError> {
        if self.universal_threshold {
            return Ok(ThresholdRule::Universal {
                window: trace_len as u64,
            });
        }
        if !(self.threshold_multiple.is_finite() && self.threshold_multiple > 0.0) {
            return Err(CliError::Usage(format!(
                "--threshold-multiple must be positive, got {}",
                self.threshold_multiple
            )));
        }
        Ok(ThresholdRule::Fixed {
            multiple: self.threshold_multiple,
        })
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input trace file.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelChoice::Chain)]
    pub model: ModelChoice,
    /// States per impulsive system (chain model only).
    #[arg(long, default_value_t = 6, value_parser = clap::builder::PossibleValuesParser::new(["4", "6"]).map(|s| s.parse::<u32>().expect("listed value")))]
    pub states_per_system: u32,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[arg(long, value_enum, default_value_t = WindowChoice::Rect)]
    pub window: WindowChoice,
    /// Parameter file to write.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Parameter file.
    pub params: PathBuf,
    #[arg(long, default_value_t = 10_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trace file to write.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Input trace file.
    pub input: PathBuf,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    /// Events CSV to write.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Measured trace file.
    #[arg(long)]
    pub measured: PathBuf,
    /// Parameter files (or trace files, used as they are).
    #[arg(long = "model", required = true, num_args = 1..)]
    pub models: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub bins: usize,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    #[arg(long, value_enum, default_value_t = WindowChoice::Rect)]
    pub window: WindowChoice,
    /// Report CSV to write; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Input trace file.
    pub input: PathBuf,
    /// Average over detected impulses only.
    #[arg(long)]
    pub impulses_only: bool,
    /// Transform length; defaults to 1024 for whole traces and to the next
    /// power of two of the longest impulse otherwise.
    #[arg(long)]
    pub fft_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = WindowChoice::Rect)]
    pub window: WindowChoice,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    /// CSV to write; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Format(e) => e.code(),
            CliError::Pipeline(e) => e.code(),
            CliError::Detect(e) => e.code(),
            CliError::Baseline(e) => e.code(),
            CliError::Metrics(e) => e.code(),
            CliError::Io { .. } => "IoError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Format(_) | CliError::Io { .. } => EXIT_IO,
            CliError::Pipeline(_)
            | CliError::Detect(_)
            | CliError::Baseline(_)
            | CliError::Metrics(_) => EXIT_ANALYSIS,
        }
    }
}

fn io_context(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        context: path.display().to_string(),
        source,
    }
}

fn read_trace(path: &Path) -> Result<NoiseTrace, CliError> {
    format::read_trace(path).map_err(|e| match e {
        FormatError::Io(source) => io_context(path)(source),
        other => other.into(),
    })
}

fn read_params(path: &Path) -> Result<ParamsFile, CliError> {
    format::read_params(path).map_err(|e| match e {
        FormatError::Io(source) => io_context(path)(source),
        other => other.into(),
    })
}

fn write_text(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_context(p)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(io_context(Path::new("<stdout>"))),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            let _ = writeln!(stderr, "UsageError");
            let _ = write!(stderr, "{e}");
            return EXIT_USAGE;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.code());
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(
    command: Command,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    match command {
        Command::Fit(a) => cmd_fit(&a, stdout),
        Command::Generate(a) => cmd_generate(&a),
        Command::Analyze(a) => cmd_analyze(&a, stdout),
        Command::Compare(a) => cmd_compare(&a, stdout, stderr),
        Command::Spectrum(a) => cmd_spectrum(&a, stdout),
    }
}

fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let trace = read_trace(&args.input)?;
    let rule = args.threshold.rule(trace.len())?;
    let (model, report) = match args.model {
        ModelChoice::Chain => {
            let options = FitOptions {
                states_per_system: if args.states_per_system == 4 {
                    StatesPerSystem::Four
                } else {
                    StatesPerSystem::Six
                },
                threshold_rule: rule,
                window: args.window.into(),
                ..FitOptions::default()
            };
            let report = fit_chain(&trace, &options)?;
            let text = chain_report_text(&report);
            (ModelParams::Chain(report.config), text)
        }
        ModelChoice::Bg => {
            let p = fit_bg_memory(&trace, rule)?;
            let text = format!(
                "model: bg-memory\nbackground_stay_prob: {}\nimpulse_stay_prob: {}\n\
                 background_variance: {}\nimpulse_variance: {}\nsampling_rate_hz: {}\n",
                p.background_stay_prob,
                p.impulse_stay_prob,
                p.background_variance,
                p.impulse_variance,
                p.sampling_rate_hz
            );
            (ModelParams::BgMemory(p), text)
        }
        ModelChoice::ClassA => {
            let p = fit_class_a(&trace)?;
            let text = format!(
                "model: class-a\nimpulsive_index: {}\npower_ratio: {}\nvariance: {}\n\
                 truncation: {}\nsampling_rate_hz: {}\n",
                p.impulsive_index, p.power_ratio, p.variance, p.truncation, p.sampling_rate_hz
            );
            (ModelParams::ClassA(p), text)
        }
    };
    let file = ParamsFile::new(model);
    let toml = file.to_toml()?;
    std::fs::write(&args.output, toml).map_err(io_context(&args.output))?;
    write_text(None, &report, stdout)
}

fn chain_report_text(r: &FitReport) -> String {
    let c = &r.config;
    let d = &r.diagnostics;
    let mut s = String::new();
    let _ = writeln!(s, "model: partitioned-chain");
    let _ = writeln!(s, "states_per_system: {}", c.states_per_system.count());
    let _ = writeln!(s, "background_variance: {}", c.background_variance);
    let _ = writeln!(s, "background_prob: {}", r.moments.background_prob);
    let _ = writeln!(
        s,
        "amplitude_threshold: {}",
        r.detection.amplitude_threshold
    );
    let _ = writeln!(s, "duration_threshold: {}", r.detection.duration_threshold);
    let _ = writeln!(
        s,
        "events: {} ({} truncated)",
        d.event_count, d.truncated_count
    );
    let _ = writeln!(s, "background_samples: {}", d.background_sample_count);
    let _ = writeln!(
        s,
        "oscillation_freq_cycles_per_sample: {}",
        d.oscillation_freq
    );
    let _ = writeln!(
        s,
        "oscillation_freq_hz: {}",
        d.oscillation_freq * c.sampling_rate_hz
    );
    let _ = writeln!(s, "stay_prob: {}", c.stay_prob);
    let _ = writeln!(
        s,
        "group,lo,hi,count,amplitude_mean,amplitude_variance,mean_duration,entry_prob,exit_prob"
    );
    for (i, g) in r.groups.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            g.group,
            g.interval.0,
            g.interval.1,
            g.count,
            g.amplitude_mean,
            g.amplitude_variance,
            g.mean_duration,
            c.entry_probs[i],
            c.systems[i].exit_prob
        );
    }
    for w in &d.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let params = read_params(&args.params)?;
    let trace = params.model.generate(args.samples, args.seed)?;
    let file = File::create(&args.output).map_err(io_context(&args.output))?;
    format::write_trace_to(BufWriter::new(file), &trace)?;
    Ok(())
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Events as CSV, one row per impulse.
pub fn events_csv(detection: &Detection) -> String {
    let mut s = String::from(
        "index,start_sample,duration_samples,amplitude,iat_samples,iit_samples,truncated\n",
    );
    for (i, e) in detection.events.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{},{}",
            e.start,
            e.duration,
            e.amplitude,
            opt(e.iat),
            opt(e.iit),
            e.truncated
        );
    }
    s
}

fn duration_amplitude_pearson(detection: &Detection) -> Option<f64> {
    let durations: Vec<f64> = detection.events.iter().map(|e| e.duration as f64).collect();
    let amplitudes: Vec<f64> = detection.events.iter().map(|e| e.amplitude).collect();
    pearson(&durations, &amplitudes).ok()
}

fn cmd_analyze(args: &AnalyzeArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let trace = read_trace(&args.input)?;
    let detection = detect_impulses(&trace, args.threshold.rule(trace.len())?)?;
    std::fs::write(&args.output, events_csv(&detection)).map_err(io_context(&args.output))?;
    let mut s = String::new();
    let _ = writeln!(s, "samples: {}", trace.len());
    let _ = writeln!(s, "sampling_rate_hz: {}", trace.sampling_rate_hz());
    let _ = writeln!(s, "background_sd: {}", detection.moments.background_sd());
    let _ = writeln!(
        s,
        "amplitude_threshold: {}",
        detection.config.amplitude_threshold
    );
    let _ = writeln!(
        s,
        "duration_threshold: {}",
        detection.config.duration_threshold
    );
    let _ = writeln!(s, "event_count: {}", detection.events.len());
    let _ = writeln!(
        s,
        "truncated_events: {}",
        detection.events.iter().filter(|e| e.truncated).count()
    );
    let _ = writeln!(
        s,
        "pearson_duration_amplitude: {}",
        duration_amplitude_pearson(&detection).map_or("undefined".to_string(), |r| r.to_string())
    );
    let _ = writeln!(
        s,
        "impulse_sample_fraction: {}",
        detection.impulse_sample_fraction()
    );
    write_text(None, &s, stdout)
}

fn is_trace_file(path: &Path) -> bool {
    let mut magic = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map(|()| magic == MAGIC)
        .unwrap_or(false)
}

fn model_trace(path: &Path, len: usize, seed: u64) -> Result<NoiseTrace, CliError> {
    if is_trace_file(path) {
        return read_trace(path);
    }
    Ok(read_params(path)?.model.generate(len, seed)?)
}

/// Report rows: `model,characteristic,metric,value`. KL values are in nats.
pub fn report_csv(reports: &[MetricsReport]) -> String {
    let mut s = String::from("model,characteristic,metric,value\n");
    for r in reports {
        for c in &r.characteristics {
            match &c.scores {
                Ok(v) => {
                    let _ = writeln!(s, "{},{},kl_nats,{}", r.model, c.characteristic, v.kl);
                    let _ = writeln!(s, "{},{},mse_cdf,{}", r.model, c.characteristic, v.mse_cdf);
                }
                Err(_) => {
                    let _ = writeln!(s, "{},{},kl_nats,", r.model, c.characteristic);
                    let _ = writeln!(s, "{},{},mse_cdf,", r.model, c.characteristic);
                }
            }
        }
        for g in &r.band_gaps {
            let value = g.gap_db.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},spectrum,band_gap_db_{}hz,{value}",
                r.model, g.center_hz
            );
        }
        let value = r.pearson.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},duration_amplitude,pearson,{value}", r.model);
    }
    s
}

fn csv_field(name: &str) -> String {
    if name.contains([',', '"', '\n']) {
        format!("\"{}\"", name.replace('"', "\"\""))
    } else {
        name.to_string()
    }
}

fn cmd_compare(
    args: &CompareArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    if args.bins == 0 {
        return Err(CliError::Usage("--bins must be positive".into()));
    }
    let measured = read_trace(&args.measured)?;
    let config = CompareConfig {
        bins: args.bins,
        threshold_rule: args.threshold.rule(measured.len())?,
        window: args.window.into(),
        ..CompareConfig::default()
    };
    let mut models = Vec::new();
    let mut failures = Vec::new();
    for path in &args.models {
        let name = csv_field(&path.display().to_string());
        match model_trace(path, measured.len(), args.seed) {
            Ok(t) => models.push((name, t)),
            Err(e) => {
                let _ = writeln!(stderr, "warning: {}: {}: {e}", e.code(), path.display());
                failures.push(format!("{name},model,error,{}\n", e.code()));
            }
        }
    }
    let reports = compare_report(&measured, &models, &config)?;
    for r in &reports {
        if let Some(e) = &r.detection_error {
            let _ = writeln!(
                stderr,
                "warning: {}: detection failed on model trace: {e}",
                r.model
            );
        }
    }
    let mut csv = report_csv(&reports);
    failures.iter().for_each(|f| csv.push_str(f));
    write_text(args.output.as_deref(), &csv, stdout)
}

/// `frequency_hz,power_db` rows, `fft_size / 2 + 1` of them.
pub fn spectrum_csv(spectrum: &Spectrum) -> String {
    let mut s = String::from("frequency_hz,power_db\n");
    for (f, p) in spectrum.frequencies_hz().iter().zip(spectrum.power_db()) {
        let _ = writeln!(s, "{f},{p}");
    }
    s
}

fn cmd_spectrum(args: &SpectrumArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let trace = read_trace(&args.input)?;
    let window = args.window.into();
    let spectrum = if args.impulses_only {
        let detection = detect_impulses(&trace, args.threshold.rule(trace.len())?)?;
        let longest = detection
            .events
            .iter()
            .map(|e| e.duration)
            .max()
            .unwrap_or(1);
        let fft_size = args.fft_size.unwrap_or(longest.next_power_of_two().max(2));
        impulse_spectrum(&detection.events, &trace, fft_size, window)?
    } else {
        trace_spectrum(&trace, args.fft_size.unwrap_or(1024), window)?
    };
    write_text(args.output.as_deref(), &spectrum_csv(&spectrum), stdout)
}
