//! Benchmark driver: latency, round-trip and demo pipeline scenarios.
//!
//! Exit status is 0 on success, 2 for an invalid configuration and 3 when a
//! scenario fails.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use fastcycle::bench::{self, BenchConfig, BenchError, DemoConfig, Mode, Transport};
use fastcycle::component::{load_manifest, load_manifest_file, ManifestOptions};
use fastcycle::core::{render_report, ReportFormat};

const EXIT_INVALID: u8 = 2;
const EXIT_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "fastcycle-bench",
    version,
    about = "Zero-copy pub/sub benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    scenario: Scenario,
}

#[derive(Subcommand, Debug)]
enum Scenario {
    /// One-way publish-to-callback latency.
    Latency(Options),
    /// Ping/echo round trip.
    Rtt(Options),
    /// Four-stage component pipeline.
    Demo(Options),
}

#[derive(clap::Args, Debug)]
struct Options {
    /// Payload sizes in bytes.
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_SIZES)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    #[arg(long, default_value_t = 1000)]
    interval_us: u64,
    #[arg(long, default_value_t = 100)]
    warmup: usize,
    #[arg(long, value_enum, default_value_t = TransportArg::ZeroCopy)]
    transport: TransportArg,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pipeline manifest (demo only); the bundled one is used otherwise.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Seed for payload content.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TransportArg {
    ZeroCopy,
    ForcedCopy,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Csv,
    Table,
}

enum Failure {
    Invalid(String),
    Scenario(String),
}

impl From<BenchError> for Failure {
    fn from(err: BenchError) -> Self {
        match err {
            BenchError::InvalidConfig(msg) => Failure::Invalid(msg),
            other => Failure::Scenario(other.to_string()),
        }
    }
}

fn bench_config(opts: &Options, mode: Mode) -> BenchConfig {
    let defaults = BenchConfig::default();
    BenchConfig {
        payload_sizes: opts.sizes.clone(),
        samples: opts.samples,
        interval: Duration::from_micros(opts.interval_us),
        warmup: opts.warmup,
        mode,
        transport: match opts.transport {
            TransportArg::ZeroCopy => Transport::ZeroCopy,
            TransportArg::ForcedCopy => Transport::ForcedCopy,
        },
        worker_count: opts.workers.unwrap_or(defaults.worker_count),
        seed: opts.seed,
        echo: true,
    }
}

fn format(opts: &Options) -> ReportFormat {
    match opts.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Table => ReportFormat::Table,
    }
}

fn run_bench(opts: &Options, mode: Mode) -> Result<String, Failure> {
    if opts.manifest.is_some() {
        return Err(Failure::Invalid(
            "--manifest only applies to the demo scenario".into(),
        ));
    }
    let config = bench_config(opts, mode);
    config.validate()?;
    let run = bench::run(&config)?;
    for warning in run.lost_sample_warnings() {
        eprintln!("warning: {warning}");
    }
    let summaries = run
        .summaries()
        .map_err(|e| Failure::Scenario(e.to_string()))?;
    Ok(render_report(&summaries, format(opts)))
}

fn run_demo(opts: &Options) -> Result<(String, bool), Failure> {
    let manifest = match &opts.manifest {
        Some(path) => load_manifest_file(path, ManifestOptions::default()),
        None => load_manifest(bench::DEMO_MANIFEST),
    }
    .map_err(|e| Failure::Invalid(e.to_string()))?;

    let defaults = DemoConfig::default();
    let payload_size = match opts.sizes.as_slice() {
        [size] => *size,
        _ if opts.sizes == bench::DEFAULT_SIZES => defaults.payload_size,
        _ => return Err(Failure::Invalid("demo takes a single --sizes value".into())),
    };
    let config = DemoConfig {
        messages: opts.samples,
        interval: Duration::from_micros(opts.interval_us),
        payload_size,
        worker_count: opts.workers.unwrap_or(defaults.worker_count),
        ..defaults
    };
    let report = bench::demo_pipeline(&manifest, &config)?;

    let mut ok = true;
    for (name, reason) in &report.failed {
        eprintln!("component {name} failed: {reason}");
        ok = false;
    }
    let stalled: Vec<_> = report.stalled().collect();
    if let Some(first) = stalled.first() {
        eprintln!(
            "{} of {} messages stalled; first missing hop: {}",
            stalled.len(),
            report.traces.len(),
            first.missing.unwrap_or("?")
        );
        ok = false;
    }
    let text = match report.summary(payload_size) {
        Ok(summary) => render_report(&[summary], format(opts)),
        Err(_) => render_report(&[], format(opts)),
    };
    Ok((text, ok))
}

fn emit(opts: &Options, text: &str) -> Result<(), Failure> {
    let written = match &opts.out {
        Some(path) => fs::write(path, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    };
    written.map_err(|e| Failure::Scenario(format!("cannot write report: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.scenario {
        Scenario::Latency(opts) => run_bench(opts, Mode::Latency).and_then(|t| emit(opts, &t)),
        Scenario::Rtt(opts) => run_bench(opts, Mode::Rtt).and_then(|t| emit(opts, &t)),
        Scenario::Demo(opts) => run_demo(opts).and_then(|(t, ok)| {
            emit(opts, &t)?;
            if ok {
                Ok(())
            } else {
                Err(Failure::Scenario("pipeline incomplete".into()))
            }
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Scenario(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
