//! `zffvad` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zffvad::EntropySource;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Library(#[from] zffvad::Error),
}

#[derive(Parser, Debug)]
#[command(
    name = "zffvad",
    version,
    about = "Zero-frequency-filtering voice activity detector"
)]
struct Cli {
    /// `key = value` configuration file; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(flatten)]
    tuning: Tuning,

    #[command(subcommand)]
    command: Command,
}

/// Parameters left open by the method, exposed as flags.
#[derive(Args, Debug, Default)]
struct Tuning {
    /// Drop voiced segments shorter than this after merging.
    #[arg(long, global = true, value_name = "MS")]
    min_segment_ms: Option<f64>,
    /// Merge voiced segments separated by less than this.
    #[arg(long, global = true, value_name = "MS")]
    merge_gap_ms: Option<f64>,
    /// Signal the spectral entropy is computed from: y0, raw_x, or input.
    #[arg(long, global = true, value_name = "SOURCE")]
    entropy_source: Option<EntropySource>,
    #[arg(long, global = true, value_name = "HZ")]
    f0_min_hz: Option<f64>,
    #[arg(long, global = true, value_name = "HZ")]
    f0_max_hz: Option<f64>,
    /// Pitch period assumed when no periodicity is found.
    #[arg(long, global = true, value_name = "MS")]
    t0_fallback_ms: Option<f64>,
    /// Normalised autocorrelation a pitch peak must exceed.
    #[arg(long, global = true, value_name = "R")]
    t0_min_correlation: Option<f64>,
    /// Scoring frame hop.
    #[arg(long, global = true, value_name = "MS")]
    hop_ms: Option<f64>,
    /// Worker threads for file-level parallelism.
    #[arg(long, short = 'j', global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write `<stem>.seg` voiced-segment files for each input WAV.
    Detect {
        #[arg(required = true, value_name = "WAV")]
        inputs: Vec<PathBuf>,
        #[arg(long, short, value_name = "DIR")]
        out_dir: Option<PathBuf>,
        /// Also write `<stem>.surface.csv` with the per-sample decision surface.
        #[arg(long)]
        dump_surface: bool,
    },
    /// Write the composite signal of each input as a WAV of the same name.
    ExportComposite {
        #[arg(required = true, value_name = "WAV")]
        inputs: Vec<PathBuf>,
        #[arg(long, short, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Score a manifest of `wav<TAB>labels<TAB>condition` lines.
    Evaluate {
        manifest: PathBuf,
        /// Score `<DIR>/<wav stem>.seg` files instead of running detection.
        #[arg(long, value_name = "DIR")]
        external_segments: Option<PathBuf>,
        /// CSV report path [default: eval.csv].
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic labelled corpus and its manifest.
    Synth {
        #[arg(long, short, value_name = "DIR")]
        out_dir: Option<PathBuf>,
        /// Number of utterance layouts.
        #[arg(long, value_name = "N")]
        layouts: Option<usize>,
        /// Comma-separated SNRs in dB; `clean` adds noise-free copies.
        #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
        snr: Option<String>,
        /// Comma-separated noise kinds: white, babble, pink.
        #[arg(long, value_name = "LIST")]
        noise: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "HZ")]
        sample_rate: Option<u32>,
    },
    /// Print the effective configuration in config-file form.
    ShowConfig,
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    let t = &cli.tuning;
    let overrides = [
        (t.min_segment_ms, &mut cfg.pipeline.min_segment_ms),
        (t.merge_gap_ms, &mut cfg.pipeline.merge_gap_ms),
        (t.f0_min_hz, &mut cfg.zff.f0_search_hz.0),
        (t.f0_max_hz, &mut cfg.zff.f0_search_hz.1),
        (t.t0_fallback_ms, &mut cfg.zff.t0_fallback_ms),
        (t.t0_min_correlation, &mut cfg.zff.t0_min_correlation),
        (t.hop_ms, &mut cfg.hop_ms),
    ];
    for (flag, field) in overrides {
        if let Some(v) = flag {
            *field = v;
        }
    }
    if let Some(s) = t.entropy_source {
        cfg.pipeline.entropy_source = s;
    }
    if let Some(j) = t.jobs {
        cfg.jobs = j;
    }
    match &cli.command {
        Command::Detect { out_dir, .. } | Command::ExportComposite { out_dir, .. } => {
            if out_dir.is_some() {
                cfg.out_dir = out_dir.clone();
            }
        }
        Command::Evaluate {
            external_segments,
            out,
            ..
        } => {
            if external_segments.is_some() {
                cfg.external_segments = external_segments.clone();
            }
            if out.is_some() {
                cfg.report = out.clone();
            }
        }
        Command::Synth {
            out_dir,
            layouts,
            snr,
            noise,
            seed,
            sample_rate,
        } => {
            if out_dir.is_some() {
                cfg.out_dir = out_dir.clone();
            }
            if let Some(n) = layouts {
                cfg.synth_layouts = *n;
            }
            if let Some(s) = snr {
                cfg.set("synth_snr_db", s).map_err(CliError::Usage)?;
            }
            if let Some(n) = noise {
                cfg.set("synth_noise", n).map_err(CliError::Usage)?;
            }
            if let Some(s) = seed {
                cfg.synth_seed = *s;
            }
            if let Some(r) = sample_rate {
                cfg.synth_sample_rate_hz = *r;
            }
        }
        Command::ShowConfig => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    let cfg = resolve(&cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
        .install(|| match &cli.command {
            Command::Detect {
                inputs,
                dump_surface,
                ..
            } => commands::detect(inputs, *dump_surface, &cfg),
            Command::ExportComposite { inputs, .. } => commands::export_composite(inputs, &cfg),
            Command::Evaluate { manifest, .. } => commands::evaluate(manifest, &cfg),
            Command::Synth { .. } => commands::synth(&cfg),
            Command::ShowConfig => {
                print!("{}", cfg.to_text());
                Ok(commands::Outcome::default())
            }
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("zffvad: {e}");
            ExitCode::from(2)
        }
    }
}
