use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use forensic_kg::fixtures::{generate, Scenario, DEFAULT_FIXTURE_DEVICE};
use forensic_kg::flatten::DEFAULT_SAMPLE_INTERVAL;
use forensic_kg::ingest::ForensicImage;
use forensic_kg::pipeline::{run_pipeline, EngineConfig, RunConfig, RunOptions};
use forensic_kg::refine::{DEFAULT_BATCH_SIZE, DEFAULT_MAX_IN_FLIGHT, DEFAULT_MIN_CONFIDENCE, DEFAULT_ZONE};
use forensic_kg::service::{serve, ServiceConfig, DEFAULT_PORT};
use forensic_kg::store::{write_json, Stage};

const EXIT_FAILURE: u8 = 1;
const EXIT_UNREFINED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "forensic-kg",
    version,
    about = "Forensic knowledge-graph pipeline for Android SQLite evidence"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discover SQLite databases under an image root.
    Scan {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        device_id: String,
        /// Write the manifest here instead of stdout.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Run through flattening.
    Flatten(RunArgs),
    /// Run through refinement.
    Refine(RunArgs),
    /// Run through consolidation and graph construction.
    Graph(RunArgs),
    /// Run through evaluation.
    Evaluate(RunArgs),
    /// Run every stage.
    Run(RunArgs),
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        bind: IpAddr,
        #[arg(long, default_value = "runs")]
        data_dir: PathBuf,
        /// Directory of static assets served outside the API prefix.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Build a synthetic image and ground-truth manifest.
    FixtureGen {
        #[arg(long, value_parser = clap::value_parser!(Scenario))]
        scenario: Scenario,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = DEFAULT_FIXTURE_DEVICE)]
        device_id: String,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_INTERVAL)]
        sample_interval: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineKind {
    Mock,
    Remote,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    device_id: String,
    /// Data directory that receives the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_INTERVAL)]
    sample_interval: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_CONFIDENCE)]
    min_confidence: u8,
    #[arg(long, value_enum, default_value = "mock")]
    engine: EngineKind,
    /// Chat-completions endpoint for the remote engine.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long, default_value_t = 500)]
    backoff_ms: u64,
    #[arg(long, default_value = DEFAULT_ZONE)]
    zone: String,
    /// Replaces the built-in denylist; repeat or comma-separate entries.
    #[arg(long, value_delimiter = ',')]
    denylist: Option<Vec<String>>,
    /// Disables path exclusion entirely.
    #[arg(long, conflicts_with = "denylist")]
    no_denylist: bool,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Counts unverified, unmatched hypotheses as incorrect.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_IN_FLIGHT)]
    max_in_flight: usize,
    /// Pins the timestamp written into run and report files.
    #[arg(long)]
    created_at: Option<String>,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::new(&self.root, &self.device_id);
        cfg.sample_interval = self.sample_interval;
        cfg.min_confidence = self.min_confidence;
        cfg.engine = match self.engine {
            EngineKind::Mock => EngineConfig::Mock,
            EngineKind::Remote => EngineConfig::Remote {
                endpoint: self
                    .endpoint
                    .clone()
                    .context("--endpoint is required for the remote engine")?,
                model: self
                    .model
                    .clone()
                    .context("--model is required for the remote engine")?,
                max_retries: self.max_retries,
                backoff_ms: self.backoff_ms,
            },
        };
        cfg.zone = self.zone.clone();
        cfg.denylist = if self.no_denylist {
            Some(Vec::new())
        } else {
            self.denylist.clone()
        };
        cfg.ground_truth = self.ground_truth.clone();
        cfg.strict = self.strict;
        cfg.batch_size = self.batch_size;
        cfg.max_in_flight = self.max_in_flight;
        Ok(cfg)
    }
}

fn run_stages(args: &RunArgs, stop_after: Option<Stage>) -> anyhow::Result<u8> {
    let cfg = args.config()?;
    let mut opts = RunOptions::new(&args.out);
    opts.created_at = args.created_at.clone();
    opts.stop_after = stop_after;
    let record = run_pipeline(&cfg, &opts)?;
    println!("{}", serde_json::to_string_pretty(&record)?);
    eprintln!("run {} in {}", record.run_id, args.out.join(&record.run_id).display());
    if record.counts.unrefined_batches > 0 {
        eprintln!(
            "[refine] {} batch(es) could not be refined; see the refine report",
            record.counts.unrefined_batches
        );
        return Ok(EXIT_UNREFINED);
    }
    Ok(0)
}

fn execute(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Scan {
            root,
            device_id,
            manifest,
        } => {
            let report = ForensicImage::new(root, device_id).scan().context("[scan]")?;
            for w in &report.warnings {
                eprintln!("[scan] skipped {}: {}", w.path, w.reason);
            }
            match manifest {
                Some(path) => {
                    write_json(&path, &report.databases)?;
                    eprintln!("{} database(s) written to {}", report.databases.len(), path.display());
                }
                None => println!("{}", serde_json::to_string_pretty(&report.databases)?),
            }
            Ok(0)
        }
        Command::Flatten(a) => run_stages(&a, Some(Stage::Flattened)),
        Command::Refine(a) => run_stages(&a, Some(Stage::Refined)),
        Command::Graph(a) => run_stages(&a, Some(Stage::Graphed)),
        Command::Evaluate(a) | Command::Run(a) => run_stages(&a, None),
        Command::Serve {
            port,
            bind,
            data_dir,
            static_dir,
        } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(
                ServiceConfig { data_dir, static_dir },
                SocketAddr::new(bind, port),
            ))
            .context("[serve]")?;
            Ok(0)
        }
        Command::FixtureGen {
            scenario,
            out,
            device_id,
            sample_interval,
        } => {
            let m = generate(scenario, &out, &device_id, sample_interval).context("[fixture-gen]")?;
            eprintln!(
                "{} artifact(s) planted; image at {}, ground truth at {}",
                m.planted.len(),
                m.image_root.display(),
                m.ground_truth_path.display()
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
