//! The `probattn` command line.

pub mod bench;
pub mod error;

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use probattn_server::ServerConfig;
use probattn_verify::VerifyOptions;
use serde::de::DeserializeOwned;

pub use bench::{BenchConfig, RunManifest};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "probattn", version, about = "Probabilistic attention: verification, benchmarks and the segmentation service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the numeric core against extended-precision oracles.
    Verify(VerifyArgs),
    /// Mean IoU against simulated clicks over a dataset.
    Bench(BenchArgs),
    /// Write a synthetic segmentation dataset.
    GenSynth(GenSynthArgs),
    /// Run the HTTP service until interrupted.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative perturbation of every checked output (negative control).
    #[arg(long, default_value_t = 0.0)]
    pub perturb: f64,
    #[arg(long)]
    pub max_n: Option<usize>,
    #[arg(long)]
    pub max_d: Option<usize>,
    #[arg(long)]
    pub max_m: Option<usize>,
    /// Run only suites whose name contains this (repeatable).
    #[arg(long)]
    pub only: Vec<String>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub report: ReportFormat,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    /// Dataset manifest written by `gen-synth` or by hand.
    #[arg(long)]
    pub manifest: PathBuf,
    /// JSON bench config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_clicks: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output CSV; a JSON curve and a run manifest are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct ServeArgs {
    /// Port to listen on; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// JSON server config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory served under `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Seed for session ids.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Verify(args) => verify(args),
        Command::Bench(args) => bench::run(args).map(|_| ()),
        Command::GenSynth(args) => gen_synth(args),
        Command::Serve(args) => serve(args),
    }
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn verify(args: VerifyArgs) -> Result<(), CliError> {
    let defaults = VerifyOptions::default();
    if !(args.perturb.is_finite() && args.perturb >= 0.0) {
        return Err(CliError::Usage("--perturb must be a non-negative number".into()));
    }
    let opts = VerifyOptions {
        seed: args.seed.unwrap_or(defaults.seed),
        perturb: args.perturb,
        max_n: args.max_n.unwrap_or(defaults.max_n),
        max_d: args.max_d.unwrap_or(defaults.max_d),
        max_m: args.max_m.unwrap_or(defaults.max_m),
        only: args.only,
    };
    if opts.max_n < 2 || opts.max_d < 1 || opts.max_m < 1 {
        return Err(CliError::Usage("instance sizes need max_n >= 2, max_d >= 1, max_m >= 1".into()));
    }
    let report = probattn_verify::run(&opts);
    if report.suites.is_empty() {
        return Err(CliError::Usage("--only matched no suite".into()));
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(out) = &args.out {
        write_file(out, format!("{json}\n"))?;
    }
    let mut stdout = std::io::stdout().lock();
    match args.report {
        ReportFormat::Json => {
            let _ = writeln!(stdout, "{json}");
        }
        ReportFormat::Text => {
            for s in &report.suites {
                let _ = writeln!(
                    stdout,
                    "{:<4} {:<20} cases={:<6} max_error={:.3e} tol={:.0e} time={:.2}s",
                    if s.passed { "PASS" } else { "FAIL" },
                    s.name,
                    s.cases,
                    s.max_error,
                    s.tolerance,
                    s.elapsed_s
                );
                for f in &s.failures {
                    let _ = writeln!(stdout, "       {f}");
                }
            }
            let _ = writeln!(stdout, "coverage:");
            for (invariant, suite) in report.coverage() {
                let _ = writeln!(stdout, "  {invariant} [{suite}]");
            }
            let _ = writeln!(stdout, "{}", if report.passed { "all suites passed" } else { "verification FAILED" });
        }
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Verification)
    }
}

fn gen_synth(args: GenSynthArgs) -> Result<(), CliError> {
    if args.size < probattn::playground::synth::MIN_SYNTH_SIZE {
        return Err(CliError::Usage(format!(
            "--size must be at least {}",
            probattn::playground::synth::MIN_SYNTH_SIZE
        )));
    }
    let path = probattn::playground::write_dataset(&args.out_dir, args.count, args.size, args.seed)
        .map_err(|e| CliError::engine(&args.out_dir, e))?;
    println!("{}", path.display());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let mut config: ServerConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => ServerConfig::default(),
    };
    if args.static_dir.is_some() {
        config.static_dir = args.static_dir;
    }
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    config
        .session
        .validate()
        .map_err(|e| CliError::Usage(format!("session config: {e}")))?;
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io("tokio runtime", e))?;
    runtime.block_on(async move {
        let listener = probattn_server::bind(addr).await.map_err(|e| CliError::io(addr.to_string(), e))?;
        let local = listener.local_addr().map_err(|e| CliError::io(addr.to_string(), e))?;
        println!("listening on http://{local}");
        let _ = std::io::stdout().flush();
        tracing::info!(%local, "serving");
        probattn_server::serve(listener, config, shutdown_signal())
            .await
            .map_err(|e| CliError::io(local.to_string(), e))?;
        tracing::info!("shut down");
        Ok(())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
