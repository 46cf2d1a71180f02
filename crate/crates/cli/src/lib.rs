//! Command-line front end for the `dmnls` solver.
//!
//! Every subcommand reads a TOML config, writes its outputs under `--out`
//! and records a `manifest.json` from which the run can be repeated with
//! `dmnls rerun`.

// `!(x > 0)` style checks are meant to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use dmnls::lab::{RunManifest, RunStatus};

pub mod commands;
pub mod config;
pub mod validate;

pub use config::RunConfig;

/// Exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// A run failed or a validation check did not pass.
pub const EXIT_FAILURE: i32 = 1;
/// The config or command line was rejected.
pub const EXIT_CONFIG: i32 = 2;
/// Interrupted by Ctrl-C.
pub const EXIT_INTERRUPTED: i32 = 130;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] dmnls::Error),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Run(dmnls::Error::InvalidParameter { .. } | dmnls::Error::Config(_)) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }

    fn status(&self) -> RunStatus {
        match self {
            CliError::Validation(_) => RunStatus::ValidationFailed,
            _ => RunStatus::Failed,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dmnls", version, about = "Dispersion-managed NLS solver and experiments")]
struct Cli {
    /// Size of the worker pool (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress the summary printed on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one initial datum and record diagnostics and checkpoints.
    Simulate(RunArgs),
    /// Epsilon sweep against the averaged equation (or the zero-mean closed form).
    Sweep(RunArgs),
    /// Compute the ground state Q.
    Groundstate(RunArgs),
    /// Mass-threshold study for blow-up.
    Blowup(RunArgs),
    /// Run the built-in oracle checks.
    Validate(RunArgs),
    /// Repeat a run from its manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Seed for randomized checks.
    #[arg(long)]
    seed: Option<u64>,
}

/// The subcommands that produce a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Simulate,
    Sweep,
    Groundstate,
    Blowup,
    Validate,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Sweep => "sweep",
            Kind::Groundstate => "groundstate",
            Kind::Blowup => "blowup",
            Kind::Validate => "validate",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Kind::Simulate,
            Kind::Sweep,
            Kind::Groundstate,
            Kind::Blowup,
            Kind::Validate,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

/// What a finished command reports back.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: Vec<String>,
    /// Set when the run finished but a check it performs did not pass.
    pub failure: Option<String>,
}

/// Output directory plus the settings shared by every command.
pub struct RunContext {
    pub out: PathBuf,
    pub seed: u64,
}

impl RunContext {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

struct Active {
    manifest: RunManifest,
    path: PathBuf,
    start: Instant,
}

static ACTIVE: Mutex<Option<Active>> = Mutex::new(None);

fn install_interrupt_handler() {
    // a second install (several runs in one process) is harmless
    let _ = ctrlc::set_handler(|| {
        if let Ok(mut guard) = ACTIVE.lock() {
            if let Some(active) = guard.as_mut() {
                active.manifest.status = RunStatus::Aborted;
                active.manifest.wall_time = active.start.elapsed().as_secs_f64();
                active.manifest.message = Some("interrupted".into());
                let _ = active.manifest.write_to(&active.path);
            }
        }
        eprintln!("interrupted");
        std::process::exit(EXIT_INTERRUPTED);
    });
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.exit_code() {
                0 => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be a positive integer");
            return EXIT_CONFIG;
        }
        // fails only if a pool already exists, in which case it is reused
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let prepared = match cli.command {
        Command::Rerun { manifest, out } => from_manifest(&manifest).map(|(kind, cfg, seed)| (kind, cfg, seed, out)),
        Command::Simulate(a) => from_args(Kind::Simulate, a),
        Command::Sweep(a) => from_args(Kind::Sweep, a),
        Command::Groundstate(a) => from_args(Kind::Groundstate, a),
        Command::Blowup(a) => from_args(Kind::Blowup, a),
        Command::Validate(a) => from_args(Kind::Validate, a),
    };
    let (kind, cfg, seed, out) =
        match prepared.and_then(|(k, cfg, seed, out)| cfg.validate().map(|_| (k, cfg, seed, out))) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("error: {e}");
                return e.exit_code();
            }
        };
    execute(kind, &cfg, seed, &out, cli.quiet)
}

fn from_args(kind: Kind, a: RunArgs) -> Result<(Kind, RunConfig, u64, PathBuf), CliError> {
    let cfg = RunConfig::load(&a.config)?;
    Ok((kind, cfg, a.seed.unwrap_or(0), a.out))
}

fn from_manifest(path: &Path) -> Result<(Kind, RunConfig, u64), CliError> {
    let manifest = RunManifest::read_from(path).map_err(|e| CliError::Config(e.to_string()))?;
    let kind = Kind::from_name(&manifest.command)
        .ok_or_else(|| CliError::Config(format!("manifest names an unknown command `{}`", manifest.command)))?;
    let cfg = RunConfig::from_json(&manifest.config)?;
    if dmnls::lab::config_hash(&cfg.to_json()) != manifest.config_hash {
        return Err(CliError::Config(
            "manifest config does not match its recorded hash".into(),
        ));
    }
    Ok((kind, cfg, manifest.seed.unwrap_or(0)))
}

/// Runs a validated config and writes the manifest around it.
pub fn execute(kind: Kind, cfg: &RunConfig, seed: u64, out: &Path, quiet: bool) -> i32 {
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_FAILURE;
    }
    let manifest_path = out.join("manifest.json");
    let mut manifest = RunManifest::new(kind.name(), cfg.to_json(), git_describe());
    manifest.seed = Some(seed);
    if let Err(e) = manifest.write_to(&manifest_path) {
        eprintln!("error: {e}");
        return EXIT_FAILURE;
    }
    let start = Instant::now();
    *ACTIVE.lock().expect("manifest lock") = Some(Active {
        manifest: manifest.clone(),
        path: manifest_path.clone(),
        start,
    });
    install_interrupt_handler();

    let ctx = RunContext {
        out: out.to_path_buf(),
        seed,
    };
    let result = match kind {
        Kind::Simulate => commands::simulate(cfg, &ctx),
        Kind::Sweep => commands::sweep(cfg, &ctx),
        Kind::Groundstate => commands::groundstate(cfg, &ctx),
        Kind::Blowup => commands::blowup(cfg, &ctx),
        Kind::Validate => validate::validate(cfg, &ctx),
    };
    let result = result.and_then(|o| match o.failure {
        Some(msg) => {
            if !quiet {
                o.summary.iter().for_each(|l| println!("{l}"));
            }
            Err(CliError::Validation(msg))
        }
        None => Ok(o),
    });

    // take the slot so a late Ctrl-C cannot overwrite the final manifest
    ACTIVE.lock().expect("manifest lock").take();
    manifest.wall_time = start.elapsed().as_secs_f64();
    let code = match &result {
        Ok(o) => {
            manifest.status = RunStatus::Completed;
            if !quiet {
                o.summary.iter().for_each(|l| println!("{l}"));
            }
            EXIT_OK
        }
        Err(e) => {
            manifest.status = e.status();
            manifest.message = Some(e.to_string());
            eprintln!("error: {e}");
            match e.exit_code() {
                EXIT_OK => EXIT_FAILURE,
                c => c,
            }
        }
    };
    if let Err(e) = manifest.write_to(&manifest_path) {
        eprintln!("error: {e}");
        return EXIT_FAILURE;
    }
    code
}
