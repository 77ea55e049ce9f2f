//! The `lsrp` command line: registration, a demo TCP server and client, and
//! the Monte-Carlo validation drivers.

use std::fs;
use std::io::{self, BufRead, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use zeroize::Zeroizing;

use lsrp_core::credstore::{CredentialStore, StoreError};
use lsrp_core::harness::{self, HarnessError, HarnessReport, SimulationConfig};
use lsrp_core::params::{BoundPolicy, ParamsError, ProtocolParams};
use lsrp_core::regev::RegevParams;
use lsrp_core::sampler::SEED_LEN;
use lsrp_core::srp::{self, ProtocolContext, ProtocolError};
use lsrp_core::wire::{matrix_digest, FrameError};

pub mod net;

#[derive(Debug, Parser)]
#[command(name = "lsrp", version, about = "LWE-based secure remote password")]
pub struct Cli {
    /// Parameter file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Accept parameters whose noise budget exceeds the extractor tolerance.
    #[arg(long, global = true)]
    pub unsafe_params: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct StoreArg {
    #[arg(long, env = "LSRP_STORE", default_value = "lsrp-store.bin")]
    pub store: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create or replace the verifier for an id.
    Register {
        #[arg(long)]
        id: String,
        /// Read the password from this file instead of prompting.
        #[arg(long)]
        password_file: Option<PathBuf>,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Serve handshakes over TCP until killed.
    Serve {
        #[command(flatten)]
        store: StoreArg,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
    /// Authenticate against a running server.
    Login {
        #[arg(long)]
        id: String,
        #[arg(long)]
        password_file: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        server: String,
    },
    /// Run seeded in-process handshakes and report agreement.
    Simulate {
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value = "0")]
        seed: String,
        /// Record the key-material gap of every trial.
        #[arg(long)]
        instrument: bool,
        /// Perturb one password byte per trial.
        #[arg(long)]
        wrong_password: bool,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Encrypt and decrypt random bits under one Regev key.
    Regev {
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value = "0")]
        seed: String,
        #[arg(long)]
        zero_noise: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Exhaustively check extractor agreement within the tolerance.
    LemmaOracle {
        #[arg(long, value_delimiter = ',', default_values_t = [13u64, 41, 101])]
        q: Vec<u64>,
        /// Override the tolerance `floor(q/4) - 2`.
        #[arg(long, allow_hyphen_values = true)]
        tolerance: Option<i64>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("server unreachable at {addr}: {source}")]
    Unreachable {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error("transport: {0}")]
    Frame(#[from] FrameError),
    #[error("server rejected the login: {0}")]
    Rejected(String),
    #[error("authentication failed")]
    VerificationFailed,
    #[error("unexpected reply: {0}")]
    Unexpected(String),
    #[error("lemma oracle found violations")]
    Violations,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::VerificationFailed | Self::Rejected(_) => 2,
            Self::Protocol(ProtocolError::VerificationFailed) => 2,
            Self::Unreachable { .. } => 3,
            _ => 1,
        }
    }
}

pub(crate) fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

pub fn load_context(cli: &Cli) -> Result<Arc<ProtocolContext>, CliError> {
    let params = match &cli.config {
        Some(path) => ProtocolParams::from_config_file(path)?,
        None => ProtocolParams::default(),
    };
    let policy = if cli.unsafe_params {
        BoundPolicy::AllowUnsafe
    } else {
        BoundPolicy::Strict
    };
    Ok(Arc::new(ProtocolContext::with_policy(params, policy)?))
}

/// `SHAKE-256("LSRP-master" || text)[..32]`, so any string can seed a run.
pub fn master_seed(text: &str) -> [u8; SEED_LEN] {
    let mut s = lsrp_core::sampler::StreamExpander::new(b"LSRP-master", text.as_bytes());
    s.next_seed()
}

/// Reads a password from `file` with one trailing newline removed, or
/// prompts for it. Passwords never come from the command line.
pub fn read_password(file: Option<&Path>) -> Result<Zeroizing<Vec<u8>>, CliError> {
    let mut raw = match file {
        Some(path) => {
            Zeroizing::new(fs::read(path).map_err(io_err(format!("reading {}", path.display())))?)
        }
        None if io::stdin().is_terminal() => Zeroizing::new(
            rpassword::prompt_password("password: ")
                .map_err(io_err("reading password"))?
                .into_bytes(),
        ),
        None => {
            let mut line = String::new();
            io::stdin()
                .lock()
                .read_line(&mut line)
                .map_err(io_err("reading password from stdin"))?;
            Zeroizing::new(std::mem::take(&mut line).into_bytes())
        }
    };
    if raw.last() == Some(&b'\n') {
        raw.pop();
        if raw.last() == Some(&b'\r') {
            raw.pop();
        }
    }
    Ok(raw)
}

fn write_csv(path: &Path, header: &str, row: &str) -> Result<(), CliError> {
    fs::write(path, format!("{header}\n{row}\n"))
        .map_err(io_err(format!("writing {}", path.display())))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Register {
            id,
            password_file,
            store,
        } => {
            let ctx = load_context(&cli)?;
            let password = read_password(password_file.as_deref())?;
            let record = srp::register(&ctx, id.as_bytes(), &password)?;
            let salt = hex::encode(&record.salt);
            let digest = matrix_digest(&record.verifier);
            let store = CredentialStore::open(&store.store, ctx.params())?;
            store.put(record)?;
            println!("registered id={id} salt={salt} verifier_digest={digest}");
            Ok(())
        }
        Command::Serve { store, listen } => {
            let ctx = load_context(&cli)?;
            let store = CredentialStore::open(&store.store, ctx.params())?;
            net::serve(ctx, Arc::new(store), listen)
        }
        Command::Login {
            id,
            password_file,
            server,
        } => {
            let ctx = load_context(&cli)?;
            let password = read_password(password_file.as_deref())?;
            let digest = net::login(ctx, id, &password, server)?;
            println!("auth ok id={id} key_digest={digest}");
            Ok(())
        }
        Command::Simulate {
            trials,
            seed,
            instrument,
            wrong_password,
            csv,
        } => {
            let ctx = load_context(&cli)?;
            let cfg = SimulationConfig {
                trials: *trials,
                seed: master_seed(seed),
                instrument: *instrument,
                wrong_password: *wrong_password,
            };
            let report = harness::simulate(&ctx, &cfg)?;
            print!("{report}");
            if let Some(path) = csv {
                write_csv(path, HarnessReport::csv_header(), &report.csv_row())?;
            }
            Ok(())
        }
        Command::Regev {
            trials,
            seed,
            zero_noise,
            csv,
        } => {
            let rp = RegevParams::default_test();
            let report = harness::regev_round_trip(&rp, *trials, &master_seed(seed), *zero_noise)?;
            print!("{report}");
            if let Some(path) = csv {
                let row = format!(
                    "{},{},{:.6},{},{},{:.3}",
                    report.trials,
                    report.correct,
                    report.accuracy(),
                    report.certified,
                    report.max_accumulated_noise,
                    report.runtime.as_secs_f64()
                );
                write_csv(
                    path,
                    "trials,correct,accuracy,certified,max_accumulated_noise,runtime_s",
                    &row,
                )?;
            }
            Ok(())
        }
        Command::LemmaOracle { q, tolerance } => {
            let mut clean = true;
            for &q in q {
                let r = harness::lemma_oracle(q, *tolerance)?;
                println!(
                    "q={} tolerance={} checked={} violations={}",
                    r.q, r.tolerance, r.checked, r.violations
                );
                for c in &r.counterexamples {
                    println!("  y={} hint={} offset={}", c.y, c.hint_variant, c.offset);
                }
                clean &= r.violations == 0;
            }
            if clean {
                Ok(())
            } else {
                Err(CliError::Violations)
            }
        }
    }
}

/// Entry point shared by the binary: parses, runs, reports.
pub fn main_with_args() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = io::stdout().flush();
            eprintln!("lsrp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub(crate) fn parse_addr(addr: &str) -> Result<SocketAddr, CliError> {
    use std::net::ToSocketAddrs;
    addr.to_socket_addrs()
        .map_err(|source| CliError::Unreachable {
            addr: addr.to_string(),
            source,
        })?
        .next()
        .ok_or_else(|| CliError::Unreachable {
            addr: addr.to_string(),
            source: io::Error::new(io::ErrorKind::NotFound, "no address"),
        })
}
