//! Library behind the `las` command: seeded experiments for the LAS MIMO
//! detector.
//!
//! Every command writes `<name>.csv`, `<name>.json` and
//! `<name>.manifest.json` into `--out-dir`. Passing the manifest back with
//! `--config` reproduces the CSV and JSON byte for byte, whatever
//! `--workers` is.
//!
//! Exit codes: 0 success, 1 failed verification or runtime error, 2 usage
//! or config error.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::ffi::OsString;

use clap::{Args, Parser, Subcommand};
use las_core::Initializer;

use crate::config::{List, Settings, Suite};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(las_core::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<las_core::Error> for CliError {
    fn from(e: las_core::Error) -> Self {
        match e {
            las_core::Error::InvalidParameter(m) => CliError::Usage(m),
            las_core::Error::QamOrder(q) => CliError::Usage(format!("unsupported QAM order {q} (expected 4 or 16)")),
            las_core::Error::SearchSpaceTooLarge { size, cap } => {
                CliError::Usage(format!("exhaustive search over {size:e} points exceeds the cap {cap}"))
            }
            other => CliError::Core(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "las", version, about = "Likelihood ascent search detector experiments")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// BER against SNR for one system size.
    Ber(BerArgs),
    /// SNR needed for a target BER, per system size.
    SnrTarget(SnrTargetArgs),
    /// Histograms of the channel-correlation statistic z.
    Zpdf(ZpdfArgs),
    /// Run a verification suite; exits 1 if any check fails.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Master seed.
    #[arg(long, env = "LAS_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Does not affect results.
    #[arg(long, env = "LAS_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, env = "LAS_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Base name of the output files.
    #[arg(long, env = "LAS_NAME")]
    name: Option<String>,
    /// Config file: `key = value` lines, JSON, or a previous manifest.
    #[arg(long, env = "LAS_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BerArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, env = "LAS_QAM")]
    qam: Option<u32>,
    #[arg(long, env = "LAS_INIT")]
    init: Option<Initializer>,
    /// Transmit antennas (N_t = N_r).
    #[arg(long, env = "LAS_NTX")]
    ntx: Option<usize>,
    /// Comma-separated SNR points in dB.
    #[arg(long, env = "LAS_SNR_GRID", allow_hyphen_values = true)]
    snr_grid: Option<List<f64>>,
    /// Maximum trials per SNR point.
    #[arg(long, env = "LAS_TRIALS")]
    trials: Option<u64>,
    /// Bit errors at which a point stops.
    #[arg(long, env = "LAS_MIN_ERRORS")]
    min_errors: Option<u64>,
    #[arg(long, env = "LAS_MAX_ITERS")]
    max_iters: Option<usize>,
}

#[derive(Debug, Args)]
struct SnrTargetArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, env = "LAS_QAM")]
    qam: Option<u32>,
    #[arg(long, env = "LAS_INIT")]
    init: Option<Initializer>,
    /// Comma-separated system sizes.
    #[arg(long, env = "LAS_NTX_LIST")]
    ntx_list: Option<List<usize>>,
    /// Target BER (default 1e-3 for 4-QAM, 1e-4 for 16-QAM).
    #[arg(long, env = "LAS_TARGET_BER")]
    target_ber: Option<f64>,
    /// Search bracket in dB; the first and last points are used.
    #[arg(long, env = "LAS_SNR_GRID", allow_hyphen_values = true)]
    snr_grid: Option<List<f64>>,
    #[arg(long, env = "LAS_TRIALS")]
    trials: Option<u64>,
    #[arg(long, env = "LAS_MIN_ERRORS")]
    min_errors: Option<u64>,
    #[arg(long, env = "LAS_MAX_ITERS")]
    max_iters: Option<usize>,
}

#[derive(Debug, Args)]
struct ZpdfArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, env = "LAS_NTX_LIST")]
    ntx_list: Option<List<usize>>,
    /// Channel draws per system size.
    #[arg(long, env = "LAS_TRIALS")]
    trials: Option<u64>,
    /// Histogram bins over [-1, 1).
    #[arg(long, env = "LAS_BINS")]
    bins: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// lemma2, theorem2 or fixedpoint.
    #[arg(long, env = "LAS_SUITE")]
    suite: Option<String>,
    #[arg(long, env = "LAS_QAM")]
    qam: Option<u32>,
    #[arg(long, env = "LAS_INIT")]
    init: Option<Initializer>,
    /// System size for the lemma2 suite.
    #[arg(long, env = "LAS_NTX")]
    ntx: Option<usize>,
    /// System sizes for the theorem2 and fixedpoint suites.
    #[arg(long, env = "LAS_NTX_LIST")]
    ntx_list: Option<List<usize>>,
    /// SNR in dB (`inf` for no noise).
    #[arg(long, env = "LAS_SNR_DB", allow_hyphen_values = true)]
    snr_db: Option<f64>,
    #[arg(long, env = "LAS_TRIALS")]
    trials: Option<u64>,
}

/// Flag layer over the config-file layer.
fn layered(common: &Common, flags: Settings) -> Result<Settings, CliError> {
    let file = match &common.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let flags = Settings {
        seed: common.seed,
        ..flags
    };
    Ok(flags.over(file))
}

pub fn run(cli: Cli) -> Result<bool, CliError> {
    let (common, settings, command) = match cli.command {
        Command::Ber(a) => {
            let s = Settings {
                qam: a.qam,
                init: a.init,
                ntx: a.ntx,
                snr_grid: a.snr_grid.map(|l| l.0),
                trials: a.trials,
                min_errors: a.min_errors,
                max_iters: a.max_iters,
                ..Default::default()
            };
            (a.common, s, commands::Kind::Ber)
        }
        Command::SnrTarget(a) => {
            let s = Settings {
                qam: a.qam,
                init: a.init,
                ntx_list: a.ntx_list.map(|l| l.0),
                target_ber: a.target_ber,
                snr_grid: a.snr_grid.map(|l| l.0),
                trials: a.trials,
                min_errors: a.min_errors,
                max_iters: a.max_iters,
                ..Default::default()
            };
            (a.common, s, commands::Kind::SnrTarget)
        }
        Command::Zpdf(a) => {
            let s = Settings {
                ntx_list: a.ntx_list.map(|l| l.0),
                trials: a.trials,
                bins: a.bins,
                ..Default::default()
            };
            (a.common, s, commands::Kind::Zpdf)
        }
        Command::Verify(a) => {
            let suite = a.suite.as_deref().map(str::parse::<Suite>).transpose().map_err(CliError::Usage)?;
            let s = Settings {
                suite,
                qam: a.qam,
                init: a.init,
                ntx: a.ntx,
                ntx_list: a.ntx_list.map(|l| l.0),
                snr_db: a.snr_db,
                trials: a.trials,
                ..Default::default()
            };
            (a.common, s, commands::Kind::Verify)
        }
    };
    let settings = layered(&common, settings)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let started = output::timestamp();
    let result = pool.install(|| commands::execute(command, settings, common.name.as_deref()))?;
    let paths = result
        .outputs
        .write(&common.out_dir, &result.name, command.label(), &result.resolved, &started)?;
    for p in &paths {
        eprintln!("wrote {}", p.display());
    }
    println!("{}", result.summary);
    Ok(result.passed)
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("las: {e}");
            match e {
                CliError::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}
