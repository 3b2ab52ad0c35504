use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use revenant::bench::SelectionPolicy;
use revenant::patch::Granularity;

/// Exit statuses shared by every subcommand.
pub mod status {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const ABORTED: u8 = 3;
    pub const PRECONDITION: u8 = 4;
    pub const CONFIG: u8 = 5;
    pub const ENVIRONMENT: u8 = 6;
}

#[derive(Parser, Debug)]
#[command(
    name = "revenant",
    version,
    about = "Forward-port fixed vulnerabilities and curate them as a benchmark"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Case configuration file; repeat for several cases.
    #[arg(long, global = true)]
    pub config: Vec<PathBuf>,
    /// Artifact root; each case writes under <workspace>/<cve>/. Falls back
    /// to the case's `workspace`, then `revenant-work`.
    #[arg(long, global = true, env = "REVENANT_WORKSPACE")]
    pub workspace: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub granularity: Option<GranularityArg>,
    /// Overrides the fuzz allowance of every case.
    #[arg(long, global = true)]
    pub max_fuzz: Option<usize>,
    /// Overrides the reverted-commit limit of every case.
    #[arg(long, global = true)]
    pub limit_commits: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "latest-first")]
    pub policy: PolicyArg,
    /// Collapse failure kinds to a plain cross.
    #[arg(long, global = true)]
    pub paper_style: bool,
    /// Cases processed at once.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum GranularityArg {
    WholeFiles,
    PatchHunks,
    Function,
    Chunk,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::WholeFiles => Granularity::WholeFiles,
            GranularityArg::PatchHunks => Granularity::PatchHunks,
            GranularityArg::Function => Granularity::FunctionScope,
            GranularityArg::Chunk => Granularity::ChunkScope,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum PolicyArg {
    LatestFirst,
    MaxSubset,
}

impl From<PolicyArg> for SelectionPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::LatestFirst => SelectionPolicy::LatestFirst,
            PolicyArg::MaxSubset => SelectionPolicy::MaxSubset,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Reverse-apply the fix at one tier and run the PoC.
    Port {
        #[arg(long, default_value = "latest")]
        tier: String,
    },
    /// Trivial forward-port at all three tiers.
    Tiers,
    /// Find the first commit in (lo, hi] where the ported PoC stops triggering.
    Bisect {
        #[arg(long)]
        lo: Option<String>,
        #[arg(long)]
        hi: Option<String>,
    },
    /// Port, reverting breaking commits until the PoC triggers.
    Revive {
        /// Defaults to the case's target or latest tier.
        #[arg(long)]
        target: Option<String>,
    },
    /// Classify one commit's diff.
    Categorize { commit: String },
    /// Curate revival records into a benchmark manifest.
    Manifest {
        /// Record files written by `revive`.
        #[arg(required = true)]
        records: Vec<PathBuf>,
        /// Confirm conflicts by running the PoCs on joint trees (needs --config per case).
        #[arg(long)]
        oracle_confirmed: bool,
        /// Run the test suite of the first --config on the included ports.
        #[arg(long)]
        functionality: bool,
        /// Unix time stored in the manifest; defaults to the newest record target date.
        #[arg(long)]
        created_at: Option<i64>,
        #[arg(long)]
        project: Option<String>,
    },
    /// Render status matrices from record or transcription files.
    Report {
        inputs: Vec<PathBuf>,
        /// Use a bundled transcription instead of files.
        #[arg(long, value_enum)]
        bundled: Option<BundledTable>,
        /// Append a category tally; the bundled ledger unless a file is given.
        #[arg(long, num_args = 0..=1, default_missing_value = "")]
        tally: Option<String>,
    },
    /// Two-week commit activity as CSV and SVG.
    Activity {
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
    },
    /// Generate a synthetic repository with a planted vulnerability.
    Forge {
        #[arg(long)]
        dest: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        length: usize,
        #[arg(long, default_value_t = 3)]
        fix: usize,
        /// `position:archetype`, e.g. `9:rename`; repeatable.
        #[arg(long)]
        breaker: Vec<String>,
        #[arg(long, default_value_t = 0)]
        noise: usize,
        #[arg(long, default_value = "overflow")]
        poc: String,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum BundledTable {
    TrivialPort,
    RevertPort,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
