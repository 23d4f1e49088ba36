//! `sfm`: batch front end for spectral analysis, modulation round trips and
//! toy training.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use sfm_core::spectral::DEFAULT_NYQUIST;

/// Exit status contract: 0 success, 2 usage or input error, 3 numerical failure.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(m) | Failure::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<sfm_core::Error> for Failure {
    fn from(e: sfm_core::Error) -> Self {
        match e {
            sfm_core::Error::Numerical(_) => Failure::Numerical(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sfm", version, about = "Spatial frequency modulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aliasing ratio, LFR curve and RDF of a tensor or PGM image.
    Analyze(AnalyzeArgs),
    /// Modulate, decimate and demodulate an input, reporting every stage.
    Roundtrip(RoundtripArgs),
    /// Train the toy model on a synthetic scene.
    Train(TrainArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// SFMT tensor or binary PGM.
    #[arg(long)]
    pub input: PathBuf,
    /// Also write `analyze.json` into this directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NYQUIST)]
    pub nyquist: f64,
    /// Points on the LFR curve and bins of the RDF.
    #[arg(long, default_value_t = 50)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// `uniform`, `laplacian`, or `trained:<params.json>`.
    #[arg(long, default_value = "laplacian")]
    pub attention: AttentionMode,
    /// Gaussian kernel radius; `round(max(H,W)/8)` when absent.
    #[arg(long)]
    pub sigma: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub stride: usize,
    #[arg(long, default_value_t = DEFAULT_NYQUIST)]
    pub nyquist: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON training configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sigma: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Comma-separated LPRM dilations, e.g. `1,2,4,8`.
    #[arg(long, value_delimiter = ',')]
    pub dilations: Option<Vec<usize>>,
    #[arg(long)]
    pub lambda_fm: Option<f64>,
    #[arg(long)]
    pub lambda_shf: Option<f64>,
    #[arg(long)]
    pub nyquist: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttentionMode {
    Uniform,
    Laplacian,
    Trained(PathBuf),
}

impl FromStr for AttentionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "laplacian" => Ok(Self::Laplacian),
            _ => match s.strip_prefix("trained:") {
                Some(path) if !path.is_empty() => Ok(Self::Trained(PathBuf::from(path))),
                _ => Err(format!("expected uniform, laplacian or trained:<path>, got '{s}'")),
            },
        }
    }
}

impl std::fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Uniform => f.write_str("uniform"),
            Self::Laplacian => f.write_str("laplacian"),
            Self::Trained(p) => write!(f, "trained:{}", p.display()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(args) => commands::analyze(&args),
        Command::Roundtrip(args) => commands::roundtrip(&args),
        Command::Train(args) => commands::train(&args),
    };
    match result {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("reports serialise"));
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("sfm: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
