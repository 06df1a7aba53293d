//! `xmlad` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

mod commands;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use xmlad::adifa::Aggregation;
use xmlad::detector::{Algorithm, AlgorithmConfig};

#[derive(Debug, Parser)]
#[command(
    name = "xmlad",
    version,
    about = "Anomaly detection for XML transactions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse an XSD into a schema vector
    SchemaParse {
        xsd: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Ignore XML attributes
        #[arg(long)]
        no_attributes: bool,
    },
    /// Measure a corpus (directory of .xml files or a manifest) into a feature matrix
    Extract {
        #[arg(long)]
        schema: PathBuf,
        corpus: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Flatten a feature matrix into a CSV dataset
    Flatten {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        fm: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Reuse an existing TF-IDF dictionary instead of building one
        #[arg(long, conflicts_with = "tfidf_k")]
        dict: Option<PathBuf>,
        #[arg(long, default_value_t = xmlad::flatten::DEFAULT_TFIDF_K)]
        tfidf_k: usize,
        /// Where to save the dictionary that was built
        #[arg(long, conflicts_with = "dict")]
        dict_out: Option<PathBuf>,
        /// Ground truth from `inject`; adds a label column
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Train a detector on the normal rows of a dataset
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Score every row of a dataset
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Write CSV here instead of standard output
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Append the N least likely columns per row (ADIFA models only)
        #[arg(long, value_name = "N")]
        localize: Option<usize>,
    },
    /// Rank the columns of one row by likelihood (ADIFA models only)
    Localize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        row: usize,
        #[arg(long, default_value_t = 3)]
        top: usize,
    },
    /// Inject attacks into part of a corpus
    Inject {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long)]
        anomaly_index: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated subset of value,xss,cdata,xpath,leakage
        #[arg(long)]
        classes: Option<String>,
        /// Share of documents to inject
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        /// Ground-truth path (default: <out>/truth.xadtruth)
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Plain text used for data leakage sentences
        #[arg(long)]
        leakage_corpus: Option<PathBuf>,
    },
    /// Generate a synthetic insurance-claim corpus and its XSD
    GenCorpus {
        #[arg(long)]
        docs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// 5x2 cross-validation of several detectors with a significance report
    Evaluate {
        /// Labeled dataset; repeat for a multi-dataset Friedman test
        #[arg(long, required = true)]
        dataset: Vec<PathBuf>,
        #[arg(
            long,
            default_value = "adifa-gm,adifa-hm,adifa-am,pga,gde,lof",
            value_delimiter = ','
        )]
        algos: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        tuning: TuningArgs,
    },
    /// Learning curve over nested subsets of the normal rows
    LearningCurve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "adifa-gm")]
        algo: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        tuning: TuningArgs,
    },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Detector tag: adifa-gm, adifa-am, adifa-hm, pga, gde, gde-literal, lof
    #[arg(long)]
    algo: Option<String>,
    /// ADIFA aggregation: am, gm or hm
    #[arg(long)]
    psi: Option<String>,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Args)]
pub struct TuningArgs {
    /// ADIFA classification threshold C in (0, 1]
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    pga_alpha: Option<f64>,
    #[arg(long)]
    pga_k: Option<usize>,
    #[arg(long)]
    lof_min_pts: Option<usize>,
    /// z-score features for the distance-based baselines
    #[arg(long)]
    standardize: bool,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Data(e.into())
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn parse_algorithm(tag: &str) -> Result<Algorithm, CliError> {
    tag.parse()
        .map_err(|_| usage(format!("unknown algorithm `{tag}`")))
}

impl TuningArgs {
    pub fn config(&self, algorithm: Algorithm) -> Result<AlgorithmConfig, CliError> {
        let mut c = AlgorithmConfig::new(algorithm);
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(usage(format!("--threshold must be in (0, 1], got {t}")));
            }
            c.threshold = t;
        }
        if let Some(a) = self.pga_alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(usage(format!("--pga-alpha must be in (0, 1], got {a}")));
            }
            c.pga_alpha = a;
        }
        if let Some(k) = self.pga_k {
            if k == 0 {
                return Err(usage("--pga-k must be at least 1"));
            }
            c.pga_k = k;
        }
        if let Some(p) = self.lof_min_pts {
            if p == 0 {
                return Err(usage("--lof-min-pts must be at least 1"));
            }
            c.lof_min_pts = p;
        }
        c.standardize = self.standardize;
        Ok(c)
    }
}

impl ModelArgs {
    pub fn config(&self) -> Result<AlgorithmConfig, CliError> {
        let psi = self
            .psi
            .as_deref()
            .map(|p| {
                p.parse::<Aggregation>()
                    .map_err(|_| usage(format!("unknown aggregation `{p}`")))
            })
            .transpose()?;
        let algorithm = match (self.algo.as_deref(), psi) {
            (None, None) => Algorithm::AdifaGm,
            (None, Some(p)) => Algorithm::adifa(p),
            (Some(tag), p) => {
                let a = parse_algorithm(tag)?;
                if p.is_some() && a.aggregation() != p {
                    return Err(usage(format!("--psi conflicts with --algo {tag}")));
                }
                a
            }
        };
        self.tuning.config(algorithm)
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("XMLAD_LOG", "info");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            eprintln!("{}", Cli::command().render_usage());
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    ExitCode::from(run(std::env::args_os()))
}
