use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use neurodecode_core::analysis::Linkage;
use neurodecode_core::data;
use neurodecode_core::network::NetworkParams;

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{Error, Result};
use crate::experiment::{self, Runner};
use crate::io;

/// Subject-transfer decoding experiments and principal sensitivity analysis.
///
/// Results go to a new directory `<output_dir>/<command>-<unix time>-<seed>`
/// unless `--run-dir` is given. Progress and errors go to standard error.
/// Exit status: 0 success, 1 invalid input, 2 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "neurodecode", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured synthetic dataset as CSV.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Generator seed (overrides data.synthetic.seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train every architecture on the first fold only.
    Train(RunArgs),
    /// Cross-validate every architecture.
    Cv(RunArgs),
    /// Cross-validate at each training-set size in split.m_values.
    Sweep(RunArgs),
    /// Principal sensitivity analysis and PSM clustering.
    Psa {
        #[command(flatten)]
        run: RunArgs,
        /// Trained network; without it the first architecture is trained on the first fold.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Similarity, clustering and thresholding of saved PSMs.
    Analyze {
        /// A psms.csv written by `psa`.
        #[arg(long)]
        psms: PathBuf,
        #[arg(long, value_enum)]
        linkage: Option<LinkageArg>,
        /// Supplies output_dir and psa.linkage.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Master seed (overrides the config's seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Write results here instead of a new timestamped directory.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LinkageArg {
    Single,
    Complete,
    Average,
}

impl From<LinkageArg> for Linkage {
    fn from(l: LinkageArg) -> Self {
        match l {
            LinkageArg::Single => Linkage::Single,
            LinkageArg::Complete => Linkage::Complete,
            LinkageArg::Average => Linkage::Average,
        }
    }
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    eprint!("{}", e.render());
                    1
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run_dir(explicit: Option<&Path>, base: &Path, command: &str, seed: u64) -> Result<PathBuf> {
    match explicit {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            Ok(dir.to_path_buf())
        }
        None => experiment::create_run_dir(base, command, seed),
    }
}

fn with_runner(args: &RunArgs, command: &str, f: impl FnOnce(&Runner, &Path) -> Result<()>) -> Result<()> {
    let config = load_config(args)?;
    let dataset = config.load_dataset()?;
    let runner = Runner::new(&config, &dataset)?.threads(experiment::threads_from_env()?).verbose(true);
    let dir = run_dir(args.run_dir.as_deref(), &config.output_dir, command, config.seed)?;
    io::write_json(&dir.join("config.json"), &config)?;
    f(&runner, &dir)?;
    eprintln!("results in {}", dir.display());
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth { config, out, seed } => {
            let config = ExperimentConfig::load(&config)?;
            let DataSource::Synthetic(mut synth) = config.data else {
                return Err(Error::Config("synth needs a config with a synthetic data source".into()));
            };
            if let Some(seed) = seed {
                synth.seed = seed;
            }
            let dataset = data::synthesize(&synth)?;
            io::write_dataset(&out, &dataset)?;
            eprintln!(
                "wrote {} samples from {} subjects to {}",
                dataset.len(),
                synth.n_subjects,
                out.display()
            );
            Ok(())
        }
        Command::Train(args) => with_runner(&args, "train", |r, dir| r.train_split(Some(dir)).map(drop)),
        Command::Cv(args) => with_runner(&args, "cv", |r, dir| r.run_cv(Some(dir)).map(drop)),
        Command::Sweep(args) => with_runner(&args, "sweep", |r, dir| r.run_size_sweep(Some(dir)).map(drop)),
        Command::Psa { run, params } => {
            let params: Option<NetworkParams> = params.as_deref().map(io::read_json).transpose()?;
            with_runner(&run, "psa", |r, dir| r.run_psa(params.as_ref(), Some(dir)).map(drop))
        }
        Command::Analyze { psms, linkage, config, run_dir: explicit } => {
            let config = config.as_deref().map(ExperimentConfig::load).transpose()?;
            let linkage =
                linkage.map(Linkage::from).or(config.as_ref().map(|c| c.psa.linkage)).unwrap_or_default();
            let base = config.as_ref().map_or_else(|| PathBuf::from("runs"), |c| c.output_dir.clone());
            let seed = config.as_ref().map_or(0, |c| c.seed);
            let collection = io::read_psm_collection(&psms)?;
            let dir = run_dir(explicit.as_deref(), &base, "analyze", seed)?;
            experiment::run_analysis(&collection, linkage, Some(&dir))?;
            eprintln!("results in {}", dir.display());
            Ok(())
        }
    }
}
