use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use entropic_witness::config::SubtractMode;
use entropic_witness::runner::{self, CommandOptions};
use entropic_witness::Error;

#[derive(Parser)]
#[command(name = "entropic-witness", version, about = "Adaptive quad-tree entanglement certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accidental subtraction: evaluate raw, subtracted, or both.
    #[arg(long, value_enum)]
    subtract: Option<SubtractMode>,
    /// Only log errors.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Acquire all four distributions and evaluate the witness.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Re-run the analysis on an existing output directory.
        #[arg(long)]
        reanalyze: bool,
    },
    /// Witness versus acquisition time on a single growing run.
    SweepTime {
        #[command(flatten)]
        common: Common,
    },
    /// Witness and partition count versus maximum resolution.
    SweepResolution {
        #[command(flatten)]
        common: Common,
    },
    /// Witness of the exact discretized source.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn run(command: Command) -> Result<(), Error> {
    let (common, reanalyze) = match &command {
        Command::Simulate { common, reanalyze } => (common.clone(), *reanalyze),
        Command::SweepTime { common }
        | Command::SweepResolution { common }
        | Command::Oracle { common } => (common.clone(), false),
    };
    env_logger::Builder::new()
        .filter_level(if common.quiet {
            log::LevelFilter::Error
        } else {
            log::LevelFilter::Info
        })
        .target(env_logger::Target::Stderr)
        .init();
    let opts = CommandOptions {
        seed: common.seed,
        out: common.out.clone(),
        subtract: common.subtract,
    };
    match command {
        Command::Simulate { .. } => {
            let s = runner::cmd_simulate(&common.config, &opts, reanalyze)?;
            println!("leaves {} improvement {:.3e}", s.total_leaves, s.improvement_factor);
            for r in &s.results {
                println!(
                    "{:?}: E_f >= {:.4} +/- {:.4} ebits",
                    r.method, r.witness.ef_bound, r.witness.sigma
                );
            }
        }
        Command::SweepTime { .. } => {
            println!("time_per_partition ef_raw sigma_raw ef_subtracted sigma_subtracted");
            for r in runner::cmd_sweep_time(&common.config, &opts)? {
                println!(
                    "{} {} {} {} {}",
                    r.time_per_partition,
                    opt(r.ef_raw),
                    opt(r.sigma_raw),
                    opt(r.ef_subtracted),
                    opt(r.sigma_subtracted)
                );
            }
        }
        Command::SweepResolution { .. } => {
            println!("n leaves improvement ef_raw sigma_raw ef_subtracted sigma_subtracted oracle_ef");
            for r in runner::cmd_sweep_resolution(&common.config, &opts)? {
                println!(
                    "{} {} {:.3e} {} {} {} {} {:.4}",
                    r.n,
                    r.leaves,
                    r.improvement_factor,
                    opt(r.ef_raw),
                    opt(r.sigma_raw),
                    opt(r.ef_subtracted),
                    opt(r.sigma_subtracted),
                    r.oracle_ef
                );
            }
        }
        Command::Oracle { .. } => {
            let r = runner::cmd_oracle(&common.config, &opts)?;
            println!("n {}", r.n);
            println!("oracle_ef {}", r.oracle_ef);
            println!("max_certifiable {}", r.max_certifiable);
            println!("continuous_ef {}", r.continuous_ef);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            match e {
                Error::Config { .. } => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
