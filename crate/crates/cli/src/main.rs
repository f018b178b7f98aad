use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kernel_npg_cli::{plot, run, write_outcome, ConfigError, ExperimentConfig, ExperimentKind, HarnessError};

#[derive(Parser)]
#[command(name = "kernel-npg", version, about = "Kernel TD evaluation and RKHS natural policy gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluation error against n for a fixed policy.
    EvalRate(RunArgs),
    /// NPG training runs, one per seed.
    Train(RunArgs),
    /// Training runs for several step-size exponents.
    ScheduleSweep(RunArgs),
    /// Batch, oracle, and TD convergence dumps for one seed.
    Diagnostics(RunArgs),
    /// Render SVG figures from experiment CSVs.
    Plot {
        /// A CSV file or a directory of them.
        input: PathBuf,
        /// Output directory (defaults to the input directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// One seed or a comma-separated list; overrides the config.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(kind: ExperimentKind, command: &str, args: RunArgs) -> Result<(), HarnessError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.kind != kind {
        return Err(ConfigError::Invalid(format!(
            "config has kind '{}', which the '{command}' command does not run",
            cfg.kind.as_str()
        ))
        .into());
    }
    if !args.seed.is_empty() {
        cfg.seeds = args.seed;
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| HarnessError::Config(ConfigError::Invalid(e.to_string())))?;
    }
    let resolved = cfg.resolve()?;
    log::info!("running {} on {} with seeds {:?}", kind.as_str(), resolved.env.name(), resolved.seeds);
    let out = run(&cfg, &resolved)?;
    for f in write_outcome(&out, &resolved.out_dir)? {
        log::info!("wrote {}", f.display());
    }
    if out.failures.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Numerical(out.failures.join("; ")))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::EvalRate(a) => execute(ExperimentKind::EvalRate, "eval-rate", a),
        Command::Train(a) => execute(ExperimentKind::NpgTrain, "train", a),
        Command::ScheduleSweep(a) => execute(ExperimentKind::ScheduleSweep, "schedule-sweep", a),
        Command::Diagnostics(a) => execute(ExperimentKind::Diagnostics, "diagnostics", a),
        Command::Plot { input, out } => {
            let out = out.unwrap_or_else(|| if input.is_dir() { input.clone() } else { input.parent().map(PathBuf::from).unwrap_or_default() });
            plot::plot_path(&input, &out).map(|files| {
                for f in files {
                    log::info!("wrote {}", f.display());
                }
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
