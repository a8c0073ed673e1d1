use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use expand_cluster::cli::{self, ExperimentConfig, RunLayout, RunOptions, OUTPUT_DIR_ENV};
use expand_cluster::Result;

/// Recover a one-hidden-layer teacher network from its logits by training
/// an ensemble of wider students and clustering their neurons.
#[derive(Parser)]
#[command(name = "expand-cluster", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the teacher on its labelled images.
    TrainTeacher(RunArgs),
    /// Augment the teacher's images and record its logits.
    BuildQueries(RunArgs),
    /// Train the student ensemble on the recorded queries.
    TrainStudents(RunArgs),
    /// Cluster, collapse, fine-tune and report.
    Reconstruct(RunArgs),
    /// All of the above in order.
    Pipeline(RunArgs),
    /// Write procedural digit and garment IDX files.
    SynthData(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Threads used for student training.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Keep student models that already exist in the output directory.
    #[arg(long)]
    resume: bool,
    /// Output directory; overrides the config file.
    #[arg(long, env = OUTPUT_DIR_ENV)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    ood: usize,
    #[arg(long, default_value_t = 8)]
    side: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn run(command: Command) -> Result<()> {
    let args = match command {
        Command::SynthData(s) => return cli::write_synthetic_sets(&s.out, s.n, s.ood, s.side, s.seed),
        Command::TrainTeacher(ref a)
        | Command::BuildQueries(ref a)
        | Command::TrainStudents(ref a)
        | Command::Reconstruct(ref a)
        | Command::Pipeline(ref a) => a,
    };
    let cfg = ExperimentConfig::load(&args.config)?;
    let layout = RunLayout::new(args.out.clone().unwrap_or_else(|| cfg.output_dir.clone()));
    let opts = RunOptions { jobs: args.jobs, resume: args.resume };
    match command {
        Command::TrainTeacher(_) => cli::cmd_train_teacher(&cfg, &layout).map(drop),
        Command::BuildQueries(_) => cli::cmd_build_queries(&cfg, &layout).map(drop),
        Command::TrainStudents(_) => cli::cmd_train_students(&cfg, &layout, opts).map(drop),
        Command::Reconstruct(_) => cli::cmd_reconstruct(&cfg, &layout).map(drop),
        Command::Pipeline(_) => cli::cmd_pipeline(&cfg, &layout, opts).map(drop),
        Command::SynthData(_) => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
