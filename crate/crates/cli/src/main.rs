use std::path::{Path, PathBuf};
use std::process::ExitCode;

use akd_core::data::Split;
use akd_core::experiment::{
    compare, evaluate_checkpoint, landscape_study, prepare_output, read_config, render_comparison, run_experiment,
    seed_dir, write_landscape, ExperimentConfig, RunError, RunOptions, Summary,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

/// Knowledge distillation experiments with annealed teacher logits.
#[derive(Parser)]
#[command(name = "akd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment and write metrics, checkpoints and summary.csv.
    Train(RunArgs),
    /// Score trained student checkpoints.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint to score; defaults to <out>/seed-<s>/best.ckpt per seed.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Slice the stage-I loss around annealing snapshots and write grid files.
    Landscape(RunArgs),
    /// Tabulate per-method medians from one or more summary.csv files or run directories.
    Compare {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Comma-separated seed list replacing the configured one.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

struct Loaded {
    cfg: ExperimentConfig,
    out: Option<PathBuf>,
    opts: RunOptions,
}

fn load(args: &RunArgs) -> Result<Loaded, Failure> {
    let cfg = read_config(&args.config).map_err(|e| match e {
        RunError::Io { .. } => Failure::Config(e.to_string()),
        other => Failure::from(other),
    })?;
    cfg.validate()?;
    cfg.check_data_source()?;
    if args.threads == Some(0) {
        return Err(Failure::Config("--threads must be at least 1".into()));
    }
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(Loaded {
        out: args.out.clone().or_else(|| cfg.output.clone()),
        opts: RunOptions {
            force: args.force,
            seeds: args.seeds.clone(),
            threads: None,
        },
        cfg,
    })
}

fn need_out(l: &Loaded) -> Result<&Path, Failure> {
    l.out
        .as_deref()
        .ok_or_else(|| Failure::Config("no output directory: pass --out or set `output` in [experiment]".into()))
}

fn seeds(l: &Loaded) -> Vec<u64> {
    l.opts.seeds.clone().unwrap_or_else(|| l.cfg.seeds.clone())
}

fn train(args: &RunArgs) -> Result<(), Failure> {
    let l = load(args)?;
    let out = need_out(&l)?;
    let summary = run_experiment(&l.cfg, out, &l.opts)?;
    print!("{}", summary.to_csv());
    Ok(())
}

fn eval(args: &RunArgs, checkpoint: Option<&Path>, split: SplitArg) -> Result<(), Failure> {
    let l = load(args)?;
    let split = match split {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Validation,
        SplitArg::Test => Split::Test,
    };
    let seeds = seeds(&l);
    if seeds.is_empty() {
        return Err(Failure::Config("seed list is empty".into()));
    }
    let jobs: Vec<(u64, PathBuf)> = match checkpoint {
        Some(p) => vec![(seeds[0], p.to_path_buf())],
        None => {
            let out = need_out(&l)?;
            seeds.iter().map(|&s| (s, seed_dir(out, s).join("best.ckpt"))).collect()
        }
    };
    println!("seed,checkpoint,metric");
    for (seed, path) in jobs {
        let m = evaluate_checkpoint(&l.cfg, seed, &path, split)?;
        println!("{seed},{},{m}", path.display());
    }
    Ok(())
}

fn landscape(args: &RunArgs) -> Result<(), Failure> {
    let l = load(args)?;
    let out = need_out(&l)?;
    prepare_output(out, l.opts.force)?;
    let results: Vec<Result<(), RunError>> = seeds(&l)
        .par_iter()
        .map(|&seed| {
            let slices = landscape_study(&l.cfg, seed)?;
            let dir = seed_dir(out, seed);
            std::fs::create_dir_all(&dir).map_err(|source| RunError::Io {
                path: dir.clone(),
                source,
            })?;
            write_landscape(&dir, &slices)?;
            for s in &slices {
                println!(
                    "seed {seed} T={} phi={} direction {}: sharpness {}",
                    s.temperature,
                    s.phi,
                    s.direction_seed,
                    s.grid.sharpness()
                );
            }
            Ok(())
        })
        .collect();
    results.into_iter().collect::<Result<(), _>>()?;
    Ok(())
}

fn compare_cmd(paths: &[PathBuf]) -> Result<(), Failure> {
    let mut summaries = Vec::new();
    for p in paths {
        let file = if p.is_dir() { p.join("summary.csv") } else { p.clone() };
        summaries.push(Summary::read(&file).map_err(|e| Failure::Config(e.to_string()))?);
    }
    let (task, stats) = compare(&summaries).map_err(|e| Failure::Config(e.to_string()))?;
    print!("{}", render_comparison(task, &stats));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Eval { run, checkpoint, split } => eval(run, checkpoint.as_deref(), *split),
        Command::Landscape(a) => landscape(a),
        Command::Compare { summaries } => compare_cmd(summaries),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
