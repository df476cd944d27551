use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use ased::config::{EvaluatorConfig, RunConfig, DEFAULT_WORKER_TIMEOUT};
use ased::rundir::{self, RunWriter};
use ased::search::{self, IterationRecord, Population, SearchObserver};
use ased::seed::rng_from;
use ased::{Error, Prototype};

#[derive(Parser)]
#[command(
    name = "ased",
    version,
    about = "Architecture search by estimating layer-type distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a search and persist its run directory.
    Search {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pool_size: Option<usize>,
        /// External worker command line, replacing the configured evaluator.
        #[arg(long)]
        evaluator: Option<String>,
    },
    /// Print candidates sampled from a prototype snapshot, one per line.
    Sample {
        prototype: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rebuild the per-iteration summary of a finished run.
    Report { run_dir: PathBuf },
    /// Show rows, norms and most likely architecture of a prototype snapshot.
    Inspect { prototype: PathBuf },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::EvaluationAborted { .. } | Error::PoolExhausted(_)) => 2,
        Some(Error::Io(_) | Error::Csv(_) | Error::MissingArtifact(_)) => 3,
        _ if err.chain().any(|e| e.is::<std::io::Error>()) => 3,
        _ => 1,
    }
}

struct Progress(RunWriter);

impl SearchObserver<f64> for Progress {
    fn on_population(&mut self, population: &Population<'_>) -> ased::Result<()> {
        self.0.on_population(population)
    }

    fn on_iteration(&mut self, record: &IterationRecord<'_, f64>) -> ased::Result<()> {
        let s = record.stats;
        eprintln!(
            "iteration {}: depth {}, max matthews {:.4}, median {:.4}, mean norm {:.4}{}",
            s.iteration,
            s.depth,
            s.max_matthews,
            s.median_matthews,
            s.mean_l2_norm,
            if record.archived.is_some() { ", inverted" } else { "" }
        );
        self.0.on_iteration(record)
    }
}

fn cmd_search(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    pool_size: Option<usize>,
    evaluator: Option<String>,
) -> anyhow::Result<()> {
    let mut config = RunConfig::load(config_path).map_err(|e| match e {
        Error::Io(io) => anyhow!(Error::Config(format!("cannot read {}: {io}", config_path.display()))),
        other => anyhow!(other),
    })?;
    if let Some(seed) = seed {
        config.search.seed = seed;
    }
    if let Some(command) = evaluator {
        let timeout = match &config.evaluator {
            EvaluatorConfig::External { timeout, .. } => *timeout,
            EvaluatorConfig::Surrogate { .. } => DEFAULT_WORKER_TIMEOUT,
        };
        config.evaluator = EvaluatorConfig::External {
            command: command.split_whitespace().map(str::to_owned).collect(),
            pool_size: config.evaluator.pool_size(),
            timeout,
        };
    }
    if let Some(size) = pool_size {
        config.evaluator.set_pool_size(size);
    }
    if let Some(out) = out {
        config.output_dir = Some(out);
    }
    config.validate()?;
    let dir = config
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory: pass --out or set [output] dir".into()))?;

    let mut pool = config.build_pool()?;
    let mut observer = Progress(RunWriter::create(&dir, &config)?);
    let outcome = search::run(&config.search, &mut pool, &mut observer)?;
    observer.0.finish(&outcome)?;

    let library = &config.search.library;
    let arch = &outcome.final_architecture;
    println!("final: {} {}", arch.encode_layers(library), arch.shortcuts_json());
    for (t, arch) in &outcome.archived_architectures {
        println!(
            "archived at iteration {t}: {} {}",
            arch.encode_layers(library),
            arch.shortcuts_json()
        );
    }
    println!("run directory: {}", dir.display());
    Ok(())
}

fn load_snapshot(path: &Path) -> anyhow::Result<(ased::LayerLibrary, Prototype)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Prototype::parse_snapshot(&text).with_context(|| format!("invalid prototype snapshot {}", path.display()))
}

fn cmd_sample(path: &Path, k: usize, seed: u64) -> anyhow::Result<()> {
    let (library, prototype) = load_snapshot(path)?;
    for layers in prototype.sample(k, &mut rng_from(seed)) {
        println!("{}", library.encode(&layers));
    }
    Ok(())
}

fn cmd_report(dir: &Path) -> anyhow::Result<()> {
    let config = rundir::load_config(dir)?;
    print!("{}", rundir::report(dir)?.render(&config));
    Ok(())
}

fn cmd_inspect(path: &Path) -> anyhow::Result<()> {
    let (library, prototype) = load_snapshot(path)?;
    println!("{:>5} {}", "row", library.tokens().join(" "));
    for (i, row) in prototype.rows().enumerate() {
        let probs: Vec<String> = row.iter().map(|p| format!("{p:.5}")).collect();
        println!(
            "{:>5} {}  norm {:.5}",
            i + 1,
            probs.join(" "),
            prototype.row_l2_norm(i)?
        );
    }
    println!("mean norm: {:.5}", prototype.mean_l2_norm(false)?);
    println!("architecture: {}", library.encode(&prototype.argmax_architecture()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search {
            config,
            seed,
            out,
            pool_size,
            evaluator,
        } => cmd_search(&config, seed, out, pool_size, evaluator),
        Command::Sample { prototype, k, seed } => cmd_sample(&prototype, k, seed),
        Command::Report { run_dir } => cmd_report(&run_dir),
        Command::Inspect { prototype } => cmd_inspect(&prototype),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
