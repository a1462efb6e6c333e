//! Command-line front end.
//!
//! Exit status: 0 on success, 2 for usage or configuration errors, 1 for
//! failures while running or reporting.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use poolea_core::{run_node, EaParams, PoolClient, ProblemSpec, RngStream, TerminationFlag};

use crate::clock::SystemClock;
use crate::config::{Backend, ExperimentSpec, DEFAULT_EVAL_COST_US};
use crate::dir_store::DirectoryStore;
use crate::experiment::{run_experiment_with, Workers};
use crate::report::{
    format_summary_table, read_raw_csv, summarize_runs, write_raw_csv, write_summary_csv, RunRecord,
};
use crate::sim_store::{DEFAULT_BASE_MS, DEFAULT_JITTER_MS};
use crate::HarnessError;

#[derive(Parser, Debug)]
#[command(
    name = "poolea",
    version,
    about = "Pool-based distributed evolutionary algorithm experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Directory for the raw and summary CSV files.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run every combination of node count and migration gap.
    Sweep(SweepArgs),
    /// Run one node against an existing directory store.
    Node(NodeArgs),
    /// Summarize raw run CSV files.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Also write the summary as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub nodes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "100,200,400")]
    pub gaps: Vec<u64>,
    #[arg(long)]
    pub problem: String,
    #[arg(long, default_value_t = 20)]
    pub reps: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Prefix of the experiment ids and output file names.
    #[arg(long, default_value = "sweep")]
    pub id: String,
    /// Store shared by the nodes: `simulated` or `directory`.
    #[arg(long, default_value = "simulated")]
    pub backend: String,
    /// Root of the directory store.
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BASE_MS)]
    pub base_ms: u64,
    #[arg(long, default_value_t = DEFAULT_JITTER_MS)]
    pub jitter_ms: u64,
    /// Run the simulated store against the wall clock.
    #[arg(long)]
    pub real_time: bool,
    #[arg(long, default_value_t = DEFAULT_EVAL_COST_US)]
    pub eval_cost_us: f64,
    #[arg(long, value_delimiter = ',')]
    pub slowdown: Vec<f64>,
    #[command(flatten)]
    pub ea: EaArgs,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Default)]
pub struct EaArgs {
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long)]
    pub mutation_rate: Option<f64>,
    #[arg(long)]
    pub crossover_rate: Option<f64>,
    #[arg(long)]
    pub max_generations: Option<u64>,
    #[arg(long)]
    pub delay_ms: Option<u64>,
}

#[derive(Args, Debug)]
pub struct NodeArgs {
    /// Directory shared with the other nodes.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub id: String,
    #[arg(long)]
    pub problem: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub rep: u32,
    /// Stream index; defaults to a hash of the node id.
    #[arg(long)]
    pub index: Option<u32>,
    #[arg(long, default_value_t = 100)]
    pub gap: u64,
    /// Extra wall-clock microseconds per evaluation.
    #[arg(long, default_value_t = 0.0)]
    pub slowdown_us: f64,
    #[command(flatten)]
    pub ea: EaArgs,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Run { config, out } => cmd_run(&config, &out),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Node(args) => cmd_node(args),
        Command::Report { csv, out } => cmd_report(&csv, out.as_deref()),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn workers() -> Workers {
    std::env::current_exe()
        .map(Workers::Processes)
        .unwrap_or(Workers::Threads)
}

fn cmd_run(config: &Path, out: &Path) -> Result<(), Failure> {
    let spec = ExperimentSpec::load(config).map_err(usage)?;
    let report = run_experiment_with(&spec, &workers())?;
    write_outputs(out, &spec.experiment_id, &report.runs)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let problem: ProblemSpec = args
        .problem
        .parse()
        .map_err(|e| usage(anyhow::anyhow!("--problem: {e}")))?;
    let backend = match args.backend.as_str() {
        "simulated" => Backend::Simulated {
            base_ms: args.base_ms,
            jitter_ms: args.jitter_ms,
            virtual_clock: !args.real_time,
        },
        "directory" => Backend::Directory {
            root: args
                .root
                .clone()
                .ok_or_else(|| usage(anyhow::anyhow!("--backend directory needs --root")))?,
        },
        other => return Err(usage(anyhow::anyhow!("unknown backend {other:?}"))),
    };
    if args.nodes.is_empty() || args.gaps.is_empty() {
        return Err(usage(anyhow::anyhow!(
            "--nodes and --gaps must not be empty"
        )));
    }
    let mut specs = Vec::new();
    for &gap in &args.gaps {
        for &nodes in &args.nodes {
            let mut spec = ExperimentSpec::new(format!("{}_n{nodes}_g{gap}", args.id), problem);
            spec.node_count = nodes;
            spec.migration_gap = gap;
            spec.repetitions = args.reps;
            spec.base_seed = args.seed;
            spec.backend = backend.clone();
            spec.eval_cost_us = args.eval_cost_us;
            spec.slowdown = args.slowdown.clone();
            spec.ea.population = args.ea.population;
            spec.ea.mutation_rate = args.ea.mutation_rate;
            spec.ea.crossover_rate = args.ea.crossover_rate;
            spec.ea.max_generations = args.ea.max_generations;
            spec.ea.delay_ms = args.ea.delay_ms;
            spec.validate().map_err(usage)?;
            specs.push(spec);
        }
    }
    let workers = workers();
    let mut runs = Vec::new();
    for spec in &specs {
        log::info!("running {}", spec.experiment_id);
        runs.extend(run_experiment_with(spec, &workers)?.runs);
    }
    write_outputs(&args.out, &args.id, &runs)
}

fn write_outputs(out: &Path, stem: &str, runs: &[RunRecord]) -> Result<(), Failure> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let raw = out.join(format!("{stem}_runs.csv"));
    let summary_path = out.join(format!("{stem}_summary.csv"));
    write_raw_csv(
        File::create(&raw).with_context(|| raw.display().to_string())?,
        runs,
    )?;
    let summary = summarize_runs(runs);
    write_summary_csv(
        File::create(&summary_path).with_context(|| summary_path.display().to_string())?,
        &summary,
    )?;
    print!("{}", format_summary_table(&summary));
    println!(
        "raw runs: {}\nsummary: {}",
        raw.display(),
        summary_path.display()
    );
    Ok(())
}

fn cmd_report(paths: &[PathBuf], out: Option<&Path>) -> Result<(), Failure> {
    let mut runs = Vec::new();
    for path in paths {
        let file = File::open(path).with_context(|| path.display().to_string())?;
        runs.extend(read_raw_csv(file).with_context(|| path.display().to_string())?);
    }
    if runs.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "no runs in the given files"
        )));
    }
    let summary = summarize_runs(&runs);
    print!("{}", format_summary_table(&summary));
    if let Some(out) = out {
        write_summary_csv(
            File::create(out).with_context(|| out.display().to_string())?,
            &summary,
        )?;
    }
    Ok(())
}

fn stream_from_id(id: &str) -> u32 {
    let h = id
        .bytes()
        .fold(0u64, |h, b| poolea_core::genome::splitmix64(h ^ b as u64));
    (h >> 32) as u32
}

fn cmd_node(args: NodeArgs) -> Result<(), Failure> {
    let problem = args
        .problem
        .parse::<ProblemSpec>()
        .map_err(|e| usage(anyhow::anyhow!("--problem: {e}")))?
        .build()
        .map_err(usage)?;
    let mut params = EaParams {
        migration_gap: args.gap,
        ..EaParams::default()
    };
    if let Some(v) = args.ea.population {
        params.population_size = v;
    }
    params.per_bit_mutation_rate = args.ea.mutation_rate;
    if let Some(v) = args.ea.crossover_rate {
        params.crossover_rate = v;
    }
    params.max_generations = args.ea.max_generations;
    if let Some(v) = args.ea.delay_ms {
        params.post_migration_delay_ms = v;
    }
    params.validate().map_err(usage)?;
    if !args.store.is_dir() {
        return Err(usage(anyhow::anyhow!(
            "store {} is not a directory",
            args.store.display()
        )));
    }
    let store = DirectoryStore::at(&args.store).context("opening store")?;
    let client = PoolClient::new(store, args.id.as_str()).map_err(usage)?;
    let index = args.index.unwrap_or_else(|| stream_from_id(&args.id));
    let rng = RngStream::for_node(args.seed, args.rep, index);
    let clock = SystemClock::with_slowdown(args.slowdown_us);
    let (result, failure) = match run_node(params, &problem, client, clock, rng) {
        Ok(r) => (r, None),
        Err(e) => (e.partial.clone(), Some(e)),
    };
    let line = TerminationFlag {
        node_id: result.node_id.clone(),
        timestamp_ms: result.finished_at_ms,
        result,
    }
    .encode();
    let mut stdout = std::io::stdout();
    stdout
        .write_all(line.as_bytes())
        .context("writing result")?;
    stdout.flush().context("writing result")?;
    match failure {
        None => Ok(()),
        Some(e) => Err(Failure::Runtime(e.into())),
    }
}
