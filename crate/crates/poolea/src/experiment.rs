//! Runs experiments: every repetition gets a fresh store namespace and one
//! shared problem instance, and all nodes start together.
//!
//! With a virtual clock the nodes are interleaved by a deterministic
//! scheduler that always steps the unfinished node whose clock is furthest
//! behind (lowest index on ties), so a whole run is a pure function of the
//! spec. Otherwise each node runs against the wall clock, on its own thread
//! or, for the directory backend, optionally as a child `poolea node` process.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;

use poolea_core::store::{DONE_PREFIX, MIGRANT_PREFIX, RECORD_SUFFIX};
use poolea_core::{
    Clock, EaParams, NodeRunner, NodeState, PoolClient, ProblemInstance, RngStream, RunResult,
    SharedStore, StopReason, TerminationFlag,
};

use crate::clock::{unix_ms, SystemClock, VirtualClock};
use crate::config::{Backend, ExperimentSpec};
use crate::dir_store::DirectoryStore;
use crate::report::{ExperimentReport, RunRecord};
use crate::sim_store::LatencySimStore;
use crate::HarnessError;

type Outcome = Result<RunResult, (RunResult, String)>;

/// One repetition: its CSV record and every node's (possibly partial) result.
#[derive(Clone, Debug, PartialEq)]
pub struct RepetitionOutcome {
    pub record: RunRecord,
    pub results: Vec<RunResult>,
}

pub fn node_id(index: usize) -> String {
    format!("node{index}")
}

/// Stream used for the simulated store's delays; distinct from every node stream.
fn store_rng(base_seed: u64, rep: u32) -> RngStream {
    RngStream::with_stream(base_seed, ((rep as u64) << 32) | 0xFFFF_FFFF)
}

/// How wall-clock nodes are hosted. Virtual-clock runs are always in-process.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Workers {
    #[default]
    Threads,
    /// Directory-backend nodes run as `<exe> node ...` child processes.
    Processes(PathBuf),
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, HarnessError> {
    run_experiment_with(spec, &Workers::Threads)
}

pub fn run_experiment_with(
    spec: &ExperimentSpec,
    workers: &Workers,
) -> Result<ExperimentReport, HarnessError> {
    spec.validate()?;
    let mut runs = Vec::with_capacity(spec.repetitions as usize);
    let mut node_results = Vec::with_capacity(spec.repetitions as usize);
    for rep in 0..spec.repetitions {
        let outcome = repetition(
            spec,
            rep,
            workers,
            |_: usize, _: &mut NodeState, _: &ProblemInstance| {},
        )?;
        log::info!(
            "{} rep {rep}: solved={} first_solve_ms={:?} evals={}",
            spec.experiment_id,
            outcome.record.solved,
            outcome.record.first_solve_ms,
            outcome.record.aggregate_evaluations
        );
        runs.push(outcome.record);
        node_results.push(outcome.results);
    }
    Ok(ExperimentReport {
        spec: spec.clone(),
        runs,
        node_results,
    })
}

pub fn run_repetition(spec: &ExperimentSpec, rep: u32) -> Result<RepetitionOutcome, HarnessError> {
    run_repetition_with(spec, rep, |_, _, _| {})
}

/// Like [`run_repetition`], but `prepare(node_index, state, problem)` may
/// alter each node's initial population before any node starts.
pub fn run_repetition_with<F>(
    spec: &ExperimentSpec,
    rep: u32,
    mut prepare: F,
) -> Result<RepetitionOutcome, HarnessError>
where
    F: FnMut(usize, &mut NodeState, &ProblemInstance),
{
    repetition(spec, rep, &Workers::Threads, &mut prepare)
}

fn repetition<F>(
    spec: &ExperimentSpec,
    rep: u32,
    workers: &Workers,
    mut prepare: F,
) -> Result<RepetitionOutcome, HarnessError>
where
    F: FnMut(usize, &mut NodeState, &ProblemInstance),
{
    let problem = spec.problem.build()?;
    let params = spec.ea_params();
    params.validate()?;
    let (started_ms, outcomes) = match &spec.backend {
        Backend::Simulated {
            base_ms,
            jitter_ms,
            virtual_clock: true,
        } => {
            let store =
                LatencySimStore::with_rng(*base_ms, *jitter_ms, store_rng(spec.base_seed, rep));
            let outcomes = run_scheduled(spec, rep, &problem, &params, &mut prepare, |i| {
                let clock = VirtualClock::new(spec.eval_cost_us * spec.slowdown_for(i));
                (store.participant(node_id(i), clock.clone()), clock)
            })?;
            (0, outcomes)
        }
        Backend::Simulated {
            base_ms,
            jitter_ms,
            virtual_clock: false,
        } => {
            let store =
                LatencySimStore::with_rng(*base_ms, *jitter_ms, store_rng(spec.base_seed, rep));
            let started = unix_ms();
            let outcomes = run_threaded(spec, rep, &problem, &params, &mut prepare, |i| {
                let clock = real_clock(spec, i);
                Ok((store.participant(node_id(i), clock.clone()), clock))
            })?;
            (started, outcomes)
        }
        Backend::Directory { root } => {
            let dir = root.join(format!("{}_rep{rep}", spec.experiment_id));
            clear_namespace(&dir)?;
            let started = unix_ms();
            if let Workers::Processes(exe) = workers {
                let outcomes = run_processes(spec, rep, &params, &dir, exe)?;
                let record = RunRecord::from_outcomes(spec, rep, started, &outcomes);
                let results = outcomes
                    .into_iter()
                    .map(|o| o.unwrap_or_else(|(p, _)| p))
                    .collect();
                return Ok(RepetitionOutcome { record, results });
            }
            let outcomes = run_threaded(spec, rep, &problem, &params, &mut prepare, |i| {
                Ok((DirectoryStore::at(&dir)?, real_clock(spec, i)))
            })?;
            (started, outcomes)
        }
    };
    let record = RunRecord::from_outcomes(spec, rep, started_ms, &outcomes);
    let results = outcomes
        .into_iter()
        .map(|o| o.unwrap_or_else(|(partial, _)| partial))
        .collect();
    Ok(RepetitionOutcome { record, results })
}

/// Wall clock that sleeps `eval_cost_us * (slowdown - 1)` per evaluation.
fn real_clock(spec: &ExperimentSpec, node: usize) -> SystemClock {
    SystemClock::with_slowdown(spec.eval_cost_us * (spec.slowdown_for(node) - 1.0))
}

/// Creates the namespace directory and removes pool objects left by an
/// earlier run under the same experiment id.
fn clear_namespace(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let pool_object = (name.starts_with(MIGRANT_PREFIX) || name.starts_with(DONE_PREFIX))
            && name.ends_with(RECORD_SUFFIX);
        if pool_object || name.starts_with(".tmp-") {
            log::warn!("removing stale {}", entry.path().display());
            fs::remove_file(entry.path())?;
        }
    }
    Ok(())
}

fn build_runners<'p, S, C, F, M>(
    spec: &ExperimentSpec,
    rep: u32,
    problem: &'p ProblemInstance,
    params: &EaParams,
    prepare: &mut F,
    mut make: M,
) -> Result<Vec<NodeRunner<'p, S, C>>, HarnessError>
where
    S: SharedStore,
    C: Clock,
    F: FnMut(usize, &mut NodeState, &ProblemInstance),
    M: FnMut(usize) -> Result<(S, C), HarnessError>,
{
    (0..spec.node_count)
        .map(|i| {
            let (store, clock) = make(i)?;
            let client = PoolClient::new(store, node_id(i))?;
            let rng = RngStream::for_node(spec.base_seed, rep, i as u32);
            let mut runner = NodeRunner::new(params.clone(), problem, client, clock, rng)?;
            prepare(i, runner.state_mut(), problem);
            Ok(runner)
        })
        .collect()
}

fn run_scheduled<S, F, M>(
    spec: &ExperimentSpec,
    rep: u32,
    problem: &ProblemInstance,
    params: &EaParams,
    prepare: &mut F,
    mut make: M,
) -> Result<Vec<Outcome>, HarnessError>
where
    S: SharedStore,
    F: FnMut(usize, &mut NodeState, &ProblemInstance),
    M: FnMut(usize) -> (S, VirtualClock),
{
    let mut runners = build_runners(spec, rep, problem, params, prepare, |i| Ok(make(i)))?;
    let mut outcomes: Vec<Option<Outcome>> = vec![None; runners.len()];
    while let Some(i) = (0..runners.len())
        .filter(|&i| outcomes[i].is_none())
        .min_by_key(|&i| (runners[i].clock().now_us(), i))
    {
        match runners[i].step() {
            Ok(Some(result)) => outcomes[i] = Some(Ok(result)),
            Ok(None) => {}
            Err(e) => {
                log::warn!("{e}");
                outcomes[i] = Some(Err((e.partial, e.error.to_string())));
            }
        }
    }
    Ok(outcomes.into_iter().flatten().collect())
}

fn run_threaded<S, C, F, M>(
    spec: &ExperimentSpec,
    rep: u32,
    problem: &ProblemInstance,
    params: &EaParams,
    prepare: &mut F,
    make: M,
) -> Result<Vec<Outcome>, HarnessError>
where
    S: SharedStore + Send,
    C: Clock + Send,
    F: FnMut(usize, &mut NodeState, &ProblemInstance),
    M: FnMut(usize) -> Result<(S, C), HarnessError>,
{
    let runners = build_runners(spec, rep, problem, params, prepare, make)?;
    let outcomes = thread::scope(|scope| {
        let handles: Vec<_> = runners
            .into_iter()
            .map(|runner| {
                let id = runner.node_id().to_string();
                (id, scope.spawn(move || runner.run()))
            })
            .collect();
        handles
            .into_iter()
            .map(|(id, handle)| match handle.join() {
                Ok(Ok(result)) => Ok(result),
                Ok(Err(e)) => {
                    log::warn!("{e}");
                    Err((e.partial, e.error.to_string()))
                }
                Err(_) => Err((empty_result(id), "worker panicked".to_string())),
            })
            .collect()
    });
    Ok(outcomes)
}

/// Arguments for `poolea node` reproducing node `index` of repetition `rep`.
pub fn node_command_args(
    spec: &ExperimentSpec,
    rep: u32,
    index: usize,
    params: &EaParams,
    dir: &Path,
) -> Vec<String> {
    let mut args = vec![
        "node".to_string(),
        "--store".into(),
        dir.display().to_string(),
        "--id".into(),
        node_id(index),
        "--problem".into(),
        spec.problem.to_string(),
        "--seed".into(),
        spec.base_seed.to_string(),
        "--rep".into(),
        rep.to_string(),
        "--index".into(),
        index.to_string(),
        "--gap".into(),
        params.migration_gap.to_string(),
        "--population".into(),
        params.population_size.to_string(),
        "--crossover-rate".into(),
        params.crossover_rate.to_string(),
        "--max-generations".into(),
        params.max_generations().to_string(),
        "--delay-ms".into(),
        params.post_migration_delay_ms.to_string(),
        "--slowdown-us".into(),
        (spec.eval_cost_us * (spec.slowdown_for(index) - 1.0))
            .max(0.0)
            .to_string(),
    ];
    if let Some(rate) = params.per_bit_mutation_rate {
        args.push("--mutation-rate".into());
        args.push(rate.to_string());
    }
    args
}

fn run_processes(
    spec: &ExperimentSpec,
    rep: u32,
    params: &EaParams,
    dir: &Path,
    exe: &Path,
) -> Result<Vec<Outcome>, HarnessError> {
    let children = (0..spec.node_count)
        .map(|i| {
            Command::new(exe)
                .args(node_command_args(spec, rep, i, params, dir))
                .stdout(Stdio::piped())
                .stderr(Stdio::piped())
                .spawn()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes = children
        .into_iter()
        .enumerate()
        .map(|(i, child)| {
            let id = node_id(i);
            let out = match child.wait_with_output() {
                Ok(out) => out,
                Err(e) => return Err((empty_result(id), e.to_string())),
            };
            let stdout = String::from_utf8_lossy(&out.stdout);
            let parsed = stdout
                .lines()
                .rev()
                .find(|l| !l.trim().is_empty())
                .and_then(|l| TerminationFlag::decode(format!("{l}\n").as_bytes()).ok())
                .map(|flag| flag.result);
            match (out.status.success(), parsed) {
                (true, Some(result)) => Ok(result),
                (_, partial) => {
                    let stderr = String::from_utf8_lossy(&out.stderr);
                    let msg = stderr
                        .lines()
                        .last()
                        .unwrap_or("no result line")
                        .to_string();
                    Err((
                        partial.unwrap_or_else(|| empty_result(id)),
                        format!("{}: {msg}", out.status),
                    ))
                }
            }
        })
        .collect();
    Ok(outcomes)
}

fn empty_result(node_id: String) -> RunResult {
    RunResult {
        node_id,
        solved: false,
        wall_time_ms: 0,
        local_evaluations: 0,
        generations: 0,
        best_fitness: 0.0,
        stop_reason: StopReason::Budget,
        finished_at_ms: 0,
    }
}
