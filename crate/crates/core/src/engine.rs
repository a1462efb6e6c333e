//! Per-node generational loop: tournament selection, uniform crossover,
//! bit-flip mutation, generational replacement with elitism, and the hooks
//! where the node talks to the pool.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_core::RngCore;

use crate::clock::Clock;
use crate::genome::{
    bernoulli, mutate_in_place, random_genome, tournament_select, uniform_crossover, Individual,
    RngStream,
};
use crate::pool::{incorporate_migrant, PoolClient};
use crate::problems::ProblemInstance;
use crate::store::SharedStore;
use crate::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct EaParams {
    pub population_size: usize,
    pub tournament_k: usize,
    /// `None` means one expected flip per offspring (1 / genome length).
    pub per_bit_mutation_rate: Option<f64>,
    /// Probability that an offspring is a crossover child rather than a copy
    /// of the first tournament winner. Mutation is always applied.
    pub crossover_rate: f64,
    pub elite_count: usize,
    pub migration_gap: u64,
    pub post_migration_delay_ms: u64,
    pub min_evaluations: u64,
    /// `None` means `min_evaluations / population_size`.
    pub max_generations: Option<u64>,
}

impl Default for EaParams {
    fn default() -> Self {
        Self {
            population_size: 1000,
            tournament_k: 3,
            per_bit_mutation_rate: None,
            crossover_rate: 0.5,
            elite_count: 1,
            migration_gap: 100,
            post_migration_delay_ms: 1000,
            min_evaluations: 4_000_000,
            max_generations: None,
        }
    }
}

impl EaParams {
    pub fn validate(&self) -> Result<(), Error> {
        if self.population_size < 2 {
            return Err(Error::InvalidArgument("population size must be at least 2"));
        }
        if self.elite_count == 0 || self.elite_count >= self.population_size {
            return Err(Error::InvalidArgument(
                "elite count must be in 1..population size",
            ));
        }
        if self.tournament_k == 0 {
            return Err(Error::InvalidArgument("tournament size must be at least 1"));
        }
        if self.migration_gap == 0 {
            return Err(Error::InvalidArgument("migration gap must be at least 1"));
        }
        if let Some(rate) = self.per_bit_mutation_rate {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidArgument("mutation rate must lie in [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::InvalidArgument("crossover rate must lie in [0, 1]"));
        }
        if self.max_generations() == 0 {
            return Err(Error::InvalidArgument(
                "generation budget must be at least 1",
            ));
        }
        Ok(())
    }

    pub fn mutation_rate(&self, genome_len: usize) -> f64 {
        self.per_bit_mutation_rate
            .unwrap_or(1.0 / genome_len as f64)
    }

    pub fn max_generations(&self) -> u64 {
        self.max_generations
            .unwrap_or(self.min_evaluations / self.population_size.max(1) as u64)
    }

    pub fn offspring_per_generation(&self) -> usize {
        self.population_size - self.elite_count
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub population: Vec<Individual>,
    pub generation: u64,
    pub local_evaluations: u64,
    pub best_ever: Individual,
    pub best_changed_since_last_migration: bool,
}

impl NodeState {
    pub fn best_fitness(&self) -> f64 {
        self.best_ever.fitness.unwrap_or(0.0)
    }

    /// Promotes `population[idx]` to best-ever if it beats it.
    pub(crate) fn note_candidate(&mut self, idx: usize) {
        let candidate = &self.population[idx];
        if candidate.fitness.unwrap_or(f64::NEG_INFINITY) > self.best_fitness() {
            self.best_ever = candidate.clone();
            self.best_changed_since_last_migration = true;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StopReason {
    /// This node reached the optimum.
    Found,
    /// Another node's termination flag became visible.
    Signaled,
    /// The generation budget ran out.
    Budget,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Found => "found",
            StopReason::Signaled => "signaled",
            StopReason::Budget => "budget",
        }
    }
}

impl FromStr for StopReason {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "found" => Ok(StopReason::Found),
            "signaled" => Ok(StopReason::Signaled),
            "budget" => Ok(StopReason::Budget),
            _ => Err(Error::Parse(
                "stop reason must be found, signaled or budget",
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub node_id: String,
    pub solved: bool,
    /// Time from node start to stop.
    pub wall_time_ms: u64,
    pub local_evaluations: u64,
    pub generations: u64,
    pub best_fitness: f64,
    pub stop_reason: StopReason,
    /// Clock reading when the node stopped.
    pub finished_at_ms: u64,
}

pub fn init_node<R: RngCore + ?Sized>(
    params: &EaParams,
    problem: &ProblemInstance,
    rng: &mut R,
) -> Result<NodeState, Error> {
    params.validate()?;
    let len = problem.genome_len();
    let population = (0..params.population_size)
        .map(|_| {
            let g = random_genome(len, rng)?;
            let f = problem.evaluate(&g)?;
            Ok(Individual::evaluated(g, f))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let best = best_index(&population);
    Ok(NodeState {
        best_ever: population[best].clone(),
        population,
        generation: 0,
        local_evaluations: params.population_size as u64,
        best_changed_since_last_migration: true,
    })
}

/// Index of the fittest individual, lowest index on ties.
fn best_index(population: &[Individual]) -> usize {
    let mut best = 0;
    for (i, ind) in population.iter().enumerate().skip(1) {
        if ind.fitness > population[best].fitness {
            best = i;
        }
    }
    best
}

/// One generation: `population_size - elite_count` offspring plus the elite
/// of the previous population, which occupies the first slots.
///
/// Each offspring takes two tournament winners; with probability
/// `crossover_rate` it is their uniform-crossover child, otherwise a copy of
/// the first winner. Every offspring is then mutated and evaluated.
pub fn step_generation<R: RngCore + ?Sized>(
    state: &mut NodeState,
    params: &EaParams,
    problem: &ProblemInstance,
    rng: &mut R,
) -> Result<(), Error> {
    let rate = params.mutation_rate(problem.genome_len());
    let old = &state.population;

    let mut next = Vec::with_capacity(params.population_size);
    if params.elite_count == 1 {
        next.push(old[best_index(old)].clone());
    } else {
        let mut order: Vec<usize> = (0..old.len()).collect();
        order.sort_by(|&a, &b| {
            let (fa, fb) = (old[a].fitness.unwrap_or(0.0), old[b].fitness.unwrap_or(0.0));
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        next.extend(order[..params.elite_count].iter().map(|&i| old[i].clone()));
    }

    for _ in 0..params.offspring_per_generation() {
        let a = tournament_select(old, params.tournament_k, rng)?;
        let b = tournament_select(old, params.tournament_k, rng)?;
        let mut child = if params.crossover_rate >= 1.0 || bernoulli(rng, params.crossover_rate) {
            uniform_crossover(&old[a].genome, &old[b].genome, rng)?
        } else {
            old[a].genome.clone()
        };
        mutate_in_place(&mut child, rate, rng)?;
        let fitness = problem.evaluate(&child)?;
        next.push(Individual::evaluated(child, fitness));
    }

    state.population = next;
    state.generation += 1;
    state.local_evaluations += params.offspring_per_generation() as u64;
    let best = best_index(&state.population);
    state.note_candidate(best);
    Ok(())
}

/// A run that stopped on a store failure, with what was achieved so far.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeError {
    pub partial: RunResult,
    pub error: Error,
}

impl fmt::Display for NodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "node {} failed after {} generations: {}",
            self.partial.node_id, self.partial.generations, self.error
        )
    }
}

impl core::error::Error for NodeError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Generation-at-a-time driver for one node.
///
/// [`NodeRunner::step`] runs one generation, the migration exchange when the
/// generation is a multiple of the gap (followed by the post-migration
/// delay), and then the termination checks. A scheduler can interleave many
/// runners; [`run_node`] simply loops one to completion.
pub struct NodeRunner<'p, S, C> {
    params: EaParams,
    problem: &'p ProblemInstance,
    client: PoolClient<S>,
    clock: C,
    rng: RngStream,
    state: NodeState,
    started_ms: u64,
    migration_errors: u64,
    migrants_received: u64,
    result: Option<RunResult>,
}

impl<'p, S: SharedStore, C: Clock> NodeRunner<'p, S, C> {
    pub fn new(
        params: EaParams,
        problem: &'p ProblemInstance,
        client: PoolClient<S>,
        clock: C,
        mut rng: RngStream,
    ) -> Result<Self, Error> {
        let started_ms = clock.now_ms();
        let state = init_node(&params, problem, &mut rng)?;
        clock.charge_evaluations(state.local_evaluations);
        Ok(Self {
            params,
            problem,
            client,
            clock,
            rng,
            state,
            started_ms,
            migration_errors: 0,
            migrants_received: 0,
            result: None,
        })
    }

    pub fn node_id(&self) -> &str {
        self.client.node_id()
    }

    pub fn state(&self) -> &NodeState {
        &self.state
    }

    /// Direct access to the population, e.g. to seed it before the run.
    pub fn state_mut(&mut self) -> &mut NodeState {
        &mut self.state
    }

    pub fn client(&self) -> &PoolClient<S> {
        &self.client
    }

    pub fn clock(&self) -> &C {
        &self.clock
    }

    pub fn migration_errors(&self) -> u64 {
        self.migration_errors
    }

    pub fn migrants_received(&self) -> u64 {
        self.migrants_received
    }

    pub fn result(&self) -> Option<&RunResult> {
        self.result.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.result.is_some()
    }

    /// Advances one generation. Returns the final result once the node stops;
    /// further calls keep returning it without doing work.
    pub fn step(&mut self) -> Result<Option<RunResult>, NodeError> {
        if let Some(done) = &self.result {
            return Ok(Some(done.clone()));
        }
        step_generation(&mut self.state, &self.params, self.problem, &mut self.rng)
            .map_err(|e| self.fail(e))?;
        self.clock
            .charge_evaluations(self.params.offspring_per_generation() as u64);

        if self
            .state
            .generation
            .is_multiple_of(self.params.migration_gap)
        {
            self.migrate();
            if self.params.post_migration_delay_ms > 0 {
                self.clock.sleep_ms(self.params.post_migration_delay_ms);
            }
        }

        let stop = if self.problem.is_solved(self.state.best_fitness()) {
            Some(StopReason::Found)
        } else if self.foreign_flag_visible() {
            Some(StopReason::Signaled)
        } else if self.state.generation >= self.params.max_generations() {
            Some(StopReason::Budget)
        } else {
            None
        };
        let Some(reason) = stop else {
            return Ok(None);
        };
        let result = self.snapshot(reason);
        if reason == StopReason::Found {
            let now = self.clock.now_ms();
            if let Err(e) = self.client.signal_termination(&result, now) {
                return Err(NodeError {
                    partial: result,
                    error: e,
                });
            }
        }
        self.result = Some(result.clone());
        Ok(Some(result))
    }

    /// Steps until the node stops.
    pub fn run(mut self) -> Result<RunResult, NodeError> {
        loop {
            if let Some(result) = self.step()? {
                return Ok(result);
            }
        }
    }

    fn migrate(&mut self) {
        let now = self.clock.now_ms();
        if self
            .client
            .emit_migrant(&mut self.state, now, &mut self.rng)
            .is_err()
        {
            self.migration_errors += 1;
        }
        match self.client.receive_migrant() {
            Ok(Some(entry)) => match incorporate_migrant(&mut self.state, &entry) {
                Ok(()) => self.migrants_received += 1,
                Err(_) => self.migration_errors += 1,
            },
            Ok(None) => {}
            Err(_) => self.migration_errors += 1,
        }
    }

    fn foreign_flag_visible(&mut self) -> bool {
        match self.client.check_termination() {
            Ok(Some(flag)) => flag.node_id != self.client.node_id(),
            Ok(None) => false,
            Err(_) => {
                self.migration_errors += 1;
                false
            }
        }
    }

    fn snapshot(&self, reason: StopReason) -> RunResult {
        let now = self.clock.now_ms();
        RunResult {
            node_id: self.client.node_id().into(),
            solved: reason == StopReason::Found,
            wall_time_ms: now.saturating_sub(self.started_ms),
            local_evaluations: self.state.local_evaluations,
            generations: self.state.generation,
            best_fitness: self.state.best_fitness(),
            stop_reason: reason,
            finished_at_ms: now,
        }
    }

    fn fail(&self, error: Error) -> NodeError {
        NodeError {
            partial: self.snapshot(StopReason::Budget),
            error,
        }
    }
}

/// Runs one node until it finds the optimum, sees another node's flag, or
/// exhausts its generation budget. Never waits on other nodes.
pub fn run_node<S: SharedStore, C: Clock>(
    params: EaParams,
    problem: &ProblemInstance,
    client: PoolClient<S>,
    clock: C,
    rng: RngStream,
) -> Result<RunResult, NodeError> {
    let node_id = String::from(client.node_id());
    let runner =
        NodeRunner::new(params, problem, client, &clock, rng).map_err(|error| NodeError {
            partial: RunResult {
                node_id,
                solved: false,
                wall_time_ms: 0,
                local_evaluations: 0,
                generations: 0,
                best_fitness: 0.0,
                stop_reason: StopReason::Budget,
                finished_at_ms: clock.now_ms(),
            },
            error,
        })?;
    runner.run()
}
