//! Migration pool and termination signaling over a [`SharedStore`].
//!
//! Every emit appends one immutable record; nothing in the pool is ever
//! rewritten. Records are single text lines of `key=value` pairs separated by
//! one space, in a fixed field order, terminated by `\n`:
//!
//! ```text
//! node_id=<id> sequence=<u64> kind=<best|random> fitness=<f64> timestamp_ms=<u64> genome=<0/1 string>
//! ```
//!
//! Termination flags use the same encoding:
//!
//! ```text
//! node_id=<id> timestamp_ms=<u64> solved=<bool> stop_reason=<found|signaled|budget> wall_time_ms=<u64> local_evaluations=<u64> generations=<u64> best_fitness=<f64> finished_at_ms=<u64>
//! ```
//!
//! Reals are written in scientific notation with 17 significant digits, which
//! round-trips every `f64` exactly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use rand_core::RngCore;

use crate::engine::{NodeState, RunResult, StopReason};
use crate::genome::{sample_index, Genome, Individual};
use crate::store::{self, SharedStore, StoreError};
use crate::Error;

/// Extra attempts made by [`PoolClient::signal_termination`] after a failed put.
pub const SIGNAL_RETRIES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    Best,
    Random,
}

impl EntryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::Best => "best",
            EntryKind::Random => "random",
        }
    }
}

impl FromStr for EntryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "best" => Ok(EntryKind::Best),
            "random" => Ok(EntryKind::Random),
            _ => Err(Error::Parse("entry kind must be best or random")),
        }
    }
}

/// A published migrant.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolEntry {
    pub node_id: String,
    pub sequence: u64,
    pub kind: EntryKind,
    pub genome: Genome,
    pub fitness: f64,
    pub timestamp_ms: u64,
}

impl PoolEntry {
    pub fn object_name(&self) -> String {
        store::migrant_name(&self.node_id, self.sequence)
    }

    pub fn encode(&self) -> String {
        format!(
            "node_id={} sequence={} kind={} fitness={:.16e} timestamp_ms={} genome={}\n",
            self.node_id,
            self.sequence,
            self.kind.as_str(),
            self.fitness,
            self.timestamp_ms,
            self.genome
        )
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, Error> {
        let mut fields = Fields::new(bytes)?;
        let node_id = fields.node_id()?;
        let sequence = fields.parse("sequence")?;
        let kind = fields.parse("kind")?;
        let fitness = fields.real("fitness")?;
        let timestamp_ms = fields.parse("timestamp_ms")?;
        let genome = Genome::parse_bits(fields.next("genome")?)?;
        fields.finish()?;
        Ok(Self {
            node_id,
            sequence,
            kind,
            genome,
            fitness,
            timestamp_ms,
        })
    }

    /// Pool ordering: higher fitness, then later timestamp, then smaller
    /// node id, then higher sequence. `Greater` means preferred.
    pub fn preference(&self, other: &Self) -> Ordering {
        self.fitness
            .total_cmp(&other.fitness)
            .then(self.timestamp_ms.cmp(&other.timestamp_ms))
            .then_with(|| other.node_id.cmp(&self.node_id))
            .then(self.sequence.cmp(&other.sequence))
    }
}

/// Published by a node that found the optimum.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminationFlag {
    pub node_id: String,
    pub timestamp_ms: u64,
    pub result: RunResult,
}

impl TerminationFlag {
    pub fn encode(&self) -> String {
        let r = &self.result;
        format!(
            "node_id={} timestamp_ms={} solved={} stop_reason={} wall_time_ms={} local_evaluations={} generations={} best_fitness={:.16e} finished_at_ms={}\n",
            self.node_id,
            self.timestamp_ms,
            r.solved,
            r.stop_reason,
            r.wall_time_ms,
            r.local_evaluations,
            r.generations,
            r.best_fitness,
            r.finished_at_ms,
        )
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, Error> {
        let mut fields = Fields::new(bytes)?;
        let node_id = fields.node_id()?;
        let timestamp_ms = fields.parse("timestamp_ms")?;
        let result = RunResult {
            node_id: node_id.clone(),
            solved: fields.parse("solved")?,
            stop_reason: fields.parse("stop_reason")?,
            wall_time_ms: fields.parse("wall_time_ms")?,
            local_evaluations: fields.parse("local_evaluations")?,
            generations: fields.parse("generations")?,
            best_fitness: fields.real("best_fitness")?,
            finished_at_ms: fields.parse("finished_at_ms")?,
        };
        fields.finish()?;
        Ok(Self {
            node_id,
            timestamp_ms,
            result,
        })
    }
}

struct Fields<'a> {
    parts: core::str::Split<'a, char>,
}

impl<'a> Fields<'a> {
    fn new(bytes: &'a [u8]) -> Result<Self, Error> {
        let text = core::str::from_utf8(bytes).map_err(|_| Error::Parse("record is not UTF-8"))?;
        let line = text
            .strip_suffix('\n')
            .ok_or(Error::Parse("record must end with a newline"))?;
        if line.contains('\n') {
            return Err(Error::Parse("record must be a single line"));
        }
        Ok(Self {
            parts: line.split(' '),
        })
    }

    fn next(&mut self, key: &str) -> Result<&'a str, Error> {
        let part = self
            .parts
            .next()
            .ok_or(Error::Parse("record is missing fields"))?;
        match part.split_once('=') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(Error::Parse("record fields out of order")),
        }
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<T, Error> {
        self.next(key)?
            .parse()
            .map_err(|_| Error::Parse("malformed record value"))
    }

    fn real(&mut self, key: &str) -> Result<f64, Error> {
        let v: f64 = self.parse(key)?;
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(Error::Parse("fitness must be a non-negative real"))
        }
    }

    fn node_id(&mut self) -> Result<String, Error> {
        let id = self.next("node_id")?;
        if store::is_valid_node_id(id) {
            Ok(id.to_string())
        } else {
            Err(Error::Parse("invalid node id"))
        }
    }

    fn finish(mut self) -> Result<(), Error> {
        match self.parts.next() {
            None => Ok(()),
            Some(_) => Err(Error::Parse("record has trailing fields")),
        }
    }
}

/// One node's connection to the pool.
///
/// Parsed records are cached by object name; objects are write-once so a
/// cached record never goes stale. Unparseable objects are cached as absent
/// and counted in [`PoolClient::discarded`].
pub struct PoolClient<S> {
    store: S,
    node_id: String,
    next_sequence: u64,
    last_incorporated: Option<(String, u64)>,
    entries: BTreeMap<String, Option<PoolEntry>>,
    flags: BTreeMap<String, Option<TerminationFlag>>,
    discarded: usize,
}

impl<S: SharedStore> PoolClient<S> {
    pub fn new(store: S, node_id: impl Into<String>) -> Result<Self, Error> {
        let node_id = node_id.into();
        if !store::is_valid_node_id(&node_id) {
            return Err(Error::InvalidArgument(
                "node id must be 1-64 characters of [A-Za-z0-9_]",
            ));
        }
        Ok(Self {
            store,
            node_id,
            next_sequence: 0,
            last_incorporated: None,
            entries: BTreeMap::new(),
            flags: BTreeMap::new(),
            discarded: 0,
        })
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    pub fn last_incorporated(&self) -> Option<(&str, u64)> {
        self.last_incorporated
            .as_ref()
            .map(|(n, s)| (n.as_str(), *s))
    }

    /// Number of pool or flag objects that failed to parse.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    /// Publishes the best-ever individual if it improved since the last
    /// migration event, otherwise a uniformly chosen population member.
    ///
    /// On a store failure nothing changes: the sequence number is not
    /// consumed and the improvement flag stays set for the next event.
    pub fn emit_migrant<R: RngCore + ?Sized>(
        &mut self,
        state: &mut NodeState,
        timestamp_ms: u64,
        rng: &mut R,
    ) -> Result<PoolEntry, Error> {
        let (kind, source) = if state.best_changed_since_last_migration {
            (EntryKind::Best, &state.best_ever)
        } else {
            let idx = sample_index(rng, state.population.len());
            (EntryKind::Random, &state.population[idx])
        };
        let entry = PoolEntry {
            node_id: self.node_id.clone(),
            sequence: self.next_sequence,
            kind,
            genome: source.genome.clone(),
            fitness: source.fitness()?,
            timestamp_ms,
        };
        let name = entry.object_name();
        self.store.put(&name, entry.encode().as_bytes())?;
        self.entries.insert(name, Some(entry.clone()));
        self.next_sequence += 1;
        state.best_changed_since_last_migration = false;
        Ok(entry)
    }

    /// The best visible entry emitted by another node, unless it is the one
    /// already incorporated at the previous call that returned something.
    pub fn receive_migrant(&mut self) -> Result<Option<PoolEntry>, Error> {
        let names = self.store.list(store::MIGRANT_PREFIX)?;
        for name in &names {
            if self.entries.contains_key(name) {
                continue;
            }
            let parsed = match self.store.get(name) {
                Ok(bytes) => PoolEntry::decode(&bytes)
                    .ok()
                    .filter(|e| &e.object_name() == name),
                Err(StoreError::NotFound(_)) => continue,
                Err(e) => return Err(e.into()),
            };
            if parsed.is_none() {
                self.discarded += 1;
            }
            self.entries.insert(name.clone(), parsed);
        }
        let winner = names
            .iter()
            .filter_map(|name| self.entries.get(name).and_then(Option::as_ref))
            .filter(|entry| entry.node_id != self.node_id)
            .reduce(|w, entry| {
                if entry.preference(w) == Ordering::Greater {
                    entry
                } else {
                    w
                }
            });
        let Some(winner) = winner else {
            return Ok(None);
        };
        let key = (winner.node_id.clone(), winner.sequence);
        if self.last_incorporated.as_ref() == Some(&key) {
            return Ok(None);
        }
        let winner = winner.clone();
        self.last_incorporated = Some(key);
        Ok(Some(winner))
    }

    /// Publishes this node's termination flag. A flag that already exists
    /// counts as success; other failures are retried [`SIGNAL_RETRIES`] times.
    pub fn signal_termination(
        &mut self,
        result: &RunResult,
        timestamp_ms: u64,
    ) -> Result<(), Error> {
        let flag = TerminationFlag {
            node_id: self.node_id.clone(),
            timestamp_ms,
            result: result.clone(),
        };
        let name = store::done_name(&self.node_id);
        let payload = flag.encode();
        let mut last = None;
        for _ in 0..=SIGNAL_RETRIES {
            match self.store.put(&name, payload.as_bytes()) {
                Ok(()) | Err(StoreError::Conflict(_)) => return Ok(()),
                Err(e) => last = Some(e),
            }
        }
        Err(last
            .map(Error::from)
            .unwrap_or(Error::Protocol("termination flag not written")))
    }

    /// The earliest visible termination flag (ties: smallest node id).
    pub fn check_termination(&mut self) -> Result<Option<TerminationFlag>, Error> {
        let names = self.store.list(store::DONE_PREFIX)?;
        for name in &names {
            if self.flags.contains_key(name) {
                continue;
            }
            let parsed = match self.store.get(name) {
                Ok(bytes) => TerminationFlag::decode(&bytes)
                    .ok()
                    .filter(|f| &store::done_name(&f.node_id) == name),
                Err(StoreError::NotFound(_)) => continue,
                Err(e) => return Err(e.into()),
            };
            if parsed.is_none() {
                self.discarded += 1;
            }
            self.flags.insert(name.clone(), parsed);
        }
        Ok(names
            .iter()
            .filter_map(|name| self.flags.get(name).and_then(Option::as_ref))
            .min_by(|a, b| (a.timestamp_ms, &a.node_id).cmp(&(b.timestamp_ms, &b.node_id)))
            .cloned())
    }
}

impl<S> fmt::Debug for PoolClient<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PoolClient")
            .field("node_id", &self.node_id)
            .field("next_sequence", &self.next_sequence)
            .field("last_incorporated", &self.last_incorporated)
            .field("cached_entries", &self.entries.len())
            .finish()
    }
}

/// Replaces the least fit population member (lowest index on ties) with the
/// migrant. There is no fitness filter.
pub fn incorporate_migrant(state: &mut NodeState, entry: &PoolEntry) -> Result<(), Error> {
    let expected = state.best_ever.genome.len();
    if entry.genome.len() != expected {
        return Err(Error::Protocol(
            "migrant genome length does not match the problem",
        ));
    }
    let worst = worst_index(&state.population)?;
    state.population[worst] = Individual::evaluated(entry.genome.clone(), entry.fitness);
    state.note_candidate(worst);
    Ok(())
}

fn worst_index(population: &[Individual]) -> Result<usize, Error> {
    let mut worst: Option<(usize, f64)> = None;
    for (i, ind) in population.iter().enumerate() {
        let f = ind.fitness()?;
        if worst.is_none_or(|(_, wf)| f < wf) {
            worst = Some((i, f));
        }
    }
    worst
        .map(|(i, _)| i)
        .ok_or(Error::InvalidState("population is empty"))
}

/// Collects every parseable entry visible in `store`, sorted by name.
pub fn visible_entries<S: SharedStore + ?Sized>(store: &S) -> Result<Vec<PoolEntry>, Error> {
    let mut out = Vec::new();
    for name in store.list(store::MIGRANT_PREFIX)? {
        if let Ok(entry) = PoolEntry::decode(&store.get(&name)?) {
            out.push(entry);
        }
    }
    Ok(out)
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
