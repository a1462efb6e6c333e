//! Experiment specifications and their line-oriented config format.
//!
//! ```text
//! # comments and blank lines are ignored
//! experiment_id = mmdp_4n
//! problem = mmdp:k=20
//! nodes = 4
//! gap = 100
//! reps = 20
//! seed = 1
//! backend = simulated        # or directory
//! base_ms = 1000
//! jitter_ms = 500
//! virtual_clock = true
//! ```
//!
//! Optional keys: `root` (directory backend), `population`, `mutation_rate`,
//! `crossover_rate`, `max_generations`, `delay_ms`, `eval_cost_us` (virtual
//! cost of one evaluation), `slowdown` (comma-separated per-node multipliers
//! of the evaluation cost).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use poolea_core::{EaParams, ProblemSpec};

use crate::sim_store::{DEFAULT_BASE_MS, DEFAULT_JITTER_MS};
use crate::HarnessError;

/// Virtual microseconds charged per fitness evaluation unless overridden:
/// a 1000-individual generation then takes about 10 ms.
pub const DEFAULT_EVAL_COST_US: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub enum Backend {
    Directory {
        root: PathBuf,
    },
    Simulated {
        base_ms: u64,
        jitter_ms: u64,
        virtual_clock: bool,
    },
}

impl Backend {
    pub fn simulated_default() -> Self {
        Backend::Simulated {
            base_ms: DEFAULT_BASE_MS,
            jitter_ms: DEFAULT_JITTER_MS,
            virtual_clock: true,
        }
    }
}

/// Optional overrides of the node parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EaOverrides {
    pub population: Option<usize>,
    pub mutation_rate: Option<f64>,
    pub crossover_rate: Option<f64>,
    pub max_generations: Option<u64>,
    pub delay_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub experiment_id: String,
    pub problem: ProblemSpec,
    pub node_count: usize,
    pub migration_gap: u64,
    pub repetitions: u32,
    pub base_seed: u64,
    pub backend: Backend,
    pub ea: EaOverrides,
    pub eval_cost_us: f64,
    /// Per-node evaluation cost multipliers; missing entries count as 1.
    pub slowdown: Vec<f64>,
}

impl ExperimentSpec {
    pub fn new(experiment_id: impl Into<String>, problem: ProblemSpec) -> Self {
        Self {
            experiment_id: experiment_id.into(),
            problem,
            node_count: 1,
            migration_gap: 100,
            repetitions: 1,
            base_seed: 1,
            backend: Backend::simulated_default(),
            ea: EaOverrides::default(),
            eval_cost_us: DEFAULT_EVAL_COST_US,
            slowdown: Vec::new(),
        }
    }

    /// Node parameters after overrides. The post-migration delay defaults to
    /// 0 ms on the simulated backend and 1000 ms on a real directory.
    pub fn ea_params(&self) -> EaParams {
        let mut p = EaParams {
            migration_gap: self.migration_gap,
            ..EaParams::default()
        };
        p.post_migration_delay_ms = match self.backend {
            Backend::Directory { .. } => 1000,
            Backend::Simulated { .. } => 0,
        };
        if let Some(v) = self.ea.population {
            p.population_size = v;
        }
        if let Some(v) = self.ea.mutation_rate {
            p.per_bit_mutation_rate = Some(v);
        }
        if let Some(v) = self.ea.crossover_rate {
            p.crossover_rate = v;
        }
        if let Some(v) = self.ea.max_generations {
            p.max_generations = Some(v);
        }
        if let Some(v) = self.ea.delay_ms {
            p.post_migration_delay_ms = v;
        }
        p
    }

    pub fn slowdown_for(&self, node: usize) -> f64 {
        self.slowdown.get(node).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !poolea_core::store::is_valid_node_id(&self.experiment_id) {
            return Err(HarnessError::Config(format!(
                "experiment_id {:?} must be 1-64 characters of [A-Za-z0-9_]",
                self.experiment_id
            )));
        }
        if self.node_count == 0 {
            return Err(HarnessError::Config("nodes must be at least 1".into()));
        }
        if self.repetitions == 0 {
            return Err(HarnessError::Config("reps must be at least 1".into()));
        }
        if !self.eval_cost_us.is_finite() || self.eval_cost_us < 0.0 {
            return Err(HarnessError::Config(
                "eval_cost_us must be non-negative".into(),
            ));
        }
        if self.slowdown.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(HarnessError::Config(
                "slowdown factors must be positive".into(),
            ));
        }
        self.problem.build()?;
        self.ea_params().validate()?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut spec = ExperimentSpec::new("experiment", ProblemSpec::Mmdp { blocks: 20 });
        let mut backend_kind = "simulated".to_string();
        let mut root = None;
        let (mut base_ms, mut jitter_ms, mut virtual_clock) =
            (DEFAULT_BASE_MS, DEFAULT_JITTER_MS, true);
        let mut saw_problem = false;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| HarnessError::Config(format!("line {}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad("expected key = value"))?;
            let num = |what: &str| bad(&format!("{key}: expected {what}, got {value:?}"));
            match key {
                "experiment_id" => spec.experiment_id = value.to_string(),
                "problem" => {
                    spec.problem = value.parse().map_err(|e| bad(&format!("problem: {e}")))?;
                    saw_problem = true;
                }
                "nodes" => spec.node_count = value.parse().map_err(|_| num("an integer"))?,
                "gap" => spec.migration_gap = value.parse().map_err(|_| num("an integer"))?,
                "reps" => spec.repetitions = value.parse().map_err(|_| num("an integer"))?,
                "seed" => spec.base_seed = value.parse().map_err(|_| num("an integer"))?,
                "backend" => backend_kind = value.to_string(),
                "root" => root = Some(PathBuf::from(value)),
                "base_ms" => base_ms = value.parse().map_err(|_| num("an integer"))?,
                "jitter_ms" => jitter_ms = value.parse().map_err(|_| num("an integer"))?,
                "virtual_clock" => {
                    virtual_clock = value.parse().map_err(|_| num("true or false"))?
                }
                "population" => {
                    spec.ea.population = Some(value.parse().map_err(|_| num("an integer"))?)
                }
                "mutation_rate" => {
                    spec.ea.mutation_rate = Some(value.parse().map_err(|_| num("a real"))?)
                }
                "crossover_rate" => {
                    spec.ea.crossover_rate = Some(value.parse().map_err(|_| num("a real"))?)
                }
                "max_generations" => {
                    spec.ea.max_generations = Some(value.parse().map_err(|_| num("an integer"))?)
                }
                "delay_ms" => {
                    spec.ea.delay_ms = Some(value.parse().map_err(|_| num("an integer"))?)
                }
                "eval_cost_us" => spec.eval_cost_us = value.parse().map_err(|_| num("a real"))?,
                "slowdown" => {
                    spec.slowdown = value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| num("comma-separated reals"))?
                }
                _ => return Err(bad(&format!("unknown key {key:?}"))),
            }
        }
        if !saw_problem {
            return Err(HarnessError::Config("missing required key: problem".into()));
        }
        spec.backend = match backend_kind.as_str() {
            "simulated" => Backend::Simulated {
                base_ms,
                jitter_ms,
                virtual_clock,
            },
            "directory" => Backend::Directory {
                root: root
                    .ok_or_else(|| HarnessError::Config("directory backend needs root".into()))?,
            },
            other => return Err(HarnessError::Config(format!("unknown backend {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Config text that parses back to this spec.
    pub fn to_config(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment_id = {}", self.experiment_id);
        let _ = writeln!(out, "problem = {}", self.problem);
        let _ = writeln!(out, "nodes = {}", self.node_count);
        let _ = writeln!(out, "gap = {}", self.migration_gap);
        let _ = writeln!(out, "reps = {}", self.repetitions);
        let _ = writeln!(out, "seed = {}", self.base_seed);
        match &self.backend {
            Backend::Directory { root } => {
                let _ = writeln!(out, "backend = directory");
                let _ = writeln!(out, "root = {}", root.display());
            }
            Backend::Simulated {
                base_ms,
                jitter_ms,
                virtual_clock,
            } => {
                let _ = writeln!(out, "backend = simulated");
                let _ = writeln!(out, "base_ms = {base_ms}");
                let _ = writeln!(out, "jitter_ms = {jitter_ms}");
                let _ = writeln!(out, "virtual_clock = {virtual_clock}");
            }
        }
        let ea = &self.ea;
        if let Some(v) = ea.population {
            let _ = writeln!(out, "population = {v}");
        }
        if let Some(v) = ea.mutation_rate {
            let _ = writeln!(out, "mutation_rate = {v}");
        }
        if let Some(v) = ea.crossover_rate {
            let _ = writeln!(out, "crossover_rate = {v}");
        }
        if let Some(v) = ea.max_generations {
            let _ = writeln!(out, "max_generations = {v}");
        }
        if let Some(v) = ea.delay_ms {
            let _ = writeln!(out, "delay_ms = {v}");
        }
        let _ = writeln!(out, "eval_cost_us = {}", self.eval_cost_us);
        if !self.slowdown.is_empty() {
            let joined: Vec<String> = self.slowdown.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "slowdown = {}", joined.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = "\
# MMDP, four nodes
experiment_id = mmdp4
problem = mmdp:k=20
nodes = 4
gap = 100
reps = 20
seed = 7
backend = simulated
base_ms = 1000
jitter_ms = 500
virtual_clock = true
population = 500   # half size
mutation_rate = 0.01
crossover_rate = 0.6
max_generations = 2000
delay_ms = 0
slowdown = 1, 1, 2, 2
";
        let spec = ExperimentSpec::parse(text).unwrap();
        assert_eq!(spec.experiment_id, "mmdp4");
        assert_eq!(spec.node_count, 4);
        assert_eq!(spec.repetitions, 20);
        assert_eq!(spec.slowdown_for(3), 2.0);
        assert_eq!(spec.slowdown_for(9), 1.0);
        let p = spec.ea_params();
        assert_eq!(p.population_size, 500);
        assert_eq!(p.per_bit_mutation_rate, Some(0.01));
        assert_eq!(p.crossover_rate, 0.6);
        assert_eq!(p.max_generations(), 2000);
        assert_eq!(p.migration_gap, 100);
        assert_eq!(ExperimentSpec::parse(&spec.to_config()).unwrap(), spec);
    }

    #[test]
    fn defaults_per_backend() {
        let sim = ExperimentSpec::parse("problem = ppeaks:P=100,N=64,seed=3").unwrap();
        assert_eq!(sim.ea_params().post_migration_delay_ms, 0);
        assert_eq!(sim.backend, Backend::simulated_default());
        let dir = ExperimentSpec::parse("problem = mmdp:k=2\nbackend = directory\nroot = /tmp/x")
            .unwrap();
        assert_eq!(dir.ea_params().post_migration_delay_ms, 1000);
    }

    #[test]
    fn rejects_malformed() {
        for text in [
            "",
            "problem = mmdp:k=20\nnodes = four",
            "problem = mmdp:k=20\nwhat = 1",
            "problem = tsp",
            "problem = mmdp:k=20\nbackend = dropbox",
            "problem = mmdp:k=20\nbackend = directory",
            "problem = mmdp:k=20\nnodes = 0",
            "problem = mmdp:k=20\npopulation = 1",
            "problem = mmdp:k=20\nexperiment_id = a-b",
            "problem mmdp",
        ] {
            assert!(
                matches!(
                    ExperimentSpec::parse(text),
                    Err(HarnessError::Config(_)) | Err(HarnessError::Core(_))
                ),
                "{text:?}"
            );
        }
    }
}
