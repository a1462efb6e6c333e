//! Per-repetition records, summary rows and their CSV forms.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use poolea_core::RunResult;

use crate::config::ExperimentSpec;
use crate::HarnessError;

pub const RAW_HEADER: [&str; 11] = [
    "experiment_id",
    "repetition",
    "node_count",
    "gap",
    "solved",
    "first_solve_ms",
    "aggregate_evaluations",
    "per_node_evaluations",
    "stop_reasons",
    "last_stop_ms",
    "failure",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "node_count",
    "gap",
    "runs",
    "solved",
    "failed",
    "success_rate",
    "mean_time_ms",
    "median_time_ms",
    "mean_evaluations",
];

/// Stop reason recorded for a node whose worker failed.
pub const ERROR_REASON: &str = "error";

/// One repetition of an experiment; one row of the raw CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub experiment_id: String,
    pub repetition: u32,
    pub node_count: usize,
    pub gap: u64,
    pub solved: bool,
    /// Experiment start to the first node's solve event.
    pub first_solve_ms: Option<u64>,
    pub aggregate_evaluations: u64,
    pub per_node_evaluations: Vec<u64>,
    pub stop_reasons: Vec<String>,
    /// Experiment start to the last node stopping.
    pub last_stop_ms: u64,
    pub failure: Option<String>,
}

impl RunRecord {
    /// Builds a record from per-node outcomes. `Err` entries are failed
    /// workers, carrying the partial result and the failure message.
    pub fn from_outcomes(
        spec: &ExperimentSpec,
        repetition: u32,
        started_ms: u64,
        outcomes: &[Result<RunResult, (RunResult, String)>],
    ) -> Self {
        let mut first_solve = None::<u64>;
        let mut last_stop = 0;
        let mut failures = Vec::new();
        let mut per_node = Vec::with_capacity(outcomes.len());
        let mut reasons = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            let (result, reason) = match outcome {
                Ok(r) => (r, r.stop_reason.as_str().to_string()),
                Err((partial, msg)) => {
                    failures.push(format!("{}: {msg}", partial.node_id));
                    (partial, ERROR_REASON.to_string())
                }
            };
            let at = result.finished_at_ms.saturating_sub(started_ms);
            if result.solved && outcome.is_ok() {
                first_solve = Some(first_solve.map_or(at, |f| f.min(at)));
            }
            last_stop = last_stop.max(at);
            per_node.push(result.local_evaluations);
            reasons.push(reason);
        }
        Self {
            experiment_id: spec.experiment_id.clone(),
            repetition,
            node_count: spec.node_count,
            gap: spec.migration_gap,
            solved: first_solve.is_some(),
            first_solve_ms: first_solve,
            aggregate_evaluations: per_node.iter().sum(),
            per_node_evaluations: per_node,
            stop_reasons: reasons,
            last_stop_ms: last_stop,
            failure: (!failures.is_empty()).then(|| failures.join("; ")),
        }
    }

    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    /// Local evaluation count of the first node (by index) that found the optimum.
    pub fn solver_evaluations(&self) -> Option<u64> {
        self.stop_reasons
            .iter()
            .position(|r| r == "found")
            .map(|i| self.per_node_evaluations[i])
    }

    fn to_row(&self) -> [String; 11] {
        [
            self.experiment_id.clone(),
            self.repetition.to_string(),
            self.node_count.to_string(),
            self.gap.to_string(),
            self.solved.to_string(),
            self.first_solve_ms
                .map(|v| v.to_string())
                .unwrap_or_default(),
            self.aggregate_evaluations.to_string(),
            join(&self.per_node_evaluations),
            self.stop_reasons.join(";"),
            self.last_stop_ms.to_string(),
            self.failure.clone().unwrap_or_default(),
        ]
    }

    fn from_row(row: &csv::StringRecord) -> Result<Self, HarnessError> {
        if row.len() != RAW_HEADER.len() {
            return Err(HarnessError::Report(format!(
                "expected {} columns, found {}",
                RAW_HEADER.len(),
                row.len()
            )));
        }
        let field = |i: usize| &row[i];
        let int = |i: usize| -> Result<u64, HarnessError> {
            field(i).parse().map_err(|_| {
                HarnessError::Report(format!("{}: not an integer: {:?}", RAW_HEADER[i], field(i)))
            })
        };
        let per_node = if field(7).is_empty() {
            Vec::new()
        } else {
            field(7)
                .split(';')
                .map(|s| s.parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| HarnessError::Report("per_node_evaluations is malformed".into()))?
        };
        Ok(Self {
            experiment_id: field(0).to_string(),
            repetition: int(1)? as u32,
            node_count: int(2)? as usize,
            gap: int(3)?,
            solved: field(4)
                .parse()
                .map_err(|_| HarnessError::Report("solved must be true or false".into()))?,
            first_solve_ms: if field(5).is_empty() {
                None
            } else {
                Some(int(5)?)
            },
            aggregate_evaluations: int(6)?,
            per_node_evaluations: per_node,
            stop_reasons: field(8)
                .split(';')
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
            last_stop_ms: int(9)?,
            failure: (!field(10).is_empty()).then(|| field(10).to_string()),
        })
    }
}

fn join(values: &[u64]) -> String {
    values
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

/// Everything produced by one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub runs: Vec<RunRecord>,
    /// Per-repetition, per-node results (partial results for failed nodes).
    pub node_results: Vec<Vec<RunResult>>,
}

impl ExperimentReport {
    pub fn summary(&self) -> SummaryRow {
        summarize_runs(&self.runs)
            .into_iter()
            .next()
            .expect("a report holds at least one repetition")
    }
}

/// Aggregate over all repetitions of one (node count, gap) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub node_count: usize,
    pub gap: u64,
    pub runs: usize,
    pub solved_runs: usize,
    pub failed_runs: usize,
    pub success_rate: f64,
    /// Over solved, non-failed runs only.
    pub mean_time_ms: Option<f64>,
    pub median_time_ms: Option<f64>,
    /// Over non-failed runs.
    pub mean_evaluations: f64,
}

/// One row per (node count, gap), ordered by gap and then node count.
pub fn summarize_runs(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(u64, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.gap, r.node_count)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((gap, node_count), runs)| {
            let solved = runs.iter().filter(|r| r.solved).count();
            let failed = runs.iter().filter(|r| r.failed()).count();
            let mut times: Vec<u64> = runs
                .iter()
                .filter(|r| !r.failed())
                .filter_map(|r| r.first_solve_ms)
                .collect();
            times.sort_unstable();
            let healthy: Vec<u64> = runs
                .iter()
                .filter(|r| !r.failed())
                .map(|r| r.aggregate_evaluations)
                .collect();
            SummaryRow {
                node_count,
                gap,
                runs: runs.len(),
                solved_runs: solved,
                failed_runs: failed,
                success_rate: solved as f64 / runs.len() as f64,
                mean_time_ms: mean(&times),
                median_time_ms: median(&times),
                mean_evaluations: mean(&healthy).unwrap_or(0.0),
            }
        })
        .collect()
}

/// Summary table over several experiments.
pub fn summarize(reports: &[ExperimentReport]) -> Result<Vec<SummaryRow>, HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::Report("nothing to summarize".into()));
    }
    let all: Vec<RunRecord> = reports
        .iter()
        .flat_map(|r| r.runs.iter().cloned())
        .collect();
    Ok(summarize_runs(&all))
}

fn mean(values: &[u64]) -> Option<f64> {
    (!values.is_empty())
        .then(|| values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64)
}

fn median(sorted: &[u64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2] as f64),
        _ => Some((sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_raw_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RAW_HEADER)?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw_csv<R: Read>(input: R) -> Result<Vec<RunRecord>, HarnessError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(RAW_HEADER.iter().copied()) {
        return Err(HarnessError::Report(
            "not a raw run CSV (header mismatch)".into(),
        ));
    }
    reader
        .records()
        .map(|row| RunRecord::from_row(&row?))
        .collect()
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for s in rows {
        w.write_record([
            s.node_count.to_string(),
            s.gap.to_string(),
            s.runs.to_string(),
            s.solved_runs.to_string(),
            s.failed_runs.to_string(),
            s.success_rate.to_string(),
            opt(s.mean_time_ms),
            opt(s.median_time_ms),
            s.mean_evaluations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width table for terminals.
pub fn format_summary_table(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:>5} {:>6} {:>5} {:>7} {:>12} {:>14} {:>14} {:>16}\n",
        "nodes", "gap", "runs", "success", "solved/fail", "mean_time_ms", "median_ms", "mean_evals"
    );
    for s in rows {
        let fmt_time = |v: Option<f64>| v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:>5} {:>6} {:>5} {:>7.2} {:>12} {:>14} {:>14} {:>16.1}\n",
            s.node_count,
            s.gap,
            s.runs,
            s.success_rate,
            format!("{}/{}", s.solved_runs, s.failed_runs),
            fmt_time(s.mean_time_ms),
            fmt_time(s.median_time_ms),
            s.mean_evaluations
        ));
    }
    out
}
