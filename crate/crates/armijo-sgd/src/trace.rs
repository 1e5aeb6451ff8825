//! Per-iteration solver traces and run reports, with a fixed, versioned CSV
//! schema for persistence.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::point::Point;

pub const TRACE_SCHEMA: &str = "schema=1";
const TRACE_COLUMNS: &str =
    "k,cumulative_t,l_value,batch_size,objective_estimate,objective_exact,grad_norm,inner_trials,wall_clock_ns";

/// One outer-iteration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: u64,
    /// Cumulative oracle draws consumed so far, rejected trials included.
    pub cumulative_t: u64,
    /// Accepted L (adaptive solvers) or the fixed L / learning rate.
    pub l_value: f64,
    pub batch_size: u64,
    /// Objective estimate on the iteration's batch.
    pub objective_estimate: f64,
    pub objective_exact: Option<f64>,
    /// Exact gradient norm when available, batch estimate otherwise.
    pub grad_norm: Option<f64>,
    pub inner_trials: u32,
    /// Zero unless timing capture is enabled, keeping traces byte-stable.
    pub wall_clock_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    AccuracyReached,
    LinesearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputRule {
    UniformAverage,
    WeightedAverage,
    LastIterate,
    MinGradNorm,
}

/// Full solver output: the returned point, its construction rule, the trace,
/// and oracle accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub output_point: Point,
    pub output_rule: OutputRule,
    pub trace: Vec<TraceRow>,
    pub total_oracle_calls: u64,
    pub termination: Termination,
    /// High-probability mode: accepted-at-the-cap steps where the test never
    /// passed below L_hi (a declared-contract violation, reported not hidden).
    pub forced_acceptances: u64,
    /// Exact-gradient evaluations made for stationarity tracking; not part of
    /// the stochastic budget, accounted separately.
    pub verification_grad_calls: u64,
    /// Per-iteration iterates, captured only when the run config asks for
    /// them (used by identity checks on the averaging rules).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iterates: Vec<Point>,
}

impl RunReport {
    pub fn final_exact_objective(&self) -> Option<f64> {
        self.trace.last().and_then(|row| row.objective_exact)
    }

    pub fn mean_inner_trials(&self) -> f64 {
        if self.trace.is_empty() {
            return 0.0;
        }
        self.trace.iter().map(|r| r.inner_trials as f64).sum::<f64>() / self.trace.len() as f64
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Writes a trace in the versioned CSV layout: a `schema=1` line, the fixed
/// column header, then one row per outer iteration.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{TRACE_SCHEMA}")?;
    writeln!(file, "{TRACE_COLUMNS}")?;
    for row in trace {
        writeln!(
            file,
            "{},{},{:?},{},{:?},{},{},{},{}",
            row.k,
            row.cumulative_t,
            row.l_value,
            row.batch_size,
            row.objective_estimate,
            fmt_opt(row.objective_exact),
            fmt_opt(row.grad_norm),
            row.inner_trials,
            row.wall_clock_ns,
        )?;
    }
    file.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Data(format!("trace line {line}: bad {what}: {s:?}")))
}

fn parse_opt(s: &str, line: usize, what: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_field(s, line, what).map(Some)
    }
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let schema = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Data("empty trace file".into()))?;
    if schema.trim() != TRACE_SCHEMA {
        return Err(Error::Data(format!(
            "unsupported trace schema line: {schema:?}"
        )));
    }
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Data("trace file missing column header".into()))?;
    if header.trim() != TRACE_COLUMNS {
        return Err(Error::Data(format!("unexpected trace columns: {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Data(format!(
                "trace line {}: expected 9 fields, got {}",
                i + 3,
                fields.len()
            )));
        }
        let n = i + 3;
        rows.push(TraceRow {
            k: parse_field(fields[0], n, "k")?,
            cumulative_t: parse_field(fields[1], n, "cumulative_t")?,
            l_value: parse_field(fields[2], n, "l_value")?,
            batch_size: parse_field(fields[3], n, "batch_size")?,
            objective_estimate: parse_field(fields[4], n, "objective_estimate")?,
            objective_exact: parse_opt(fields[5], n, "objective_exact")?,
            grad_norm: parse_opt(fields[6], n, "grad_norm")?,
            inner_trials: parse_field(fields[7], n, "inner_trials")?,
            wall_clock_ns: parse_field(fields[8], n, "wall_clock_ns")?,
        });
    }
    Ok(rows)
}
