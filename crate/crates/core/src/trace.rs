//! CSV trace files.
//!
//! Column order is fixed: `t`, `x_1..x_n`, `y_1..y_n`, `e_1..e_n`,
//! `theta_hat_1..p`, `theta_true_1..p`, `theta_err_1..p`, `F_norm`, `cost`.
//! Values are written with 17 significant digits so they read back exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{NrhcError, Result};
use crate::estimator::TraceRecord;
use crate::numerics::Vector;

pub fn header(n: usize, p: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for prefix in ["x", "y", "e"] {
        cols.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    }
    for prefix in ["theta_hat", "theta_true", "theta_err"] {
        cols.extend((1..=p).map(|j| format!("{prefix}_{j}")));
    }
    cols.push("F_norm".into());
    cols.push("cost".into());
    cols
}

fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a trace for an `n`-state, `p`-parameter model. An empty trace
/// produces a header-only file.
pub fn write_trace_to<W: Write>(trace: &[TraceRecord], n: usize, p: usize, out: W) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{}", header(n, p).join(","))?;
    for r in trace {
        let mut row = Vec::with_capacity(3 * n + 3 * p + 3);
        row.push(format_value(r.t));
        for v in [&r.x, &r.y, &r.e, &r.theta_hat, &r.theta_true, &r.theta_err] {
            row.extend(v.iter().map(|x| format_value(*x)));
        }
        row.push(format_value(r.f_norm));
        row.push(format_value(r.cost));
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()
}

pub fn write_trace(trace: &[TraceRecord], n: usize, p: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| NrhcError::io(path, e))?;
    write_trace_to(trace, n, p, file).map_err(|e| NrhcError::io(path, e))
}

/// Reads a trace back, inferring `n` and `p` from the header.
pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| NrhcError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let head = lines
        .next()
        .ok_or_else(|| NrhcError::MalformedTrace("missing header".into()))?
        .map_err(|e| NrhcError::io(path, e))?;
    let cols: Vec<&str> = head.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with("x_")).count();
    let p = cols.iter().filter(|c| c.starts_with("theta_hat_")).count();
    if cols != header(n, p) {
        return Err(NrhcError::MalformedTrace(format!("unexpected header `{head}`")));
    }

    let mut trace = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| NrhcError::io(path, e))?;
        let values = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| NrhcError::MalformedTrace(format!("row {}: {e}", lineno + 2)))?;
        if values.len() != cols.len() {
            return Err(NrhcError::MalformedTrace(format!(
                "row {} has {} columns, expected {}",
                lineno + 2,
                values.len(),
                cols.len()
            )));
        }
        let mut at = 1;
        let mut take = |len: usize| {
            let v = Vector::from_column_slice(&values[at..at + len]);
            at += len;
            v
        };
        let x = take(n);
        let y = take(n);
        let e = take(n);
        let theta_hat = take(p);
        let theta_true = take(p);
        let theta_err = take(p);
        trace.push(TraceRecord {
            t: values[0],
            x,
            y,
            e,
            theta_hat,
            theta_true,
            theta_err,
            f_norm: values[values.len() - 2],
            cost: values[values.len() - 1],
        });
    }
    Ok(trace)
}
