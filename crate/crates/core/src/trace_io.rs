//! Trace CSV files.
//!
//! Column order is fixed:
//!
//! ```text
//! step,g11,g12,g13,g21,g22,g23,g31,g32,g33,v1,v2,v3,H,accepted
//! ```
//!
//! Floats are written with 17 significant digits, so a reload reproduces
//! every value bit for bit. `accepted` is `1` or `0`.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::group::{AlgebraElement, GroupElement};
use crate::sampler::Trace;

pub const TRACE_HEADER: &str = "step,g11,g12,g13,g21,g22,g23,g31,g32,g33,v1,v2,v3,H,accepted";

const COLUMNS: usize = 15;

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("unexpected trace header {0:?}")]
    Header(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One row of a trace file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub g: GroupElement,
    pub v: AlgebraElement,
    pub hamiltonian: f64,
    pub accepted: bool,
}

fn push_float(line: &mut String, x: f64) {
    write!(line, ",{x:.16e}").unwrap();
}

pub fn write_trace<W: Write>(trace: &Trace, out: W) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{TRACE_HEADER}")?;
    let mut line = String::with_capacity(400);
    for (step, rec) in trace.records.iter().enumerate() {
        line.clear();
        write!(line, "{step}").unwrap();
        let g = rec.state.g.matrix();
        for r in 0..3 {
            for c in 0..3 {
                push_float(&mut line, g[(r, c)]);
            }
        }
        for x in rec.state.v.coords().iter() {
            push_float(&mut line, *x);
        }
        push_float(&mut line, rec.hamiltonian);
        line.push_str(if rec.accepted { ",1" } else { ",0" });
        writeln!(out, "{line}")?;
    }
    out.flush()
}

pub fn write_trace_file(trace: &Trace, path: &Path) -> io::Result<()> {
    write_trace(trace, fs::File::create(path)?)
}

pub fn read_trace<R: io::Read>(input: R) -> Result<Vec<TraceRow>, TraceFileError> {
    let mut lines = BufReader::new(input).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != TRACE_HEADER {
        return Err(TraceFileError::Header(header));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(parse_row(&line).map_err(|message| TraceFileError::Parse { line: i + 2, message })?);
    }
    Ok(rows)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRow>, TraceFileError> {
    read_trace(fs::File::open(path)?)
}

fn parse_row(line: &str) -> Result<TraceRow, String> {
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    if fields.len() != COLUMNS {
        return Err(format!("expected {COLUMNS} columns, found {}", fields.len()));
    }
    let step = fields[0].parse().map_err(|e| format!("step: {e}"))?;
    let mut nums = [0.0; 13];
    for (k, f) in fields[1..14].iter().enumerate() {
        nums[k] = f.parse().map_err(|e| format!("column {}: {e}", k + 2))?;
    }
    let accepted = match fields[14] {
        "1" => true,
        "0" => false,
        other => return Err(format!("accepted must be 0 or 1, got {other:?}")),
    };
    let m = Matrix3::from_row_slice(&nums[..9]);
    let g = GroupElement::try_from_matrix(m, 1e-9).ok_or("g is not a rotation")?;
    Ok(TraceRow {
        step,
        g,
        v: AlgebraElement::from_coords(Vector3::new(nums[9], nums[10], nums[11])),
        hamiltonian: nums[12],
        accepted,
    })
}
