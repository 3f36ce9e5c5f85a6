//! CSV and JSON formats. Floats are written with 17 significant digits so a
//! read-write cycle is lossless.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};
use gsmooth_core::{Edge, RocCurve, SignalBatch, SweepRow, WeightedGraph};
use tempfile::NamedTempFile;

use crate::error::{CliError, Result};

pub const GRAPH_HEADER: [&str; 3] = ["src", "dst", "weight"];

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn records<'a, R: Read + 'a>(r: R, label: &'a str) -> impl Iterator<Item = Result<(u64, StringRecord)>> + 'a {
    ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(r)
        .into_records()
        .map(move |rec| {
            let rec = rec.map_err(|e| CliError::Parse {
                path: label.to_string(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            Ok((rec.position().map_or(0, |p| p.line()), rec))
        })
}

fn parse_err(label: &str, line: u64, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: label.to_string(),
        line,
        message: message.into(),
    }
}

/// Edge list with header `src,dst,weight`, 0-based ids, one row per
/// undirected edge. The node count is the largest id plus one.
pub fn parse_graph_csv(path: &Path) -> Result<WeightedGraph> {
    read_graph(open(path)?, &path.display().to_string())
}

pub fn read_graph(r: impl Read, label: &str) -> Result<WeightedGraph> {
    let mut rows = records(r, label);
    let (line, header) = rows.next().ok_or_else(|| parse_err(label, 1, "empty file"))??;
    if header.iter().collect::<Vec<_>>() != GRAPH_HEADER {
        return Err(parse_err(label, line, "expected header `src,dst,weight`"));
    }
    let mut edges = Vec::new();
    for row in rows {
        let (line, rec) = row?;
        if rec.len() != 3 {
            return Err(parse_err(
                label,
                line,
                format!("expected 3 fields, found {}", rec.len()),
            ));
        }
        let id = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(label, line, format!("node id `{s}` is not a non-negative integer")))
        };
        let weight = rec[2]
            .parse::<f64>()
            .map_err(|_| parse_err(label, line, format!("weight `{}` is not a number", &rec[2])))?;
        edges.push(Edge {
            src: id(&rec[0])?,
            dst: id(&rec[1])?,
            weight,
        });
    }
    let n = edges
        .iter()
        .map(|e| e.src.max(e.dst) + 1)
        .max()
        .ok_or_else(|| parse_err(label, 1, "no edges"))?;
    Ok(WeightedGraph::new(n, edges)?)
}

/// `M` rows of `n_nodes` numbers; row `m` is `x[m]`. A non-numeric first row
/// is taken as a header.
pub fn parse_signals_csv(path: &Path, n_nodes: usize) -> Result<SignalBatch> {
    read_signals(open(path)?, &path.display().to_string(), n_nodes)
}

pub fn read_signals(r: impl Read, label: &str, n_nodes: usize) -> Result<SignalBatch> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, row) in records(r, label).enumerate() {
        let (line, rec) = row?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Err(_) if i == 0 => continue,
            Err(e) => return Err(parse_err(label, line, e.to_string())),
            Ok(v) if v.len() != n_nodes => {
                return Err(CliError::ColumnCountMismatch {
                    path: label.to_string(),
                    row: rows.len(),
                    expected: n_nodes,
                    found: v.len(),
                })
            }
            Ok(v) => rows.push(v),
        }
    }
    if rows.is_empty() {
        return Err(gsmooth_core::Error::EmptyBatch.into());
    }
    Ok(SignalBatch::from_rows(&rows)?)
}

pub fn write_graph(w: &mut dyn Write, g: &WeightedGraph) -> io::Result<()> {
    writeln!(w, "{}", GRAPH_HEADER.join(","))?;
    for e in g.edges() {
        writeln!(w, "{},{},{}", e.src, e.dst, fmt_f64(e.weight))?;
    }
    Ok(())
}

pub fn write_signals(w: &mut dyn Write, x: &SignalBatch) -> io::Result<()> {
    for m in 0..x.len() {
        let row: Vec<String> = x.row(m).into_iter().map(fmt_f64).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_roc(w: &mut dyn Write, roc: &RocCurve) -> io::Result<()> {
    writeln!(w, "threshold,pfa,pd")?;
    for p in &roc.points {
        writeln!(w, "{},{},{}", fmt_f64(p.threshold), fmt_f64(p.pfa), fmt_f64(p.pd))?;
    }
    Ok(())
}

pub fn write_sweep(w: &mut dyn Write, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "param,detector,pd")?;
    for r in rows {
        writeln!(w, "{},{},{}", fmt_f64(r.param), r.detector, fmt_f64(r.pd))?;
    }
    Ok(())
}

pub fn write_json<T: serde::Serialize>(w: &mut dyn Write, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
