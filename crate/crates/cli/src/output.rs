//! Report envelopes and writers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::commands::{RawIterates, Table};

#[derive(Debug, Serialize)]
pub struct Report<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub results: &'a Value,
    /// Every wall time, so the rest of the report is reproducible.
    pub timing: &'a BTreeMap<String, f64>,
}

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn write_json(report: &Report, path: Option<&Path>) -> io::Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, report)?;
    writeln!(w)?;
    w.flush()
}

pub fn write_csv(table: &Table, path: Option<&Path>) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()
}

#[derive(Serialize)]
struct RawSidecar<'a> {
    dtype: &'static str,
    layout: &'static str,
    shape: [usize; 4],
    axes: [&'static str; 4],
    seeds: &'a [u64],
}

/// Writes `<out>.bin` (little-endian f64, row-major) and `<out>.bin.json`.
pub fn write_raw(raw: &RawIterates, out: &Path) -> io::Result<(PathBuf, PathBuf)> {
    let mut bin = out.as_os_str().to_owned();
    bin.push(".bin");
    let bin = PathBuf::from(bin);
    let mut side = bin.as_os_str().to_owned();
    side.push(".json");
    let side = PathBuf::from(side);

    let mut w = BufWriter::new(File::create(&bin)?);
    for v in &raw.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let meta = RawSidecar {
        dtype: "float64",
        layout: "little_endian_row_major",
        shape: [raw.replicates, 2, raw.t_max, raw.n],
        axes: ["replicate", "iterate (x, y)", "t (1..T)", "i"],
        seeds: &raw.seeds,
    };
    let mut s = BufWriter::new(File::create(&side)?);
    serde_json::to_writer_pretty(&mut s, &meta)?;
    writeln!(s)?;
    s.flush()?;
    Ok((bin, side))
}
