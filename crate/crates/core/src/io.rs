//! Text formats: opinion files, trace CSV, summary JSON.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::configuration::Configuration;
use crate::dynamics::MetricRecord;
use crate::error::{Error, Result};
use crate::geometry::{norm, normalize, Opinion};

/// Accepted deviation from unit norm in opinion files.
pub const FILE_NORM_TOLERANCE: f64 = 1e-6;

/// Parses one opinion per line; blank lines and `#` comments are skipped.
pub fn parse_opinions(text: &str) -> Result<Vec<Opinion>> {
    let mut out: Vec<Opinion> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let coords = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number `{t}`", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = out.first() {
            if first.dim() != coords.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} coordinates, found {}",
                    lineno + 1,
                    first.dim(),
                    coords.len()
                )));
            }
        }
        let r = norm(&coords);
        if (r - 1.0).abs() > FILE_NORM_TOLERANCE {
            return Err(Error::Parse(format!("line {}: norm {r} is not 1", lineno + 1)));
        }
        out.push(normalize(&coords)?);
    }
    if out.is_empty() {
        return Err(Error::Parse("no opinions found".into()));
    }
    Ok(out)
}

pub fn read_opinions(path: &Path) -> Result<Vec<Opinion>> {
    parse_opinions(&fs::read_to_string(path)?)
}

pub fn format_opinions<'a>(opinions: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut s = String::new();
    for o in opinions {
        let row: Vec<String> = o.iter().map(|x| format!("{x:.16e}")).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_opinions(path: &Path, config: &Configuration) -> Result<()> {
    fs::write(path, format_opinions(config.opinions()))?;
    Ok(())
}

/// Trace CSV with header `step,i,j,min_abs_corr,potential_min_corr` plus
/// `potential_triangle` for three agents. Numbers carry 17 significant digits.
pub fn write_trace_csv<W: Write>(mut w: W, records: &[MetricRecord]) -> Result<()> {
    let triangle = records.first().is_some_and(|r| r.potential_triangle.is_some());
    write!(w, "step,i,j,min_abs_corr,potential_min_corr")?;
    if triangle {
        write!(w, ",potential_triangle")?;
    }
    writeln!(w)?;
    for r in records {
        let (i, j) = r
            .pair
            .map_or((String::new(), String::new()), |(i, j)| (i.to_string(), j.to_string()));
        write!(
            w,
            "{},{i},{j},{:.16e},{:.16e}",
            r.step, r.min_abs_corr, r.potential_min_corr
        )?;
        if triangle {
            write!(w, ",{:.16e}", r.potential_triangle.unwrap_or(f64::NAN))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_trace_file(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_trace_csv(&mut w, records)?;
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}
