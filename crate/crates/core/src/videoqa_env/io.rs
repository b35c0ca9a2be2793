//! Text formats for similarity matrices (`SIMMAT 1`) and episode datasets (JSON lines).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{EpisodeSpec, SimilarityMatrix};
use crate::error::{Error, Result};

const SIMMAT_HEADER: &str = "SIMMAT 1";

pub fn format_matrix(matrix: &SimilarityMatrix) -> String {
    let mut out = format!("{SIMMAT_HEADER}\n{} {}\n", matrix.n_queries(), matrix.n_frames());
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses the header and numeric grid without range checks.
pub fn parse_raw_grid(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut lines = text.lines();
    match lines.next() {
        Some(SIMMAT_HEADER) => {}
        other => {
            return Err(Error::MalformedHeader(format!(
                "expected {SIMMAT_HEADER:?}, found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let dims = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader("missing dimension line".into()))?;
    let parsed: Vec<usize> = dims
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::MalformedHeader(format!("bad dimension line {dims:?}")))?;
    let [n_queries, n_frames] = parsed[..] else {
        return Err(Error::MalformedHeader(format!("bad dimension line {dims:?}")));
    };

    let rows: Vec<&str> = lines.collect();
    let rows = match rows.split_last() {
        Some((&"", rest)) => rest,
        _ => &rows[..],
    };
    if rows.len() != n_queries {
        return Err(Error::DimensionMismatch(format!(
            "header declares {n_queries} rows, found {}",
            rows.len()
        )));
    }
    let mut values = Vec::with_capacity(n_queries * n_frames);
    for (r, line) in rows.iter().enumerate() {
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: r + 3,
                msg: format!("not a number: {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("matrix entry on line {}", r + 3)));
            }
            values.push(v);
        }
        if values.len() - before != n_frames {
            return Err(Error::DimensionMismatch(format!(
                "line {} has {} entries, expected {n_frames}",
                r + 3,
                values.len() - before
            )));
        }
    }
    Ok((n_queries, n_frames, values))
}

pub fn parse_matrix(text: &str) -> Result<SimilarityMatrix> {
    let (q, f, values) = parse_raw_grid(text)?;
    SimilarityMatrix::new(q, f, values)
}

pub fn write_matrix(path: &Path, matrix: &SimilarityMatrix) -> Result<()> {
    fs::write(path, format_matrix(matrix))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<SimilarityMatrix> {
    parse_matrix(&fs::read_to_string(path)?)
}

/// Writes one JSON object per line with keys in declaration order.
pub fn write_dataset(path: &Path, episodes: &[EpisodeSpec]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for ep in episodes {
        serde_json::to_writer(&mut w, ep)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<EpisodeSpec>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: EpisodeSpec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        ep.validate()?;
        out.push(ep);
    }
    Ok(out)
}
