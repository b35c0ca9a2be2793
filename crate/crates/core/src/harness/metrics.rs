use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "step,reward_mean,acc_mean,format_mean,info_mean,advantage_std";

/// One optimizer step's batch statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub reward_mean: f64,
    pub acc_mean: f64,
    pub format_mean: f64,
    pub info_mean: f64,
    pub advantage_std: f64,
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub(crate) fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    mean(&xs.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>()).sqrt()
}

pub fn write_metrics_csv(path: &Path, rows: &[StepMetrics]) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.step, r.reward_mean, r.acc_mean, r.format_mean, r.info_mean, r.advantage_std
        )
        .expect("writing to a String cannot fail");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<StepMetrics>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRICS_HEADER => {}
        _ => return Err(Error::MalformedHeader(format!("expected `{METRICS_HEADER}`"))),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(parse_err(format!("expected 6 fields, found {}", fields.len())));
            }
            let num = |j: usize| fields[j].parse::<f64>().map_err(|e| parse_err(e.to_string()));
            Ok(StepMetrics {
                step: fields[0].parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?,
                reward_mean: num(1)?,
                acc_mean: num(2)?,
                format_mean: num(3)?,
                info_mean: num(4)?,
                advantage_std: num(5)?,
            })
        })
        .collect()
}

/// Trailing moving average over at most `window` points.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut acc = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            acc += v;
            if i >= window {
                acc -= values[i - window];
            }
            acc / (i + 1).min(window) as f64
        })
        .collect()
}

/// First index at which the series reaches `threshold`.
pub fn first_reach(values: &[f64], threshold: f64) -> Option<usize> {
    values.iter().position(|&v| v >= threshold)
}

/// Means of the first and last quarter of the series.
pub fn quartile_means(values: &[f64]) -> Option<(f64, f64)> {
    let q = values.len() / 4;
    if q == 0 {
        return None;
    }
    Some((mean(&values[..q]), mean(&values[values.len() - q..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing_and_thresholds() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert_eq!(first_reach(&[0.1, 0.5, 0.7, 0.2], 0.6), Some(2));
        assert_eq!(first_reach(&[0.1], 0.6), None);
        assert_eq!(quartile_means(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]), Some((1.5, 7.5)));
        assert_eq!(quartile_means(&[1.0, 2.0]), None);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows: Vec<StepMetrics> = (0..3)
            .map(|i| StepMetrics {
                step: i,
                reward_mean: 0.1 * i as f64,
                acc_mean: 0.3,
                format_mean: 0.1,
                info_mean: 1.0 / 3.0,
                advantage_std: 0.0,
            })
            .collect();
        write_metrics_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,reward_mean,acc_mean,format_mean,info_mean,advantage_std\n"));
        assert_eq!(text.lines().count(), 4);
        assert_eq!(read_metrics_csv(&path).unwrap(), rows);
    }
}
