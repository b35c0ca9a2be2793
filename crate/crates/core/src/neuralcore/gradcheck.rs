//! Central finite-difference gradient checker.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::{domain, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    /// Central difference half-width.
    pub step: f64,
    /// Coordinates beyond this count are checked on a random subset of this size.
    pub max_coords: usize,
    /// Absolute floor on the relative-error denominator, so that coordinates
    /// whose true gradient is zero are judged by absolute error.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            max_coords: 1000,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub total_coords: usize,
    pub checked_coords: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// Coordinates left unchecked because every step tried crossed a kink.
    pub kink_skipped: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }

    /// Combines reports of several checks into a worst-case summary.
    pub fn merge(&mut self, other: &GradCheckReport) {
        self.total_coords += other.total_coords;
        self.checked_coords += other.checked_coords;
        self.kink_skipped += other.kink_skipped;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst_index = other.worst_index;
            self.worst_analytic = other.worst_analytic;
            self.worst_numeric = other.worst_numeric;
        }
    }

    pub fn empty() -> Self {
        Self {
            total_coords: 0,
            checked_coords: 0,
            max_rel_error: 0.0,
            worst_index: None,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
            kink_skipped: 0,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `f` around `params`.
pub fn grad_check<F>(
    mut f: F,
    params: &[f64],
    analytic: &[f64],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    grad_check_piecewise(|v| (f(v), ()), params, analytic, opts, 0)
}

/// Central differences for a piecewise-smooth `f` that also returns a
/// fingerprint of the smooth piece containing its argument.
///
/// When either probe lands on a different piece than `params`, the step is
/// divided by ten, at most `max_shrinks` times; a coordinate that still
/// straddles a kink is counted in `kink_skipped` instead of being checked.
pub fn grad_check_piecewise<F, P>(
    mut f: F,
    params: &[f64],
    analytic: &[f64],
    opts: &GradCheckOptions,
    max_shrinks: usize,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> (f64, P),
    P: PartialEq,
{
    if params.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    let coords: Vec<usize> = if params.len() > opts.max_coords {
        let mut rng = stream(opts.seed, &[domain::GRADCHECK, params.len() as u64]);
        let mut picked = index::sample(&mut rng, params.len(), opts.max_coords).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..params.len()).collect()
    };

    let mut work = params.to_vec();
    let mut report = GradCheckReport::empty();
    report.total_coords = params.len();
    let (_, base_piece) = f(&work);
    for &i in &coords {
        let orig = work[i];
        let mut step = opts.step;
        let mut numeric = None;
        for _ in 0..=max_shrinks {
            work[i] = orig + step;
            let (plus, plus_piece) = f(&work);
            work[i] = orig - step;
            let (minus, minus_piece) = f(&work);
            work[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("objective at coordinate {i}")));
            }
            if plus_piece == base_piece && minus_piece == base_piece {
                numeric = Some((plus - minus) / (2.0 * step));
                break;
            }
            step /= 10.0;
        }
        let Some(numeric) = numeric else {
            report.kink_skipped += 1;
            continue;
        };
        let err = relative_error(analytic[i], numeric, opts.abs_floor);
        report.checked_coords += 1;
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = err;
            report.worst_index = Some(i);
            report.worst_analytic = analytic[i];
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}
