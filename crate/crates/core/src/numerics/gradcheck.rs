//! Central-difference gradient checking.
//!
//! For each checked coordinate the scalar function is evaluated at +h and -h
//! and the numeric slope is compared against the analytic gradient with
//! relative error `|a - n| / max(|a|, |n|, REL_FLOOR)`. The floor keeps the
//! ratio meaningful where the true gradient is near zero: with h around 1e-5
//! and objective values of order 1..30, the central difference itself is
//! only accurate to about 1e-9 absolute, so coordinates below the floor
//! cannot be certified any tighter and would otherwise report pure rounding
//! noise as error.

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, SeededRng};
use crate::par;

#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Coordinate with the largest relative error, if any was checked.
    pub worst: Option<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

/// Magnitude below which a finite difference is dominated by rounding
/// noise; see the module docs.
const REL_FLOOR: f64 = 1e-5;

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn check_coords<F>(
    f: &F,
    params: &ParamStore,
    analytic: &ParamStore,
    coords: &[(String, usize, usize)],
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<f64> + Sync,
{
    let results: Vec<Result<GradCheckEntry>> = par::ordered_map(coords, |(name, i, j)| {
        let mut perturbed = params.clone();
        let base = perturbed.get(name)?.get(*i, *j);
        perturbed.get_mut(name)?.set(*i, *j, base + h);
        let plus = f(&perturbed)?;
        perturbed.get_mut(name)?.set(*i, *j, base - h);
        let minus = f(&perturbed)?;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "grad_check evaluation at {name}[{i},{j}]"
            )));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.get(name)?.get(*i, *j);
        Ok(GradCheckEntry {
            name: name.clone(),
            row: *i,
            col: *j,
            analytic: a,
            numeric,
            rel_err: relative_error(a, numeric),
        })
    });

    let mut max_rel_err: f64 = 0.0;
    let mut worst: Option<GradCheckEntry> = None;
    let mut checked = 0;
    for r in results {
        let entry = r?;
        checked += 1;
        if worst.is_none() || entry.rel_err > max_rel_err {
            max_rel_err = entry.rel_err;
            worst = Some(entry);
        }
    }
    Ok(GradCheckReport {
        checked,
        max_rel_err,
        worst,
        tolerance,
    })
}

/// Checks every coordinate of every entry in `analytic` against a central
/// difference of `f`.
pub fn grad_check<F>(
    f: F,
    params: &ParamStore,
    analytic: &ParamStore,
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<f64> + Sync,
{
    validate_step(h)?;
    let mut coords = Vec::new();
    for (name, t) in analytic.iter() {
        for i in 0..t.rows() {
            for j in 0..t.cols() {
                coords.push((name.to_string(), i, j));
            }
        }
    }
    check_coords(&f, params, analytic, &coords, h, tolerance)
}

/// Like [`grad_check`] but checks at most `per_tensor` randomly chosen
/// coordinates per entry, for models too large to sweep exhaustively.
pub fn grad_check_subsampled<F>(
    f: F,
    params: &ParamStore,
    analytic: &ParamStore,
    per_tensor: usize,
    rng: &mut SeededRng,
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<f64> + Sync,
{
    validate_step(h)?;
    let mut coords = Vec::new();
    for (name, t) in analytic.iter() {
        let n = t.len();
        let take = per_tensor.min(n);
        for flat in rng.sample_indices(n, take) {
            coords.push((name.to_string(), flat / t.cols(), flat % t.cols()));
        }
    }
    check_coords(&f, params, analytic, &coords, h, tolerance)
}

fn validate_step(h: f64) -> Result<()> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    Ok(())
}
