use rand::seq::index::sample;
use serde::Serialize;

use crate::error::{HaloError, Result};
use crate::rng;

/// Central differences `(f(p + h·eᵢ) − f(p − h·eᵢ)) / 2h` for every coordinate.
pub fn central_difference(point: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = point.to_vec();
    (0..p.len()).map(|i| central_difference_at(&mut p, i, h, &mut f)).collect()
}

fn central_difference_at(p: &mut [f64], i: usize, h: f64, f: &mut impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = p[i];
    p[i] = orig + h;
    let up = f(p);
    p[i] = orig - h;
    let down = f(p);
    p[i] = orig;
    (up - down) / (2.0 * h)
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares an analytic gradient against central differences of `f` at
/// `point` over every coordinate, reporting the worst one.
pub fn finite_diff_grad_check(
    f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    h: f64,
) -> Result<GradCheckReport> {
    let all: Vec<usize> = (0..point.len()).collect();
    check_coordinates(f, point, analytic, h, &all)
}

/// Like [`finite_diff_grad_check`] but over at most `max_coords`
/// coordinates drawn with `seed`.
pub fn finite_diff_grad_check_sampled(
    f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    h: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut coords: Vec<usize> = if max_coords >= point.len() {
        (0..point.len()).collect()
    } else {
        sample(&mut rng::seeded(seed), point.len(), max_coords).into_vec()
    };
    coords.sort_unstable();
    check_coordinates(f, point, analytic, h, &coords)
}

fn check_coordinates(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    h: f64,
    coords: &[usize],
) -> Result<GradCheckReport> {
    if point.len() != analytic.len() {
        return Err(HaloError::Shape(format!("{} coordinates, {} gradient entries", point.len(), analytic.len())));
    }
    let mut p = point.to_vec();
    let mut checked_f = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(HaloError::NonFinite("loss during finite differences".into()))
        }
    };
    checked_f(&p)?;
    let mut report =
        GradCheckReport { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0, checked: coords.len() };
    let mut failure = None;
    for &i in coords {
        let n = central_difference_at(&mut p, i, h, &mut |x: &[f64]| match checked_f(x) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        });
        if let Some(e) = failure.take() {
            return Err(e);
        }
        let e = relative_error(analytic[i], n);
        if e > report.max_rel_error {
            report = GradCheckReport { max_rel_error: e, worst_index: i, analytic: analytic[i], numeric: n, ..report };
        }
    }
    Ok(report)
}
