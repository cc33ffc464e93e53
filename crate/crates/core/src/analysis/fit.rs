//! Per-row cosine fits of the binned matrix.
//!
//! Model for start row `i`: `counts_j ≈ offset · e_j · (1 + V cos(f Θ_j + φ))`
//! with `e_j` the stop-axis aperture envelope. Poisson maximum likelihood
//! via Fisher scoring with Levenberg damping, seeded from a periodogram.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ingest::BinnedG2;

/// Minimum number of stop bins with counts for a row to be fitted.
pub const MIN_POPULATED_BINS: usize = 8;
/// Upper visibility bound; values above 1 are tolerated as noise.
pub const MAX_VISIBILITY: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFit {
    pub start_bin: usize,
    /// Center of the start bin (rad).
    pub start_angle: f64,
    /// rad⁻¹, positive.
    pub frequency: f64,
    pub frequency_err: f64,
    /// rad, in (-π, π].
    pub phase: f64,
    pub phase_err: f64,
    /// Counts per bin at unit envelope.
    pub offset: f64,
    pub amplitude: f64,
    pub visibility: f64,
    /// Parameter order: offset, visibility, frequency, phase.
    pub covariance: [[f64; 4]; 4],
    pub converged: bool,
    /// Why the fit was rejected, if it was.
    pub failure: Option<String>,
}

/// Which start rows to fit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSelection {
    /// Rows whose occupancy is at least [`AUTO_ROW_FRACTION`] of the peak.
    Auto,
    /// Explicit inclusive range.
    Range(usize, usize),
}

pub const AUTO_ROW_FRACTION: f64 = 0.9;

impl std::str::FromStr for RowSelection {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| invalid(format!("row selection `{s}` is neither `auto` nor `a..b`")))?;
        let a: usize = a.trim().parse().map_err(|_| invalid(format!("bad row index `{a}`")))?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| invalid(format!("bad row index `{b}`")))?;
        if a > b {
            return Err(invalid(format!("empty row range {a}..{b}")));
        }
        Ok(Self::Range(a, b))
    }
}

/// Rows to fit. The automatic rule uses the start-axis envelope when it
/// carries aperture information and the observed row sums otherwise.
pub fn select_rows(g2: &BinnedG2, selection: &RowSelection) -> Result<Range<usize>> {
    match *selection {
        RowSelection::Range(a, b) => {
            if b >= g2.n_bins {
                return Err(invalid(format!("row range {a}..{b} exceeds {} bins", g2.n_bins)));
            }
            Ok(a..b + 1)
        }
        RowSelection::Auto => {
            let flat = g2.start_envelope.iter().all(|&e| e == g2.start_envelope[0]);
            let occupancy: Vec<f64> = if flat {
                g2.row_sums().iter().map(|&s| s as f64).collect()
            } else {
                g2.start_envelope.clone()
            };
            let peak = occupancy.iter().copied().fold(0.0, f64::max);
            let keep: Vec<usize> = (0..g2.n_bins).filter(|&i| occupancy[i] >= AUTO_ROW_FRACTION * peak).collect();
            match (keep.first(), keep.last()) {
                (Some(&a), Some(&b)) if peak > 0.0 => Ok(a..b + 1),
                _ => Err(invalid("no populated rows")),
            }
        }
    }
}

struct RowData {
    /// Nyquist limit of the bin spacing; higher frequencies alias exactly.
    f_max: f64,
    x: Vec<f64>,
    e: Vec<f64>,
    y: Vec<f64>,
}

#[inline]
fn model(p: &Vector4<f64>, x: f64, e: f64) -> f64 {
    e * p[0] * (1.0 + p[1] * (p[2] * x + p[3]).cos())
}

fn deviance(p: &Vector4<f64>, d: &RowData) -> f64 {
    // The mean must stay non-negative across the whole row, not only at the
    // bin centers; beyond unit visibility empty bins hide negative lobes.
    if p[1].abs() > 1.0 || p[2].abs() > d.f_max {
        return f64::INFINITY;
    }
    let mut dev = 0.0;
    for ((&x, &e), &y) in d.x.iter().zip(&d.e).zip(&d.y) {
        let m = model(p, x, e);
        if !(m > 0.0) {
            if y > 0.0 || m < 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        dev += if y > 0.0 { y * (y / m).ln() - (y - m) } else { m };
    }
    2.0 * dev
}

/// Fisher information `JᵀWJ` and score `Jᵀ(y - m)/m`.
fn normal_equations(p: &Vector4<f64>, d: &RowData) -> (Matrix4<f64>, Vector4<f64>) {
    let mut a = Matrix4::zeros();
    let mut g = Vector4::zeros();
    for ((&x, &e), &y) in d.x.iter().zip(&d.e).zip(&d.y) {
        let (s, c) = (p[2] * x + p[3]).sin_cos();
        let m = e * p[0] * (1.0 + p[1] * c);
        if !(m > 0.0) {
            continue;
        }
        let j = Vector4::new(e * (1.0 + p[1] * c), e * p[0] * c, -e * p[0] * p[1] * s * x, -e * p[0] * p[1] * s);
        a += j * j.transpose() / m;
        g += j * ((y - m) / m);
    }
    (a, g)
}

/// Weighted linear fit of `y ≈ e (a + b cos fx + c sin fx)`; returns the
/// coefficients and the weighted residual sum of squares.
fn linear_at(f: f64, d: &RowData) -> Option<(Vector3<f64>, f64)> {
    let mut a = Matrix3::zeros();
    let mut r = Vector3::zeros();
    let basis = |x: f64, e: f64| {
        let (s, c) = (f * x).sin_cos();
        Vector3::new(e, e * c, e * s)
    };
    for ((&x, &e), &y) in d.x.iter().zip(&d.e).zip(&d.y) {
        let w = 1.0 / y.max(1.0);
        let b = basis(x, e);
        a += b * b.transpose() * w;
        r += b * (y * w);
    }
    let coef = a.lu().solve(&r)?;
    let rss = d
        .x
        .iter()
        .zip(&d.e)
        .zip(&d.y)
        .map(|((&x, &e), &y)| (y - basis(x, e).dot(&coef)).powi(2) / y.max(1.0))
        .sum();
    Some((coef, rss))
}

/// Candidate starting points from the periodogram minima, best first.
fn periodogram_seeds(d: &RowData, span: f64, spacing: f64, count: usize) -> Vec<Vector4<f64>> {
    let fundamental = 2.0 * PI / span;
    let nyquist = PI / spacing;
    let df = fundamental / 8.0;
    let n = ((nyquist - fundamental) / df).floor() as usize + 1;
    let grid: Vec<(f64, Option<(Vector3<f64>, f64)>)> =
        (0..n).map(|k| fundamental + k as f64 * df).map(|f| (f, linear_at(f, d))).collect();
    let rss: Vec<f64> = grid.iter().map(|(_, g)| g.map_or(f64::INFINITY, |(_, r)| r)).collect();
    let mut minima: Vec<usize> = (0..n)
        .filter(|&k| {
            rss[k].is_finite()
                && (k == 0 || rss[k] <= rss[k - 1])
                && (k + 1 == n || rss[k] <= rss[k + 1])
        })
        .collect();
    minima.sort_by(|&a, &b| rss[a].total_cmp(&rss[b]));
    minima
        .into_iter()
        .take(count)
        .filter_map(|k| {
            let (f, coef) = (grid[k].0, grid[k].1?.0);
            let offset = coef[0];
            if !(offset > 0.0) {
                return None;
            }
            let amp = coef[1].hypot(coef[2]);
            let v = (amp / offset).min(0.99);
            Some(Vector4::new(offset, v, f, (-coef[2]).atan2(coef[1])))
        })
        .collect()
}

struct Solution {
    p: Vector4<f64>,
    deviance: f64,
    covariance: Option<Matrix4<f64>>,
}

fn levenberg_marquardt(mut p: Vector4<f64>, d: &RowData) -> Option<Solution> {
    let mut dev = deviance(&p, d);
    if !dev.is_finite() {
        return None;
    }
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let (a, g) = normal_equations(&p, d);
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = a;
            for i in 0..4 {
                damped[(i, i)] *= 1.0 + lambda;
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let trial_dev = deviance(&trial, d);
            if trial_dev.is_finite() && trial_dev <= dev {
                let gain = dev - trial_dev;
                p = trial;
                dev = trial_dev;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                let small = step.iter().zip(p.iter()).all(|(s, v)| s.abs() <= 1e-10 * (v.abs() + 1e-10));
                if gain <= 1e-12 * (1.0 + dev) || small {
                    let (a, _) = normal_equations(&p, d);
                    return Some(Solution { p, deviance: dev, covariance: a.try_inverse() });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            let (a, _) = normal_equations(&p, d);
            return Some(Solution { p, deviance: dev, covariance: a.try_inverse() });
        }
    }
    None
}

fn wrap_phase(phase: f64) -> f64 {
    let w = (phase + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Fits one row of counts at stop-bin centers `x` with envelope `e`.
pub fn fit_row(start_bin: usize, start_angle: f64, counts: &[u64], x: &[f64], envelope: &[f64]) -> RowFit {
    let mut fit = RowFit {
        start_bin,
        start_angle,
        frequency: f64::NAN,
        frequency_err: f64::NAN,
        phase: f64::NAN,
        phase_err: f64::NAN,
        offset: f64::NAN,
        amplitude: f64::NAN,
        visibility: f64::NAN,
        covariance: [[f64::NAN; 4]; 4],
        converged: false,
        failure: None,
    };
    let keep: Vec<usize> = (0..counts.len()).filter(|&j| envelope[j] > 0.0).collect();
    let populated = keep.iter().filter(|&&j| counts[j] > 0).count();
    if populated < MIN_POPULATED_BINS {
        fit.failure = Some(format!("{populated} populated stop bins"));
        return fit;
    }
    let spacing = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let span = spacing * x.len() as f64;
    let d = RowData {
        f_max: PI / spacing,
        x: keep.iter().map(|&j| x[j]).collect(),
        e: keep.iter().map(|&j| envelope[j]).collect(),
        y: keep.iter().map(|&j| counts[j] as f64).collect(),
    };
    let best = periodogram_seeds(&d, span, spacing, 3)
        .into_iter()
        .filter_map(|seed| levenberg_marquardt(seed, &d))
        .min_by(|a, b| a.deviance.total_cmp(&b.deviance));
    let Some(sol) = best else {
        fit.failure = Some("no starting point converged".into());
        return fit;
    };
    let mut p = sol.p;
    // Canonical form: positive visibility and frequency.
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[3] += PI;
    }
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    p[3] = wrap_phase(p[3]);
    fit.offset = p[0];
    fit.visibility = p[1];
    fit.frequency = p[2];
    fit.phase = p[3];
    fit.amplitude = p[0] * p[1];
    let Some(cov) = sol.covariance else {
        fit.failure = Some("singular information matrix".into());
        return fit;
    };
    for (i, row) in fit.covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cov[(i, j)];
        }
    }
    fit.frequency_err = cov[(2, 2)].sqrt();
    fit.phase_err = cov[(3, 3)].sqrt();
    let finite = p.iter().all(|v| v.is_finite()) && fit.frequency_err.is_finite() && fit.phase_err.is_finite();
    fit.failure = if !finite {
        Some("non-finite parameters".into())
    } else if !(0.0..=MAX_VISIBILITY).contains(&fit.visibility) {
        Some(format!("visibility {:.3} outside [0, {MAX_VISIBILITY}]", fit.visibility))
    } else if !(fit.frequency > 0.0) {
        Some("zero frequency".into())
    } else {
        None
    };
    fit.converged = fit.failure.is_none();
    fit
}

/// Cosine fit of every row in `rows`, in row order.
pub fn fit_rows(g2: &BinnedG2, rows: Range<usize>) -> Result<Vec<RowFit>> {
    if rows.is_empty() || rows.end > g2.n_bins {
        return Err(invalid(format!("row range {rows:?} outside [0, {})", g2.n_bins)));
    }
    let x = g2.stop_centers();
    let starts = g2.start_centers();
    Ok(rows
        .into_par_iter()
        .map(|i| fit_row(i, starts[i], g2.row(i), &x, &g2.stop_envelope))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn centers(n: usize, half: f64) -> Vec<f64> {
        (0..n).map(|j| -half + (j as f64 + 0.5) * 2.0 * half / n as f64).collect()
    }

    #[test]
    fn noiseless_row_exact() {
        let x = centers(96, 0.0221);
        let (f, v, ph) = (1490.0, 0.8, 0.7);
        let counts: Vec<u64> = x.iter().map(|&t| (1e8 * (1.0 + v * (f * t + ph).cos())).round() as u64).collect();
        let fit = fit_row(0, 0.0, &counts, &x, &[1.0; 96]);
        assert!(fit.converged, "{:?}", fit.failure);
        assert!((fit.frequency / f - 1.0).abs() < 1e-6, "{}", fit.frequency);
        assert!((fit.visibility - v).abs() < 1e-6);
        assert!((fit.phase - ph).abs() < 1e-5);
    }

    #[test]
    fn sign_conventions() {
        // cos(-f x + φ) = cos(f x - φ): reported frequency > 0, phase -φ.
        let x = centers(96, 0.0221);
        let counts: Vec<u64> = x.iter().map(|&t| (1e8 * (1.0 + 0.5 * (-1200.0 * t + 1.0).cos())).round() as u64).collect();
        let fit = fit_row(3, 0.0, &counts, &x, &[1.0; 96]);
        assert!(fit.converged);
        assert!((fit.frequency - 1200.0).abs() < 1e-3);
        assert!((fit.phase + 1.0).abs() < 1e-5);
        assert!(fit.visibility > 0.0 && fit.amplitude > 0.0);
    }

    #[test]
    fn sparse_row_rejected() {
        let x = centers(96, 0.0221);
        let mut counts = vec![0u64; 96];
        counts[10] = 5;
        let fit = fit_row(0, 0.0, &counts, &x, &[1.0; 96]);
        assert!(!fit.converged);
        assert!(fit.failure.unwrap().contains("populated"));
    }

    #[test]
    fn poisson_coverage() {
        // 20 counts per bin, V = 0.9: frequency within 3σ in >= 95% of trials.
        let x = centers(96, 0.0221);
        let (f, v) = (1494.0, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut inside = 0;
        let trials = 200;
        for t in 0..trials {
            let ph = t as f64 * 0.37;
            let counts: Vec<u64> = x
                .iter()
                .map(|&xx| Poisson::new(20.0 * (1.0 + v * (f * xx + ph).cos())).unwrap().sample(&mut rng) as u64)
                .collect();
            let fit = fit_row(0, 0.0, &counts, &x, &[1.0; 96]);
            if fit.converged && (fit.frequency - f).abs() <= 3.0 * fit.frequency_err {
                inside += 1;
            }
        }
        assert!(inside as f64 >= 0.95 * trials as f64, "{inside}/{trials}");
    }

    #[test]
    fn frequency_stays_below_nyquist() {
        let x = centers(96, 0.0221);
        let nyquist = PI / (x[1] - x[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for t in 0..300 {
            let ph = t as f64 * 0.61;
            let counts: Vec<u64> = x
                .iter()
                .map(|&xx| Poisson::new(8.0 * (1.0 + 0.95 * (1494.0 * xx + ph).cos())).unwrap().sample(&mut rng) as u64)
                .collect();
            let fit = fit_row(0, 0.0, &counts, &x, &[1.0; 96]);
            assert!(!fit.converged || fit.frequency <= nyquist, "trial {t}: {}", fit.frequency);
        }
    }

    #[test]
    fn envelope_is_respected() {
        let x = centers(96, 0.0221);
        let env: Vec<f64> = x.iter().map(|&t| (1.0 - (t / 0.0221).powi(2)).max(0.0).sqrt()).collect();
        let counts: Vec<u64> = x
            .iter()
            .zip(&env)
            .map(|(&t, &e)| (1e7 * e * (1.0 + 0.6 * (1500.0 * t).cos())).round() as u64)
            .collect();
        let fit = fit_row(0, 0.0, &counts, &x, &env);
        assert!(fit.converged);
        assert!((fit.frequency / 1500.0 - 1.0).abs() < 1e-5);
        assert!((fit.visibility - 0.6).abs() < 1e-4);
    }

    #[test]
    fn row_selection() {
        assert_eq!("auto".parse::<RowSelection>().unwrap(), RowSelection::Auto);
        assert_eq!("27..67".parse::<RowSelection>().unwrap(), RowSelection::Range(27, 67));
        assert!("5..2".parse::<RowSelection>().is_err());
        let g = BinnedG2::from_counts(vec![1; 96 * 96], 96, 0.02, 0.0).unwrap();
        assert_eq!(select_rows(&g, &RowSelection::Range(27, 67)).unwrap(), 27..68);
        assert!(select_rows(&g, &RowSelection::Range(27, 96)).is_err());
        assert_eq!(select_rows(&g, &RowSelection::Auto).unwrap(), 0..96);
    }

    #[test]
    fn wrap_phase_range() {
        for p in [-7.0, -PI, 0.0, PI, 4.0, 100.0] {
            let w = wrap_phase(p);
            assert!(w > -PI && w <= PI, "{p} -> {w}");
            assert!(((w - p) / (2.0 * PI)).fract().abs() < 1e-9 || ((w - p) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
    }
}
