//! Orientation search: fringe contrast as a function of the projection
//! angle φ, with maxima refined parabolically and bootstrapped.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::contrast::{difference_signal_from, Marginals};
use crate::error::{invalid, Error, Result};
use crate::ingest::{rotation, ProjectedPairs, DEFAULT_BINS};
use crate::model::Scene;
use crate::sim::{substream, CoincidencePair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Grid spacing in degrees, in (0, 5].
    pub phi_step: f64,
    pub n_bins: usize,
    /// Bootstrap resamples per maximum; 0 skips the uncertainty estimate.
    pub bootstrap: usize,
    pub seed: u64,
    /// A maximum must dominate everything within this many degrees.
    pub separation_deg: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { phi_step: 0.1, n_bins: DEFAULT_BINS, bootstrap: 100, seed: 0, separation_deg: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanMaximum {
    /// Refined angle in [0°, 180°).
    pub phi: f64,
    /// Bootstrap standard deviation of `phi` (0 when not bootstrapped).
    pub uncertainty: f64,
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleScan {
    pub phis: Vec<f64>,
    pub contrast: Vec<f64>,
    pub noise_floor: f64,
    /// Sorted by angle.
    pub maxima: Vec<ScanMaximum>,
}

struct Evaluation {
    contrast: f64,
    floor: f64,
}

fn evaluate(m: &Marginals) -> Evaluation {
    match difference_signal_from(m) {
        Ok(s) if s.k.len() >= 3 => Evaluation { contrast: s.contrast(), floor: s.noise_floor() },
        _ => Evaluation { contrast: 0.0, floor: f64::INFINITY },
    }
}

fn marginals_at(p: &ProjectedPairs, phi: f64, n: usize) -> Marginals {
    let (c, s) = rotation(phi);
    let mut m = Marginals::zeros(n);
    for idx in 0..p.len() {
        let (i, j) = p.bins(idx, c, s, n);
        m.add(i, j, 1.0);
    }
    m
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::INFINITY;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Vertex of the least-squares parabola through `(x, y)`, if it opens downwards.
pub(crate) fn parabola_vertex(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 3 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let mut s = [0.0f64; 7];
    for (&x, &y) in xs.iter().zip(ys) {
        let u = x - mx;
        s[0] += u * u;
        s[1] += u * u * u;
        s[2] += u * u * u * u;
        s[3] += y;
        s[4] += u * y;
        s[5] += u * u * y;
        s[6] += 1.0;
    }
    let a = nalgebra::Matrix3::new(s[6], 0.0, s[0], 0.0, s[0], s[1], s[0], s[1], s[2]);
    let b = nalgebra::Vector3::new(s[3], s[4], s[5]);
    let c = a.lu().solve(&b)?;
    (c[2] < 0.0).then(|| mx - c[1] / (2.0 * c[2]))
}

/// Refines the grid maximum at `idx` from the circular neighbourhood
/// `±half` degrees.
fn refine(phis: &[f64], values: &[f64], idx: usize, step: f64, half: f64) -> f64 {
    let n = phis.len() as i64;
    let w = (half / step).round().max(1.0) as i64;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for o in -w..=w {
        let j = (idx as i64 + o).rem_euclid(n) as usize;
        if !values[j].is_finite() {
            continue;
        }
        xs.push(phis[idx] + o as f64 * step);
        ys.push(values[j]);
    }
    match parabola_vertex(&xs, &ys) {
        Some(v) if (v - phis[idx]).abs() <= step * w as f64 => v.rem_euclid(180.0),
        _ => phis[idx],
    }
}

fn local_maxima(values: &[f64], floor: f64, window: usize) -> Vec<usize> {
    let n = values.len() as i64;
    (0..values.len())
        .filter(|&i| {
            let v = values[i];
            if !(v > floor) {
                return false;
            }
            let at = |o: i64| values[(i as i64 + o).rem_euclid(n) as usize];
            if !(v > at(-1) && v > at(1)) {
                return false;
            }
            (1..=window as i64).all(|o| v >= at(o) && v >= at(-o))
        })
        .collect()
}

fn refine_half_width(step: f64) -> f64 {
    (3.0 * step).max(1.0)
}

pub fn scan_orientation(pairs: &[CoincidencePair], scene: &Scene, opts: &ScanOptions) -> Result<AngleScan> {
    scan_projected(&ProjectedPairs::new(pairs, scene)?, opts)
}

/// Contrast over φ ∈ [0°, 180°) and its maxima above the noise floor.
pub fn scan_projected(pairs: &ProjectedPairs, opts: &ScanOptions) -> Result<AngleScan> {
    if !(opts.phi_step > 0.0 && opts.phi_step <= 5.0) {
        return Err(invalid(format!("phi_step must lie in (0, 5], got {}", opts.phi_step)));
    }
    if opts.n_bins < 8 {
        return Err(invalid(format!("n_bins must be >= 8, got {}", opts.n_bins)));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n_phi = (180.0 / opts.phi_step).round() as usize;
    let phis: Vec<f64> = (0..n_phi).map(|k| k as f64 * 180.0 / n_phi as f64).collect();
    let step = 180.0 / n_phi as f64;
    let evals: Vec<Evaluation> =
        phis.par_iter().map(|&phi| evaluate(&marginals_at(pairs, phi, opts.n_bins))).collect();
    let contrast: Vec<f64> = evals.iter().map(|e| e.contrast).collect();

    let med = median(&contrast);
    let deviations: Vec<f64> = contrast.iter().map(|c| (c - med).abs()).collect();
    let mad = median(&deviations);
    let poisson = median(&evals.iter().map(|e| e.floor).collect::<Vec<_>>());
    let global = contrast.iter().copied().fold(0.0, f64::max);
    let noise_floor = (med + 3.0 * mad).max(poisson).max(0.1 * global);

    let window = (opts.separation_deg / step).round().max(1.0) as usize;
    let peaks = local_maxima(&contrast, noise_floor, window);
    if peaks.is_empty() {
        return Err(Error::NoSignal);
    }
    let half = refine_half_width(step);
    let mut maxima: Vec<ScanMaximum> = peaks
        .iter()
        .enumerate()
        .map(|(m, &idx)| {
            let phi = refine(&phis, &contrast, idx, step, half);
            let uncertainty = if opts.bootstrap > 0 {
                bootstrap_peak(pairs, opts, phis[idx], step, half, m as u64)
            } else {
                0.0
            };
            ScanMaximum { phi, uncertainty, contrast: contrast[idx] }
        })
        .collect();
    maxima.sort_by(|a, b| a.phi.total_cmp(&b.phi));
    Ok(AngleScan { phis, contrast, noise_floor, maxima })
}

/// Standard deviation of the refined peak over pair resamples with replacement.
fn bootstrap_peak(pairs: &ProjectedPairs, opts: &ScanOptions, center: f64, step: f64, half: f64, label: u64) -> f64 {
    let n = opts.n_bins;
    let w = (2.0 * half / step).round() as i64;
    let local: Vec<f64> = (-w..=w).map(|o| center + o as f64 * step).collect();
    // Bin indices of every pair at every local angle, computed once.
    let bins: Vec<Vec<(u16, u16)>> = local
        .par_iter()
        .map(|&phi| {
            let (c, s) = rotation(phi);
            (0..pairs.len())
                .map(|k| {
                    let (i, j) = pairs.bins(k, c, s, n);
                    (i as u16, j as u16)
                })
                .collect()
        })
        .collect();
    let peaks: Vec<f64> = (0..opts.bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(opts.seed, (1 << 32) + (label << 16) + b as u64);
            let len = pairs.len();
            let draws: Vec<usize> = (0..len).map(|_| rng.random_range(0..len)).collect();
            let values: Vec<f64> = bins
                .iter()
                .map(|at| {
                    let mut m = Marginals::zeros(n);
                    for &d in &draws {
                        let (i, j) = at[d];
                        m.add(i as usize, j as usize, 1.0);
                    }
                    evaluate(&m).contrast
                })
                .collect();
            let best = (0..values.len()).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
            let lo = best.saturating_sub((half / step).round() as usize);
            let hi = (best + (half / step).round() as usize + 1).min(values.len());
            parabola_vertex(&local[lo..hi], &values[lo..hi])
                .filter(|v| (v - local[best]).abs() <= half)
                .unwrap_or(local[best])
        })
        .collect();
    let mean = peaks.iter().sum::<f64>() / peaks.len() as f64;
    let var = peaks.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (peaks.len().max(2) - 1) as f64;
    var.sqrt()
}
