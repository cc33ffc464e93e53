//! Statistical scaling of the frequency uncertainty with the number of
//! coincidences, from repeated random subsamples.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{analyze_strongest, AnalysisOptions};
use crate::error::{Error, Result};
use crate::ingest::ProjectedPairs;
use crate::model::Scene;
use crate::sim::substream;

pub const MIN_SIZES: usize = 5;
pub const MIN_DECADES: f64 = 1.5;
pub const MIN_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub repeat: usize,
    pub frequency: f64,
    pub stat_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub exponent: f64,
    pub exponent_err: f64,
    /// `ln(stat_err)` at `N = 1`.
    pub intercept: f64,
    pub points: Vec<ScalingPoint>,
    /// Subsamples whose analysis failed (no signal or too few fits).
    pub failures: Vec<(usize, usize)>,
}

impl ScalingResult {
    /// Median `stat_err` per size, in the order of increasing `N`.
    pub fn medians(&self) -> Vec<(usize, f64)> {
        let mut sizes: Vec<usize> = self.points.iter().map(|p| p.n).collect();
        sizes.sort_unstable();
        sizes.dedup();
        sizes
            .into_iter()
            .map(|n| {
                let mut e: Vec<f64> = self.points.iter().filter(|p| p.n == n).map(|p| p.stat_err).collect();
                e.sort_by(f64::total_cmp);
                let m = e.len() / 2;
                (n, if e.len() % 2 == 1 { e[m] } else { 0.5 * (e[m - 1] + e[m]) })
            })
            .collect()
    }
}

/// Ordinary least squares `y = a + b x`; returns `(b, se(b), a)`.
pub fn fit_power_law(n: &[f64], err: &[f64]) -> Result<(f64, f64, f64)> {
    if n.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points for a power-law fit", n.len())));
    }
    let x: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("all subsample sizes are equal".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = (rss / (k - 2.0) / sxx).sqrt();
    Ok((slope, se, intercept))
}

/// For every size, `repeats` random subsamples (without replacement) run
/// through scan → binning → row fits → aggregation; `ln stat_err` is then
/// regressed on `ln N` over all successful runs.
pub fn scaling_exponent(
    pairs: &ProjectedPairs,
    scene: &Scene,
    sizes: &[usize],
    repeats: usize,
    opts: &AnalysisOptions,
) -> Result<ScalingResult> {
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() < MIN_SIZES {
        return Err(Error::InsufficientData(format!("{} distinct sizes, need {MIN_SIZES}", sorted.len())));
    }
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == 0 || ((hi as f64) / (lo as f64)).log10() < MIN_DECADES - 1e-9 {
        return Err(Error::InsufficientData(format!("sizes {lo}..{hi} span less than {MIN_DECADES} decades")));
    }
    if hi > pairs.len() {
        return Err(Error::InsufficientData(format!("largest size {hi} exceeds the {} available pairs", pairs.len())));
    }
    if repeats < MIN_REPEATS {
        return Err(Error::InsufficientData(format!("{repeats} repeats, need {MIN_REPEATS}")));
    }
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (si, &n) in sorted.iter().enumerate() {
        for r in 0..repeats {
            let mut rng = substream(opts.scan.seed, (2 << 32) + ((si as u64) << 20) + r as u64);
            let subset = pairs.select(&index::sample(&mut rng, pairs.len(), n).into_vec());
            match analyze_strongest(&subset, scene, opts) {
                Ok(agg) => points.push(ScalingPoint { n, repeat: r, frequency: agg.frequency, stat_err: agg.stat_err }),
                Err(Error::NoSignal | Error::TooFewFits { .. }) => failures.push((n, r)),
                Err(e) => return Err(e),
            }
        }
    }
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let errs: Vec<f64> = points.iter().map(|p| p.stat_err).collect();
    let (exponent, exponent_err, intercept) = fit_power_law(&ns, &errs)?;
    Ok(ScalingResult { exponent, exponent_err, intercept, points, failures })
}
