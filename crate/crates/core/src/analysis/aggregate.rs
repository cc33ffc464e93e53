use serde::{Deserialize, Serialize};

use super::fit::RowFit;
use crate::error::{Error, Result};

pub const MIN_FITS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateFrequency {
    pub frequency: f64,
    pub stat_err: f64,
    /// `1/sqrt(Σw)` from the per-row covariances.
    pub propagated_err: f64,
    /// Error implied by the row-to-row scatter.
    pub scatter_err: f64,
    pub n_fits: usize,
    /// Converged rows discarded as outliers before averaging.
    pub n_clipped: usize,
}

/// Clip threshold in combined standard deviations.
pub const CLIP_SIGMA: f64 = 5.0;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Inverse-variance weighted mean of the converged row frequencies.
/// Rows further than [`CLIP_SIGMA`] from the median (own error and robust
/// spread in quadrature) are dropped first; low-count rows occasionally
/// lock onto a harmonic. `stat_err` is the larger of the propagated and
/// scatter-based errors.
pub fn aggregate_frequency(fits: &[RowFit]) -> Result<AggregateFrequency> {
    let converged: Vec<&RowFit> = fits
        .iter()
        .filter(|f| f.converged && f.frequency_err.is_finite() && f.frequency_err > 0.0)
        .collect();
    let good: Vec<&RowFit> = if converged.len() >= MIN_FITS {
        let center = median(&mut converged.iter().map(|f| f.frequency).collect::<Vec<_>>());
        let mad = 1.4826 * median(&mut converged.iter().map(|f| (f.frequency - center).abs()).collect::<Vec<_>>());
        converged
            .iter()
            .copied()
            .filter(|f| (f.frequency - center).abs() <= CLIP_SIGMA * f.frequency_err.hypot(mad))
            .collect()
    } else {
        converged.clone()
    };
    if good.len() < MIN_FITS {
        return Err(Error::TooFewFits { converged: good.len(), required: MIN_FITS });
    }
    let w: Vec<f64> = good.iter().map(|f| f.frequency_err.powi(-2)).collect();
    let sw: f64 = w.iter().sum();
    let mean = good.iter().zip(&w).map(|(f, w)| w * f.frequency).sum::<f64>() / sw;
    let propagated_err = sw.sqrt().recip();
    let n = good.len() as f64;
    let scatter_err = (good.iter().zip(&w).map(|(f, w)| w * (f.frequency - mean).powi(2)).sum::<f64>()
        / ((n - 1.0) * sw))
        .sqrt();
    Ok(AggregateFrequency {
        frequency: mean,
        stat_err: propagated_err.max(scatter_err),
        propagated_err,
        scatter_err,
        n_fits: good.len(),
        n_clipped: converged.len() - good.len(),
    })
}
