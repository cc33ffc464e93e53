//! Fringe contrast of a binned matrix, measured on the difference
//! coordinate `k = i - j`.

use crate::error::{Error, Result};
use crate::ingest::BinnedG2;

/// Difference bins with fewer expected counts are ignored.
pub const MIN_EXPECTED: f64 = 5.0;

/// Row, column and diagonal sums of a start × stop matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Marginals {
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    /// Index `k + n - 1` holds the sum over cells with `i - j = k`.
    pub diag: Vec<f64>,
}

impl Marginals {
    pub fn zeros(n: usize) -> Self {
        Self { rows: vec![0.0; n], cols: vec![0.0; n], diag: vec![0.0; 2 * n - 1] }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, w: f64) {
        let n = self.rows.len();
        self.rows[i] += w;
        self.cols[j] += w;
        self.diag[i + n - 1 - j] += w;
    }

    pub fn from_matrix(g2: &BinnedG2) -> Self {
        let n = g2.n_bins;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for (j, &c) in g2.row(i).iter().enumerate() {
                if c > 0 {
                    m.add(i, j, c as f64);
                }
            }
        }
        m
    }
}

/// Normalized difference signal and its noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceSignal {
    /// Difference index `k = i - j` of each retained bin.
    pub k: Vec<i64>,
    /// Observed over expected counts, rescaled to weighted mean 1.
    pub normalized: Vec<f64>,
    /// Expected counts without correlation (product of marginals).
    pub expected: Vec<f64>,
}

impl DifferenceSignal {
    fn total_expected(&self) -> f64 {
        self.expected.iter().sum()
    }

    /// Occupancy-weighted variance of the normalized points. Weighting by
    /// `E_k` keeps the sparsely populated outer diagonals from dominating.
    pub fn sample_variance(&self) -> f64 {
        if self.k.len() < 2 {
            return 0.0;
        }
        let total = self.total_expected();
        let mean = self.normalized.iter().zip(&self.expected).map(|(s, e)| s * e).sum::<f64>() / total;
        self.normalized.iter().zip(&self.expected).map(|(s, e)| e * (s - mean).powi(2)).sum::<f64>() / total
    }

    /// Expected shot-noise part of [`Self::sample_variance`].
    pub fn noise_variance(&self) -> f64 {
        let total = self.total_expected();
        let sum: f64 = self.normalized.iter().map(|s| s.max(0.0)).sum();
        let weighted: f64 = self.normalized.iter().zip(&self.expected).map(|(s, e)| s.max(0.0) * e).sum();
        (sum - weighted / total) / total
    }

    /// Standard deviation with the shot-noise contribution subtracted.
    pub fn contrast(&self) -> f64 {
        (self.sample_variance() - self.noise_variance()).max(0.0).sqrt()
    }

    /// Level a pure-noise contrast exceeds with negligible probability.
    pub fn noise_floor(&self) -> f64 {
        let k = self.k.len().max(1) as f64;
        (5.0 * (2.0 / k).sqrt() * self.noise_variance()).sqrt()
    }
}

pub(crate) fn difference_signal_from(m: &Marginals) -> Result<DifferenceSignal> {
    let n = m.rows.len();
    let total: f64 = m.rows.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyInput);
    }
    let mut out = DifferenceSignal { k: Vec::new(), normalized: Vec::new(), expected: Vec::new() };
    for idx in 0..2 * n - 1 {
        let k = idx as i64 - (n as i64 - 1);
        let mut e = 0.0;
        for i in 0..n {
            let j = i as i64 - k;
            if (0..n as i64).contains(&j) {
                e += m.rows[i] * m.cols[j as usize];
            }
        }
        e /= total;
        if e >= MIN_EXPECTED {
            out.k.push(k);
            out.normalized.push(m.diag[idx] / e);
            out.expected.push(e);
        }
    }
    if !out.k.is_empty() {
        let mean = out.normalized.iter().zip(&out.expected).map(|(s, e)| s * e).sum::<f64>()
            / out.expected.iter().sum::<f64>();
        out.normalized.iter_mut().for_each(|s| *s /= mean);
    }
    Ok(out)
}

pub fn difference_signal(g2: &BinnedG2) -> Result<DifferenceSignal> {
    if g2.total_pairs == 0 {
        return Err(Error::EmptyInput);
    }
    difference_signal_from(&Marginals::from_matrix(g2))
}

/// Fringe contrast: occupancy-weighted standard deviation of the normalized
/// difference signal `Σ_{i-j=k} G_ij / E_k`, debiased for shot noise.
pub fn contrast_metric(g2: &BinnedG2) -> Result<f64> {
    Ok(difference_signal(g2)?.contrast())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn poisson_matrix(n: usize, seed: u64, mean: impl Fn(usize, usize) -> f64) -> BinnedG2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = (0..n * n)
            .map(|c| {
                let mu = mean(c / n, c % n);
                if mu > 0.0 {
                    Poisson::new(mu).unwrap().sample(&mut rng) as u64
                } else {
                    0
                }
            })
            .collect();
        BinnedG2::from_counts(counts, n, 0.022, 0.0).unwrap()
    }

    #[test]
    fn empty_matrix_rejected() {
        let g = BinnedG2::from_counts(vec![0; 64], 8, 1.0, 0.0).unwrap();
        assert!(matches!(contrast_metric(&g), Err(Error::EmptyInput)));
    }

    #[test]
    fn flat_matrix_has_no_contrast() {
        let per_cell = 1e6 / (96.0 * 96.0);
        for seed in 0..5 {
            let g = poisson_matrix(96, seed, |_, _| per_cell);
            let c = contrast_metric(&g).unwrap();
            assert!(c <= 0.02, "seed {seed}: {c}");
        }
    }

    #[test]
    fn product_envelope_is_removed() {
        // Circular-aperture chords on both axes, no correlation.
        let chord = |i: usize| (1.0 - ((i as f64 + 0.5) / 48.0 - 1.0).powi(2)).max(0.0).sqrt();
        let g = poisson_matrix(96, 9, |i, j| 200.0 * chord(i) * chord(j));
        assert!(contrast_metric(&g).unwrap() < 0.02);
    }

    #[test]
    fn cosine_difference_signal() {
        // Noise-free expectation, then Poisson draws at ~1e6 total counts.
        let (n, v, period) = (96, 0.8, 9.0);
        let mean = |i: usize, j: usize| 110.0 * (1.0 + v * (2.0 * std::f64::consts::PI * (i as f64 - j as f64) / period).cos());
        let exact: Vec<u64> = (0..n * n).map(|c| (mean(c / n, c % n) * 1e4).round() as u64).collect();
        let oracle = difference_signal(&BinnedG2::from_counts(exact, n, 0.022, 0.0).unwrap()).unwrap();
        let noise_free = oracle.sample_variance().sqrt();
        assert!((noise_free / (v / 2f64.sqrt()) - 1.0).abs() < 0.1, "{noise_free}");
        let g = poisson_matrix(n, 3, mean);
        let c = contrast_metric(&g).unwrap();
        assert!((c / noise_free - 1.0).abs() < 0.05, "{c} vs {noise_free}");
    }

    #[test]
    fn low_occupancy_diagonals_dropped() {
        let g = poisson_matrix(16, 1, |_, _| 2.0);
        let s = difference_signal(&g).unwrap();
        // E_k = (16 - |k|) * 2 >= 5 keeps |k| <= 13.
        assert!(s.k.iter().all(|k| k.abs() <= 13));
        assert!(s.expected.iter().all(|&e| e >= MIN_EXPECTED));
    }
}
