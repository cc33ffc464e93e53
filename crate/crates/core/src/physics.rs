//! Closed-form spatial two-photon correlation of an emitter array.
//!
//! For emitters `l` and `m` with separation `d_lm` the phase accumulated by a
//! photon scattered into direction `n` is `δ_lm(n) = (k_L - k_L n)·d_lm`. The
//! normalized coincidence rate for equal-amplitude emitters is
//!
//! ```text
//! g₂(n₁, n₂) = 1 + 2/(N(N-1)) Σ_{l<m} cos[δ_lm(n₁) - δ_lm(n₂)]
//! ```
//!
//! which is `1 + cos[δ(n₁) - δ(n₂)]` for two emitters and stays in `[0, 2]`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Scene;

/// Predicted fringe of one emitter pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFrequency {
    pub pair: (usize, usize),
    /// Fringe frequency against detector angle (rad⁻¹).
    pub frequency: f64,
    /// Fringe frequency against detector position (rad per μm at distance `L`).
    pub frequency_per_um: f64,
    /// Direction of the transverse separation in the detector plane, [0°, 180°).
    pub orientation_deg: f64,
}

pub fn phase_delta(scene: &Scene, pair: (usize, usize), direction: &Vector3<f64>) -> Result<f64> {
    let d = scene.emitters().separation(pair.0, pair.1)?;
    Ok(phase_of(scene.laser().wave_vector(), scene.wave_number(), &d, direction))
}

#[inline]
fn phase_of(k_vec: Vector3<f64>, k: f64, d: &Vector3<f64>, n: &Vector3<f64>) -> f64 {
    (k_vec - n * k).dot(d)
}

/// Normalized g₂ for source-side observation directions `dir1`, `dir2`.
pub fn g2(scene: &Scene, dir1: &Vector3<f64>, dir2: &Vector3<f64>) -> Result<f64> {
    let n = scene.emitters().len();
    if n < 2 {
        return Err(Error::DegenerateSource { n });
    }
    let seps = scene.separations().iter().map(|(_, d)| d);
    Ok(g2_from_separations(scene, seps, n, dir1, dir2))
}

/// g₂ for an explicit set of separation vectors (used for jittered emission).
pub(crate) fn g2_from_separations<'a>(
    scene: &Scene,
    separations: impl Iterator<Item = &'a Vector3<f64>>,
    n_emitters: usize,
    dir1: &Vector3<f64>,
    dir2: &Vector3<f64>,
) -> f64 {
    let k_vec = scene.laser().wave_vector();
    let k = scene.wave_number();
    let norm = 2.0 / (n_emitters * (n_emitters - 1)) as f64;
    let sum: f64 = separations
        .map(|d| (phase_of(k_vec, k, d, dir1) - phase_of(k_vec, k, d, dir2)).cos())
        .sum();
    (1.0 + norm * sum).clamp(0.0, 2.0)
}

pub fn predict_pair_frequencies(scene: &Scene) -> Result<Vec<PairFrequency>> {
    let n = scene.emitters().len();
    if n < 2 {
        return Err(Error::DegenerateSource { n });
    }
    Ok(scene.cached_pair_frequencies().to_vec())
}

pub(crate) fn compute_pair_frequencies(scene: &Scene) -> Vec<PairFrequency> {
    let km = scene.wave_number() * scene.optics().magnification;
    let l_um = scene.optics().image_distance * 1e6;
    let mut out: Vec<PairFrequency> = scene
        .separations()
        .iter()
        .map(|&(pair, d)| {
            let transverse = (d.x * d.x + d.y * d.y).sqrt();
            let frequency = km * transverse;
            PairFrequency {
                pair,
                frequency,
                frequency_per_um: frequency / l_um,
                orientation_deg: orientation_deg(d.x, d.y),
            }
        })
        .collect();
    out.sort_by(|a, b| a.orientation_deg.total_cmp(&b.orientation_deg));
    out
}

/// Axis direction of `(x, y)` modulo 180°, in [0°, 180°).
pub fn orientation_deg(x: f64, y: f64) -> f64 {
    let a = y.atan2(x).to_degrees().rem_euclid(180.0);
    if a >= 180.0 {
        0.0
    } else {
        a
    }
}

/// Smallest separation between two axis orientations (deg, modulo 180°).
pub fn orientation_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}
