//! Software analog of the HBT electronics: coincidence matching of raw
//! hit streams and rotated 1D projection into the start × stop matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{DetectorPlane, Scene};
use crate::sim::{CoincidencePair, DetectorEvent};

/// Default number of projection bins per axis.
pub const DEFAULT_BINS: usize = 96;

/// Greedy one-pass matcher returning `(start index, stop index)` into `events`.
///
/// Detector-0 events are visited in time order; each takes the unclaimed
/// detector-1 event nearest in time within `±window_ps` (the earlier one on
/// ties).
pub fn match_coincidence_indices(events: &[DetectorEvent], window_ps: u64) -> Result<Vec<(usize, usize)>> {
    if window_ps == 0 {
        return Err(invalid("coincidence window must be > 0"));
    }
    for (i, w) in events.windows(2).enumerate() {
        if w[1].timestamp < w[0].timestamp {
            return Err(Error::UnsortedInput { index: i + 1 });
        }
    }
    if let Some(e) = events.iter().find(|e| e.detector_id > 1) {
        return Err(invalid(format!("detector id {} is not 0 or 1", e.detector_id)));
    }
    let stops: Vec<usize> = (0..events.len()).filter(|&i| events[i].detector_id == 1).collect();
    let mut claimed = vec![false; stops.len()];
    let mut lo = 0;
    let mut out = Vec::new();
    for (i, e) in events.iter().enumerate().filter(|(_, e)| e.detector_id == 0) {
        let t = e.timestamp;
        while lo < stops.len() && events[stops[lo]].timestamp + window_ps < t {
            lo += 1;
        }
        let mut best: Option<(u64, usize)> = None;
        for (k, &s) in stops.iter().enumerate().skip(lo) {
            let ts = events[s].timestamp;
            if ts > t + window_ps {
                break;
            }
            let gap = ts.abs_diff(t);
            if !claimed[k] && best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, k));
            }
        }
        if let Some((_, k)) = best {
            claimed[k] = true;
            out.push((i, stops[k]));
        }
    }
    Ok(out)
}

pub fn match_coincidences(events: &[DetectorEvent], window_ps: u64) -> Result<Vec<CoincidencePair>> {
    Ok(match_coincidence_indices(events, window_ps)?
        .into_iter()
        .map(|(a, b)| CoincidencePair::new(events[a], events[b]))
        .collect())
}

/// `(cos φ, sin φ)`, exact at multiples of 90°.
pub fn rotation(phi_deg: f64) -> (f64, f64) {
    let q = phi_deg / 90.0;
    if q == q.round() {
        match (q as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let (s, c) = phi_deg.to_radians().sin_cos();
        (c, s)
    }
}

/// Half-width (rad) of the projected aperture, covering whole edge pixels.
pub fn aperture_half_width(det: &DetectorPlane) -> f64 {
    (det.active_radius.floor() + 0.5) * det.pixel_pitch_angle
}

#[inline]
pub(crate) fn bin_index(u: f64, half: f64, n: usize) -> usize {
    let t = (u + half) / (2.0 * half) * n as f64;
    (t.floor().max(0.0) as usize).min(n - 1)
}

/// Detector angles of every pair, `[Θx₀, Θy₀, Θx₁, Θy₁]`, computed once and
/// reused across projection angles.
#[derive(Debug, Clone)]
pub struct ProjectedPairs {
    pub(crate) angles: Vec<[f64; 4]>,
    pub(crate) half: [f64; 2],
}

impl ProjectedPairs {
    pub fn new(pairs: &[CoincidencePair], scene: &Scene) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput);
        }
        let (d0, d1) = (scene.detector(0), scene.detector(1));
        let angles = pairs
            .iter()
            .map(|p| {
                let a = d0.pixel_angles(p.start.pixel);
                let b = d1.pixel_angles(p.stop.pixel);
                [a[0], a[1], b[0], b[1]]
            })
            .collect();
        Ok(Self { angles, half: [aperture_half_width(d0), aperture_half_width(d1)] })
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Subset by index (indices may repeat).
    pub fn select(&self, indices: &[usize]) -> Self {
        Self { angles: indices.iter().map(|&i| self.angles[i]).collect(), half: self.half }
    }

    #[inline]
    pub(crate) fn bins(&self, idx: usize, c: f64, s: f64, n: usize) -> (usize, usize) {
        let a = &self.angles[idx];
        let u0 = c * a[0] + s * a[1];
        let u1 = c * a[2] + s * a[3];
        (bin_index(u0, self.half[0], n), bin_index(u1, self.half[1], n))
    }

    /// Full start × stop count matrix at rotation `phi_deg`.
    pub fn counts(&self, phi_deg: f64, n: usize) -> Vec<u64> {
        let (c, s) = rotation(phi_deg);
        (0..self.angles.len())
            .into_par_iter()
            .with_min_len(1 << 14)
            .fold(
                || vec![0u64; n * n],
                |mut acc, k| {
                    let (i, j) = self.bins(k, c, s, n);
                    acc[i * n + j] += 1;
                    acc
                },
            )
            .reduce(|| vec![0u64; n * n], |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            })
    }
}

/// Start × stop coincidence matrix after rotation by φ and 1D projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedG2 {
    pub n_bins: usize,
    /// Row-major `counts[i * n_bins + j]`, start bin `i`, stop bin `j`.
    pub counts: Vec<u64>,
    pub start_edges: Vec<f64>,
    pub stop_edges: Vec<f64>,
    pub rotation_angle: f64,
    pub total_pairs: u64,
    /// Relative aperture occupancy per start bin (mean 1 over covered bins).
    pub start_envelope: Vec<f64>,
    /// Relative aperture occupancy per stop bin.
    pub stop_envelope: Vec<f64>,
}

fn edges(half: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| -half + 2.0 * half * k as f64 / n as f64).collect()
}

/// In-mask pixel-center counts per projected bin, normalized to mean 1 over non-empty bins.
fn envelope(det: &DetectorPlane, phi_deg: f64, n: usize) -> Vec<f64> {
    let (c, s) = rotation(phi_deg);
    let half = aperture_half_width(det);
    let r = det.active_radius.floor() as i64;
    let mut hist = vec![0u64; n];
    for dx in -r..=r {
        for dy in -r..=r {
            if det.contains_offset(dx, dy) {
                let u = (c * dx as f64 + s * dy as f64) * det.pixel_pitch_angle;
                hist[bin_index(u, half, n)] += 1;
            }
        }
    }
    normalize_envelope(hist.iter().map(|&h| h as f64).collect())
}

fn normalize_envelope(mut env: Vec<f64>) -> Vec<f64> {
    let covered: Vec<f64> = env.iter().copied().filter(|&v| v > 0.0).collect();
    if !covered.is_empty() {
        let mean = covered.iter().sum::<f64>() / covered.len() as f64;
        env.iter_mut().for_each(|v| *v /= mean);
    }
    env
}

impl BinnedG2 {
    /// Matrix from raw counts with a flat envelope and symmetric edges `±half`.
    pub fn from_counts(counts: Vec<u64>, n_bins: usize, half: f64, rotation_angle: f64) -> Result<Self> {
        if n_bins < 8 || counts.len() != n_bins * n_bins {
            return Err(invalid(format!("need an n×n matrix with n >= 8, got {} cells for n = {n_bins}", counts.len())));
        }
        if !(half > 0.0) {
            return Err(invalid("bin half-width must be > 0"));
        }
        Ok(Self {
            n_bins,
            total_pairs: counts.iter().sum(),
            counts,
            start_edges: edges(half, n_bins),
            stop_edges: edges(half, n_bins),
            rotation_angle,
            start_envelope: vec![1.0; n_bins],
            stop_envelope: vec![1.0; n_bins],
        })
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n_bins + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.counts[i * self.n_bins..(i + 1) * self.n_bins]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.n_bins).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        let n = self.n_bins;
        (0..n).map(|j| (0..n).map(|i| self.count(i, j)).sum()).collect()
    }

    pub fn start_centers(&self) -> Vec<f64> {
        self.start_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn stop_centers(&self) -> Vec<f64> {
        self.stop_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Both axes reversed (the matrix seen at φ + 180°).
    pub fn reversed(&self) -> Self {
        let n = self.n_bins;
        let mut out = self.clone();
        for i in 0..n {
            for j in 0..n {
                out.counts[i * n + j] = self.count(n - 1 - i, n - 1 - j);
            }
        }
        out.start_envelope.reverse();
        out.stop_envelope.reverse();
        out
    }
}

/// Rotates every hit by `-phi_deg` about the detector center, projects onto
/// the x axis and accumulates the `n_bins × n_bins` start × stop matrix.
pub fn project_and_bin(pairs: &[CoincidencePair], scene: &Scene, phi_deg: f64, n_bins: usize) -> Result<BinnedG2> {
    let projected = ProjectedPairs::new(pairs, scene)?;
    bin_projected(&projected, scene, phi_deg, n_bins)
}

pub fn bin_projected(projected: &ProjectedPairs, scene: &Scene, phi_deg: f64, n_bins: usize) -> Result<BinnedG2> {
    if projected.is_empty() {
        return Err(Error::EmptyInput);
    }
    if n_bins < 8 {
        return Err(invalid(format!("n_bins must be >= 8, got {n_bins}")));
    }
    if !phi_deg.is_finite() {
        return Err(invalid("rotation angle must be finite"));
    }
    let counts = projected.counts(phi_deg, n_bins);
    Ok(BinnedG2 {
        n_bins,
        total_pairs: counts.iter().sum(),
        counts,
        start_edges: edges(projected.half[0], n_bins),
        stop_edges: edges(projected.half[1], n_bins),
        rotation_angle: phi_deg,
        start_envelope: envelope(scene.detector(0), phi_deg, n_bins),
        stop_envelope: envelope(scene.detector(1), phi_deg, n_bins),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Pixel;
    use crate::presets;
    use crate::sim::{generate_pairs, SimConfig};
    use proptest::prelude::*;

    fn ev(det: u8, t: u64) -> DetectorEvent {
        DetectorEvent { detector_id: det, pixel: Pixel::new(500, 500), timestamp: t }
    }

    #[test]
    fn inside_window_pairs() {
        let pairs = match_coincidences(&[ev(0, 0), ev(1, 2400)], 2500).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].dt, 2400);
    }

    #[test]
    fn outside_window_does_not_pair() {
        assert!(match_coincidences(&[ev(0, 0), ev(1, 2600)], 2500).unwrap().is_empty());
    }

    #[test]
    fn nearest_and_single_use() {
        // Start at 1000 prefers the stop at 1500 over the one at 0.
        let events = [ev(1, 0), ev(0, 1000), ev(1, 1500), ev(0, 1600)];
        let idx = match_coincidence_indices(&events, 2500).unwrap();
        assert_eq!(idx, vec![(1, 2), (3, 0)]);
        // Earlier start claims first; ties go to the earlier stop.
        let events = [ev(1, 0), ev(0, 100), ev(0, 150), ev(1, 200)];
        let idx = match_coincidence_indices(&events, 2500).unwrap();
        assert_eq!(idx, vec![(1, 0), (2, 3)]);
    }

    #[test]
    fn rejects_unsorted_and_zero_window() {
        assert!(matches!(
            match_coincidences(&[ev(0, 10), ev(1, 5)], 2500),
            Err(Error::UnsortedInput { index: 1 })
        ));
        assert!(matches!(match_coincidences(&[ev(0, 0)], 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn exact_rotations() {
        assert_eq!(rotation(0.0), (1.0, 0.0));
        assert_eq!(rotation(90.0), (0.0, 1.0));
        assert_eq!(rotation(180.0), (-1.0, 0.0));
        assert_eq!(rotation(-90.0), (0.0, -1.0));
        let (c, s) = rotation(30.0);
        assert!((c - 3f64.sqrt() / 2.0).abs() < 1e-15 && (s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn centered_hits_land_in_central_bins() {
        let scene = presets::two_ion().build().unwrap();
        let center = Pixel::new(500, 500);
        let p = CoincidencePair::new(
            DetectorEvent { detector_id: 0, pixel: center, timestamp: 10 },
            DetectorEvent { detector_id: 1, pixel: center, timestamp: 20 },
        );
        for phi in [0.0, 0.86, 45.0, 123.4] {
            let g = project_and_bin(&vec![p; 50], &scene, phi, 96).unwrap();
            assert_eq!(g.count(48, 48), 50);
            assert_eq!(g.total_pairs, 50);
        }
    }

    #[test]
    fn empty_input_rejected() {
        let scene = presets::two_ion().build().unwrap();
        assert!(matches!(project_and_bin(&[], &scene, 0.0, 96), Err(Error::EmptyInput)));
    }

    #[test]
    fn half_turn_reverses_both_axes() {
        let scene = presets::two_ion().build().unwrap();
        let cfg = SimConfig { n_pairs: 20_000, seed: 1, ..SimConfig::default() };
        // The center column sits exactly on a bin edge; exclude it so the
        // floor convention does not break the mirror symmetry.
        let pairs: Vec<_> = generate_pairs(&scene, &cfg)
            .unwrap()
            .into_iter()
            .filter(|p| p.start.pixel.x != 500 && p.stop.pixel.x != 500)
            .collect();
        let a = project_and_bin(&pairs, &scene, 0.0, 96).unwrap();
        let b = project_and_bin(&pairs, &scene, 180.0, 96).unwrap();
        assert_eq!(a.counts, b.reversed().counts);
    }

    #[test]
    fn typical_matrix_occupancy() {
        let g = BinnedG2::from_counts(vec![0; 96 * 96], 96, 0.022, 0.0).unwrap();
        let total = 180_000.0;
        let mean = total / g.counts.len() as f64;
        assert!((mean - 20.0).abs() < 1.0);
    }

    #[test]
    fn envelope_is_symmetric_chord_profile() {
        let scene = presets::two_ion().build().unwrap();
        let env = envelope(scene.detector(0), 0.0, 96);
        // Mirror-symmetric except for the center column, which sits on the
        // edge between bins 47 and 48 and falls into 48.
        for k in 0..47 {
            assert_eq!(env[k], env[95 - k], "{k}");
        }
        assert!(env[48] > env[47]);
        assert!(env[48] > env[10]);
    }

    fn arb_pixel() -> impl Strategy<Value = (i64, i64)> {
        (-495i64..=495, -495i64..=495).prop_filter("in mask", |(x, y)| x * x + y * y <= 495 * 495)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn count_conservation(phi in 0.0..180.0f64, n in 8usize..128, seed in 0u64..1000) {
            let scene = presets::two_ion().build().unwrap();
            let cfg = SimConfig { n_pairs: 500, seed, ..SimConfig::default() };
            let pairs = generate_pairs(&scene, &cfg).unwrap();
            let g = project_and_bin(&pairs, &scene, phi, n).unwrap();
            prop_assert_eq!(g.total_pairs, 500);
            prop_assert_eq!(g.counts.iter().sum::<u64>(), 500);
        }

        #[test]
        fn rotated_coordinates_bin_identically(hits in prop::collection::vec((arb_pixel(), arb_pixel()), 1..200), quarter in 1i64..4) {
            // Rotating every hit by +q·90° and binning at 0° equals binning the originals at q·90°.
            let scene = presets::two_ion().build().unwrap();
            let mk = |(dx, dy): (i64, i64)| Pixel::new((500 + dx) as u16, (500 + dy) as u16);
            let rot = |(dx, dy): (i64, i64)| match quarter { 1 => (dy, -dx), 2 => (-dx, -dy), _ => (-dy, dx) };
            let pair = |a, b| CoincidencePair::new(
                DetectorEvent { detector_id: 0, pixel: mk(a), timestamp: 0 },
                DetectorEvent { detector_id: 1, pixel: mk(b), timestamp: 0 },
            );
            let original: Vec<_> = hits.iter().map(|&(a, b)| pair(a, b)).collect();
            let rotated: Vec<_> = hits.iter().map(|&(a, b)| pair(rot(a), rot(b))).collect();
            let g1 = project_and_bin(&original, &scene, 90.0 * quarter as f64, 96).unwrap();
            let g2 = project_and_bin(&rotated, &scene, 0.0, 96).unwrap();
            prop_assert_eq!(g1.counts, g2.counts);
        }

        #[test]
        fn matching_stable_under_small_jitter(
            near in prop::collection::vec(any::<bool>(), 2..80),
            raw_gaps in prop::collection::vec(0u64..1_000_000, 80),
            jit in prop::collection::vec(-240i64..=240, 80),
            dets in prop::collection::vec(0u8..2, 80),
        ) {
            // Gaps are "near" (1.0-1.2 ns, never two in a row) or "far"
            // (>= 5 ns); minimum gap 1 ns, so ±240 ps jitter keeps the order
            // and every in-window neighbour stays in the 3 ns window.
            let mut t = 10_000u64;
            let mut events = Vec::new();
            let mut prev_near = true;
            for (k, &is_near) in near.iter().enumerate() {
                events.push(ev(dets[k], t));
                let near_gap = is_near && !prev_near;
                t += if near_gap { 1_000 + raw_gaps[k] % 200 } else { 5_000 + raw_gaps[k] % 45_000 };
                prev_near = near_gap;
            }
            let jittered: Vec<_> = events
                .iter()
                .zip(&jit)
                .map(|(e, &j)| ev(e.detector_id, (e.timestamp as i64 + j) as u64))
                .collect();
            let a = match_coincidence_indices(&events, 3_000).unwrap();
            let b = match_coincidence_indices(&jittered, 3_000).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
