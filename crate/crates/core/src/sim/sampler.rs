use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{DetectorPlane, Scene};
use crate::physics;

/// One accepted photon pair, in both detector and source coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledPair {
    /// Continuous pixel offsets from the detector center, per photon.
    pub offsets: [[f64; 2]; 2],
    /// Detector angles `(Θx, Θy)`, per photon.
    pub angles: [[f64; 2]; 2],
    /// Source-side observation directions, per photon.
    pub directions: [Vector3<f64>; 2],
}

/// Uniform point over the union of in-mask pixel squares.
pub(crate) fn uniform_on_detector<R: Rng + ?Sized>(det: &DetectorPlane, rng: &mut R) -> [f64; 2] {
    let half = det.active_radius.floor() + 0.5;
    loop {
        let fx = rng.random_range(-half..half);
        let fy = rng.random_range(-half..half);
        if det.contains_offset(fx.round() as i64, fy.round() as i64) {
            return [fx, fy];
        }
    }
}

/// Draws a photon pair with density ∝ g₂ by rejection against the uniform
/// aperture proposal with envelope 2. Photon 1 lands on detector 0,
/// photon 2 on detector 1.
pub fn sample_detector_pair<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Result<SampledPair> {
    let n = scene.emitters().len();
    if n < 2 {
        return Err(Error::DegenerateSource { n });
    }
    let sigma = scene.emitters().jitter_sigma();
    let jitter = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma > 0"));
    let mut jittered: Vec<Vector3<f64>> = Vec::new();
    let dets = scene.detectors();
    loop {
        let o1 = uniform_on_detector(&dets[0], rng);
        let o2 = uniform_on_detector(&dets[1], rng);
        let a1 = [o1[0] * dets[0].pixel_pitch_angle, o1[1] * dets[0].pixel_pitch_angle];
        let a2 = [o2[0] * dets[1].pixel_pitch_angle, o2[1] * dets[1].pixel_pitch_angle];
        let n1 = scene.source_direction_at(a1);
        let n2 = scene.source_direction_at(a2);
        let g = match &jitter {
            None => physics::g2_from_separations(scene, scene.separations().iter().map(|(_, d)| d), n, &n1, &n2),
            Some(normal) => {
                jittered.clear();
                jittered.extend(scene.emitters().positions().iter().map(|p| {
                    p + Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng))
                }));
                let seps: Vec<Vector3<f64>> = (0..n)
                    .flat_map(|l| (l + 1..n).map(move |m| (l, m)))
                    .map(|(l, m)| jittered[l] - jittered[m])
                    .collect();
                physics::g2_from_separations(scene, seps.iter(), n, &n1, &n2)
            }
        };
        if rng.random::<f64>() * 2.0 < g {
            return Ok(SampledPair { offsets: [o1, o2], angles: [a1, a2], directions: [n1, n2] });
        }
    }
}

/// Source-side direction pair distributed ∝ g₂ over the aperture.
pub fn sample_pair<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let p = sample_detector_pair(scene, rng)?;
    Ok((p.directions[0], p.directions[1]))
}
