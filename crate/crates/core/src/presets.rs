//! Ready-made configurations: the two-ion crystal and the planar
//! three-emitter triangle.

use std::f64::consts::PI;

use nalgebra::Vector2;

use crate::config::SceneConfig;

/// Ion separation from the trap-frequency calibration (m).
pub const TWO_ION_DISTANCE: f64 = 6.696e-6;
/// Orientation of the two-ion axis in the detector plane (deg).
pub const TWO_ION_ORIENTATION_DEG: f64 = 0.86;

/// Pair components of the three-emitter triangle: (orientation deg, frequency μm⁻¹).
pub const TRIANGLE_COMPONENTS: [(f64, f64); 3] = [(35.5, 0.065), (63.4, 0.090), (106.3, 0.044)];
/// Image distance used for the triangle scene (m).
pub const TRIANGLE_IMAGE_DISTANCE: f64 = 0.020;
/// Physical pixel pitch used for the triangle scene (m).
pub const TRIANGLE_PIXEL_PITCH: f64 = 1e-6;

pub(crate) fn two_ion_positions() -> Vec<[f64; 3]> {
    let (s, c) = TWO_ION_ORIENTATION_DEG.to_radians().sin_cos();
    let h = TWO_ION_DISTANCE / 2.0;
    vec![[-h * c, -h * s, 0.0], [h * c, h * s, 0.0]]
}

/// Two ions 6.696 μm apart, axis at 0.86°, λ = 396.95 nm, M = 14.1, L = 448 mm.
pub fn two_ion() -> SceneConfig {
    SceneConfig::default()
}

/// Single emitter at the origin: no cross-correlation signal.
pub fn single_emitter() -> SceneConfig {
    SceneConfig::default().with_positions(vec![[0.0; 3]])
}

/// Separation vectors (in μm⁻¹ fringe units) closing the triangle: the
/// residual of `v2 - v1 - v3` is shared equally among the three components.
pub fn triangle_fringe_vectors() -> [Vector2<f64>; 3] {
    let v: Vec<Vector2<f64>> = TRIANGLE_COMPONENTS
        .iter()
        .map(|&(phi, f)| {
            let (s, c) = phi.to_radians().sin_cos();
            Vector2::new(f * c, f * s)
        })
        .collect();
    let r = v[1] - v[0] - v[2];
    [v[0] + r / 3.0, v[1] - r / 3.0, v[2] + r / 3.0]
}

/// Planar three-emitter array whose pairwise fringes reproduce
/// [`TRIANGLE_COMPONENTS`] as closely as a closed triangle allows.
pub fn triangle() -> SceneConfig {
    let mut cfg = SceneConfig::default();
    cfg.optics.image_distance = TRIANGLE_IMAGE_DISTANCE;
    cfg.optics.numerical_acceptance_deg = 25.0;
    cfg.detector.pixel_pitch = TRIANGLE_PIXEL_PITCH;
    let k = 2.0 * PI / cfg.laser.wavelength;
    // f[rad/μm] * 1e6 * L = k * M * d
    let scale = 1e6 * TRIANGLE_IMAGE_DISTANCE / (k * cfg.optics.magnification);
    let [v1, _, v3] = triangle_fringe_vectors();
    let a = Vector2::zeros();
    let b = v1 * scale;
    let c = (v1 + v3) * scale;
    let centroid = (a + b + c) / 3.0;
    cfg.emitters.positions = [a, b, c]
        .iter()
        .map(|p| {
            let q = p - centroid;
            [q.x, q.y, 0.0]
        })
        .collect();
    cfg.laser.direction = Some([std::f64::consts::FRAC_1_SQRT_2, 0.0, std::f64::consts::FRAC_1_SQRT_2]);
    cfg
}
