//! Physical scene: emitters, driving laser, collection optics and the two
//! far-field detectors of the HBT arrangement.
//!
//! Frames. Emitter positions live in the source frame, whose `z` axis is the
//! optical axis of the collection lens. Each detector has its own frame with
//! the same orientation; a pixel `(x, y)` sits at transverse angles
//! `Θ = (p - center) * pixel_pitch_angle` and points along
//! `normalize(tan Θx, tan Θy, 1)`. The lens maps detector directions to
//! source directions by scaling the transverse direction cosines with the
//! magnification `M` (an aplanatic, sine-condition lens), so the fringe phase
//! is linear in the detector angle with slope `k_L * M * d`.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::physics::{self, PairFrequency};

/// Fundamental constants used by the trap calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Elementary charge in C.
    pub elementary_charge: f64,
    /// Vacuum permittivity in F/m.
    pub vacuum_permittivity: f64,
    /// Atomic mass unit in kg.
    pub atomic_mass_unit: f64,
}

/// CODATA 2018 recommended values.
pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
    elementary_charge: 1.602_176_634e-19,
    vacuum_permittivity: 8.854_187_812_8e-12,
    atomic_mass_unit: 1.660_539_066_60e-27,
};

/// Driving laser. The wave number is always derived from the wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserConfig {
    wavelength: f64,
    propagation_direction: Vector3<f64>,
}

impl LaserConfig {
    pub fn new(wavelength: f64, propagation_direction: Vector3<f64>) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(invalid(format!("laser wavelength must be > 0, got {wavelength}")));
        }
        let norm = propagation_direction.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "laser propagation direction must be a unit vector (|k| = {norm})"
            )));
        }
        Ok(Self { wavelength, propagation_direction })
    }

    /// Laser in the plane spanned by `axis` and the optical axis, at 45° to `axis`.
    pub fn at_45_deg_to(wavelength: f64, axis: Vector3<f64>) -> Result<Self> {
        let transverse = Vector3::new(axis.x, axis.y, 0.0);
        let axis = if transverse.norm() > 0.0 {
            transverse.normalize()
        } else {
            Vector3::x()
        };
        Self::new(wavelength, (axis + Vector3::z()).normalize())
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn propagation_direction(&self) -> Vector3<f64> {
        self.propagation_direction
    }

    /// `k_L = 2π / λ` in rad/m.
    pub fn wave_number(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn wave_vector(&self) -> Vector3<f64> {
        self.propagation_direction * self.wave_number()
    }
}

/// Point emitters with an optional isotropic per-emission position jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterArray {
    positions: Vec<Vector3<f64>>,
    jitter_sigma: f64,
}

impl EmitterArray {
    pub fn new(positions: Vec<Vector3<f64>>, jitter_sigma: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("emitter array needs at least one position"));
        }
        if !(jitter_sigma >= 0.0 && jitter_sigma.is_finite()) {
            return Err(invalid(format!("jitter_sigma must be >= 0, got {jitter_sigma}")));
        }
        if positions.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(invalid("emitter positions must be finite"));
        }
        let min_sep = (10.0 * jitter_sigma).max(1e-9);
        for l in 0..positions.len() {
            for m in l + 1..positions.len() {
                let sep = (positions[l] - positions[m]).norm();
                // 1e-9 relative slack so that a separation of exactly 1 nm is accepted.
                if sep < min_sep * (1.0 - 1e-9) {
                    return Err(invalid(format!(
                        "emitters {l} and {m} are {sep:e} m apart; minimum separation is {min_sep:e} m"
                    )));
                }
            }
        }
        Ok(Self { positions, jitter_sigma })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn jitter_sigma(&self) -> f64 {
        self.jitter_sigma
    }

    /// `d_lm = R_l - R_m`.
    pub fn separation(&self, l: usize, m: usize) -> Result<Vector3<f64>> {
        let n = self.positions.len();
        for index in [l, m] {
            if index >= n {
                return Err(Error::IndexError { index, len: n });
            }
        }
        Ok(self.positions[l] - self.positions[m])
    }
}

/// Collection optics between the emitters and the detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsChain {
    pub magnification: f64,
    /// Distance `L` from the intermediate image to the detectors (m).
    pub image_distance: f64,
    /// Acceptance half-angle on the source side (rad).
    pub numerical_acceptance: f64,
    /// One-sigma uncertainty of `magnification`, used for error budgets.
    #[serde(default)]
    pub magnification_err: f64,
    /// One-sigma uncertainty of `image_distance` (m).
    #[serde(default)]
    pub image_distance_err: f64,
}

impl OpticsChain {
    pub fn new(magnification: f64, image_distance: f64, numerical_acceptance: f64) -> Result<Self> {
        let optics = Self {
            magnification,
            image_distance,
            numerical_acceptance,
            magnification_err: 0.0,
            image_distance_err: 0.0,
        };
        optics.validate()?;
        Ok(optics)
    }

    pub fn with_errors(mut self, magnification_err: f64, image_distance_err: f64) -> Result<Self> {
        self.magnification_err = magnification_err;
        self.image_distance_err = image_distance_err;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnification > 0.0 && self.magnification.is_finite()) {
            return Err(invalid(format!("magnification must be > 0, got {}", self.magnification)));
        }
        if !(self.image_distance > 0.0 && self.image_distance.is_finite()) {
            return Err(invalid(format!("image_distance must be > 0, got {}", self.image_distance)));
        }
        if !(self.numerical_acceptance > 0.0 && self.numerical_acceptance < PI / 2.0) {
            return Err(invalid(format!(
                "numerical_acceptance must lie in (0, π/2), got {}",
                self.numerical_acceptance
            )));
        }
        if !(self.magnification_err >= 0.0 && self.image_distance_err >= 0.0) {
            return Err(invalid("optics uncertainties must be >= 0"));
        }
        Ok(())
    }
}

/// Integer pixel address on a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub x: u16,
    pub y: u16,
}

impl Pixel {
    pub const fn new(x: u16, y: u16) -> Self {
        Self { x, y }
    }
}

/// A position-resolving, time-tagging detector with a circular active area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorPlane {
    pub pixels_per_axis: u16,
    /// Radius of the circular active mask, in pixels, measured from the center pixel.
    pub active_radius: f64,
    /// Physical pixel pitch (m).
    pub pixel_pitch: f64,
    /// Angular pixel pitch (rad/pixel), `pixel_pitch / L`.
    pub pixel_pitch_angle: f64,
    /// Dead time after an accepted event (s).
    pub dead_time: f64,
    /// Gaussian timing jitter (s).
    pub timing_jitter_sigma: f64,
}

impl DetectorPlane {
    /// Detector gauged against the image distance `L`.
    pub fn new(pixels_per_axis: u16, active_radius: f64, pixel_pitch: f64, image_distance: f64) -> Result<Self> {
        let det = Self {
            pixels_per_axis,
            active_radius,
            pixel_pitch,
            pixel_pitch_angle: pixel_pitch / image_distance,
            dead_time: 600e-9,
            timing_jitter_sigma: 50e-12,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pixels_per_axis < 2 {
            return Err(invalid("pixels_per_axis must be >= 2"));
        }
        if !(self.active_radius > 0.0 && self.active_radius <= f64::from(self.pixels_per_axis) / 2.0) {
            return Err(invalid(format!(
                "active_radius must lie in (0, pixels_per_axis/2], got {}",
                self.active_radius
            )));
        }
        if !(self.pixel_pitch > 0.0 && self.pixel_pitch_angle > 0.0) {
            return Err(invalid("pixel pitch must be > 0"));
        }
        if !(self.dead_time >= 0.0 && self.timing_jitter_sigma >= 0.0) {
            return Err(invalid("dead_time and timing_jitter_sigma must be >= 0"));
        }
        Ok(())
    }

    pub fn center(&self) -> i64 {
        i64::from(self.pixels_per_axis / 2)
    }

    /// Signed pixel offsets from the center pixel.
    pub fn offsets(&self, pixel: Pixel) -> (i64, i64) {
        (i64::from(pixel.x) - self.center(), i64::from(pixel.y) - self.center())
    }

    pub fn contains_offset(&self, dx: i64, dy: i64) -> bool {
        let c = self.center();
        let n = i64::from(self.pixels_per_axis);
        let (x, y) = (dx + c, dy + c);
        if x < 0 || y < 0 || x >= n || y >= n {
            return false;
        }
        ((dx * dx + dy * dy) as f64) <= self.active_radius * self.active_radius
    }

    pub fn contains(&self, pixel: Pixel) -> bool {
        let (dx, dy) = self.offsets(pixel);
        self.contains_offset(dx, dy)
    }

    /// Transverse angles `(Θx, Θy)` of a pixel center (rad).
    pub fn pixel_angles(&self, pixel: Pixel) -> [f64; 2] {
        let (dx, dy) = self.offsets(pixel);
        [dx as f64 * self.pixel_pitch_angle, dy as f64 * self.pixel_pitch_angle]
    }

    /// Largest transverse angle of any in-mask pixel center (rad).
    pub fn max_angle(&self) -> f64 {
        self.active_radius * self.pixel_pitch_angle
    }

    pub fn direction_from_angles(angles: [f64; 2]) -> Vector3<f64> {
        Vector3::new(angles[0].tan(), angles[1].tan(), 1.0).normalize()
    }

    pub fn angles_from_direction(direction: &Vector3<f64>) -> [f64; 2] {
        [direction.x.atan2(direction.z), direction.y.atan2(direction.z)]
    }

    /// Far-field observation direction of a pixel, in the detector frame.
    pub fn direction_from_pixel(&self, pixel: Pixel) -> Result<Vector3<f64>> {
        if !self.contains(pixel) {
            return Err(Error::OutsideActiveArea { x: pixel.x.into(), y: pixel.y.into() });
        }
        Ok(Self::direction_from_angles(self.pixel_angles(pixel)))
    }

    /// Pixel whose center is nearest to the given detector-frame direction.
    pub fn pixel_from_direction(&self, direction: &Vector3<f64>) -> Result<Pixel> {
        let [tx, ty] = Self::angles_from_direction(direction);
        let dx = (tx / self.pixel_pitch_angle).round() as i64;
        let dy = (ty / self.pixel_pitch_angle).round() as i64;
        if !self.contains_offset(dx, dy) {
            return Err(Error::OutsideActiveArea { x: dx + self.center(), y: dy + self.center() });
        }
        let c = self.center();
        Ok(Pixel::new((dx + c) as u16, (dy + c) as u16))
    }

    /// Continuous pixel offset to the nearest in-mask pixel, if any.
    pub fn pixel_from_offset(&self, fx: f64, fy: f64) -> Option<Pixel> {
        let (dx, dy) = (fx.round() as i64, fy.round() as i64);
        if !self.contains_offset(dx, dy) {
            return None;
        }
        let c = self.center();
        Some(Pixel::new((dx + c) as u16, (dy + c) as u16))
    }
}

/// Validated, immutable aggregate of the full configuration with cached
/// derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    emitters: EmitterArray,
    laser: LaserConfig,
    optics: OpticsChain,
    detectors: [DetectorPlane; 2],
    wave_number: f64,
    separations: Vec<((usize, usize), Vector3<f64>)>,
    pair_frequencies: Vec<PairFrequency>,
}

impl Scene {
    pub fn build(
        emitters: EmitterArray,
        laser: LaserConfig,
        optics: OpticsChain,
        detectors: [DetectorPlane; 2],
    ) -> Result<Self> {
        // Re-validate: fields of the plain-data types are public.
        optics.validate()?;
        for (i, det) in detectors.iter().enumerate() {
            det.validate().map_err(|e| invalid(format!("detector {i}: {e}")))?;
            let gauged = det.pixel_pitch / optics.image_distance;
            if ((det.pixel_pitch_angle - gauged) / gauged).abs() > 1e-9 {
                return Err(invalid(format!(
                    "detector {i}: pixel_pitch_angle {} inconsistent with pixel_pitch / L = {gauged}",
                    det.pixel_pitch_angle
                )));
            }
            // The whole active disk must map inside the acceptance cone.
            let corner = (det.active_radius + 1.0) * det.pixel_pitch_angle;
            let s = optics.magnification * corner.sin();
            if s >= optics.numerical_acceptance.sin() {
                return Err(invalid(format!(
                    "detector {i}: active area (Θmax = {corner:.4} rad) exceeds the optics acceptance of {:.4} rad at M = {}",
                    optics.numerical_acceptance, optics.magnification
                )));
            }
        }
        let n = emitters.len();
        let mut separations = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for l in 0..n {
            for m in l + 1..n {
                separations.push(((l, m), emitters.separation(l, m)?));
            }
        }
        let mut scene = Self {
            wave_number: laser.wave_number(),
            emitters,
            laser,
            optics,
            detectors,
            separations,
            pair_frequencies: Vec::new(),
        };
        if n >= 2 {
            scene.pair_frequencies = physics::compute_pair_frequencies(&scene);
        }
        Ok(scene)
    }

    pub fn emitters(&self) -> &EmitterArray {
        &self.emitters
    }

    pub fn laser(&self) -> &LaserConfig {
        &self.laser
    }

    pub fn optics(&self) -> &OpticsChain {
        &self.optics
    }

    pub fn detectors(&self) -> &[DetectorPlane; 2] {
        &self.detectors
    }

    pub fn detector(&self, id: u8) -> &DetectorPlane {
        &self.detectors[usize::from(id)]
    }

    pub fn wave_number(&self) -> f64 {
        self.wave_number
    }

    /// Cached `d_lm` for all `l < m`.
    pub fn separations(&self) -> &[((usize, usize), Vector3<f64>)] {
        &self.separations
    }

    /// Cached fringe predictions, empty for a single emitter.
    pub fn cached_pair_frequencies(&self) -> &[PairFrequency] {
        &self.pair_frequencies
    }

    /// Maps a detector-frame direction to the source-side observation direction.
    pub fn source_direction(&self, detector_dir: &Vector3<f64>) -> Vector3<f64> {
        let m = self.optics.magnification;
        let (sx, sy) = (m * detector_dir.x, m * detector_dir.y);
        let sz = (1.0 - sx * sx - sy * sy).max(0.0).sqrt();
        Vector3::new(sx, sy, sz)
    }

    /// Inverse of [`Scene::source_direction`].
    pub fn detector_direction(&self, source_dir: &Vector3<f64>) -> Vector3<f64> {
        let m = self.optics.magnification;
        let (dx, dy) = (source_dir.x / m, source_dir.y / m);
        Vector3::new(dx, dy, (1.0 - dx * dx - dy * dy).max(0.0).sqrt())
    }

    /// Source direction seen by a point at detector angles `(Θx, Θy)`.
    pub fn source_direction_at(&self, angles: [f64; 2]) -> Vector3<f64> {
        self.source_direction(&DetectorPlane::direction_from_angles(angles))
    }

    pub fn within_acceptance(&self, source_dir: &Vector3<f64>) -> bool {
        source_dir.z >= self.optics.numerical_acceptance.cos()
    }

    /// SHA-256 over the exact bit patterns of every configuration value.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |v: f64| h.update(v.to_bits().to_le_bytes());
        for p in self.emitters.positions() {
            p.iter().for_each(|&c| put(c));
        }
        put(self.emitters.jitter_sigma());
        put(self.laser.wavelength());
        self.laser.propagation_direction().iter().for_each(|&c| put(c));
        put(self.optics.magnification);
        put(self.optics.image_distance);
        put(self.optics.numerical_acceptance);
        put(self.optics.magnification_err);
        put(self.optics.image_distance_err);
        for d in &self.detectors {
            put(f64::from(d.pixels_per_axis));
            put(d.active_radius);
            put(d.pixel_pitch);
            put(d.pixel_pitch_angle);
            put(d.dead_time);
            put(d.timing_jitter_sigma);
        }
        hex::encode(&h.finalize()[..16])
    }
}

/// Free-function form of [`Scene::build`].
pub fn build_scene(
    emitters: EmitterArray,
    laser: LaserConfig,
    optics: OpticsChain,
    detectors: [DetectorPlane; 2],
) -> Result<Scene> {
    Scene::build(emitters, laser, optics, detectors)
}

/// Free-function form of [`DetectorPlane::direction_from_pixel`].
pub fn direction_from_pixel(detector: &DetectorPlane, pixel: Pixel) -> Result<Vector3<f64>> {
    detector.direction_from_pixel(pixel)
}
