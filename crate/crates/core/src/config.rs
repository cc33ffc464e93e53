//! TOML scene configuration.
//!
//! Lengths are in meters, angles in degrees, frequencies and rates in Hz,
//! times in seconds. Every table and key is optional; omitted values fall
//! back to the two-ion defaults. Both detectors share the `[detector]` table.
//!
//! ```toml
//! [laser]
//! wavelength = 396.95e-9
//! # direction = [0.7071, 0.0, 0.7071]   # default: 45° to the emitter axis
//!
//! [optics]
//! magnification = 14.1
//! magnification_err = 0.1
//! image_distance = 0.448
//! image_distance_err = 0.001
//! numerical_acceptance_deg = 20.0
//!
//! [detector]
//! pixels_per_axis = 1000
//! active_radius = 495.0      # pixels
//! pixel_pitch = 20e-6
//! dead_time = 600e-9
//! timing_jitter = 50e-12
//!
//! [emitters]
//! positions = [[-3.348e-6, 0.0, 0.0], [3.348e-6, 0.0, 0.0]]
//! jitter_sigma = 0.0
//!
//! [sim]
//! seed = 7
//! n_pairs = 200000
//! duration = 100.0
//! singles_rate = 7000.0
//! coincidence_rate = 0.068
//! stray_fraction = 0.0
//! excited_lifetime = 6.9e-9
//! coincidence_window = 2.5e-9
//!
//! [trap]
//! axial_frequency = 762.8e3
//! axial_frequency_err = 1.0e3
//! ion_mass_u = 39.9626
//! charge_number = 1
//! ```

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::calibration::TrapConfig;
use crate::error::{invalid, Error, Result};
use crate::model::{DetectorPlane, EmitterArray, LaserConfig, OpticsChain, Scene};
use crate::presets;
use crate::sim::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaserSection {
    pub wavelength: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<[f64; 3]>,
}

impl Default for LaserSection {
    fn default() -> Self {
        Self { wavelength: 396.95e-9, direction: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsSection {
    pub magnification: f64,
    pub magnification_err: f64,
    pub image_distance: f64,
    pub image_distance_err: f64,
    pub numerical_acceptance_deg: f64,
}

impl Default for OpticsSection {
    fn default() -> Self {
        Self {
            magnification: 14.1,
            magnification_err: 0.1,
            image_distance: 0.448,
            image_distance_err: 1e-3,
            numerical_acceptance_deg: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub pixels_per_axis: u16,
    pub active_radius: f64,
    pub pixel_pitch: f64,
    pub dead_time: f64,
    pub timing_jitter: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            pixels_per_axis: 1000,
            active_radius: 495.0,
            pixel_pitch: 20e-6,
            dead_time: 600e-9,
            timing_jitter: 50e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitterSection {
    pub positions: Vec<[f64; 3]>,
    pub jitter_sigma: f64,
}

impl Default for EmitterSection {
    fn default() -> Self {
        Self { positions: presets::two_ion_positions(), jitter_sigma: 0.0 }
    }
}

/// Complete run configuration: scene, simulation and trap parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub laser: LaserSection,
    pub optics: OpticsSection,
    pub detector: DetectorSection,
    pub emitters: EmitterSection,
    pub sim: SimConfig,
    pub trap: TrapConfig,
}

impl SceneConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn with_positions(mut self, positions: Vec<[f64; 3]>) -> Self {
        self.emitters.positions = positions;
        self
    }

    /// Overrides one dotted key, e.g. `optics.magnification=14.2`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| invalid(format!("override `{assignment}` is not of the form key=value")))?;
        let key = key.trim();
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));

        let mut root = toml::Table::try_from(&*self).map_err(|e| invalid(e.to_string()))?;
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| invalid("empty override key"))?;
        let mut table = &mut root;
        for part in parts {
            table = table
                .get_mut(part)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| invalid(format!("unknown config table `{part}` in `{key}`")))?;
        }
        table.insert(leaf.to_string(), value);
        *self = root.try_into().map_err(|e: toml::de::Error| invalid(format!("override `{key}`: {e}")))?;
        Ok(())
    }

    pub fn build(&self) -> Result<Scene> {
        let positions: Vec<Vector3<f64>> =
            self.emitters.positions.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect();
        let emitters = EmitterArray::new(positions, self.emitters.jitter_sigma)?;
        let laser = match self.laser.direction {
            Some([x, y, z]) => LaserConfig::new(self.laser.wavelength, Vector3::new(x, y, z))?,
            None => {
                let axis = match emitters.len() {
                    1 => Vector3::x(),
                    _ => emitters.separation(1, 0)?,
                };
                LaserConfig::at_45_deg_to(self.laser.wavelength, axis)?
            }
        };
        let o = &self.optics;
        let optics = OpticsChain::new(o.magnification, o.image_distance, o.numerical_acceptance_deg.to_radians())?
            .with_errors(o.magnification_err, o.image_distance_err)?;
        let d = &self.detector;
        let mut det = DetectorPlane::new(d.pixels_per_axis, d.active_radius, d.pixel_pitch, o.image_distance)?;
        det.dead_time = d.dead_time;
        det.timing_jitter_sigma = d.timing_jitter;
        det.validate()?;
        Scene::build(emitters, laser, optics, [det, det])
    }
}

impl std::str::FromStr for SceneConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_toml_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = SceneConfig::default();
        let text = cfg.to_toml_string();
        let back = SceneConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
        back.build().unwrap();
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = SceneConfig::from_toml_str("[optics]\nmagnification = 10.0\n").unwrap();
        assert_eq!(cfg.optics.magnification, 10.0);
        assert_eq!(cfg.optics.image_distance, 0.448);
        assert_eq!(cfg.sim.singles_rate, 7e3);
    }

    #[test]
    fn unknown_key_reports_location() {
        let err = SceneConfig::from_toml_str("[optics]\nmagnificaton = 10.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("magnificaton"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn overrides() {
        let mut cfg = SceneConfig::default();
        cfg.apply_override("optics.magnification=14.2").unwrap();
        assert_eq!(cfg.optics.magnification, 14.2);
        cfg.apply_override("sim.seed = 11").unwrap();
        assert_eq!(cfg.sim.seed, 11);
        cfg.apply_override("laser.direction=[0.0, 0.0, 1.0]").unwrap();
        assert_eq!(cfg.laser.direction, Some([0.0, 0.0, 1.0]));
        assert!(cfg.apply_override("optics.nope=1").is_err());
        assert!(cfg.apply_override("nope.x=1").is_err());
        assert!(cfg.apply_override("optics.magnification").is_err());
        assert!(cfg.apply_override("optics.magnification=abc").is_err());
    }

    #[test]
    fn invalid_physics_is_rejected_at_build() {
        let mut cfg = SceneConfig::default();
        cfg.optics.magnification = -1.0;
        assert!(matches!(cfg.build(), Err(Error::InvalidConfig(_))));
    }
}
