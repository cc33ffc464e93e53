//! Independent cross-checks: ion spacing from the trap frequency, the
//! expected fringe frequency, and systematic error propagation from the
//! measured image distance and magnification.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{DetectorPlane, LaserConfig, OpticsChain, PhysicalConstants, CODATA_2018};

/// A value with its 1σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    pub err: f64,
}

impl Measurement {
    pub const fn new(value: f64, err: f64) -> Self {
        Self { value, err }
    }

    pub fn relative_err(&self) -> f64 {
        self.err / self.value.abs()
    }
}

impl std::fmt::Display for Measurement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.6e} ± {:.2e}", self.value, self.err)
    }
}

/// Axial confinement of a linear two-ion crystal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapConfig {
    /// ω_z / 2π in Hz.
    pub axial_frequency: f64,
    pub axial_frequency_err: f64,
    pub ion_mass_u: f64,
    pub charge_number: u32,
}

impl Default for TrapConfig {
    fn default() -> Self {
        Self { axial_frequency: 762.8e3, axial_frequency_err: 1.0e3, ion_mass_u: 39.9626, charge_number: 1 }
    }
}

impl TrapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.axial_frequency > 0.0 && self.axial_frequency.is_finite()) {
            return Err(invalid(format!("axial_frequency must be > 0, got {}", self.axial_frequency)));
        }
        if !(self.axial_frequency_err >= 0.0) {
            return Err(invalid("axial_frequency_err must be >= 0"));
        }
        if !(self.ion_mass_u > 0.0 && self.ion_mass_u.is_finite()) {
            return Err(invalid(format!("ion_mass_u must be > 0, got {}", self.ion_mass_u)));
        }
        if self.charge_number == 0 {
            return Err(invalid("charge_number must be >= 1"));
        }
        Ok(())
    }
}

pub fn two_ion_distance(trap: &TrapConfig) -> Result<Measurement> {
    two_ion_distance_with(trap, &CODATA_2018)
}

/// Equilibrium spacing `d = 2^(1/3) ℓ`, `ℓ³ = (Ze)² / (4π ε₀ m ω_z²)`.
pub fn two_ion_distance_with(trap: &TrapConfig, c: &PhysicalConstants) -> Result<Measurement> {
    trap.validate()?;
    let omega = 2.0 * PI * trap.axial_frequency;
    let q = f64::from(trap.charge_number) * c.elementary_charge;
    let m = trap.ion_mass_u * c.atomic_mass_unit;
    let l3 = q * q / (4.0 * PI * c.vacuum_permittivity * m * omega * omega);
    let d = (2.0 * l3).cbrt();
    let err = 2.0 / 3.0 * d * trap.axial_frequency_err / trap.axial_frequency;
    Ok(Measurement::new(d, err))
}

/// `f = k_L M d` in rad⁻¹, with δM/M and δd/d added in quadrature.
pub fn predicted_frequency(d: Measurement, optics: &OpticsChain, laser: &LaserConfig) -> Result<Measurement> {
    if !(d.value > 0.0 && d.err >= 0.0) {
        return Err(invalid(format!("distance must be > 0 with err >= 0, got {d}")));
    }
    optics.validate()?;
    let m = optics.magnification;
    let f = laser.wave_number() * m * d.value;
    let rel = (optics.magnification_err / m).hypot(d.err / d.value);
    Ok(Measurement::new(f, f * rel))
}

/// Pixel pitch in angular units, `pitch / L`, with relative error δL/L.
pub fn angular_gauge(detector: &DetectorPlane, image_distance: Measurement) -> Result<Measurement> {
    let l = image_distance;
    if !(l.value > 0.0 && l.err >= 0.0) {
        return Err(invalid(format!("image distance must be > 0 with err >= 0, got {l}")));
    }
    let a = detector.pixel_pitch / l.value;
    Ok(Measurement::new(a, a * l.err / l.value))
}

/// Systematic contributions to a fringe frequency (rad⁻¹).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystematicBudget {
    pub frequency: f64,
    /// From the angular gauge, `f · δL/L`.
    pub image_distance: f64,
    /// From the magnification, `f · δM/M`.
    pub magnification: f64,
    pub total: f64,
}

pub fn systematic_budget(frequency: f64, optics: &OpticsChain) -> SystematicBudget {
    let image_distance = frequency.abs() * optics.image_distance_err / optics.image_distance;
    let magnification = frequency.abs() * optics.magnification_err / optics.magnification;
    SystematicBudget { frequency, image_distance, magnification, total: image_distance.hypot(magnification) }
}
