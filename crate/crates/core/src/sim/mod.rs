//! Synthetic data at two fidelity levels: coincidence pairs drawn directly
//! from g₂, and full dual-detector hit streams with beam-splitter routing,
//! dead time, timing jitter and background.

mod pairs;
mod sampler;
mod stream;

pub use pairs::generate_pairs;
pub use sampler::{sample_detector_pair, sample_pair, SampledPair};
pub(crate) use sampler::uniform_on_detector;
pub use stream::{dead_time_filter, generate_stream, recoverable_pairs, EventOrigin, SimulatedStream, StreamTruth};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::Pixel;

/// One detected photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectorEvent {
    pub detector_id: u8,
    pub pixel: Pixel,
    /// Picoseconds since the start of the acquisition.
    pub timestamp: u64,
}

/// A start (detector 0) / stop (detector 1) coincidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoincidencePair {
    pub start: DetectorEvent,
    pub stop: DetectorEvent,
    /// `stop.timestamp - start.timestamp` in ps.
    pub dt: i64,
}

impl CoincidencePair {
    pub fn new(start: DetectorEvent, stop: DetectorEvent) -> Self {
        let dt = stop.timestamp as i64 - start.timestamp as i64;
        Self { start, stop, dt }
    }
}

/// Simulation knobs. Rates in Hz, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Pair count for [`generate_pairs`].
    pub n_pairs: usize,
    /// Acquisition time for [`generate_stream`].
    pub duration: f64,
    pub singles_rate: f64,
    /// Rate of emitted photon pairs before beam-splitter routing.
    pub coincidence_rate: f64,
    pub stray_fraction: f64,
    pub excited_lifetime: f64,
    pub coincidence_window: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_pairs: 200_000,
            duration: 100.0,
            singles_rate: 7e3,
            coincidence_rate: 68e-3,
            stray_fraction: 0.0,
            excited_lifetime: 6.9e-9,
            coincidence_window: 2.5e-9,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.excited_lifetime > 0.0 && self.coincidence_window > 0.0) {
            return Err(invalid("excited_lifetime and coincidence_window must be > 0"));
        }
        if !(0.0..1.0).contains(&self.stray_fraction) {
            return Err(invalid(format!("stray_fraction must lie in [0, 1), got {}", self.stray_fraction)));
        }
        if !(self.singles_rate >= 0.0 && self.coincidence_rate >= 0.0) {
            return Err(invalid("rates must be >= 0"));
        }
        Ok(())
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.coincidence_window >= self.excited_lifetime {
            out.push(format!(
                "coincidence window {:.3e} s is not shorter than the excited-state lifetime {:.3e} s",
                self.coincidence_window, self.excited_lifetime
            ));
        }
        out
    }

    pub fn window_ps(&self) -> u64 {
        seconds_to_ps(self.coincidence_window)
    }
}

pub(crate) fn seconds_to_ps(t: f64) -> u64 {
    (t * 1e12).round() as u64
}

/// Independent, reproducible substream `stream` of the master `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
