//! Recovering the geometry of a small array of single-photon emitters from
//! far-field two-photon (Hanbury Brown–Twiss) cross-correlations.
//!
//! The pipeline: [`model`] describes the scene, [`physics`] gives g₂ and the
//! expected fringe frequencies, [`sim`] produces synthetic pairs or raw hit
//! streams, [`ingest`] matches coincidences and bins them into the
//! start × stop matrix, [`analysis`] scans orientations, fits fringes and
//! solves for the emitter layout, and [`calibration`] provides independent
//! cross-checks from trap and optics parameters.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibration;
pub mod config;
pub mod error;
pub mod ingest;
pub mod io;
pub mod model;
pub mod physics;
pub mod presets;
pub mod sim;

pub use analysis::{analyze, AnalysisOptions, AnalysisReport};
pub use config::SceneConfig;
pub use error::{Error, Result};
pub use ingest::{match_coincidences, project_and_bin, BinnedG2};
pub use model::{build_scene, DetectorPlane, EmitterArray, LaserConfig, OpticsChain, Pixel, Scene};
pub use physics::{g2, phase_delta, predict_pair_frequencies, PairFrequency};
pub use sim::{generate_pairs, generate_stream, sample_pair, CoincidencePair, DetectorEvent, SimConfig};
