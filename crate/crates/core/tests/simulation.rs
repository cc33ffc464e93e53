mod common;

use common::*;
use ionhbt_core::analysis::RowFit;
use ionhbt_core::ingest::{match_coincidence_indices, ProjectedPairs};
use ionhbt_core::sim::{generate_stream, recoverable_pairs, substream};
use ionhbt_core::{presets, SimConfig};

fn mean_visibility(fits: &[RowFit]) -> f64 {
    let v: Vec<f64> = fits.iter().filter(|f| f.converged).map(|f| f.visibility).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Independent per-emitter jitter σ gives each pair a relative displacement
/// of variance 2σ² per axis, so a photon pair at detector angles Θ₁, Θ₂
/// keeps the fraction `exp(-(k M σ |Θ₁ - Θ₂|)²)` of its fringe contrast.
fn jitter_visibility_oracle(scene: &ionhbt_core::Scene, sigma: f64, draws: usize) -> f64 {
    let det = scene.detector(0);
    let kms = scene.wave_number() * scene.optics().magnification * sigma;
    let mut rng = substream(99, 0);
    let sum: f64 = (0..draws)
        .map(|_| {
            let a = uniform_offset(det, &mut rng);
            let b = uniform_offset(det, &mut rng);
            let d2 = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)) * det.pixel_pitch_angle.powi(2);
            (-(kms * kms) * d2).exp()
        })
        .sum();
    sum / draws as f64
}

#[test]
fn emitter_jitter_reduces_visibility_as_predicted() {
    let phi = presets::TWO_ION_ORIENTATION_DEG;
    let mut visibilities = Vec::new();
    for sigma in [0.0, 50e-9] {
        let mut cfg = presets::two_ion();
        cfg.emitters.jitter_sigma = sigma;
        let scene = cfg.build().unwrap();
        let pairs = simulate(&scene, 1_000_000, 2);
        visibilities.push(mean_visibility(&fit_at(&ProjectedPairs::new(&pairs, &scene).unwrap(), &scene, phi)));
    }
    let ratio = visibilities[1] / visibilities[0];
    let scene = presets::two_ion().build().unwrap();
    let oracle = jitter_visibility_oracle(&scene, 50e-9, 2_000_000);
    assert!(ratio < 1.0 && ratio > 0.9, "{ratio}");
    assert!((ratio - oracle).abs() < 0.015, "ratio {ratio} vs oracle {oracle}");
}

#[test]
fn stream_rate_matches_singles_rate() {
    let scene = presets::two_ion().build().unwrap();
    let cfg = SimConfig { seed: 5, duration: 100.0, ..SimConfig::default() };
    let stream = generate_stream(&scene, &cfg).unwrap();
    for d in 0..2u8 {
        let n = stream.events.iter().filter(|e| e.detector_id == d).count() as f64;
        let nominal = cfg.singles_rate * cfg.duration;
        assert!((n - nominal).abs() < 3.0 * nominal.sqrt() + stream.truth.dead_time_dropped[d as usize] as f64, "{n}");
        assert!(n <= nominal + 3.0 * nominal.sqrt());
    }
    assert!(stream.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
}

#[test]
fn lossless_stream_round_trips_every_pair() {
    let mut cfg = presets::two_ion();
    cfg.detector.dead_time = 0.0;
    let scene = cfg.build().unwrap();
    let sim = SimConfig { seed: 8, duration: 20.0, singles_rate: 0.0, coincidence_rate: 200.0, ..SimConfig::default() };
    let stream = generate_stream(&scene, &sim).unwrap();
    let window = sim.window_ps() + 1_000;
    let matched = match_coincidence_indices(&stream.events, window).unwrap();
    let truth = recoverable_pairs(&stream, window);
    assert!(truth.len() > 1_000);
    assert_eq!(matched, truth);
    let t = &stream.truth;
    let photons_kept = stream.events.len();
    assert_eq!(photons_kept + t.outside_mask_photons, 2 * t.embedded_pairs);
    assert_eq!(t.dead_time_dropped, [0, 0]);
}
