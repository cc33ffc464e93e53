//! Oracles and property checks shared by the integration targets.
#![allow(dead_code)]

use std::f64::consts::PI;

use ionhbt_core::analysis::{aggregate_frequency, fit_rows, select_rows, AnalysisOptions, RowFit, RowSelection, ScanOptions};
use ionhbt_core::ingest::{bin_projected, ProjectedPairs};
use ionhbt_core::sim::{generate_stream, sample_detector_pair, substream};
use ionhbt_core::{generate_pairs, g2, presets, project_and_bin, CoincidencePair, DetectorEvent, DetectorPlane, Pixel, Scene, SceneConfig, SimConfig};
use proptest::prelude::*;
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn simulate(scene: &Scene, n_pairs: usize, seed: u64) -> Vec<CoincidencePair> {
    generate_pairs(scene, &SimConfig { n_pairs, seed, ..SimConfig::default() }).expect("simulation")
}

/// Two emitters `distance` apart along `phi_deg`, otherwise the default scene.
pub fn two_emitter_config(distance: f64, phi_deg: f64) -> SceneConfig {
    let (s, c) = phi_deg.to_radians().sin_cos();
    let h = distance / 2.0;
    presets::two_ion().with_positions(vec![[-h * c, -h * s, 0.0], [h * c, h * s, 0.0]])
}

/// Uniform offset over the in-mask pixel squares (rejection from the
/// bounding square).
pub fn uniform_offset<R: Rng>(det: &DetectorPlane, rng: &mut R) -> [f64; 2] {
    let r = det.active_radius.floor() + 0.5;
    loop {
        let o = [rng.random_range(-r..r), rng.random_range(-r..r)];
        if det.contains_offset(o[0].round() as i64, o[1].round() as i64) {
            return o;
        }
    }
}

pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Sampled pairs against the analytic density on a `grid × grid` histogram
/// of the angle difference `Θ₁ − Θ₂`. The expectation is a g₂-weighted
/// histogram of independent uniform proposals; its own Monte Carlo
/// variance enters each cell's denominator.
pub fn sampler_chi_square(scene: &Scene, n_samples: usize, n_oracle: usize, grid: usize, seed: u64) -> ChiSquare {
    let det = scene.detector(0);
    let span = 2.0 * (det.active_radius.floor() + 0.5) * det.pixel_pitch_angle;
    let cell = |d: [f64; 2]| -> usize {
        let ix = (((d[0] + span) / (2.0 * span) * grid as f64) as usize).min(grid - 1);
        let iy = (((d[1] + span) / (2.0 * span) * grid as f64) as usize).min(grid - 1);
        ix * grid + iy
    };
    let chunks = 64;
    let observed = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64);
            let mut h = vec![0.0; grid * grid];
            for _ in 0..n_samples / chunks {
                let p = sample_detector_pair(scene, &mut rng).expect("sample");
                h[cell([p.angles[0][0] - p.angles[1][0], p.angles[0][1] - p.angles[1][1]])] += 1.0;
            }
            h
        })
        .reduce(|| vec![0.0; grid * grid], add);
    let (sum_w, sum_w2) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, 1_000 + c as u64);
            let mut s = vec![0.0; grid * grid];
            let mut q = vec![0.0; grid * grid];
            let dets = scene.detectors();
            for _ in 0..n_oracle / chunks {
                let o1 = uniform_offset(&dets[0], &mut rng);
                let o2 = uniform_offset(&dets[1], &mut rng);
                let a1 = [o1[0] * dets[0].pixel_pitch_angle, o1[1] * dets[0].pixel_pitch_angle];
                let a2 = [o2[0] * dets[1].pixel_pitch_angle, o2[1] * dets[1].pixel_pitch_angle];
                let w = g2(scene, &scene.source_direction_at(a1), &scene.source_direction_at(a2)).expect("g2");
                let k = cell([a1[0] - a2[0], a1[1] - a2[1]]);
                s[k] += w;
                q[k] += w * w;
            }
            (s, q)
        })
        .reduce(|| (vec![0.0; grid * grid], vec![0.0; grid * grid]), |a, b| (add(a.0, b.0), add(a.1, b.1)));
    let n: f64 = observed.iter().sum();
    let w_total: f64 = sum_w.iter().sum();
    let mut statistic = 0.0;
    let mut cells = 0;
    for k in 0..grid * grid {
        let expected = n * sum_w[k] / w_total;
        if expected < 5.0 {
            continue;
        }
        let var = expected + n * n * sum_w2[k] / (w_total * w_total);
        statistic += (observed[k] - expected).powi(2) / var;
        cells += 1;
    }
    let dof = cells - 1;
    let p_value = ChiSquared::new(dof as f64).unwrap().sf(statistic);
    ChiSquare { statistic, dof, p_value }
}

fn add(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    a
}

/// Random direction inside the cone of half-angle `max_angle` about +z.
pub fn direction_in_cone<R: Rng>(rng: &mut R, max_angle: f64) -> nalgebra::Vector3<f64> {
    let cos_max = max_angle.cos();
    let z = rng.random_range(cos_max..1.0);
    let phi = rng.random_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    nalgebra::Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Largest bound violation of g₂ over `scenes × directions` random draws
/// (0 when `0 ≤ g₂ ≤ 2` held everywhere).
pub fn g2_bound_violation(scenes: usize, directions: usize, seed: u64) -> f64 {
    (0..scenes)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, s as u64);
            let n = rng.random_range(2..=6);
            let positions = (0..n)
                .map(|_| [0; 3].map(|_: i32| rng.random_range(-2e-5..2e-5)))
                .collect();
            let mut cfg = presets::two_ion().with_positions(positions);
            cfg.laser.wavelength = rng.random_range(200e-9..1000e-9);
            let scene = cfg.build().expect("scene");
            let cone = 0.99 * cfg.optics.numerical_acceptance_deg.to_radians();
            (0..directions)
                .map(|_| {
                    let v = g2(&scene, &direction_in_cone(&mut rng, cone), &direction_in_cone(&mut rng, cone)).expect("g2");
                    (-v).max(v - 2.0).max(0.0)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Weighted straight-line fit of the unwrapped row phases against the
/// start angle; returns `(slope, slope_err)`.
pub fn phase_slope(fits: &[RowFit]) -> (f64, f64) {
    let good: Vec<&RowFit> = fits.iter().filter(|f| f.converged).collect();
    let mut phases: Vec<f64> = Vec::with_capacity(good.len());
    for f in &good {
        let p = match phases.last() {
            None => f.phase,
            Some(&prev) => prev + ((f.phase - prev + PI).rem_euclid(2.0 * PI) - PI),
        };
        phases.push(p);
    }
    let w: Vec<f64> = good.iter().map(|f| f.phase_err.powi(-2)).collect();
    let x: Vec<f64> = good.iter().map(|f| f.start_angle).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(&phases).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = w.iter().zip(&x).zip(&phases).map(|((w, x), y)| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let chi2: f64 = w.iter().zip(&x).zip(&phases).map(|((w, x), y)| w * (y - my - slope * (x - mx)).powi(2)).sum();
    let inflation = (chi2 / (good.len() as f64 - 2.0)).max(1.0);
    (slope, (inflation / sxx).sqrt())
}

/// `|slope + f| / σ` for the fits of one component.
pub fn phase_slope_z(fits: &[RowFit]) -> f64 {
    let agg = aggregate_frequency(fits).expect("aggregate");
    let (slope, err) = phase_slope(fits);
    (slope + agg.frequency).abs() / err.hypot(agg.stat_err)
}

/// Bins at the known orientation and fits the automatically selected rows.
pub fn fit_at(pairs: &ProjectedPairs, scene: &Scene, phi: f64) -> Vec<RowFit> {
    let g = bin_projected(pairs, scene, phi, 96).expect("binning");
    let rows = select_rows(&g, &RowSelection::Auto).expect("rows");
    fit_rows(&g, rows).expect("fits")
}

pub fn in_mask_pairs<R: Rng>(scene: &Scene, n: usize, rng: &mut R) -> Vec<CoincidencePair> {
    let event = |id: u8, rng: &mut R, t: u64| {
        let det = scene.detector(id);
        let o = uniform_offset(det, rng);
        let c = det.center();
        let pixel = Pixel::new((c + o[0].round() as i64) as u16, (c + o[1].round() as i64) as u16);
        DetectorEvent { detector_id: id, pixel, timestamp: t }
    };
    (0..n)
        .map(|i| {
            let t = 10_000 * i as u64;
            CoincidencePair::new(event(0, rng, t), event(1, rng, t + 100))
        })
        .collect()
}

pub fn emitters_strategy() -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-1e-5..1e-5f64), 2..=5)
}

pub fn angles_strategy() -> impl Strategy<Value = [f64; 2]> {
    prop::array::uniform2(-0.015..0.015f64)
}

fn scene_with(positions: Vec<[f64; 3]>) -> Scene {
    presets::two_ion().with_positions(positions).build().expect("scene")
}

pub fn check_exchange_symmetry(positions: Vec<[f64; 3]>, a1: [f64; 2], a2: [f64; 2]) -> Result<(), TestCaseError> {
    let scene = scene_with(positions.clone());
    let (n1, n2) = (scene.source_direction_at(a1), scene.source_direction_at(a2));
    let g = g2(&scene, &n1, &n2).unwrap();
    prop_assert!((g - g2(&scene, &n2, &n1).unwrap()).abs() < 1e-12);
    let mut relabeled = positions;
    relabeled.reverse();
    relabeled.rotate_left(1);
    let other = scene_with(relabeled);
    prop_assert!((g - g2(&other, &n1, &n2).unwrap()).abs() < 1e-9);
    Ok(())
}

pub fn check_translation_invariance(positions: Vec<[f64; 3]>, shift: [f64; 3], a1: [f64; 2], a2: [f64; 2]) -> Result<(), TestCaseError> {
    let scene = scene_with(positions.clone());
    let moved = scene_with(positions.iter().map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]).collect());
    let (n1, n2) = (scene.source_direction_at(a1), scene.source_direction_at(a2));
    prop_assert!((g2(&scene, &n1, &n2).unwrap() - g2(&moved, &n1, &n2).unwrap()).abs() < 1e-9);
    Ok(())
}

pub fn check_count_conservation(seed: u64, n: usize, phi: f64, n_bins: usize) -> Result<(), TestCaseError> {
    let scene = presets::two_ion().build().unwrap();
    let pairs = in_mask_pairs(&scene, n, &mut substream(seed, 0));
    let g = project_and_bin(&pairs, &scene, phi, n_bins).unwrap();
    prop_assert_eq!(g.counts.iter().sum::<u64>(), n as u64);
    prop_assert_eq!(g.total_pairs, n as u64);
    prop_assert_eq!(g.row_sums().iter().sum::<u64>(), n as u64);
    Ok(())
}

/// Simulation, scan and row fits give identical results on one worker and
/// on `threads` workers.
pub fn check_thread_independence(seed: u64, threads: usize) -> Result<(), TestCaseError> {
    let scene = presets::two_ion().build().unwrap();
    let run = |k: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
        pool.install(|| {
            let pairs = simulate(&scene, 20_000, seed);
            let stream = generate_stream(&scene, &SimConfig { seed, duration: 2.0, coincidence_rate: 500.0, ..SimConfig::default() }).unwrap();
            let projected = ProjectedPairs::new(&pairs, &scene).unwrap();
            let opts = AnalysisOptions {
                scan: ScanOptions { phi_step: 1.0, bootstrap: 10, seed, ..ScanOptions::default() },
                ..AnalysisOptions::default()
            };
            let report = ionhbt_core::analysis::analyze_projected(&projected, &scene, &opts).unwrap();
            (pairs, stream, report)
        })
    };
    let (p1, s1, r1) = run(1);
    let (p2, s2, r2) = run(threads);
    prop_assert!(p1 == p2);
    prop_assert!(s1 == s2);
    prop_assert!(r1 == r2);
    Ok(())
}

/// Row phases across a two-emitter simulation at orientation `phi` follow
/// slope `-f` within two combined standard deviations.
pub fn check_phase_slope(seed: u64, phi: f64) -> Result<(), TestCaseError> {
    let scene = two_emitter_config(presets::TWO_ION_DISTANCE, phi).build().unwrap();
    let pairs = simulate(&scene, 100_000, seed);
    let fits = fit_at(&ProjectedPairs::new(&pairs, &scene).unwrap(), &scene, phi);
    let z = phase_slope_z(&fits);
    prop_assert!(z < 2.0, "phase slope off by {z:.2} sigma");
    Ok(())
}
