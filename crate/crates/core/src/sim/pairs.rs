use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use super::{sample_detector_pair, seconds_to_ps, substream, CoincidencePair, DetectorEvent, SimConfig};
use crate::error::{invalid, Error, Result};
use crate::model::Scene;

/// Pairs per RNG substream. Fixed so that output is independent of thread count.
const CHUNK: usize = 4096;

/// Signed delay with `|dt|` exponential of scale `tau`, truncated to `window`.
pub(crate) fn truncated_two_sided_exp<R: Rng + ?Sized>(rng: &mut R, tau: f64, window: f64) -> f64 {
    let mass = 1.0 - (-window / tau).exp();
    let u: f64 = rng.random();
    let magnitude = -tau * (1.0 - u * mass).ln();
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

/// Pair-level simulation: `cfg.n_pairs` coincidences sorted by start time.
///
/// Start times follow a Poisson process at `cfg.coincidence_rate` (1 Hz if
/// the rate is zero); the stop photon trails by a truncated two-sided
/// exponential delay.
pub fn generate_pairs(scene: &Scene, cfg: &SimConfig) -> Result<Vec<CoincidencePair>> {
    cfg.validate()?;
    if cfg.n_pairs == 0 {
        return Err(invalid("n_pairs must be >= 1"));
    }
    let n = scene.emitters().len();
    if n < 2 {
        return Err(Error::DegenerateSource { n });
    }
    let rate = if cfg.coincidence_rate > 0.0 { cfg.coincidence_rate } else { 1.0 };
    let gaps = Exp::new(rate).map_err(|e| invalid(e.to_string()))?;
    let n_chunks = cfg.n_pairs.div_ceil(CHUNK);

    // (gap s, dt s, pixel pair) per pair, generated chunk-parallel.
    let chunks: Vec<Vec<(f64, f64, [crate::model::Pixel; 2])>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<_> {
            let len = CHUNK.min(cfg.n_pairs - c * CHUNK);
            let mut rng = substream(cfg.seed, c as u64);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let sample = sample_detector_pair(scene, &mut rng)?;
                let p0 = scene.detector(0).pixel_from_offset(sample.offsets[0][0], sample.offsets[0][1]);
                let p1 = scene.detector(1).pixel_from_offset(sample.offsets[1][0], sample.offsets[1][1]);
                let (Some(p0), Some(p1)) = (p0, p1) else {
                    unreachable!("sampler only proposes in-mask pixels");
                };
                let dt = truncated_two_sided_exp(&mut rng, cfg.excited_lifetime, cfg.coincidence_window);
                out.push((gaps.sample(&mut rng), dt, [p0, p1]));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let offset = seconds_to_ps(cfg.coincidence_window);
    let mut t = 0.0f64;
    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    for (gap, dt, [p0, p1]) in chunks.into_iter().flatten() {
        t += gap;
        let start_ps = offset + seconds_to_ps(t);
        let stop_ps = (start_ps as i64 + (dt * 1e12).round() as i64) as u64;
        pairs.push(CoincidencePair::new(
            DetectorEvent { detector_id: 0, pixel: p0, timestamp: start_ps },
            DetectorEvent { detector_id: 1, pixel: p1, timestamp: stop_ps },
        ));
    }
    Ok(pairs)
}
