use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pairs::truncated_two_sided_exp;
use super::{sample_detector_pair, seconds_to_ps, substream, uniform_on_detector, DetectorEvent, SimConfig};
use crate::error::{invalid, Result};
use crate::model::{DetectorPlane, Pixel, Scene};

/// Ground-truth label of a simulated event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventOrigin {
    Single,
    Stray,
    /// Photon `photon` (0 or 1) of embedded pair `pair`.
    PairPhoton { pair: u32, photon: u8 },
}

/// Bookkeeping of what the simulator put into the stream and what it lost.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamTruth {
    pub embedded_pairs: usize,
    /// Pairs with both photons routed to the same detector.
    pub same_detector_pairs: usize,
    /// Pair photons whose direction falls outside the routed detector's mask.
    pub outside_mask_photons: usize,
    /// Events removed by the dead-time rule, per detector.
    pub dead_time_dropped: [usize; 2],
}

/// Time-ordered events with a parallel vector of origin labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedStream {
    pub events: Vec<DetectorEvent>,
    pub origins: Vec<EventOrigin>,
    pub truth: StreamTruth,
}

/// Keep-mask for a sorted timeline: an event is dropped when it follows the
/// last *accepted* event by less than `dead_ps`.
pub fn dead_time_filter(timestamps: &[u64], dead_ps: u64) -> Vec<bool> {
    let mut last: Option<u64> = None;
    timestamps
        .iter()
        .map(|&t| match last {
            Some(a) if t - a < dead_ps => false,
            _ => {
                last = Some(t);
                true
            }
        })
        .collect()
}

struct RawEvent {
    t_ps: i64,
    pixel: Pixel,
    origin: EventOrigin,
}

fn poisson_times<R: Rng + ?Sized>(rng: &mut R, rate: f64, duration: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let exp = Exp::new(rate).expect("rate > 0");
    let mut t = exp.sample(rng);
    while t < duration {
        out.push(t);
        t += exp.sample(rng);
    }
    out
}

fn uniform_pixel<R: Rng + ?Sized>(det: &DetectorPlane, rng: &mut R) -> Pixel {
    let o = uniform_on_detector(det, rng);
    det.pixel_from_offset(o[0], o[1]).expect("proposal is in mask")
}

/// Full-fidelity dual-detector hit stream.
///
/// Substreams of `cfg.seed`: 0 embedded pairs, 1–2 singles, 3–4 stray
/// light, 5–6 timing jitter (per detector).
pub fn generate_stream(scene: &Scene, cfg: &SimConfig) -> Result<SimulatedStream> {
    cfg.validate()?;
    if !(cfg.duration > 0.0 && cfg.duration.is_finite()) {
        return Err(invalid(format!("duration must be > 0, got {}", cfg.duration)));
    }
    let n_emitters = scene.emitters().len();
    let pair_rate = if n_emitters >= 2 { cfg.coincidence_rate } else { 0.0 };
    if pair_rate <= 0.0 && cfg.singles_rate <= 0.0 {
        return Err(invalid("at least one of singles_rate and coincidence_rate must be > 0"));
    }

    let mut truth = StreamTruth::default();
    let mut per_detector: [Vec<RawEvent>; 2] = [Vec::new(), Vec::new()];

    let mut rng = substream(cfg.seed, 0);
    for t in poisson_times(&mut rng, pair_rate, cfg.duration) {
        let pair = truth.embedded_pairs as u32;
        truth.embedded_pairs += 1;
        let sample = sample_detector_pair(scene, &mut rng)?;
        let dt = truncated_two_sided_exp(&mut rng, cfg.excited_lifetime, cfg.coincidence_window);
        let routes = [rng.random_range(0..2u8), rng.random_range(0..2u8)];
        if routes[0] == routes[1] {
            truth.same_detector_pairs += 1;
        }
        let times = [t, t + dt];
        for photon in 0..2 {
            let det = scene.detector(routes[photon]);
            let [tx, ty] = sample.angles[photon];
            match det.pixel_from_offset(tx / det.pixel_pitch_angle, ty / det.pixel_pitch_angle) {
                Some(pixel) => per_detector[usize::from(routes[photon])].push(RawEvent {
                    t_ps: (times[photon] * 1e12).round() as i64,
                    pixel,
                    origin: EventOrigin::PairPhoton { pair, photon: photon as u8 },
                }),
                None => truth.outside_mask_photons += 1,
            }
        }
    }

    let stray_rate = cfg.stray_fraction * cfg.singles_rate;
    let filtered: Vec<(Vec<RawEvent>, usize)> = per_detector
        .into_par_iter()
        .enumerate()
        .map(|(d, mut events)| {
            let det = scene.detector(d as u8);
            for (stream, rate, origin) in [(1, cfg.singles_rate, EventOrigin::Single), (3, stray_rate, EventOrigin::Stray)] {
                let mut rng = substream(cfg.seed, stream + d as u64);
                for t in poisson_times(&mut rng, rate, cfg.duration) {
                    let pixel = uniform_pixel(det, &mut rng);
                    events.push(RawEvent { t_ps: (t * 1e12).round() as i64, pixel, origin });
                }
            }
            if det.timing_jitter_sigma > 0.0 {
                let mut rng = substream(cfg.seed, 5 + d as u64);
                let normal = Normal::new(0.0, det.timing_jitter_sigma * 1e12).expect("sigma > 0");
                for e in &mut events {
                    e.t_ps += normal.sample(&mut rng).round() as i64;
                }
            }
            for e in &mut events {
                e.t_ps = e.t_ps.max(0);
            }
            events.sort_by_key(|e| e.t_ps);
            let times: Vec<u64> = events.iter().map(|e| e.t_ps as u64).collect();
            let keep = dead_time_filter(&times, seconds_to_ps(det.dead_time));
            let before = events.len();
            let kept: Vec<RawEvent> = events.into_iter().zip(keep).filter_map(|(e, k)| k.then_some(e)).collect();
            let dropped = before - kept.len();
            (kept, dropped)
        })
        .collect();

    let mut merged: Vec<(DetectorEvent, EventOrigin)> = Vec::new();
    for (d, (events, dropped)) in filtered.into_iter().enumerate() {
        truth.dead_time_dropped[d] = dropped;
        merged.extend(events.into_iter().map(|e| {
            (DetectorEvent { detector_id: d as u8, pixel: e.pixel, timestamp: e.t_ps as u64 }, e.origin)
        }));
    }
    // Stable: detector 0 before detector 1 at equal timestamps.
    merged.sort_by_key(|(e, _)| (e.timestamp, e.detector_id));
    let (events, origins) = merged.into_iter().unzip();
    Ok(SimulatedStream { events, origins, truth })
}

/// Embedded pairs that survived routing, mask and dead time with
/// `|Δt| <= window_ps`, as `(detector-0 index, detector-1 index)` into
/// `stream.events`, sorted by the first index.
pub fn recoverable_pairs(stream: &SimulatedStream, window_ps: u64) -> Vec<(usize, usize)> {
    let mut slots: Vec<[Option<usize>; 2]> = vec![[None, None]; stream.truth.embedded_pairs];
    for (i, origin) in stream.origins.iter().enumerate() {
        if let EventOrigin::PairPhoton { pair, photon } = *origin {
            slots[pair as usize][usize::from(photon)] = Some(i);
        }
    }
    let mut out: Vec<(usize, usize)> = slots
        .into_iter()
        .filter_map(|s| {
            let [Some(a), Some(b)] = s else { return None };
            let (ea, eb) = (&stream.events[a], &stream.events[b]);
            if ea.detector_id == eb.detector_id || ea.timestamp.abs_diff(eb.timestamp) > window_ps {
                return None;
            }
            Some(if ea.detector_id == 0 { (a, b) } else { (b, a) })
        })
        .collect();
    out.sort_unstable();
    out
}
