//! Emitter geometry from the measured pairwise fringe components.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Scene;
use crate::physics::orientation_distance_deg;

/// Closure residuals above this reject a three-emitter solution.
pub const CLOSURE_TOLERANCE: f64 = 0.05;

/// One measured fringe component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub orientation_deg: f64,
    pub orientation_err: f64,
    /// rad⁻¹.
    pub frequency: f64,
    pub frequency_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentEstimate {
    pub orientation_deg: f64,
    pub orientation_err: f64,
    /// rad⁻¹.
    pub frequency: f64,
    /// Fringe frequency against position at the detector, rad μm⁻¹.
    pub frequency_per_um: f64,
    pub stat_err: f64,
    /// Frequency systematic from the angular gauge (image distance).
    pub syst_err: f64,
    /// Transverse emitter separation (m).
    pub distance: f64,
    pub distance_stat_err: f64,
    /// Distance systematic from image distance and magnification.
    pub distance_syst_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureEstimate {
    pub n_emitters: usize,
    pub components: Vec<ComponentEstimate>,
    /// Transverse emitter positions (m), first emitter at the origin.
    pub coordinates: Vec<[f64; 2]>,
    pub closure_residual: f64,
    /// Sign of each component in the closing vector sum.
    pub signs: Vec<i8>,
    /// Set when a mirror image of `coordinates` fits the data equally well.
    pub reflection_ambiguous: bool,
}

/// Number of emitters implied by the distinct components, `N(N-1)/2 = count`.
/// Components closer than three combined standard deviations in both
/// orientation and frequency are merged first.
pub fn infer_emitter_count(maxima: &[Component]) -> Result<usize> {
    let distinct = merge_components(maxima);
    let c = distinct.len();
    (2..=64).find(|n| n * (n - 1) / 2 == c).ok_or(Error::AmbiguousCount { components: c })
}

pub fn merge_components(maxima: &[Component]) -> Vec<Component> {
    let mut out: Vec<Component> = Vec::new();
    for m in maxima {
        let same = out.iter().any(|o| {
            let dphi = orientation_distance_deg(o.orientation_deg, m.orientation_deg);
            let sphi = o.orientation_err.hypot(m.orientation_err);
            let df = (o.frequency - m.frequency).abs();
            let sf = o.frequency_err.hypot(m.frequency_err);
            dphi <= 3.0 * sphi && df <= 3.0 * sf
        });
        if !same {
            out.push(*m);
        }
    }
    out
}

fn unit(deg: f64) -> Vector2<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Vector2::new(c, s)
}

/// Converts components to separations `|d| = f / (k_L M)` and, for three
/// components, finds the sign assignment closing the triangle.
pub fn solve_structure(maxima: &[Component], scene: &Scene) -> Result<StructureEstimate> {
    let optics = scene.optics();
    let km = scene.wave_number() * optics.magnification;
    let l_rel = optics.image_distance_err / optics.image_distance;
    let m_rel = optics.magnification_err / optics.magnification;
    let l_um = optics.image_distance * 1e6;
    let components: Vec<ComponentEstimate> = maxima
        .iter()
        .map(|c| {
            let distance = c.frequency / km;
            ComponentEstimate {
                orientation_deg: c.orientation_deg,
                orientation_err: c.orientation_err,
                frequency: c.frequency,
                frequency_per_um: c.frequency / l_um,
                stat_err: c.frequency_err,
                syst_err: c.frequency * l_rel,
                distance,
                distance_stat_err: c.frequency_err / km,
                distance_syst_err: distance * l_rel.hypot(m_rel),
            }
        })
        .collect();
    let vectors: Vec<Vector2<f64>> = components.iter().map(|c| unit(c.orientation_deg) * c.distance).collect();
    match components.len() {
        1 => Ok(StructureEstimate {
            n_emitters: 2,
            coordinates: vec![[0.0, 0.0], [vectors[0].x, vectors[0].y]],
            components,
            closure_residual: 0.0,
            signs: vec![1],
            reflection_ambiguous: false,
        }),
        3 => {
            let scale = components.iter().map(|c| c.distance).fold(0.0, f64::max);
            let (signs, residual) = [[1, 1, 1], [1, 1, -1], [1, -1, 1], [1, -1, -1]]
                .into_iter()
                .map(|s: [i8; 3]| {
                    let sum: Vector2<f64> = vectors.iter().zip(s).map(|(v, s)| v * f64::from(s)).sum();
                    (s, sum.norm() / scale)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("four candidates");
            if residual > CLOSURE_TOLERANCE {
                return Err(Error::ClosureFailure { residual });
            }
            // Loop A → B → C → A along s₁d₁, s₂d₂, s₃d₃, with the closure
            // residual shared equally (the least-squares vertex positions).
            let edges: Vec<Vector2<f64>> = vectors.iter().zip(signs).map(|(v, s)| v * f64::from(s)).collect();
            let r: Vector2<f64> = edges.iter().sum();
            let b = edges[0] - r / 3.0;
            let c = b + edges[1] - r / 3.0;
            let (b, c) = if b.perp(&c) >= 0.0 { (b, c) } else { (c, b) };
            Ok(StructureEstimate {
                n_emitters: 3,
                coordinates: vec![[0.0, 0.0], [b.x, b.y], [c.x, c.y]],
                components,
                closure_residual: residual,
                signs: signs.to_vec(),
                reflection_ambiguous: true,
            })
        }
        n => Err(Error::AmbiguousCount { components: n }),
    }
}

/// Pairwise distances of a coordinate set, sorted ascending.
pub fn pairwise_distances(coords: &[[f64; 2]]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            out.push((coords[i][0] - coords[j][0]).hypot(coords[i][1] - coords[j][1]));
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn comp(phi: f64, f: f64) -> Component {
        Component { orientation_deg: phi, orientation_err: 0.3, frequency: f, frequency_err: 2.0 }
    }

    fn triangle_components() -> Vec<Component> {
        let l_um = presets::TRIANGLE_IMAGE_DISTANCE * 1e6;
        presets::TRIANGLE_COMPONENTS.iter().map(|&(phi, f)| comp(phi, f * l_um)).collect()
    }

    #[test]
    fn single_component_distance() {
        let mut cfg = presets::two_ion();
        cfg.laser.wavelength = 397e-9;
        let scene = cfg.build().unwrap();
        let s = solve_structure(&[comp(0.86, 1490.0)], &scene).unwrap();
        assert_eq!(s.n_emitters, 2);
        let oracle = 1490.0 / (2.0 * std::f64::consts::PI / 397e-9 * 14.1);
        let d = s.components[0].distance;
        assert!((d / oracle - 1.0).abs() < 1e-12);
        assert!((d - 6.678e-6).abs() < 2e-9, "{d}");
        assert!((pairwise_distances(&s.coordinates)[0] - s.components[0].distance).abs() < 1e-18);
    }

    #[test]
    fn triangle_closes() {
        let scene = presets::triangle().build().unwrap();
        let s = solve_structure(&triangle_components(), &scene).unwrap();
        assert_eq!(s.n_emitters, 3);
        assert!(s.closure_residual < 0.01, "{}", s.closure_residual);
        assert!(s.closure_residual > 1e-3);
        assert!(s.reflection_ambiguous);
        let [a, b, c] = [s.coordinates[0], s.coordinates[1], s.coordinates[2]];
        let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        assert!(cross > 0.0);
        // Edges match the component distances to within the closure residual.
        let mut want: Vec<f64> = s.components.iter().map(|c| c.distance).collect();
        want.sort_by(f64::total_cmp);
        for (got, want) in pairwise_distances(&s.coordinates).iter().zip(&want) {
            assert!((got / want - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn broken_closure_rejected() {
        let scene = presets::triangle().build().unwrap();
        let mut comps = triangle_components();
        comps[1].frequency *= 2.0;
        assert!(matches!(solve_structure(&comps, &scene), Err(Error::ClosureFailure { .. })));
    }

    #[test]
    fn relabeling_invariance() {
        let scene = presets::triangle().build().unwrap();
        let comps = triangle_components();
        let base = pairwise_distances(&solve_structure(&comps, &scene).unwrap().coordinates);
        for perm in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let c: Vec<Component> = perm.iter().map(|&i| comps[i]).collect();
            let s = solve_structure(&c, &scene).unwrap();
            for (a, b) in pairwise_distances(&s.coordinates).iter().zip(&base) {
                assert!((a / b - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn counts() {
        assert_eq!(infer_emitter_count(&[comp(10.0, 1000.0)]).unwrap(), 2);
        assert_eq!(infer_emitter_count(&triangle_components()).unwrap(), 3);
        let two = [comp(10.0, 1000.0), comp(60.0, 1200.0)];
        assert!(matches!(infer_emitter_count(&two), Err(Error::AmbiguousCount { components: 2 })));
        // A duplicate within errors merges back to one component.
        let dup = [comp(10.0, 1000.0), comp(10.2, 1001.0)];
        assert_eq!(infer_emitter_count(&dup).unwrap(), 2);
        let scene = presets::two_ion().build().unwrap();
        assert!(matches!(solve_structure(&two, &scene), Err(Error::AmbiguousCount { components: 2 })));
    }
}
