//! Viewpoint sampling on the unit sphere: i.i.d. random and furthest-point.

use crate::error::{Error, Result};
use crate::shapegen::sdf::{dot, normalize, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `n` i.i.d. uniform directions (normalized Gaussian triples).
pub fn sample_viewpoints_random(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_random_with(&mut rng, n)
}

pub fn sample_random_with(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v: Vec3 = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = dot(v, v).sqrt();
        if norm > 1e-9 {
            out.push(normalize(v));
        }
    }
    out
}

/// Greedy furthest-point selection under geodesic (arc) distance.
///
/// Starts at `start_index`, then repeatedly picks the candidate maximizing
/// the minimum arc distance to the selected set; ties go to the lowest index.
pub fn sample_viewpoints_fps(candidates: &[Vec3], n: usize, start_index: usize) -> Result<Vec<Vec3>> {
    if n > candidates.len() {
        return Err(Error::Usage(format!(
            "fps: requested {} of {} candidates",
            n,
            candidates.len()
        )));
    }
    if start_index >= candidates.len() {
        return Err(Error::Usage(format!(
            "fps: start index {} out of range",
            start_index
        )));
    }
    let mut selected = Vec::with_capacity(n);
    let mut min_dist = vec![f64::INFINITY; candidates.len()];
    let mut pick = start_index;
    for _ in 0..n {
        selected.push(candidates[pick]);
        for (i, c) in candidates.iter().enumerate() {
            min_dist[i] = min_dist[i].min(arc_distance(candidates[pick], *c));
        }
        let mut best = 0;
        for i in 1..candidates.len() {
            if min_dist[i] > min_dist[best] {
                best = i;
            }
        }
        pick = best;
    }
    Ok(selected)
}

pub fn arc_distance(a: Vec3, b: Vec3) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}

/// The fixed 12-viewpoint ring at 30 degrees elevation used by the
/// aligned and rotated regimes.
pub fn ring_viewpoints() -> Vec<Vec3> {
    let elevation = 30f64.to_radians();
    (0..12)
        .map(|i| {
            let az = 2.0 * std::f64::consts::PI * i as f64 / 12.0;
            [
                elevation.cos() * az.cos(),
                elevation.cos() * az.sin(),
                elevation.sin(),
            ]
        })
        .collect()
}
