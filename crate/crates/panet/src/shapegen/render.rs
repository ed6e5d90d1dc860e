//! Orthographic sphere-traced depth renderer.
//!
//! Background pixels are 0; hit pixels encode normalized depth in (0, 1]
//! with the nearest possible surface mapping to 1.

use crate::shapegen::shape::Shape;
use crate::shapegen::sdf::{add, cross, normalize, scale, Vec3};

const HIT_EPS: f64 = 1e-4;
const MAX_STEPS: usize = 256;

/// Renders `shape` from a unit-norm `viewpoint` into an `r x r` depth image.
pub fn render_view(shape: &Shape, viewpoint: Vec3, r: usize) -> Vec<f64> {
    let rb = shape.bounding_radius();
    let dist = 3.0 * rb;
    let half_extent = 1.2 * rb;
    let dir = scale(viewpoint, -1.0);
    let up_hint: Vec3 = if viewpoint[2].abs() < 0.99 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let right = normalize(cross(up_hint, dir));
    let up = cross(dir, right);
    let eye = scale(viewpoint, dist);
    let t_near = dist - rb;
    let t_far = dist + rb;

    let mut image = vec![0.0; r * r];
    for row in 0..r {
        for col in 0..r {
            let u = ((col as f64 + 0.5) / r as f64 * 2.0 - 1.0) * half_extent;
            let v = (1.0 - (row as f64 + 0.5) / r as f64 * 2.0) * half_extent;
            let origin = add(eye, add(scale(right, u), scale(up, v)));
            if let Some(t) = trace(shape, origin, dir, 2.0 * dist) {
                let depth = 1.0 - (t - t_near) / (t_far - t_near);
                image[row * r + col] = depth.clamp(1e-3, 1.0);
            }
        }
    }
    image
}

fn trace(shape: &Shape, origin: Vec3, dir: Vec3, t_max: f64) -> Option<f64> {
    let mut t = 0.0;
    for _ in 0..MAX_STEPS {
        let p = add(origin, scale(dir, t));
        let d = shape.distance(p);
        if d < HIT_EPS {
            return Some(t);
        }
        t += d;
        if t > t_max {
            return None;
        }
    }
    None
}

/// Number of nonzero pixels; silhouette area in pixel units.
pub fn silhouette_pixels(image: &[f64]) -> usize {
    image.iter().filter(|&&p| p > 0.0).count()
}
