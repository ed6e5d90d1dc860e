//! Procedural shape generation and pose regimes.

use crate::error::{Error, Result};
use crate::shapegen::sdf::{Primitive, Quat, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Number of procedural classes (one per primitive family).
pub const NUM_CLASSES: u32 = 6;

/// One 3D object: a class, a parameterized primitive, and a pose.
#[derive(Clone, Debug, PartialEq)]
pub struct Shape {
    pub class_id: u32,
    pub primitive: Primitive,
    pub pose: Quat,
}

impl Shape {
    /// Signed distance in world coordinates (pose applied).
    pub fn distance(&self, p: Vec3) -> f64 {
        self.primitive.distance(self.pose.conjugate().rotate(p))
    }

    pub fn bounding_radius(&self) -> f64 {
        self.primitive.bounding_radius()
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// Per-class size parameter ranges; classes overlap in scale but differ
/// in geometry.
pub fn generate_shape(class_id: u32, seed: u64) -> Result<Shape> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let primitive = match class_id {
        0 => Primitive::Sphere {
            radius: uniform(&mut rng, 0.5, 1.0),
        },
        1 => Primitive::Box3 {
            half: [
                uniform(&mut rng, 0.35, 0.9),
                uniform(&mut rng, 0.35, 0.9),
                uniform(&mut rng, 0.35, 0.9),
            ],
        },
        2 => Primitive::Cylinder {
            radius: uniform(&mut rng, 0.3, 0.7),
            half_height: uniform(&mut rng, 0.5, 1.0),
        },
        3 => Primitive::Cone {
            radius: uniform(&mut rng, 0.4, 0.9),
            half_height: uniform(&mut rng, 0.5, 1.0),
        },
        4 => Primitive::Torus {
            major: uniform(&mut rng, 0.55, 0.9),
            minor: uniform(&mut rng, 0.15, 0.35),
        },
        5 => Primitive::Composite {
            half: [
                uniform(&mut rng, 0.3, 0.6),
                uniform(&mut rng, 0.3, 0.6),
                uniform(&mut rng, 0.3, 0.6),
            ],
            sphere_radius: uniform(&mut rng, 0.25, 0.5),
        },
        _ => {
            return Err(Error::Usage(format!(
                "unknown class id {} (K = {})",
                class_id, NUM_CLASSES
            )))
        }
    };
    Ok(Shape {
        class_id,
        primitive,
        pose: Quat::IDENTITY,
    })
}

/// Pose regimes for a generated shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoseRegime {
    Aligned,
    Rotated,
}

/// Uniform rotation: a normalized 4D Gaussian is uniform on S^3.
pub fn random_rotation(rng: &mut ChaCha8Rng) -> Quat {
    loop {
        let (w, x, y, z): (f64, f64, f64, f64) = (
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n > 1e-9 {
            return Quat::normalized(w, x, y, z);
        }
    }
}

pub fn apply_pose_regime(mut shape: Shape, regime: PoseRegime, seed: u64) -> Shape {
    shape.pose = match regime {
        PoseRegime::Aligned => Quat::IDENTITY,
        PoseRegime::Rotated => random_rotation(&mut ChaCha8Rng::seed_from_u64(seed)),
    };
    shape
}
